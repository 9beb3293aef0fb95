#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "becaptcha/error.hpp"

namespace becaptcha {

/// One touch-screen sample. Coordinates are fractions of the screen size,
/// t is seconds since the first point of the gesture.
struct TouchPoint {
  double x = 0.0;
  double y = 0.0;
  std::optional<double> p;
  double t = 0.0;

  friend bool operator==(const TouchPoint&, const TouchPoint&) = default;
};

/// A raw capture sample before normalization: pixels and milliseconds.
struct RawTouchPoint {
  double x_px = 0.0;
  double y_px = 0.0;
  std::optional<double> p;
  double t_ms = 0.0;
};

/// Screen-normalized swipe with N + 1 points (N >= 1 segments).
///
/// Construction validates the invariants: at least two points, t0 == 0,
/// non-decreasing timestamps with a positive total span, and every coordinate
/// inside the unit square.
class TouchTrajectory {
 public:
  TouchTrajectory(std::vector<TouchPoint> points, int screen_w_px, int screen_h_px);

  std::span<const TouchPoint> points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  std::size_t segments() const noexcept { return points_.size() - 1; }
  const TouchPoint& front() const noexcept { return points_.front(); }
  const TouchPoint& back() const noexcept { return points_.back(); }
  int screen_w() const noexcept { return screen_w_; }
  int screen_h() const noexcept { return screen_h_; }
  double duration() const noexcept { return points_.back().t; }

  /// (N+1) x 2 matrix of normalized coordinates.
  Eigen::MatrixX2d xy() const;
  Eigen::VectorXd times() const;

  friend bool operator==(const TouchTrajectory&, const TouchTrajectory&) = default;

 private:
  std::vector<TouchPoint> points_;
  int screen_w_;
  int screen_h_;
};

struct AccelSample {
  double ax = 0.0;
  double ay = 0.0;
  double az = 0.0;
  double t = 0.0;

  friend bool operator==(const AccelSample&, const AccelSample&) = default;
};

inline constexpr double kDefaultAccelRateHz = 200.0;
inline constexpr std::size_t kMinAccelSamples = 4;

class AccelSequence {
 public:
  AccelSequence(std::vector<AccelSample> samples, double nominal_rate_hz = kDefaultAccelRateHz);

  std::span<const AccelSample> samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  double nominal_rate_hz() const noexcept { return rate_hz_; }

  /// n x 3 matrix, one row per sample, columns (ax, ay, az).
  Eigen::MatrixX3d axes() const;

  friend bool operator==(const AccelSequence&, const AccelSequence&) = default;

 private:
  std::vector<AccelSample> samples_;
  double rate_hz_;
};

enum class Label { Human, FakeHandcrafted, FakeGan, Unknown };
enum class Orientation { Landscape, Portrait };
enum class Source { Recorded, Synthetic, Fixture };

std::string_view to_string(Label v);
std::string_view to_string(Orientation v);
std::string_view to_string(Source v);
Label parse_label(std::string_view s);
Orientation parse_orientation(std::string_view s);
Source parse_source(std::string_view s);

struct SessionMeta {
  std::string subject_id;
  std::string device_model;
  Orientation orientation = Orientation::Portrait;
  std::string captured_at;
  Source source = Source::Recorded;

  friend bool operator==(const SessionMeta&, const SessionMeta&) = default;
};

struct GestureSample {
  TouchTrajectory touch;
  std::optional<AccelSequence> accel;
  Label label = Label::Unknown;
  SessionMeta meta;

  friend bool operator==(const GestureSample&, const GestureSample&) = default;
};

/// Checks the cross-field invariants of a sample (accel span overlaps the
/// touch span, recorded data carries a subject id). Throws Error.
void validate(const GestureSample& sample);

/// Pixels/milliseconds -> normalized coordinates/seconds. Points are sorted
/// by time and samples sharing a timestamp collapse to the last one.
TouchTrajectory normalize_touch(std::span<const RawTouchPoint> raw, int screen_w_px,
                                int screen_h_px);

/// Linear re-interpolation onto `count` uniformly spaced timestamps.
TouchTrajectory resample_touch(const TouchTrajectory& traj, std::size_t count);

/// Same for accelerometer samples, over the sequence's own time span.
AccelSequence resample_accel(const AccelSequence& seq, std::size_t count);

}  // namespace becaptcha
