#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "becaptcha/gesture.hpp"

namespace becaptcha {

inline constexpr Eigen::Index kTouchFeatureDim = 6;
inline constexpr Eigen::Index kAccelFeatureDim = 12;
inline constexpr Eigen::Index kCombinedFeatureDim = kTouchFeatureDim + kAccelFeatureDim;

/// Column names in flattening order. Serialized models depend on this order.
inline constexpr std::array<std::string_view, kCombinedFeatureDim> kFeatureNames = {
    "duration_s",    "distance",      "displacement",  "angle_rad",    "mean_velocity",
    "move_efficiency", "accel_mean_x", "accel_mean_y", "accel_mean_z", "accel_median_x",
    "accel_median_y", "accel_median_z", "accel_rms_x",  "accel_rms_y",  "accel_rms_z",
    "accel_std_x",   "accel_std_y",   "accel_std_z"};

using TouchArray = Eigen::Matrix<double, kTouchFeatureDim, 1>;
using AccelArray = Eigen::Matrix<double, kAccelFeatureDim, 1>;

/// Global swipe descriptors. `distance` is the straight start-to-end length,
/// `displacement` the travelled path length, so displacement >= distance.
struct TouchFeatureVector {
  double duration_s = 0.0;
  double distance = 0.0;
  double displacement = 0.0;
  double angle_rad = 0.0;
  double mean_velocity = 0.0;
  double move_efficiency = 0.0;
  // Start and end coincide; move_efficiency is then reported as 0.
  bool degenerate = false;

  TouchArray as_array() const;
  static TouchFeatureVector from_array(const TouchArray& a);
};

struct AccelFeatureVector {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d median = Eigen::Vector3d::Zero();
  Eigen::Vector3d rms = Eigen::Vector3d::Zero();
  Eigen::Vector3d std = Eigen::Vector3d::Zero();

  AccelArray as_array() const;
  static AccelFeatureVector from_array(const AccelArray& a);
};

enum class FeatureMode { Touch, TouchAccel };

std::string_view to_string(FeatureMode m);
FeatureMode parse_feature_mode(std::string_view s);
constexpr Eigen::Index feature_dim(FeatureMode m) {
  return m == FeatureMode::Touch ? kTouchFeatureDim : kCombinedFeatureDim;
}

struct CombinedFeatureVector {
  TouchFeatureVector touch;
  std::optional<AccelFeatureVector> accel;

  /// Length 6 (touch only) or 18.
  Eigen::VectorXd as_array() const;
  static CombinedFeatureVector from_array(const Eigen::VectorXd& a);
};

/// Works on any point span (no trajectory invariants assumed beyond >= 2
/// points with strictly increasing time). Throws ZeroDt on a repeated
/// timestamp.
TouchFeatureVector touch_features(std::span<const TouchPoint> points);
TouchFeatureVector touch_features(const TouchTrajectory& traj);

/// Per-axis mean, median, rms and population standard deviation.
AccelFeatureVector accel_features(const AccelSequence& seq);
AccelFeatureVector accel_features(const Eigen::MatrixX3d& axes);

CombinedFeatureVector combine(const TouchFeatureVector& touch,
                              const std::optional<AccelFeatureVector>& accel = std::nullopt);

/// Features of a sample in the requested mode. TouchAccel requires accel.
CombinedFeatureVector extract(const GestureSample& sample, FeatureMode mode);

/// Feature rows (one per sample) in the given mode.
Eigen::MatrixXd feature_matrix(std::span<const GestureSample> samples, FeatureMode mode);

/// Per-column z-scoring. Columns whose spread is below 1e-12 keep a unit
/// scale, so constant features pass through shifted only by their mean.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(Eigen::VectorXd mean, Eigen::VectorXd scale);

  /// Fits on rows of `train` (population statistics). Needs >= 2 rows.
  static Standardizer fit(const Eigen::MatrixXd& train);

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const;

  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::VectorXd& scale() const noexcept { return scale_; }
  Eigen::Index dim() const noexcept { return mean_.size(); }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
};

/// CSV with the fixed 18-column header; touch-only rows leave accel cells empty.
void write_feature_csv(std::ostream& os, std::span<const CombinedFeatureVector> rows);

}  // namespace becaptcha
