#include "becaptcha/gesture.hpp"

#include <algorithm>
#include <cmath>

namespace becaptcha {

namespace {

// Raw captures may overshoot the screen edge slightly (touch drivers report
// sub-pixel positions past the border); more than this fraction is corrupt.
constexpr double kScreenTolerance = 0.01;

double lerp(double a, double b, double w) { return a + (b - a) * w; }

}  // namespace

TouchTrajectory::TouchTrajectory(std::vector<TouchPoint> points, int screen_w_px,
                                 int screen_h_px)
    : points_(std::move(points)), screen_w_(screen_w_px), screen_h_(screen_h_px) {
  if (screen_w_ <= 0 || screen_h_ <= 0) {
    throw Error(Errc::InvalidArgument, "screen dimensions must be positive");
  }
  if (points_.size() < 2) {
    throw Error(Errc::EmptyGesture, "a trajectory needs at least 2 points");
  }
  if (points_.front().t != 0.0) {
    throw Error(Errc::InvalidArgument, "trajectory must start at t = 0");
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& pt = points_[i];
    if (!std::isfinite(pt.x) || !std::isfinite(pt.y) || !std::isfinite(pt.t) ||
        (pt.p && !std::isfinite(*pt.p))) {
      throw Error(Errc::NonFinite, "non-finite value in point " + std::to_string(i));
    }
    if (pt.x < 0.0 || pt.x > 1.0 || pt.y < 0.0 || pt.y > 1.0) {
      throw Error(Errc::OutOfScreen, "point " + std::to_string(i) + " outside the unit square");
    }
    if (i > 0 && pt.t < points_[i - 1].t) {
      throw Error(Errc::InvalidArgument, "timestamps must be non-decreasing");
    }
  }
  if (!(points_.back().t > 0.0)) {
    throw Error(Errc::EmptyGesture, "trajectory spans zero time");
  }
}

Eigen::MatrixX2d TouchTrajectory::xy() const {
  Eigen::MatrixX2d out(points_.size(), 2);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out(i, 0) = points_[i].x;
    out(i, 1) = points_[i].y;
  }
  return out;
}

Eigen::VectorXd TouchTrajectory::times() const {
  Eigen::VectorXd out(points_.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = points_[i].t;
  return out;
}

AccelSequence::AccelSequence(std::vector<AccelSample> samples, double nominal_rate_hz)
    : samples_(std::move(samples)), rate_hz_(nominal_rate_hz) {
  if (!(rate_hz_ > 0.0) || !std::isfinite(rate_hz_)) {
    throw Error(Errc::InvalidArgument, "accelerometer rate must be positive");
  }
  if (samples_.size() < kMinAccelSamples) {
    throw Error(Errc::TooFewSamples, "accelerometer sequence needs at least 4 samples");
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (!std::isfinite(s.ax) || !std::isfinite(s.ay) || !std::isfinite(s.az) ||
        !std::isfinite(s.t)) {
      throw Error(Errc::NonFinite, "non-finite accelerometer sample " + std::to_string(i));
    }
    if (s.t < 0.0) throw Error(Errc::InvalidArgument, "negative accelerometer timestamp");
    if (i > 0 && s.t < samples_[i - 1].t) {
      throw Error(Errc::InvalidArgument, "accelerometer timestamps must be non-decreasing");
    }
  }
}

Eigen::MatrixX3d AccelSequence::axes() const {
  Eigen::MatrixX3d out(samples_.size(), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out(i, 0) = samples_[i].ax;
    out(i, 1) = samples_[i].ay;
    out(i, 2) = samples_[i].az;
  }
  return out;
}

std::string_view to_string(Label v) {
  switch (v) {
    case Label::Human: return "human";
    case Label::FakeHandcrafted: return "fake_handcrafted";
    case Label::FakeGan: return "fake_gan";
    case Label::Unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Orientation v) {
  return v == Orientation::Landscape ? "landscape" : "portrait";
}

std::string_view to_string(Source v) {
  switch (v) {
    case Source::Recorded: return "recorded";
    case Source::Synthetic: return "synthetic";
    case Source::Fixture: return "fixture";
  }
  return "recorded";
}

Label parse_label(std::string_view s) {
  if (s == "human") return Label::Human;
  if (s == "fake_handcrafted") return Label::FakeHandcrafted;
  if (s == "fake_gan") return Label::FakeGan;
  if (s == "unknown") return Label::Unknown;
  throw Error(Errc::ParseError, "unknown label '" + std::string(s) + "'");
}

Orientation parse_orientation(std::string_view s) {
  if (s == "landscape") return Orientation::Landscape;
  if (s == "portrait") return Orientation::Portrait;
  throw Error(Errc::ParseError, "unknown orientation '" + std::string(s) + "'");
}

Source parse_source(std::string_view s) {
  if (s == "recorded") return Source::Recorded;
  if (s == "synthetic") return Source::Synthetic;
  if (s == "fixture") return Source::Fixture;
  throw Error(Errc::ParseError, "unknown source '" + std::string(s) + "'");
}

void validate(const GestureSample& sample) {
  if (sample.meta.source == Source::Recorded && sample.meta.subject_id.empty()) {
    throw Error(Errc::InvalidArgument, "recorded sample without subject_id");
  }
  if (sample.accel) {
    const auto acc = sample.accel->samples();
    if (acc.front().t > sample.touch.duration() || acc.back().t < 0.0) {
      throw Error(Errc::InvalidArgument, "accelerometer span does not overlap the touch span");
    }
  }
}

TouchTrajectory normalize_touch(std::span<const RawTouchPoint> raw, int screen_w_px,
                                int screen_h_px) {
  if (screen_w_px <= 0 || screen_h_px <= 0) {
    throw Error(Errc::InvalidArgument, "screen dimensions must be positive");
  }
  std::vector<RawTouchPoint> sorted(raw.begin(), raw.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.t_ms < b.t_ms; });

  // Collapse coalesced events: among equal timestamps the last one wins.
  std::vector<RawTouchPoint> dedup;
  dedup.reserve(sorted.size());
  for (const auto& pt : sorted) {
    if (!std::isfinite(pt.x_px) || !std::isfinite(pt.y_px) || !std::isfinite(pt.t_ms)) {
      throw Error(Errc::NonFinite, "non-finite raw touch sample");
    }
    if (!dedup.empty() && dedup.back().t_ms == pt.t_ms) {
      dedup.back() = pt;
    } else {
      dedup.push_back(pt);
    }
  }
  if (dedup.size() < 2) {
    throw Error(Errc::EmptyGesture, "fewer than 2 distinct-time touch points");
  }

  const double w = screen_w_px;
  const double h = screen_h_px;
  const double t0 = dedup.front().t_ms;
  std::vector<TouchPoint> points;
  points.reserve(dedup.size());
  for (const auto& pt : dedup) {
    if (pt.x_px < -kScreenTolerance * w || pt.x_px > (1.0 + kScreenTolerance) * w ||
        pt.y_px < -kScreenTolerance * h || pt.y_px > (1.0 + kScreenTolerance) * h) {
      throw Error(Errc::OutOfScreen, "raw coordinate (" + std::to_string(pt.x_px) + ", " +
                                         std::to_string(pt.y_px) + ") outside the screen");
    }
    TouchPoint out;
    out.x = std::clamp(pt.x_px / w, 0.0, 1.0);
    out.y = std::clamp(pt.y_px / h, 0.0, 1.0);
    out.p = pt.p;
    out.t = (pt.t_ms - t0) / 1000.0;
    points.push_back(out);
  }
  return TouchTrajectory(std::move(points), screen_w_px, screen_h_px);
}

TouchTrajectory resample_touch(const TouchTrajectory& traj, std::size_t count) {
  if (count < 2) throw Error(Errc::InvalidArgument, "resample count must be >= 2");
  const auto src = traj.points();
  const double span = traj.duration();

  std::vector<TouchPoint> out(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    if (k == 0) {
      out[k] = src.front();
      continue;
    }
    if (k + 1 == count) {
      out[k] = src.back();
      continue;
    }
    const double t = span * static_cast<double>(k) / static_cast<double>(count - 1);
    while (seg + 2 < src.size() && src[seg + 1].t <= t) ++seg;
    const auto& a = src[seg];
    const auto& b = src[seg + 1];
    const double dt = b.t - a.t;
    const double w = dt > 0.0 ? std::clamp((t - a.t) / dt, 0.0, 1.0) : 1.0;
    TouchPoint pt;
    pt.x = lerp(a.x, b.x, w);
    pt.y = lerp(a.y, b.y, w);
    if (a.p && b.p) pt.p = lerp(*a.p, *b.p, w);
    pt.t = t;
    out[k] = pt;
  }
  return TouchTrajectory(std::move(out), traj.screen_w(), traj.screen_h());
}

AccelSequence resample_accel(const AccelSequence& seq, std::size_t count) {
  if (count < kMinAccelSamples) {
    throw Error(Errc::InvalidArgument, "accelerometer resample count must be >= 4");
  }
  const auto src = seq.samples();
  const double t0 = src.front().t;
  const double span = src.back().t - t0;

  std::vector<AccelSample> out(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + span * static_cast<double>(k) / static_cast<double>(count - 1);
    while (seg + 2 < src.size() && src[seg + 1].t <= t) ++seg;
    const auto& a = src[seg];
    const auto& b = src[seg + 1];
    const double dt = b.t - a.t;
    const double w = dt > 0.0 ? std::clamp((t - a.t) / dt, 0.0, 1.0) : 1.0;
    out[k] = {lerp(a.ax, b.ax, w), lerp(a.ay, b.ay, w), lerp(a.az, b.az, w), t};
  }
  out.back().t = src.back().t;
  const double rate = span > 0.0 ? static_cast<double>(count - 1) / span : seq.nominal_rate_hz();
  return AccelSequence(std::move(out), rate);
}

}  // namespace becaptcha
