#include "becaptcha/features.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

namespace becaptcha {

namespace {

constexpr double kMinScale = 1e-12;

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double hi = *mid;
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

TouchArray TouchFeatureVector::as_array() const {
  TouchArray a;
  a << duration_s, distance, displacement, angle_rad, mean_velocity, move_efficiency;
  return a;
}

TouchFeatureVector TouchFeatureVector::from_array(const TouchArray& a) {
  TouchFeatureVector f;
  f.duration_s = a(0);
  f.distance = a(1);
  f.displacement = a(2);
  f.angle_rad = a(3);
  f.mean_velocity = a(4);
  f.move_efficiency = a(5);
  f.degenerate = f.distance == 0.0;
  return f;
}

AccelArray AccelFeatureVector::as_array() const {
  AccelArray a;
  a << mean, median, rms, std;
  return a;
}

AccelFeatureVector AccelFeatureVector::from_array(const AccelArray& a) {
  AccelFeatureVector f;
  f.mean = a.segment<3>(0);
  f.median = a.segment<3>(3);
  f.rms = a.segment<3>(6);
  f.std = a.segment<3>(9);
  return f;
}

std::string_view to_string(FeatureMode m) {
  return m == FeatureMode::Touch ? "touch" : "touch_accel";
}

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "touch") return FeatureMode::Touch;
  if (s == "touch_accel") return FeatureMode::TouchAccel;
  throw Error(Errc::InvalidArgument, "unknown feature mode '" + std::string(s) + "'");
}

Eigen::VectorXd CombinedFeatureVector::as_array() const {
  Eigen::VectorXd out(accel ? kCombinedFeatureDim : kTouchFeatureDim);
  out.head<kTouchFeatureDim>() = touch.as_array();
  if (accel) out.tail<kAccelFeatureDim>() = accel->as_array();
  return out;
}

CombinedFeatureVector CombinedFeatureVector::from_array(const Eigen::VectorXd& a) {
  if (a.size() != kTouchFeatureDim && a.size() != kCombinedFeatureDim) {
    throw Error(Errc::DimensionMismatch, "feature array must have 6 or 18 entries");
  }
  CombinedFeatureVector f;
  f.touch = TouchFeatureVector::from_array(a.head<kTouchFeatureDim>());
  if (a.size() == kCombinedFeatureDim) {
    f.accel = AccelFeatureVector::from_array(a.tail<kAccelFeatureDim>());
  }
  return f;
}

TouchFeatureVector touch_features(std::span<const TouchPoint> points) {
  if (points.size() < 2) throw Error(Errc::EmptyGesture, "need at least 2 points");
  const std::size_t n = points.size() - 1;
  const auto& first = points.front();
  const auto& last = points.back();

  TouchFeatureVector f;
  f.duration_s = last.t - first.t;
  const double dx = last.x - first.x;
  const double dy = last.y - first.y;
  f.distance = std::hypot(dx, dy);
  // Argument order follows the feature definition: x-difference over
  // y-difference. A rightward horizontal swipe therefore has angle pi/2.
  f.angle_rad = std::atan2(dx, dy);

  double path = 0.0;
  double speed_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double seg = std::hypot(points[i + 1].x - points[i].x, points[i + 1].y - points[i].y);
    const double dt = points[i + 1].t - points[i].t;
    if (!(dt > 0.0)) {
      throw Error(Errc::ZeroDt, "non-increasing timestamp at segment " + std::to_string(i));
    }
    path += seg;
    speed_sum += seg / dt;
  }
  f.displacement = path;
  f.mean_velocity = speed_sum / static_cast<double>(n);
  if (f.distance > 0.0) {
    f.move_efficiency = f.displacement / f.distance;
  } else {
    f.move_efficiency = 0.0;
    f.degenerate = true;
  }
  return f;
}

TouchFeatureVector touch_features(const TouchTrajectory& traj) {
  return touch_features(traj.points());
}

AccelFeatureVector accel_features(const Eigen::MatrixX3d& axes) {
  const auto n = axes.rows();
  if (n < static_cast<Eigen::Index>(kMinAccelSamples)) {
    throw Error(Errc::TooFewSamples, "accelerometer features need at least 4 samples");
  }
  AccelFeatureVector f;
  const double inv_n = 1.0 / static_cast<double>(n);
  f.mean = axes.colwise().sum().transpose() * inv_n;
  const Eigen::Vector3d mean_sq = axes.array().square().colwise().sum().transpose() * inv_n;
  f.rms = mean_sq.cwiseSqrt();
  f.std = (mean_sq - f.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  for (int c = 0; c < 3; ++c) {
    std::vector<double> col(axes.col(c).begin(), axes.col(c).end());
    f.median(c) = median_of(std::move(col));
  }
  return f;
}

AccelFeatureVector accel_features(const AccelSequence& seq) { return accel_features(seq.axes()); }

CombinedFeatureVector combine(const TouchFeatureVector& touch,
                              const std::optional<AccelFeatureVector>& accel) {
  return CombinedFeatureVector{touch, accel};
}

CombinedFeatureVector extract(const GestureSample& sample, FeatureMode mode) {
  auto touch = touch_features(sample.touch);
  if (mode == FeatureMode::Touch) return combine(touch);
  if (!sample.accel) {
    throw Error(Errc::InvalidArgument, "touch_accel features need an accelerometer sequence");
  }
  return combine(touch, accel_features(*sample.accel));
}

Eigen::MatrixXd feature_matrix(std::span<const GestureSample> samples, FeatureMode mode) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples.size()), feature_dim(mode));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = extract(samples[i], mode).as_array().transpose();
  }
  return out;
}

Standardizer::Standardizer(Eigen::VectorXd mean, Eigen::VectorXd scale)
    : mean_(std::move(mean)), scale_(std::move(scale)) {
  if (mean_.size() != scale_.size()) {
    throw Error(Errc::DimensionMismatch, "standardizer mean/scale size mismatch");
  }
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& train) {
  if (train.rows() < 2) throw Error(Errc::TooFewSamples, "standardizer needs >= 2 rows");
  if (!train.allFinite()) throw Error(Errc::NonFinite, "non-finite training feature");
  const double inv_n = 1.0 / static_cast<double>(train.rows());
  Eigen::VectorXd mean = train.colwise().sum().transpose() * inv_n;
  Eigen::VectorXd var =
      (train.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() * inv_n;
  Eigen::VectorXd scale = var.cwiseSqrt();
  for (Eigen::Index c = 0; c < scale.size(); ++c) {
    if (scale(c) < kMinScale) scale(c) = 1.0;
  }
  return Standardizer(std::move(mean), std::move(scale));
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& v) const {
  if (v.size() != dim()) throw Error(Errc::DimensionMismatch, "standardizer dimension mismatch");
  return (v - mean_).cwiseQuotient(scale_);
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != dim()) {
    throw Error(Errc::DimensionMismatch, "standardizer dimension mismatch");
  }
  return (rows.rowwise() - mean_.transpose()).array().rowwise() /
         scale_.transpose().array();
}

void write_feature_csv(std::ostream& os, std::span<const CombinedFeatureVector> rows) {
  for (std::size_t c = 0; c < kFeatureNames.size(); ++c) {
    os << (c ? "," : "") << kFeatureNames[c];
  }
  os << '\n';
  const auto old_precision = os.precision(17);
  for (const auto& row : rows) {
    const Eigen::VectorXd a = row.as_array();
    for (Eigen::Index c = 0; c < kCombinedFeatureDim; ++c) {
      if (c) os << ',';
      if (c < a.size()) os << a(c);
    }
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace becaptcha
