#include "becaptcha/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "becaptcha/rng.hpp"

namespace becaptcha {

namespace {

constexpr double kGravity = 9.81;

struct Subject {
  double length_mean;
  double speed_coef;  // seconds per unit of length
  double tilt;        // pitch of the phone, radians
  double roll;
  double tremor_hz;
  double tremor_amp;
  double coupling;    // how strongly the swipe shakes the phone
};

Subject draw_subject(Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Subject s;
  s.length_mean = 0.55 + 0.06 * n01(rng);
  s.speed_coef = std::max(0.2, 0.5 + 0.1 * n01(rng));
  s.tilt = 0.6 + 0.2 * n01(rng);
  s.roll = 0.1 * n01(rng);
  s.tremor_hz = 8.0 + 4.0 * u01(rng);
  s.tremor_amp = 0.05 + 0.1 * u01(rng);
  s.coupling = 0.01 + 0.02 * u01(rng);
  return s;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Second derivative of minimum_jerk with respect to tau.
double minimum_jerk_acc(double tau) { return 60.0 * tau - 180.0 * tau * tau + 120.0 * tau * tau * tau; }

GestureSample draw_gesture(const Subject& s, const FixtureConfig& cfg, Rng& rng,
                           const std::string& subject_id) {
  std::normal_distribution<double> n01(0.0, 1.0);

  const double length = std::clamp(s.length_mean + 0.06 * n01(rng), 0.15, 0.85);
  const double angle = std::numbers::pi / 2.0 + 0.08 * n01(rng);
  const double x0 = std::clamp(0.15 + 0.04 * n01(rng), 0.02, 0.3);
  const double y0 = std::clamp(0.85 + 0.05 * n01(rng), 0.6, 0.98);
  const double duration = std::max(0.1, 0.15 + s.speed_coef * length + 0.05 * n01(rng));
  const double bow = 0.03 * length * n01(rng);

  const double ux = std::sin(angle);
  const double uy = std::cos(angle);
  const double px = -uy;  // unit normal to the swipe direction
  const double py = ux;

  std::vector<double> times{0.0};
  const double dt = 1.0 / cfg.touch_rate_hz;
  for (double t = dt; t < duration - 0.5 * dt; t += dt) {
    times.push_back(std::clamp(t + 0.002 * n01(rng), times.back() + 1e-4, duration - 1e-4));
  }
  times.push_back(duration);

  std::vector<TouchPoint> points;
  points.reserve(times.size());
  for (double t : times) {
    const double tau = t / duration;
    const double along = length * minimum_jerk(tau);
    const double off = bow * std::sin(std::numbers::pi * minimum_jerk(tau));
    TouchPoint p;
    p.x = clamp01(x0 + along * ux + off * px + 0.0015 * n01(rng));
    p.y = clamp01(y0 + along * uy + off * py + 0.0015 * n01(rng));
    p.p = std::clamp(0.45 + 0.1 * n01(rng), 0.05, 1.0);
    p.t = t;
    points.push_back(p);
  }

  GestureSample g{TouchTrajectory(std::move(points), cfg.screen_w, cfg.screen_h), std::nullopt,
                  Label::Human, {}};
  g.meta.subject_id = subject_id;
  g.meta.device_model = "fixture";
  g.meta.source = Source::Fixture;

  if (cfg.with_accel) {
    const double gx = kGravity * std::sin(s.roll);
    const double gy = kGravity * std::sin(s.tilt) * std::cos(s.roll);
    const double gz = kGravity * std::cos(s.tilt) * std::cos(s.roll);
    const double phase = 2.0 * std::numbers::pi * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double swipe_acc = length / (duration * duration);
    const auto n = static_cast<std::size_t>(std::floor(duration * cfg.accel_rate_hz)) + 1;
    std::vector<AccelSample> acc;
    acc.reserve(std::max<std::size_t>(n, 4));
    for (std::size_t k = 0; k < std::max<std::size_t>(n, 4); ++k) {
      const double t = std::min(duration, static_cast<double>(k) / cfg.accel_rate_hz);
      const double react = -s.coupling * swipe_acc * minimum_jerk_acc(t / duration);
      const double tremor =
          s.tremor_amp * std::sin(2.0 * std::numbers::pi * s.tremor_hz * t + phase);
      AccelSample a;
      a.ax = gx + react * ux + tremor + 0.02 * n01(rng);
      a.ay = gy + react * uy + 0.5 * tremor + 0.02 * n01(rng);
      a.az = gz + 0.3 * tremor + 0.02 * n01(rng);
      a.t = t;
      acc.push_back(a);
    }
    g.accel = AccelSequence(std::move(acc), cfg.accel_rate_hz);
  }
  return g;
}

}  // namespace

double minimum_jerk(double tau) {
  const double t3 = tau * tau * tau;
  return 10.0 * t3 - 15.0 * t3 * tau + 6.0 * t3 * tau * tau;
}

std::vector<GestureSample> fixture_humans(const FixtureConfig& cfg) {
  std::vector<GestureSample> out;
  out.reserve(cfg.subjects * cfg.gestures_per_subject);
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    Rng rng = make_rng(cfg.seed, s);
    const Subject subject = draw_subject(rng);
    const std::string id = "fx" + std::to_string(s);
    for (std::size_t k = 0; k < cfg.gestures_per_subject; ++k) {
      out.push_back(draw_gesture(subject, cfg, rng, id));
    }
  }
  return out;
}

}  // namespace becaptcha
