#include "becaptcha/handcrafted.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "becaptcha/features.hpp"
#include "becaptcha/rng.hpp"

namespace becaptcha {

namespace {

Gaussian fit_gaussian(const std::vector<double>& v) {
  Gaussian g;
  if (v.empty()) return g;
  double sum = 0.0;
  for (double x : v) sum += x;
  g.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - g.mean) * (x - g.mean);
    g.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return g;
}

double draw(const Gaussian& g, Rng& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  return g.mean + g.std * unit(rng);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

// Seed streams, kept distinct so touch and accel draws are independent.
constexpr std::uint64_t kStreamTouch = 1;
constexpr std::uint64_t kStreamAccel = 2;
constexpr std::uint64_t kStreamCount = 3;

}  // namespace

SwipePriors fit_priors(std::span<const GestureSample> human, std::size_t floor) {
  std::vector<double> length, angle, duration, sx, sy, count;
  std::array<std::vector<double>, 3> accel;
  SwipePriors priors;
  bool dims_set = false;

  for (const auto& g : human) {
    if (g.label != Label::Human) {
      throw Error(Errc::InvalidArgument, "prior fitting accepts human samples only");
    }
    const auto f = touch_features(g.touch);
    if (f.degenerate) continue;
    if (!dims_set) {
      priors.screen_w = g.touch.screen_w();
      priors.screen_h = g.touch.screen_h();
      dims_set = true;
    }
    length.push_back(f.distance);
    angle.push_back(f.angle_rad);
    duration.push_back(f.duration_s);
    sx.push_back(g.touch.front().x);
    sy.push_back(g.touch.front().y);
    count.push_back(static_cast<double>(g.touch.size()));
    if (g.accel) {
      for (const auto& s : g.accel->samples()) {
        accel[0].push_back(s.ax);
        accel[1].push_back(s.ay);
        accel[2].push_back(s.az);
      }
    }
  }
  if (length.size() < floor) {
    throw Error(Errc::TooFewSamples, "prior fitting needs " + std::to_string(floor) +
                                         " usable human gestures, got " +
                                         std::to_string(length.size()));
  }
  priors.length = fit_gaussian(length);
  priors.angle = fit_gaussian(angle);
  priors.duration = fit_gaussian(duration);
  priors.start_x = fit_gaussian(sx);
  priors.start_y = fit_gaussian(sy);
  priors.point_count = fit_gaussian(count);
  priors.has_accel = !accel[0].empty();
  for (int a = 0; a < 3; ++a) priors.accel[a] = fit_gaussian(accel[a]);
  priors.n_fitted = length.size();
  return priors;
}

std::vector<double> log_spaced_fractions(std::size_t count, double log_base) {
  if (count < 2) throw Error(Errc::InvalidArgument, "need at least 2 points");
  if (!(log_base > 1.0)) throw Error(Errc::InvalidArgument, "log base must exceed 1");
  std::vector<double> s(count);
  const double denom = log_base - 1.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(count - 1);
    s[i] = (std::pow(log_base, u) - 1.0) / denom;
  }
  s.front() = 0.0;
  s.back() = 1.0;
  return s;
}

TouchTrajectory synth_touch(const SwipePriors& priors, std::uint64_t seed, std::size_t count,
                            double log_base) {
  const auto frac = log_spaced_fractions(count, log_base);
  Rng rng = make_rng(seed, kStreamTouch);

  for (int attempt = 0; attempt < kMaxPriorRejections; ++attempt) {
    const double x0 = draw(priors.start_x, rng);
    const double y0 = draw(priors.start_y, rng);
    const double len = draw(priors.length, rng);
    const double alpha = draw(priors.angle, rng);
    const double dur = draw(priors.duration, rng);
    // Inverse of the feature convention alpha = atan2(dx, dy).
    const double dx = len * std::sin(alpha);
    const double dy = len * std::cos(alpha);
    if (!(len > 0.0) || !(dur > 0.0) || !in_unit(x0) || !in_unit(y0) || !in_unit(x0 + dx) ||
        !in_unit(y0 + dy)) {
      continue;
    }
    std::vector<TouchPoint> pts(count);
    for (std::size_t i = 0; i < count; ++i) {
      pts[i].x = std::clamp(x0 + frac[i] * dx, 0.0, 1.0);
      pts[i].y = std::clamp(y0 + frac[i] * dy, 0.0, 1.0);
      pts[i].t = dur * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return TouchTrajectory(std::move(pts), priors.screen_w, priors.screen_h);
  }
  throw Error(Errc::PriorRejectionExceeded,
              "no in-screen swipe after " + std::to_string(kMaxPriorRejections) + " draws");
}

AccelSequence synth_accel(const SwipePriors& priors, std::uint64_t seed, double duration_s,
                          double rate_hz) {
  if (!(duration_s > 0.0)) throw Error(Errc::InvalidArgument, "duration must be positive");
  if (!(rate_hz > 0.0)) throw Error(Errc::InvalidArgument, "rate must be positive");
  // Guard against 0.3 * 200 = 60.000000000000007 rounding up to 61.
  auto n = static_cast<std::size_t>(std::ceil(duration_s * rate_hz - 1e-9));
  n = std::max(n, kMinAccelSamples);

  Rng rng = make_rng(seed, kStreamAccel);
  std::vector<AccelSample> samples(n);
  for (std::size_t k = 0; k < n; ++k) {
    samples[k].ax = draw(priors.accel[0], rng);
    samples[k].ay = draw(priors.accel[1], rng);
    samples[k].az = draw(priors.accel[2], rng);
    samples[k].t = static_cast<double>(k) / rate_hz;
  }
  return AccelSequence(std::move(samples), rate_hz);
}

GestureSample synth_handcrafted(const SwipePriors& priors, std::uint64_t seed,
                                const HandcraftedOptions& opts) {
  std::size_t count = kDefaultSynthPoints;
  if (opts.points) {
    count = *opts.points;
  } else if (priors.point_count.mean > 0.0) {
    Rng rng = make_rng(seed, kStreamCount);
    count = static_cast<std::size_t>(std::max(2.0, std::round(draw(priors.point_count, rng))));
  }
  auto touch = synth_touch(priors, seed, count, opts.log_base);
  std::optional<AccelSequence> accel;
  if (opts.with_accel && priors.has_accel) {
    accel = synth_accel(priors, seed, touch.duration());
  }
  SessionMeta meta{"synthetic", "handcrafted", Orientation::Portrait, "", Source::Synthetic};
  return GestureSample{std::move(touch), std::move(accel), Label::FakeHandcrafted,
                       std::move(meta)};
}

namespace {

nlohmann::json gaussian_json(const Gaussian& g) { return {g.mean, g.std}; }

Gaussian gaussian_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

nlohmann::json to_json(const SwipePriors& p) {
  return {
      {"length", gaussian_json(p.length)},
      {"angle", gaussian_json(p.angle)},
      {"duration", gaussian_json(p.duration)},
      {"start_x", gaussian_json(p.start_x)},
      {"start_y", gaussian_json(p.start_y)},
      {"point_count", gaussian_json(p.point_count)},
      {"accel",
       {gaussian_json(p.accel[0]), gaussian_json(p.accel[1]), gaussian_json(p.accel[2])}},
      {"has_accel", p.has_accel},
      {"n_fitted", p.n_fitted},
      {"screen_w", p.screen_w},
      {"screen_h", p.screen_h},
  };
}

SwipePriors priors_from_json(const nlohmann::json& j) {
  try {
    SwipePriors p;
    p.length = gaussian_from(j.at("length"));
    p.angle = gaussian_from(j.at("angle"));
    p.duration = gaussian_from(j.at("duration"));
    p.start_x = gaussian_from(j.at("start_x"));
    p.start_y = gaussian_from(j.at("start_y"));
    p.point_count = gaussian_from(j.at("point_count"));
    for (int a = 0; a < 3; ++a) p.accel[a] = gaussian_from(j.at("accel").at(a));
    p.has_accel = j.at("has_accel").get<bool>();
    p.n_fitted = j.at("n_fitted").get<std::size_t>();
    p.screen_w = j.at("screen_w").get<int>();
    p.screen_h = j.at("screen_h").get<int>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("priors: ") + e.what());
  }
}

}  // namespace becaptcha
