#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include <json.hpp>

#include "becaptcha/gesture.hpp"

namespace becaptcha {

struct Gaussian {
  double mean = 0.0;
  double std = 0.0;

  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

/// Gaussian fits of human swipe parameters. The velocity profile is not
/// fitted; synthesis imposes a log-spaced schedule instead.
struct SwipePriors {
  Gaussian length;
  Gaussian angle;
  Gaussian duration;
  Gaussian start_x;
  Gaussian start_y;
  Gaussian point_count;
  // Per-axis distribution of raw accelerometer samples, pooled over gestures.
  std::array<Gaussian, 3> accel{};
  bool has_accel = false;
  std::size_t n_fitted = 0;
  int screen_w = 1080;
  int screen_h = 1920;

  friend bool operator==(const SwipePriors&, const SwipePriors&) = default;
};

inline constexpr std::size_t kDefaultPriorFloor = 30;
inline constexpr double kDefaultLogBase = 10.0;
inline constexpr std::size_t kDefaultSynthPoints = 32;
inline constexpr int kMaxPriorRejections = 1000;

/// Fits priors on human gestures. Degenerate (zero-length) swipes are skipped;
/// throws TooFewSamples when fewer than `floor` usable gestures remain.
SwipePriors fit_priors(std::span<const GestureSample> human,
                       std::size_t floor = kDefaultPriorFloor);

/// Straight swipe whose points sit at arc-length fractions
/// (b^(i/(T-1)) - 1) / (b - 1) with uniform timestamps, so segment speed grows
/// along the swipe.
TouchTrajectory synth_touch(const SwipePriors& priors, std::uint64_t seed,
                            std::size_t count = kDefaultSynthPoints,
                            double log_base = kDefaultLogBase);

/// Fractions used by synth_touch for `count` points.
std::vector<double> log_spaced_fractions(std::size_t count, double log_base);

/// i.i.d. per-axis Gaussian samples, ceil(duration * rate) of them (at least 4).
AccelSequence synth_accel(const SwipePriors& priors, std::uint64_t seed, double duration_s,
                          double rate_hz = kDefaultAccelRateHz);

struct HandcraftedOptions {
  // Empty: draw the point count from the fitted human distribution.
  std::optional<std::size_t> points;
  double log_base = kDefaultLogBase;
  bool with_accel = true;
};

/// Complete fake sample (touch plus, when priors allow, accelerometer).
GestureSample synth_handcrafted(const SwipePriors& priors, std::uint64_t seed,
                                const HandcraftedOptions& opts = {});

nlohmann::json to_json(const SwipePriors& priors);
SwipePriors priors_from_json(const nlohmann::json& j);

}  // namespace becaptcha
