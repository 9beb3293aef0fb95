#pragma once

#include <cstdint>
#include <vector>

#include "becaptcha/gesture.hpp"

namespace becaptcha {

/// Simulated pseudo-human swipes standing in for a recorded dataset.
/// Touch follows a minimum-jerk profile along a slightly bowed path with
/// sensor jitter; the accelerometer carries a per-subject gravity tilt,
/// a reaction to the swipe, hand tremor and white noise.
/// Every sample is labelled Human with source Fixture.
struct FixtureConfig {
  std::size_t subjects = 100;
  std::size_t gestures_per_subject = 10;
  std::uint64_t seed = 0;
  bool with_accel = true;
  double touch_rate_hz = 60.0;
  double accel_rate_hz = 200.0;
  int screen_w = 1080;
  int screen_h = 1920;
};

std::vector<GestureSample> fixture_humans(const FixtureConfig& cfg = {});

/// 10 t^3 - 15 t^4 + 6 t^5, the normalized minimum-jerk position profile.
double minimum_jerk(double tau);

}  // namespace becaptcha
