#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "becaptcha/error.hpp"
#include "becaptcha/gesture.hpp"

#define CHECK_THROWS_CODE(expr, errc)                          \
  do {                                                         \
    bool thrown_ = false;                                      \
    try {                                                      \
      (void)(expr);                                            \
    } catch (const becaptcha::Error& e_) {                     \
      thrown_ = true;                                          \
      CHECK_MESSAGE(e_.code() == (errc), e_.what());           \
    }                                                          \
    CHECK_MESSAGE(thrown_, "expected " #errc " from " #expr);  \
  } while (0)

namespace testing {

// Random polyline with strictly increasing times starting at 0.
inline std::vector<becaptcha::TouchPoint> random_points(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<becaptcha::TouchPoint> pts;
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    becaptcha::TouchPoint p;
    p.x = u(rng);
    p.y = u(rng);
    if (i % 3 != 0) p.p = u(rng);
    p.t = t;
    t += 0.001 + 0.05 * u(rng);
    pts.push_back(p);
  }
  return pts;
}

inline becaptcha::AccelSequence random_accel(std::mt19937_64& rng, std::size_t n, double span) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<becaptcha::AccelSample> s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back({g(rng), 3.0 + g(rng), 9.0 + 0.5 * g(rng),
                 span * static_cast<double>(i) / static_cast<double>(n - 1)});
  }
  return becaptcha::AccelSequence(std::move(s));
}

inline becaptcha::GestureSample random_sample(std::mt19937_64& rng, std::size_t n, bool accel) {
  auto pts = random_points(rng, n);
  const double span = pts.back().t;
  becaptcha::GestureSample g{becaptcha::TouchTrajectory(std::move(pts), 1080, 1920),
                             std::nullopt, becaptcha::Label::Human, {}};
  g.meta.subject_id = "s1";
  if (accel) g.accel = random_accel(rng, 40, span);
  return g;
}

}  // namespace testing
