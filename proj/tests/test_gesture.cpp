#include <doctest.h>

#include "helpers.hpp"

using namespace becaptcha;

TEST_CASE("normalize_touch scales pixels and milliseconds") {
  std::vector<RawTouchPoint> raw{{0, 0, {}, 0}, {540, 0, {}, 500}, {1080, 0, {}, 1000}};
  const auto tr = normalize_touch(raw, 1080, 1920);
  REQUIRE(tr.size() == 3);
  CHECK(tr.points()[1].x == 0.5);
  CHECK(tr.points()[1].t == 0.5);
  CHECK(tr.points()[2].x == 1.0);
  CHECK(tr.points()[2].t == 1.0);
  CHECK_FALSE(tr.points()[0].p.has_value());
}

TEST_CASE("normalize_touch sorts and shifts to t0 = 0") {
  std::vector<RawTouchPoint> raw{{1080, 1920, {}, 100}, {0, 0, {}, 0}};
  const auto tr = normalize_touch(raw, 1080, 1920);
  CHECK(tr.points()[0].x == 0.0);
  CHECK(tr.points()[0].t == 0.0);
  CHECK(tr.points()[1].x == 1.0);
  CHECK(tr.points()[1].y == 1.0);
  CHECK(tr.points()[1].t == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("normalize_touch matches per-point division on a 50 point drag") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(0, 1080), uy(0, 1920);
  std::vector<RawTouchPoint> raw;
  double t = 1234.5;
  for (int i = 0; i < 50; ++i) {
    raw.push_back({ux(rng), uy(rng), 0.5, t});
    t += 16.7;
  }
  const auto tr = normalize_touch(raw, 1080, 1920);
  REQUIRE(tr.size() == 50);
  for (int i = 0; i < 50; ++i) {
    const auto& p = tr.points()[static_cast<std::size_t>(i)];
    CHECK(p.x == raw[static_cast<std::size_t>(i)].x_px / 1080.0);
    CHECK(p.y == raw[static_cast<std::size_t>(i)].y_px / 1920.0);
    CHECK(p.t == (raw[static_cast<std::size_t>(i)].t_ms - 1234.5) / 1000.0);
  }
}

TEST_CASE("normalize_touch keeps the last sample of a repeated timestamp") {
  std::vector<RawTouchPoint> raw{{0, 0, {}, 0}, {100, 0, {}, 10}, {200, 0, {}, 10}, {300, 0, {}, 20}};
  const auto tr = normalize_touch(raw, 1000, 1000);
  REQUIRE(tr.size() == 3);
  CHECK(tr.points()[1].x == 0.2);
}

TEST_CASE("normalize_touch tolerates 1% overshoot and rejects more") {
  std::vector<RawTouchPoint> ok{{-5, 0, {}, 0}, {1005, 1000, {}, 10}};
  const auto tr = normalize_touch(ok, 1000, 1000);
  CHECK(tr.points()[0].x == 0.0);
  CHECK(tr.points()[1].x == 1.0);
  std::vector<RawTouchPoint> bad{{0, 0, {}, 0}, {1050, 0, {}, 10}};
  CHECK_THROWS_CODE(normalize_touch(bad, 1000, 1000), Errc::OutOfScreen);
  std::vector<RawTouchPoint> single{{0, 0, {}, 0}, {10, 0, {}, 0}};
  CHECK_THROWS_CODE(normalize_touch(single, 1000, 1000), Errc::EmptyGesture);
}

TEST_CASE("TouchTrajectory validates its invariants") {
  using P = TouchPoint;
  CHECK_THROWS_CODE(TouchTrajectory({P{0, 0, {}, 0}}, 10, 10), Errc::EmptyGesture);
  CHECK_THROWS_CODE(TouchTrajectory({P{0, 0, {}, 0.1}, P{1, 1, {}, 0.2}}, 10, 10),
                    Errc::InvalidArgument);
  CHECK_THROWS_CODE(TouchTrajectory({P{0, 0, {}, 0}, P{1.5, 1, {}, 0.2}}, 10, 10),
                    Errc::OutOfScreen);
  CHECK_THROWS_CODE(TouchTrajectory({P{0, 0, {}, 0}, P{NAN, 1, {}, 0.2}}, 10, 10), Errc::NonFinite);
  CHECK_THROWS_CODE(TouchTrajectory({P{0, 0, {}, 0}, P{0, 0, {}, 0.2}, P{1, 1, {}, 0.1}}, 10, 10),
                    Errc::InvalidArgument);
  CHECK_THROWS_CODE(TouchTrajectory({P{0, 0, {}, 0}, P{1, 1, {}, 0}}, 10, 10), Errc::EmptyGesture);
}

TEST_CASE("resample_touch on a 2 point line gives equally spaced collinear points") {
  TouchTrajectory tr({{0.1, 0.2, {}, 0}, {0.5, 0.6, {}, 1.0}}, 100, 100);
  const auto r = resample_touch(tr, 5);
  REQUIRE(r.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const double s = static_cast<double>(i) / 4.0;
    CHECK(r.points()[i].x == doctest::Approx(0.1 + 0.4 * s).epsilon(1e-14));
    CHECK(r.points()[i].y == doctest::Approx(0.2 + 0.4 * s).epsilon(1e-14));
    CHECK(r.points()[i].t == doctest::Approx(s).epsilon(1e-14));
  }
}

TEST_CASE("resample_touch is the identity on uniformly timed input") {
  std::mt19937_64 rng(3);
  auto pts = testing::random_points(rng, 12);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i].t = 0.05 * static_cast<double>(i);
    pts[i].p = 0.3;
  }
  TouchTrajectory tr(pts, 100, 100);
  const auto r = resample_touch(tr, pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(std::abs(r.points()[i].x - pts[i].x) <= 1e-12);
    CHECK(std::abs(r.points()[i].y - pts[i].y) <= 1e-12);
    CHECK(std::abs(r.points()[i].t - pts[i].t) <= 1e-12);
  }
}

TEST_CASE("resample_touch matches a brute-force piecewise-linear evaluation") {
  std::mt19937_64 rng(11);
  const auto pts = testing::random_points(rng, 37);
  TouchTrajectory tr(pts, 100, 100);
  const auto r = resample_touch(tr, 32);
  REQUIRE(r.size() == 32);
  CHECK(r.points().front().x == pts.front().x);
  CHECK(r.points().back().x == pts.back().x);
  CHECK(r.points().back().y == pts.back().y);
  const double span = pts.back().t;
  for (std::size_t k = 1; k + 1 < 32; ++k) {
    const double t = span * static_cast<double>(k) / 31.0;
    std::size_t j = 0;
    while (!(pts[j].t <= t && t <= pts[j + 1].t)) ++j;
    const double w = (t - pts[j].t) / (pts[j + 1].t - pts[j].t);
    CHECK(r.points()[k].x == doctest::Approx(pts[j].x + w * (pts[j + 1].x - pts[j].x)).epsilon(1e-12));
    CHECK(r.points()[k].y == doctest::Approx(pts[j].y + w * (pts[j + 1].y - pts[j].y)).epsilon(1e-12));
  }
}

TEST_CASE("AccelSequence needs four ordered samples") {
  CHECK_THROWS_CODE(AccelSequence({{0, 0, 0, 0}, {0, 0, 0, 0.1}, {0, 0, 0, 0.2}}),
                    Errc::TooFewSamples);
  CHECK_THROWS_CODE(AccelSequence({{0, 0, 0, 0}, {0, 0, 0, 0.3}, {0, 0, 0, 0.2}, {0, 0, 0, 0.4}}),
                    Errc::InvalidArgument);
  AccelSequence ok({{1, 2, 3, 0}, {1, 2, 3, 0.1}, {1, 2, 3, 0.2}, {4, 5, 6, 0.3}});
  CHECK(ok.axes().rows() == 4);
  CHECK(ok.axes()(3, 2) == 6.0);
}

TEST_CASE("resample_accel keeps endpoints and spans the same time") {
  std::mt19937_64 rng(2);
  const auto seq = testing::random_accel(rng, 50, 0.7);
  const auto r = resample_accel(seq, 32);
  REQUIRE(r.size() == 32);
  CHECK(r.samples().front().ax == seq.samples().front().ax);
  CHECK(r.samples().back().az == seq.samples().back().az);
  CHECK(r.samples().back().t == doctest::Approx(0.7));
}

TEST_CASE("validate rejects recorded data without subject and disjoint sensor spans") {
  std::mt19937_64 rng(1);
  auto g = testing::random_sample(rng, 5, false);
  CHECK_NOTHROW(validate(g));
  g.meta.subject_id.clear();
  CHECK_THROWS_CODE(validate(g), Errc::InvalidArgument);
  g.meta.source = Source::Synthetic;
  CHECK_NOTHROW(validate(g));
  const double end = g.touch.duration();
  g.accel = AccelSequence({{0, 0, 0, end + 1}, {0, 0, 0, end + 2}, {0, 0, 0, end + 3},
                           {0, 0, 0, end + 4}});
  CHECK_THROWS_CODE(validate(g), Errc::InvalidArgument);
}

TEST_CASE("enum names round-trip") {
  for (auto l : {Label::Human, Label::FakeHandcrafted, Label::FakeGan, Label::Unknown}) {
    CHECK(parse_label(to_string(l)) == l);
  }
  for (auto s : {Source::Recorded, Source::Synthetic, Source::Fixture}) {
    CHECK(parse_source(to_string(s)) == s);
  }
  CHECK_THROWS_CODE(parse_label("robot"), Errc::ParseError);
}
