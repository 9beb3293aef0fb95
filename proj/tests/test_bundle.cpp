#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "becaptcha/bundle.hpp"
#include "becaptcha/fixture.hpp"
#include "becaptcha/handcrafted.hpp"
#include "golden.hpp"
#include "helpers.hpp"

using namespace becaptcha;

namespace {

const ModelBundle& fixture_bundle() {
  static const ModelBundle b = [] {
    const auto corpus = testing::fixture_with_fakes(100, 5, true, 1000);
    std::vector<GestureSample> humans(corpus.begin(), corpus.begin() + 1000);
    BundleTrainConfig cfg;
    cfg.seed = 3;
    return train_bundle(corpus, fit_priors(humans), cfg);
  }();
  return b;
}

}  // namespace

TEST_CASE("handcrafted fakes are rejected by a touch+accel bundle") {
  const auto& b = fixture_bundle();
  CHECK(b.feature_mode == FeatureMode::TouchAccel);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto fake = synth_handcrafted(b.priors, mix_seed(12345, s), {});
    const auto v = verify(b, fake);
    CHECK_FALSE(v.is_human);
    CHECK(v.warnings.empty());
  }
}

TEST_CASE("held-out fixture humans pass at least 95% of the time") {
  const auto& b = fixture_bundle();
  FixtureConfig fc;
  fc.subjects = 20;
  fc.seed = 999;  // subjects never seen in training
  const auto humans = fixture_humans(fc);
  std::size_t pass = 0;
  for (const auto& h : humans) pass += verify(b, h).is_human ? 1 : 0;
  MESSAGE("held-out humans accepted: " << pass << " / " << humans.size());
  CHECK(static_cast<double>(pass) >= 0.95 * static_cast<double>(humans.size()));
}

TEST_CASE("verdict invariants and purity") {
  const auto& b = fixture_bundle();
  const auto g = testing::golden_gesture();
  const auto v1 = verify(b, g);
  const auto v2 = verify(b, g);
  CHECK(v1 == v2);
  CHECK(v1.is_human == (v1.human_score >= v1.threshold));
  REQUIRE(v1.features.has_value());
  CHECK(v1.features->as_array().size() == 18);
}

TEST_CASE("missing accelerometer falls back to the touch-only detector") {
  auto g = testing::golden_gesture();
  g.accel.reset();
  const auto& b = fixture_bundle();
  const auto v = verify(b, g);
  REQUIRE(v.warnings.size() == 1);
  CHECK(v.warnings[0].find("touch-only") != std::string::npos);
  CHECK(v.threshold == b.touch_threshold);
  CHECK(v.features->as_array().size() == 6);

  auto no_fallback = b;
  no_fallback.touch_detector.reset();
  CHECK_THROWS_CODE(verify(no_fallback, g), Errc::ModelMissing);
}

TEST_CASE("a gesture that ends where it started is not human") {
  const auto& b = fixture_bundle();
  auto g = testing::golden_gesture();
  std::vector<TouchPoint> loop{{0.3, 0.3, {}, 0.0}, {0.5, 0.4, {}, 0.1}, {0.3, 0.3, {}, 0.2}};
  g.touch = TouchTrajectory(loop, 1080, 1920);
  const auto v = verify(b, g);
  CHECK_FALSE(v.is_human);
  CHECK(std::isinf(v.human_score));
  CHECK(v.warnings.back().find("degenerate") != std::string::npos);
  CHECK(to_json(v)["human_score"].is_null());
}

TEST_CASE("bundle and verdict serialization") {
  const auto& b = fixture_bundle();
  const auto path = std::filesystem::temp_directory_path() / "becaptcha_bundle_rt.json";
  save_bundle(b, path);
  const auto back = load_bundle(path);
  CHECK(bundle_hash(back) == bundle_hash(b));
  const auto g = testing::golden_gesture();
  CHECK(verify(back, g) == verify(b, g));
  const auto v = verify(b, g);
  CHECK(verdict_from_json(nlohmann::json::parse(to_json(v).dump())) == v);

  {
    std::ofstream os(path);
    os << "{\"schema\": \"becaptcha-model/1\", \"kind\": \"bundle\"";
  }
  CHECK_THROWS_CODE(load_bundle(path), Errc::BundleLoadError);
  std::filesystem::remove(path);
  CHECK_THROWS_CODE(load_bundle(path), Errc::BundleLoadError);
}

TEST_CASE("bundle rejects a detector of the wrong width") {
  auto j = to_json(fixture_bundle());
  j["feature_mode"] = "touch";
  CHECK_THROWS_CODE(bundle_from_json(j), Errc::ParseError);
}

TEST_CASE("training needs fakes for calibration") {
  const auto corpus = testing::fixture_with_fakes(5, 1, true, 0);
  BundleTrainConfig cfg;
  CHECK_THROWS_CODE(train_bundle(corpus, fit_priors(corpus), cfg), Errc::InsufficientData);
}
