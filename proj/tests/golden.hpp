#pragma once

#include "becaptcha/bundle.hpp"
#include "becaptcha/fixture.hpp"
#include "becaptcha/handcrafted.hpp"

namespace testing {

/// Fixture humans plus handcrafted fakes from their own priors.
inline std::vector<becaptcha::GestureSample> fixture_with_fakes(std::size_t subjects,
                                                                std::uint64_t seed,
                                                                bool with_accel,
                                                                std::size_t fakes) {
  using namespace becaptcha;
  FixtureConfig fc;
  fc.subjects = subjects;
  fc.seed = seed;
  fc.with_accel = with_accel;
  auto all = fixture_humans(fc);
  const auto priors = fit_priors(all);
  for (std::size_t i = 0; i < fakes; ++i) {
    all.push_back(synth_handcrafted(priors, mix_seed(seed, 1'000'000 + i), {}));
  }
  return all;
}

inline becaptcha::ModelBundle golden_bundle() {
  using namespace becaptcha;
  const auto corpus = fixture_with_fakes(30, 2024, true, 300);
  std::vector<GestureSample> humans(corpus.begin(), corpus.begin() + 300);
  BundleTrainConfig cfg;
  cfg.seed = 17;
  cfg.created_at = "2024-01-01T00:00:00Z";
  return train_bundle(corpus, fit_priors(humans), cfg);
}

inline becaptcha::GestureSample golden_gesture() {
  using namespace becaptcha;
  FixtureConfig fc;
  fc.subjects = 1;
  fc.gestures_per_subject = 1;
  fc.seed = 777;
  auto g = fixture_humans(fc).front();
  g.label = Label::Unknown;
  return g;
}

inline std::vector<becaptcha::GestureSample> eval_corpus() {
  return fixture_with_fakes(6, 99, false, 60);
}

inline becaptcha::EvalReport golden_eval(const std::vector<becaptcha::GestureSample>& corpus) {
  using namespace becaptcha;
  ProtocolConfig cfg;
  cfg.seed = 1;
  return run_protocol(corpus, Scenario::OneClass, FeatureMode::Touch, BotMethod::Handcrafted, cfg);
}

}  // namespace testing
