#include <sstream>

#include <doctest.h>

#include "becaptcha/eval.hpp"
#include "becaptcha/fixture.hpp"
#include "becaptcha/handcrafted.hpp"
#include "helpers.hpp"

using namespace becaptcha;

namespace {

// Exhaustive sweep over a fine threshold grid: the EER is read where
// |FMR - FNMR| is smallest, as the mean of the two rates.
double grid_eer(const ScoreSet& s, int steps) {
  double lo = 1e300, hi = -1e300;
  for (double v : s.genuine) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : s.impostor) lo = std::min(lo, v), hi = std::max(hi, v);
  double best_gap = 2.0, eer = 0.0;
  for (int k = 0; k <= steps; ++k) {
    const double thr = lo + (hi - lo) * k / steps;
    const double fmr = false_match_rate(s, thr);
    const double fnmr = false_non_match_rate(s, thr);
    if (std::abs(fmr - fnmr) < best_gap) {
      best_gap = std::abs(fmr - fnmr);
      eer = 0.5 * (fmr + fnmr);
    }
  }
  return eer;
}

std::vector<GestureSample> small_corpus(std::uint64_t seed) {
  FixtureConfig fc;
  fc.subjects = 8;
  fc.seed = seed;
  auto all = fixture_humans(fc);
  const auto priors = fit_priors(all);
  for (std::uint64_t i = 0; i < 80; ++i) all.push_back(synth_handcrafted(priors, i, {}));
  return all;
}

}  // namespace

TEST_CASE("separated and inverted score sets") {
  CHECK(compute_eer({{0.9, 0.8}, {0.1, 0.2}}).eer == 0.0);
  CHECK(compute_eer({{0.1, 0.2}, {0.8, 0.9}}).eer == 1.0);
  CHECK_THROWS_CODE(compute_eer({{}, {0.1}}), Errc::EmptyScores);
  CHECK_THROWS_CODE(compute_eer({{0.5}, {}}), Errc::EmptyScores);
}

TEST_CASE("exact crossing picks the lowest threshold") {
  // At 0.5: FMR = 1/2 (0.6 accepted), FNMR = 1/2 (0.4 rejected).
  const auto r = compute_eer({{0.4, 0.7}, {0.3, 0.6}});
  CHECK(r.eer == 0.5);
  CHECK(r.threshold == 0.6);
}

TEST_CASE("EER agrees with a fine-grid sweep on overlapping Gaussians") {
  std::mt19937_64 rng(51);
  for (int rep = 0; rep < 20; ++rep) {
    std::normal_distribution<double> gen(1.0 + 0.1 * rep, 1.0), imp(0.0, 1.0);
    ScoreSet s;
    for (int i = 0; i < 1000; ++i) {
      s.genuine.push_back(gen(rng));
      s.impostor.push_back(imp(rng));
    }
    CHECK(std::abs(compute_eer(s).eer - grid_eer(s, 20000)) * 100.0 <= 0.1);
  }
}

TEST_CASE("EER is invariant to strictly increasing score transforms") {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> gen(1.0, 1.0), imp(0.0, 1.0);
  ScoreSet s, t;
  for (int i = 0; i < 300; ++i) {
    s.genuine.push_back(gen(rng));
    s.impostor.push_back(imp(rng));
  }
  for (double v : s.genuine) t.genuine.push_back(std::exp(v));
  for (double v : s.impostor) t.impostor.push_back(std::exp(v));
  CHECK(compute_eer(s).eer == doctest::Approx(compute_eer(t).eer).epsilon(1e-12));
}

TEST_CASE("KS statistic") {
  std::vector<double> a{1, 2, 3, 4}, b{10, 11, 12};
  CHECK(ks_statistic(a, b) == 1.0);
  CHECK(ks_statistic(a, a) == 0.0);
  std::vector<double> c{1, 2}, d{2, 3};
  CHECK(ks_statistic(c, d) == 0.5);
}

TEST_CASE("protocol is seed-deterministic and splits do not leak") {
  const auto corpus = small_corpus(61);
  ProtocolConfig cfg;
  cfg.reps = 3;
  cfg.seed = 5;
  const auto a = run_protocol(corpus, Scenario::OneClass, FeatureMode::TouchAccel,
                              BotMethod::Handcrafted, cfg);
  const auto b = run_protocol(corpus, Scenario::OneClass, FeatureMode::TouchAccel,
                              BotMethod::Handcrafted, cfg);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(to_json(a).at("config").at("svm_defaults") == true);
  REQUIRE(a.eer_percent.size() == 3);
  CHECK(a.n_human == 80);
  for (const auto& sp : a.splits) {
    CHECK(sp.human_train.size() == 56);
    CHECK(sp.human_test.size() == 24);
    for (auto i : sp.human_test) {
      CHECK_FALSE(std::binary_search(sp.human_train.begin(), sp.human_train.end(), i));
    }
  }
  CHECK(a.splits[0].human_test != a.splits[1].human_test);
}

TEST_CASE("separable multiclass gives 0% and cross with equal methods matches multiclass") {
  const auto corpus = small_corpus(62);
  ProtocolConfig cfg;
  cfg.reps = 2;
  cfg.seed = 6;
  const auto mc = run_protocol(corpus, Scenario::Multiclass, FeatureMode::TouchAccel,
                               BotMethod::Handcrafted, cfg);
  CHECK(mc.mean_eer_percent == 0.0);
  const auto cross = run_cross_generation(corpus, BotMethod::Handcrafted, BotMethod::Handcrafted,
                                          FeatureMode::TouchAccel, cfg);
  CHECK(cross.eer_percent == mc.eer_percent);
  CHECK(cross.thresholds == mc.thresholds);
  CHECK_THROWS_CODE(run_protocol(corpus, Scenario::OneClass, FeatureMode::Touch, BotMethod::Gan, cfg),
                    Errc::InsufficientData);
}

TEST_CASE("report CSV layout") {
  EvalReport r;
  r.eer_percent = {1.5, 2.5};
  r.mean_eer_percent = 2.0;
  std::ostringstream os;
  std::vector<EvalReport> rs{r};
  write_report_csv(os, rs);
  CHECK(os.str() ==
        "scenario,feature_mode,train_method,test_method,rep,eer_percent\n"
        "one_class,touch,handcrafted,handcrafted,0,1.5\n"
        "one_class,touch,handcrafted,handcrafted,1,2.5\n"
        "one_class,touch,handcrafted,handcrafted,mean,2\n");
}

TEST_CASE("distribution report") {
  FixtureConfig fc;
  fc.subjects = 10;
  fc.seed = 63;
  const auto humans = fixture_humans(fc);
  const auto priors = fit_priors(humans);
  std::vector<GestureSample> hc;
  for (std::uint64_t i = 0; i < 100; ++i) hc.push_back(synth_handcrafted(priors, i, {}));
  const auto rep = feature_distribution_report(humans, hc, humans, 20, 100);
  REQUIRE(rep.features.size() == 6);
  for (const auto& h : rep.features) {
    for (const auto& d : h.density) {
      double sum = 0.0;
      for (double v : d) sum += v;
      CHECK(sum == doctest::Approx(1.0));
    }
    CHECK(h.ks_gan == 0.0);  // the "gan" group is the humans themselves
  }
  const auto& eff = rep.features[5];
  CHECK(eff.feature == "move_efficiency");
  const double width = (eff.hi - eff.lo) / 20.0;
  const auto bin_of_one = std::min<std::size_t>(19, static_cast<std::size_t>((1.0 - eff.lo) / width));
  CHECK(eff.density[1][bin_of_one] == 1.0);
  CHECK_THROWS_CODE(feature_distribution_report(humans, std::span(hc).first(50), humans, 20, 100),
                    Errc::InsufficientData);
}
