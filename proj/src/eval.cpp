#include "becaptcha/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <ostream>

#include "becaptcha/model_io.hpp"
#include "becaptcha/rng.hpp"

namespace becaptcha {

namespace {

double rate_below(const std::vector<double>& sorted, double threshold) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), threshold);
  return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

std::vector<double> sorted_copy(const std::vector<double>& v) {
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  return s;
}

struct PreparedData {
  Eigen::MatrixXd human;
  Eigen::MatrixXd fake_train;
  Eigen::MatrixXd fake_test;
};

Eigen::MatrixXd usable_features(std::span<const GestureSample> samples, Label label,
                                FeatureMode mode) {
  std::vector<Eigen::VectorXd> rows;
  for (const auto& s : samples) {
    if (s.label != label) continue;
    const auto f = extract(s, mode);
    if (f.touch.degenerate) continue;
    rows.push_back(f.as_array());
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), feature_dim(mode));
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  return out;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(Eigen::Index n, double frac,
                                                                   Rng& rng) {
  std::vector<std::size_t> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto cut = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(cut), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// Shared body of run_protocol and run_cross_generation.
EvalReport run_split_protocol(const PreparedData& data, Scenario scenario, bool cross,
                              FeatureMode mode, BotMethod train_method, BotMethod test_method,
                              const ProtocolConfig& cfg) {
  if (cfg.reps < 1) throw Error(Errc::InvalidArgument, "reps must be >= 1");
  if (!(cfg.train_frac > 0.0 && cfg.train_frac < 1.0)) {
    throw Error(Errc::InvalidArgument, "train_frac must lie in (0, 1)");
  }
  constexpr Eigen::Index kMinPerClass = 4;
  if (data.human.rows() < kMinPerClass || data.fake_train.rows() < kMinPerClass ||
      data.fake_test.rows() < kMinPerClass) {
    throw Error(Errc::InsufficientData, "protocol needs at least 4 usable samples per group");
  }

  EvalReport report;
  report.scenario = scenario;
  report.feature_mode = mode;
  report.train_method = train_method;
  report.test_method = test_method;
  report.config = cfg;
  report.n_human = static_cast<std::size_t>(data.human.rows());
  report.n_fake_train_method = static_cast<std::size_t>(data.fake_train.rows());
  report.n_fake_test_method = static_cast<std::size_t>(data.fake_test.rows());

  for (int rep = 0; rep < cfg.reps; ++rep) {
    Rng rng = make_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(rep));
    auto [h_train, h_test] = split(data.human.rows(), cfg.train_frac, rng);
    // The test-method split replays the same random stream, so identical
    // fake sets split identically.
    Rng rng_test = rng;
    auto [f_train, f_unused] = split(data.fake_train.rows(), cfg.train_frac, rng);
    auto [f_unused2, f_test] = split(data.fake_test.rows(), cfg.train_frac, rng_test);
    if (h_train.empty() || h_test.empty() || f_test.empty() || f_train.empty()) {
      throw Error(Errc::InsufficientData, "split left an empty partition");
    }

    SvmParams svm = cfg.svm;
    svm.seed = mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(rep));
    const Eigen::MatrixXd xh = take_rows(data.human, h_train);
    SvmModel model;
    if (scenario == Scenario::OneClass) {
      model = train_one_class(xh, svm);
    } else {
      const Eigen::MatrixXd xf = take_rows(data.fake_train, f_train);
      Eigen::MatrixXd x(xh.rows() + xf.rows(), xh.cols());
      x << xh, xf;
      std::vector<int> y(static_cast<std::size_t>(x.rows()), -1);
      std::fill(y.begin(), y.begin() + xh.rows(), 1);
      model = train_binary(x, y, svm);
    }

    ScoreSet scores;
    scores.genuine = to_std(decision_scores(model, take_rows(data.human, h_test)));
    scores.impostor = to_std(decision_scores(model, take_rows(data.fake_test, f_test)));
    const auto eer = compute_eer(scores);
    report.eer_percent.push_back(eer.percent());
    report.thresholds.push_back(eer.threshold);
    report.gammas.push_back(model.kernel.gamma);
    report.splits.push_back({std::move(h_train), std::move(h_test),
                             cross ? std::move(f_train) : f_train, std::move(f_test)});
  }
  report.mean_eer_percent =
      std::accumulate(report.eer_percent.begin(), report.eer_percent.end(), 0.0) /
      static_cast<double>(report.eer_percent.size());
  return report;
}

}  // namespace

double false_match_rate(const ScoreSet& s, double threshold) {
  if (s.impostor.empty()) throw Error(Errc::EmptyScores, "no impostor scores");
  const auto n = std::count_if(s.impostor.begin(), s.impostor.end(),
                               [&](double v) { return v >= threshold; });
  return static_cast<double>(n) / static_cast<double>(s.impostor.size());
}

double false_non_match_rate(const ScoreSet& s, double threshold) {
  if (s.genuine.empty()) throw Error(Errc::EmptyScores, "no genuine scores");
  const auto n = std::count_if(s.genuine.begin(), s.genuine.end(),
                               [&](double v) { return v < threshold; });
  return static_cast<double>(n) / static_cast<double>(s.genuine.size());
}

EerResult compute_eer(const ScoreSet& scores) {
  if (scores.genuine.empty() || scores.impostor.empty()) {
    throw Error(Errc::EmptyScores, "EER needs genuine and impostor scores");
  }
  const auto gen = sorted_copy(scores.genuine);
  const auto imp = sorted_copy(scores.impostor);
  for (double v : gen) {
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, "non-finite genuine score");
  }
  for (double v : imp) {
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, "non-finite impostor score");
  }

  std::vector<double> grid;
  grid.reserve(gen.size() + imp.size() + 1);
  std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(), std::back_inserter(grid));
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  // Past the top score nobody is accepted: FMR = 0, FNMR = 1.
  grid.push_back(std::nextafter(grid.back(), std::numeric_limits<double>::infinity()));

  double prev_fmr = 1.0;
  double prev_fnmr = 0.0;
  double prev_thr = grid.front();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double thr = grid[k];
    const double fnmr = rate_below(gen, thr);
    const double fmr = 1.0 - rate_below(imp, thr);
    const double d = fmr - fnmr;
    if (d == 0.0) return {fmr, thr};
    if (d < 0.0) {
      // k >= 1 here: at the lowest score FNMR = 0 and FMR > 0.
      const double d_prev = prev_fmr - prev_fnmr;
      const double w = d_prev / (d_prev - d);
      return {prev_fmr + w * (fmr - prev_fmr), prev_thr + w * (thr - prev_thr)};
    }
    prev_fmr = fmr;
    prev_fnmr = fnmr;
    prev_thr = thr;
  }
  return {prev_fmr, prev_thr};  // unreachable: the sentinel always crosses
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(Errc::InsufficientData, "KS needs two non-empty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double best = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::OneClass: return "one_class";
    case Scenario::Multiclass: return "multiclass";
    case Scenario::CrossMulticlass: return "cross_multiclass";
  }
  return "one_class";
}

std::string_view to_string(BotMethod m) {
  return m == BotMethod::Handcrafted ? "handcrafted" : "gan";
}

Scenario parse_scenario(std::string_view s) {
  if (s == "one_class" || s == "one-class") return Scenario::OneClass;
  if (s == "multiclass") return Scenario::Multiclass;
  if (s == "cross_multiclass" || s == "cross") return Scenario::CrossMulticlass;
  throw Error(Errc::InvalidArgument, "unknown scenario '" + std::string(s) + "'");
}

BotMethod parse_bot_method(std::string_view s) {
  if (s == "handcrafted") return BotMethod::Handcrafted;
  if (s == "gan") return BotMethod::Gan;
  throw Error(Errc::InvalidArgument, "unknown bot method '" + std::string(s) + "'");
}

Label fake_label(BotMethod m) {
  return m == BotMethod::Handcrafted ? Label::FakeHandcrafted : Label::FakeGan;
}

EvalReport run_protocol(std::span<const GestureSample> samples, Scenario scenario,
                        FeatureMode mode, BotMethod method, const ProtocolConfig& cfg) {
  if (scenario == Scenario::CrossMulticlass) {
    throw Error(Errc::InvalidArgument, "use run_cross_generation for cross-generation runs");
  }
  PreparedData data;
  data.human = usable_features(samples, Label::Human, mode);
  data.fake_train = usable_features(samples, fake_label(method), mode);
  data.fake_test = data.fake_train;
  return run_split_protocol(data, scenario, false, mode, method, method, cfg);
}

EvalReport run_cross_generation(std::span<const GestureSample> samples, BotMethod train_method,
                                BotMethod test_method, FeatureMode mode,
                                const ProtocolConfig& cfg) {
  PreparedData data;
  data.human = usable_features(samples, Label::Human, mode);
  data.fake_train = usable_features(samples, fake_label(train_method), mode);
  data.fake_test = usable_features(samples, fake_label(test_method), mode);
  return run_split_protocol(data, Scenario::CrossMulticlass, true, mode, train_method,
                            test_method, cfg);
}

nlohmann::json to_json(const EvalReport& r) {
  return make_envelope(
      "eval_report",
      {{"scenario", to_string(r.scenario)},
       {"feature_mode", to_string(r.feature_mode)},
       {"train_method", to_string(r.train_method)},
       {"test_method", to_string(r.test_method)},
       {"eer_percent", r.eer_percent},
       {"mean_eer_percent", r.mean_eer_percent},
       {"thresholds", r.thresholds},
       {"n_human", r.n_human},
       {"n_fake_train_method", r.n_fake_train_method},
       {"n_fake_test_method", r.n_fake_test_method},
       {"config",
        {{"reps", r.config.reps},
         {"train_frac", r.config.train_frac},
         {"seed", r.config.seed},
         {"C", r.config.svm.C},
         {"nu", r.config.svm.nu},
         {"gamma", r.config.svm.gamma ? nlohmann::json(*r.config.svm.gamma)
                                      : nlohmann::json("median_heuristic")},
         {"fitted_gamma", r.gammas},
         {"tol", r.config.svm.tol},
         // C, nu and gamma left at the built-in values rather than chosen by the caller
         {"svm_defaults", r.config.svm.C == SvmParams{}.C && r.config.svm.nu == SvmParams{}.nu &&
                              !r.config.svm.gamma}}}});
}

void write_report_csv(std::ostream& os, std::span<const EvalReport> reports) {
  os << "scenario,feature_mode,train_method,test_method,rep,eer_percent\n";
  const auto old = os.precision(17);
  for (const auto& r : reports) {
    for (std::size_t k = 0; k < r.eer_percent.size(); ++k) {
      os << to_string(r.scenario) << ',' << to_string(r.feature_mode) << ','
         << to_string(r.train_method) << ',' << to_string(r.test_method) << ',' << k << ','
         << r.eer_percent[k] << '\n';
    }
    os << to_string(r.scenario) << ',' << to_string(r.feature_mode) << ','
       << to_string(r.train_method) << ',' << to_string(r.test_method) << ",mean,"
       << r.mean_eer_percent << '\n';
  }
  os.precision(old);
}

DistributionReport feature_distribution_report(std::span<const GestureSample> human,
                                               std::span<const GestureSample> handcrafted,
                                               std::span<const GestureSample> gan,
                                               std::size_t bins, std::size_t min_samples) {
  if (bins < 1) throw Error(Errc::InvalidArgument, "need at least one bin");
  std::array<std::vector<TouchArray>, 3> groups;
  const std::array<std::span<const GestureSample>, 3> inputs{human, handcrafted, gan};
  for (std::size_t g = 0; g < 3; ++g) {
    for (const auto& s : inputs[g]) {
      const auto f = touch_features(s.touch);
      if (!f.degenerate) groups[g].push_back(f.as_array());
    }
    if (groups[g].size() < min_samples) {
      throw Error(Errc::InsufficientData, "distribution report needs " +
                                              std::to_string(min_samples) + " samples per group");
    }
  }

  DistributionReport report;
  report.bins = bins;
  for (Eigen::Index f = 0; f < kTouchFeatureDim; ++f) {
    std::array<std::vector<double>, 3> values;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < 3; ++g) {
      for (const auto& row : groups[g]) {
        values[g].push_back(row(f));
        lo = std::min(lo, row(f));
        hi = std::max(hi, row(f));
      }
    }
    if (hi <= lo) hi = lo + 1.0;
    FeatureHistogram h;
    h.feature = kFeatureNames[static_cast<std::size_t>(f)];
    h.lo = lo;
    h.hi = hi;
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t g = 0; g < 3; ++g) {
      h.density[g].assign(bins, 0.0);
      for (double v : values[g]) {
        auto b = static_cast<std::size_t>((v - lo) / width);
        b = std::min(b, bins - 1);
        h.density[g][b] += 1.0;
      }
      for (auto& d : h.density[g]) d /= static_cast<double>(values[g].size());
    }
    h.ks_handcrafted = ks_statistic(values[0], values[1]);
    h.ks_gan = ks_statistic(values[0], values[2]);
    report.features.push_back(std::move(h));
  }
  return report;
}

nlohmann::json to_json(const DistributionReport& report) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& h : report.features) {
    features.push_back({{"feature", h.feature},
                        {"lo", h.lo},
                        {"hi", h.hi},
                        {"human", h.density[0]},
                        {"handcrafted", h.density[1]},
                        {"gan", h.density[2]},
                        {"ks_handcrafted", h.ks_handcrafted},
                        {"ks_gan", h.ks_gan}});
  }
  return make_envelope("distribution_report", {{"bins", report.bins}, {"features", features}});
}

void write_distribution_csv(std::ostream& os, const DistributionReport& report) {
  static constexpr std::array<std::string_view, 3> kGroups{"human", "handcrafted", "gan"};
  os << "feature,group,bin,lo,hi,density\n";
  const auto old = os.precision(17);
  for (const auto& h : report.features) {
    const double width = (h.hi - h.lo) / static_cast<double>(report.bins);
    for (std::size_t g = 0; g < 3; ++g) {
      for (std::size_t b = 0; b < report.bins; ++b) {
        os << h.feature << ',' << kGroups[g] << ',' << b << ','
           << h.lo + width * static_cast<double>(b) << ','
           << h.lo + width * static_cast<double>(b + 1) << ',' << h.density[g][b] << '\n';
      }
    }
  }
  os.precision(old);
}

}  // namespace becaptcha
