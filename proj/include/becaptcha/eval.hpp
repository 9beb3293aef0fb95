#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "becaptcha/features.hpp"
#include "becaptcha/gesture.hpp"
#include "becaptcha/svm.hpp"

namespace becaptcha {

/// Genuine = true humans, impostor = bots. Higher score = more human.
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
};

/// Fraction of impostor scores >= threshold (bots accepted).
double false_match_rate(const ScoreSet& s, double threshold);
/// Fraction of genuine scores < threshold (humans rejected).
double false_non_match_rate(const ScoreSet& s, double threshold);

struct EerResult {
  double eer = 0.0;  // fraction in [0, 1]
  double threshold = 0.0;
  double percent() const { return 100.0 * eer; }
};

/// Sweeps every distinct score as threshold and returns the point where FMR
/// and FNMR cross, interpolating linearly between the two bracketing
/// operating points. When equality is hit exactly, the lowest such threshold
/// is returned. Throws EmptyScores.
EerResult compute_eer(const ScoreSet& scores);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

enum class Scenario { OneClass, Multiclass, CrossMulticlass };
enum class BotMethod { Handcrafted, Gan };

std::string_view to_string(Scenario s);
std::string_view to_string(BotMethod m);
Scenario parse_scenario(std::string_view s);
BotMethod parse_bot_method(std::string_view s);
Label fake_label(BotMethod m);

struct ProtocolConfig {
  int reps = 5;
  double train_frac = 0.7;
  std::uint64_t seed = 0;
  SvmParams svm;
};

/// Indices of one repetition's stratified split, per class.
struct SplitIndices {
  std::vector<std::size_t> human_train, human_test;
  std::vector<std::size_t> fake_train, fake_test;
};

struct EvalReport {
  Scenario scenario = Scenario::OneClass;
  FeatureMode feature_mode = FeatureMode::Touch;
  BotMethod train_method = BotMethod::Handcrafted;
  BotMethod test_method = BotMethod::Handcrafted;
  std::vector<double> eer_percent;
  std::vector<double> thresholds;
  std::vector<double> gammas;
  double mean_eer_percent = 0.0;
  ProtocolConfig config;
  std::size_t n_human = 0;
  std::size_t n_fake_train_method = 0;
  std::size_t n_fake_test_method = 0;
  // Split of each repetition, kept for leakage audits; not serialized.
  std::vector<SplitIndices> splits;
};

/// One-class or multiclass protocol. `samples` holds humans and fakes; the
/// fakes of `method` are used. Degenerate gestures are dropped. Per
/// repetition: stratified random split, SVM fit on the training part, EER on
/// the held-out scores. Throws InsufficientData.
EvalReport run_protocol(std::span<const GestureSample> samples, Scenario scenario,
                        FeatureMode mode, BotMethod method, const ProtocolConfig& cfg = {});

/// Multiclass training with `train_method` fakes, EER against held-out
/// humans and `test_method` fakes. With train == test this reproduces
/// run_protocol(Multiclass) for the same seed.
EvalReport run_cross_generation(std::span<const GestureSample> samples, BotMethod train_method,
                                BotMethod test_method, FeatureMode mode,
                                const ProtocolConfig& cfg = {});

nlohmann::json to_json(const EvalReport& report);
/// Flat CSV rows: scenario,feature_mode,train_method,test_method,rep,eer_percent.
void write_report_csv(std::ostream& os, std::span<const EvalReport> reports);

struct FeatureHistogram {
  std::string_view feature;
  double lo = 0.0;
  double hi = 0.0;
  // Fractions per bin (sum to 1) for human, handcrafted, gan.
  std::array<std::vector<double>, 3> density;
  double ks_handcrafted = 0.0;  // vs human
  double ks_gan = 0.0;          // vs human
};

struct DistributionReport {
  std::size_t bins = 0;
  std::vector<FeatureHistogram> features;  // the six touch features
};

/// Fixed-bin histograms of the touch features per group plus KS distances
/// to the human group. Each group needs at least `min_samples` usable gestures.
DistributionReport feature_distribution_report(std::span<const GestureSample> human,
                                               std::span<const GestureSample> handcrafted,
                                               std::span<const GestureSample> gan,
                                               std::size_t bins = 20,
                                               std::size_t min_samples = 100);

nlohmann::json to_json(const DistributionReport& report);
/// Plot-ready rows: feature,group,bin,lo,hi,density.
void write_distribution_csv(std::ostream& os, const DistributionReport& report);

}  // namespace becaptcha
