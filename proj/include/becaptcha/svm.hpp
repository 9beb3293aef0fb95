#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "becaptcha/features.hpp"

namespace becaptcha {

enum class SvmMode { Binary, OneClass };

std::string_view to_string(SvmMode m);
SvmMode parse_svm_mode(std::string_view s);

/// RBF kernel k(a, b) = exp(-gamma * |a - b|^2).
struct KernelParams {
  double gamma = 1.0;
};

inline double rbf(const Eigen::Ref<const Eigen::VectorXd>& a,
                  const Eigen::Ref<const Eigen::VectorXd>& b, double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

struct SvmParams {
  double C = 1.0;
  double nu = 0.05;
  // Empty: median heuristic on the standardized training features.
  std::optional<double> gamma;
  double tol = 1e-3;
  std::uint64_t seed = 0;
  long max_iter = 10'000'000;
};

/// Trained detector. Scores are oriented so that humans score high:
///   binary:    sum_i alpha_i y_i k(s_i, x) - rho
///   one-class: sum_i alpha_i k(s_i, x) - rho
/// with x standardized by the fitted Standardizer first. One-class alphas
/// use the normalization 0 <= alpha <= 1 / (nu n), sum alpha = 1.
struct SvmModel {
  SvmMode mode = SvmMode::Binary;
  KernelParams kernel;
  Standardizer standardizer;
  Eigen::MatrixXd support_vectors;  // standardized, one per row
  Eigen::VectorXd alpha;
  Eigen::VectorXd labels;  // +1 human, -1 bot (all +1 for one-class)
  std::vector<std::size_t> support_indices;  // rows of the training matrix
  double rho = 0.0;
  double C = 1.0;
  double nu = 0.05;
  double tol = 1e-3;
  std::size_t n_train = 0;
  long iterations = 0;

  Eigen::Index dim() const { return standardizer.dim(); }
  /// Upper bound on each alpha (C, or 1 / (nu n)).
  double alpha_bound() const;
};

/// Human (+1) versus bot (-1). Features are raw; standardization is fitted
/// internally. Throws SingleClass / NonFinite.
SvmModel train_binary(const Eigen::MatrixXd& features, std::span<const int> labels,
                      const SvmParams& params = {});

/// Human-only training. Throws TooFewSamples when n < ceil(1 / nu).
SvmModel train_one_class(const Eigen::MatrixXd& features, const SvmParams& params = {});

double decision_score(const SvmModel& model, const Eigen::VectorXd& raw_features);
Eigen::VectorXd decision_scores(const SvmModel& model, const Eigen::MatrixXd& raw_rows);

/// gamma = 1 / median pairwise squared distance over at most `max_samples`
/// rows (seeded subsample); 1 / d when that median is zero.
double default_gamma(const Eigen::MatrixXd& features, std::uint64_t seed,
                     std::size_t max_samples = 1000);

/// Maximal KKT violation (m - M) of the model on its own training data.
double kkt_violation(const SvmModel& model, const Eigen::MatrixXd& raw_train,
                     std::span<const int> labels = {});

/// Dual objective of the model in its own normalization:
/// binary 0.5 a'Qa - sum a, one-class 0.5 a'Ka.
double dual_objective(const SvmModel& model);

nlohmann::json to_json(const SvmModel& model);
SvmModel svm_from_json(const nlohmann::json& j);
void save_svm(const SvmModel& model, const std::filesystem::path& path);
SvmModel load_svm(const std::filesystem::path& path);

}  // namespace becaptcha
