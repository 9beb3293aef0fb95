#include "becaptcha/svm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "becaptcha/model_io.hpp"
#include "becaptcha/rng.hpp"

namespace becaptcha {

namespace {

constexpr double kTau = 1e-12;
constexpr std::size_t kCacheBytes = std::size_t{256} << 20;

/// Lazily computed rows of Q = diag(y) K diag(y), FIFO-evicted once the
/// byte budget is exhausted.
class KernelRows {
 public:
  KernelRows(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double gamma)
      : x_(x), y_(y), gamma_(gamma), rows_(static_cast<std::size_t>(x.rows())) {
    const auto n = static_cast<std::size_t>(x.rows());
    budget_ = std::max<std::size_t>(2, kCacheBytes / (sizeof(double) * std::max<std::size_t>(n, 1)));
  }

  const Eigen::VectorXd& row(Eigen::Index i) {
    auto& slot = rows_[static_cast<std::size_t>(i)];
    if (slot.size() == 0) {
      if (fifo_.size() >= budget_) {
        rows_[fifo_.front()].resize(0);
        fifo_.pop_front();
      }
      const Eigen::RowVectorXd xi = x_.row(i);
      slot = (-gamma_ * (x_.rowwise() - xi).rowwise().squaredNorm().array()).exp().matrix();
      slot = slot.cwiseProduct(y_) * y_(i);
      fifo_.push_back(static_cast<std::size_t>(i));
    }
    return slot;
  }

 private:
  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  double gamma_;
  std::vector<Eigen::VectorXd> rows_;
  std::deque<std::size_t> fifo_;
  std::size_t budget_;
};

struct SolverResult {
  Eigen::VectorXd alpha;
  Eigen::VectorXd grad;
  double rho = 0.0;
  long iterations = 0;
};

bool in_up(double y, double a, double c) { return (y > 0 && a < c) || (y < 0 && a > 0); }
bool in_low(double y, double a, double c) { return (y > 0 && a > 0) || (y < 0 && a < c); }

/// min 0.5 a'Qa + p'a  s.t.  y'a = const, 0 <= a <= c, starting from a
/// feasible `alpha`. Working set: maximal violating pair, lowest index wins
/// ties.
SolverResult solve_smo(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& p,
                       double c, double gamma, Eigen::VectorXd alpha, double tol, long max_iter) {
  const Eigen::Index n = x.rows();
  KernelRows q(x, y, gamma);

  // Q_ii = K_ii = 1 for the RBF kernel.
  Eigen::VectorXd grad = p;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (alpha(i) != 0.0) grad += alpha(i) * q.row(i);
  }

  long iter = 0;
  for (; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    Eigen::Index j = -1;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double v = -y(k) * grad(k);
      if (in_up(y(k), alpha(k), c) && v > gmax) {
        gmax = v;
        i = k;
      }
      if (in_low(y(k), alpha(k), c) && v < gmin) {
        gmin = v;
        j = k;
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < tol) break;

    // Copies: fetching row j may evict row i from the cache.
    const Eigen::VectorXd qi = q.row(i);
    const Eigen::VectorXd qj = q.row(j);
    const double old_ai = alpha(i);
    const double old_aj = alpha(j);
    double ai = old_ai;
    double aj = old_aj;

    if (y(i) != y(j)) {
      double quad = 2.0 + 2.0 * qi(j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0.0) {
        if (aj < 0.0) { aj = 0.0; ai = diff; }
      } else {
        if (ai < 0.0) { ai = 0.0; aj = -diff; }
      }
      if (diff > 0.0) {
        if (ai > c) { ai = c; aj = c - diff; }
      } else {
        if (aj > c) { aj = c; ai = c + diff; }
      }
    } else {
      double quad = 2.0 - 2.0 * qi(j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c) {
        if (ai > c) { ai = c; aj = sum - c; }
      } else {
        if (aj < 0.0) { aj = 0.0; ai = sum; }
      }
      if (sum > c) {
        if (aj > c) { aj = c; ai = sum - c; }
      } else {
        if (ai < 0.0) { ai = 0.0; aj = sum; }
      }
    }
    alpha(i) = ai;
    alpha(j) = aj;
    grad += (ai - old_ai) * qi + (aj - old_aj) * qj;
  }

  // Offset: average over free variables, else midpoint of the feasible range.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  long n_free = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double yg = y(k) * grad(k);
    if (alpha(k) >= c) {
      if (y(k) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha(k) <= 0.0) {
      if (y(k) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  SolverResult r;
  r.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  r.alpha = std::move(alpha);
  r.grad = std::move(grad);
  r.iterations = iter;
  return r;
}

void check_finite(const Eigen::MatrixXd& x) {
  if (!x.allFinite()) throw Error(Errc::NonFinite, "non-finite feature value");
}

SvmModel collect(SvmMode mode, const Eigen::MatrixXd& xs, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& alpha, double scale, double rho, Standardizer standardizer,
                 double gamma, const SvmParams& params, long iterations) {
  SvmModel m;
  m.mode = mode;
  m.kernel.gamma = gamma;
  m.standardizer = std::move(standardizer);
  m.rho = rho * scale;
  m.C = params.C;
  m.nu = params.nu;
  m.tol = params.tol;
  m.n_train = static_cast<std::size_t>(xs.rows());
  m.iterations = iterations;
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    if (alpha(k) > 0.0) m.support_indices.push_back(static_cast<std::size_t>(k));
  }
  const auto nsv = static_cast<Eigen::Index>(m.support_indices.size());
  m.support_vectors.resize(nsv, xs.cols());
  m.alpha.resize(nsv);
  m.labels.resize(nsv);
  for (Eigen::Index s = 0; s < nsv; ++s) {
    const auto k = static_cast<Eigen::Index>(m.support_indices[static_cast<std::size_t>(s)]);
    m.support_vectors.row(s) = xs.row(k);
    m.alpha(s) = alpha(k) * scale;
    m.labels(s) = y(k);
  }
  return m;
}

double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace

std::string_view to_string(SvmMode m) { return m == SvmMode::Binary ? "binary" : "one_class"; }

SvmMode parse_svm_mode(std::string_view s) {
  if (s == "binary") return SvmMode::Binary;
  if (s == "one_class") return SvmMode::OneClass;
  throw Error(Errc::InvalidArgument, "unknown SVM mode '" + std::string(s) + "'");
}

double SvmModel::alpha_bound() const {
  return mode == SvmMode::Binary ? C : 1.0 / (nu * static_cast<double>(n_train));
}

double default_gamma(const Eigen::MatrixXd& features, std::uint64_t seed, std::size_t max_samples) {
  const auto n = static_cast<std::size_t>(features.rows());
  const auto d = static_cast<double>(std::max<Eigen::Index>(features.cols(), 1));
  if (n < 2) return 1.0 / d;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n > max_samples) {
    Rng rng = make_rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_samples);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<double> dist;
  dist.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      dist.push_back((features.row(static_cast<Eigen::Index>(idx[a])) -
                      features.row(static_cast<Eigen::Index>(idx[b])))
                         .squaredNorm());
    }
  }
  const double med = median_inplace(dist);
  return med > 0.0 ? 1.0 / med : 1.0 / d;
}

SvmModel train_binary(const Eigen::MatrixXd& features, std::span<const int> labels,
                      const SvmParams& params) {
  const Eigen::Index n = features.rows();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw Error(Errc::DimensionMismatch, "label count differs from feature rows");
  }
  check_finite(features);
  if (!(params.C > 0.0)) throw Error(Errc::InvalidArgument, "C must be positive");
  Eigen::VectorXd y(n);
  bool pos = false;
  bool neg = false;
  for (Eigen::Index k = 0; k < n; ++k) {
    const int l = labels[static_cast<std::size_t>(k)];
    if (l != 1 && l != -1) throw Error(Errc::InvalidArgument, "labels must be +1 or -1");
    y(k) = l;
    pos |= l == 1;
    neg |= l == -1;
  }
  if (!pos || !neg) throw Error(Errc::SingleClass, "binary training needs both classes");

  auto standardizer = Standardizer::fit(features);
  const Eigen::MatrixXd xs = standardizer.apply_rows(features);
  const double gamma = params.gamma ? *params.gamma : default_gamma(xs, params.seed);
  if (!(gamma > 0.0)) throw Error(Errc::InvalidArgument, "gamma must be positive");

  auto r = solve_smo(xs, y, Eigen::VectorXd::Constant(n, -1.0), params.C, gamma,
                     Eigen::VectorXd::Zero(n), params.tol, params.max_iter);
  return collect(SvmMode::Binary, xs, y, r.alpha, 1.0, r.rho, std::move(standardizer), gamma,
                 params, r.iterations);
}

SvmModel train_one_class(const Eigen::MatrixXd& features, const SvmParams& params) {
  const Eigen::Index n = features.rows();
  if (!(params.nu > 0.0 && params.nu <= 1.0)) {
    throw Error(Errc::InvalidArgument, "nu must lie in (0, 1]");
  }
  if (static_cast<double>(n) < std::ceil(1.0 / params.nu)) {
    throw Error(Errc::TooFewSamples, "one-class training needs at least ceil(1/nu) samples");
  }
  check_finite(features);

  auto standardizer = Standardizer::fit(features);
  const Eigen::MatrixXd xs = standardizer.apply_rows(features);
  const double gamma = params.gamma ? *params.gamma : default_gamma(xs, params.seed);
  if (!(gamma > 0.0)) throw Error(Errc::InvalidArgument, "gamma must be positive");

  // Solved with 0 <= a <= 1, sum a = nu n, then rescaled by 1 / (nu n).
  const double total = params.nu * static_cast<double>(n);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  const auto full = static_cast<Eigen::Index>(std::floor(total));
  for (Eigen::Index k = 0; k < std::min(full, n); ++k) alpha(k) = 1.0;
  if (full < n) alpha(full) = total - static_cast<double>(full);

  auto r = solve_smo(xs, Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n), 1.0, gamma,
                     std::move(alpha), params.tol, params.max_iter);
  return collect(SvmMode::OneClass, xs, Eigen::VectorXd::Ones(n), r.alpha, 1.0 / total, r.rho,
                 std::move(standardizer), gamma, params, r.iterations);
}

double decision_score(const SvmModel& model, const Eigen::VectorXd& raw_features) {
  if (raw_features.size() != model.dim()) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(model.dim()) +
                                             " features, got " +
                                             std::to_string(raw_features.size()));
  }
  const Eigen::RowVectorXd x = model.standardizer.apply(raw_features).transpose();
  const Eigen::VectorXd k =
      (-model.kernel.gamma * (model.support_vectors.rowwise() - x).rowwise().squaredNorm().array())
          .exp()
          .matrix();
  return model.alpha.cwiseProduct(model.labels).dot(k) - model.rho;
}

Eigen::VectorXd decision_scores(const SvmModel& model, const Eigen::MatrixXd& raw_rows) {
  Eigen::VectorXd out(raw_rows.rows());
  for (Eigen::Index r = 0; r < raw_rows.rows(); ++r) {
    out(r) = decision_score(model, raw_rows.row(r).transpose());
  }
  return out;
}

double kkt_violation(const SvmModel& model, const Eigen::MatrixXd& raw_train,
                     std::span<const int> labels) {
  const Eigen::Index n = raw_train.rows();
  if (static_cast<std::size_t>(n) != model.n_train) {
    throw Error(Errc::DimensionMismatch, "training matrix does not match the model");
  }
  Eigen::VectorXd y = Eigen::VectorXd::Ones(n);
  if (model.mode == SvmMode::Binary) {
    if (labels.size() != static_cast<std::size_t>(n)) {
      throw Error(Errc::DimensionMismatch, "binary KKT check needs labels");
    }
    for (Eigen::Index k = 0; k < n; ++k) y(k) = labels[static_cast<std::size_t>(k)];
  }
  const Eigen::MatrixXd xs = model.standardizer.apply_rows(raw_train);
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  for (std::size_t s = 0; s < model.support_indices.size(); ++s) {
    alpha(static_cast<Eigen::Index>(model.support_indices[s])) = model.alpha(static_cast<Eigen::Index>(s));
  }
  const double c = model.alpha_bound();
  // Bound membership with a relative slack for the rescaled one-class alphas.
  const double eps = 1e-12 * c;
  double gmax = -std::numeric_limits<double>::infinity();
  double gmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::RowVectorXd xk = xs.row(k);
    const Eigen::VectorXd kr =
        (-model.kernel.gamma * (xs.rowwise() - xk).rowwise().squaredNorm().array()).exp().matrix();
    double g = y(k) * kr.cwiseProduct(y).dot(alpha);
    if (model.mode == SvmMode::Binary) g -= 1.0;
    const double v = -y(k) * g;
    const bool below = alpha(k) < c - eps;
    const bool above = alpha(k) > eps;
    if (((y(k) > 0 && below) || (y(k) < 0 && above)) && v > gmax) gmax = v;
    if (((y(k) > 0 && above) || (y(k) < 0 && below)) && v < gmin) gmin = v;
  }
  if (!std::isfinite(gmax) || !std::isfinite(gmin)) return 0.0;
  return std::max(0.0, gmax - gmin);
}

double dual_objective(const SvmModel& model) {
  const Eigen::Index nsv = model.support_vectors.rows();
  const Eigen::VectorXd coef = model.alpha.cwiseProduct(model.labels);
  double quad = 0.0;
  for (Eigen::Index a = 0; a < nsv; ++a) {
    for (Eigen::Index b = 0; b < nsv; ++b) {
      quad += coef(a) * coef(b) *
              rbf(model.support_vectors.row(a).transpose(), model.support_vectors.row(b).transpose(),
                  model.kernel.gamma);
    }
  }
  double obj = 0.5 * quad;
  if (model.mode == SvmMode::Binary) obj -= model.alpha.sum();
  return obj;
}

nlohmann::json to_json(const SvmModel& m) {
  return make_envelope(
      "svm",
      {{"mode", to_string(m.mode)},
       {"gamma", m.kernel.gamma},
       {"C", m.C},
       {"nu", m.nu},
       {"tol", m.tol},
       {"n_train", m.n_train},
       {"iterations", m.iterations},
       {"rho", m.rho},
       {"dim", m.dim()},
       {"standardizer_mean", eigen_to_json(m.standardizer.mean())},
       {"standardizer_scale", eigen_to_json(m.standardizer.scale())},
       {"support_vectors", eigen_to_json(m.support_vectors)},
       {"alpha", eigen_to_json(m.alpha)},
       {"labels", eigen_to_json(m.labels)},
       {"support_indices", m.support_indices}});
}

SvmModel svm_from_json(const nlohmann::json& j) {
  open_envelope(j, "svm");
  try {
    SvmModel m;
    m.mode = parse_svm_mode(j.at("mode").get<std::string>());
    m.kernel.gamma = j.at("gamma").get<double>();
    m.C = j.at("C").get<double>();
    m.nu = j.at("nu").get<double>();
    m.tol = j.at("tol").get<double>();
    m.n_train = j.at("n_train").get<std::size_t>();
    m.iterations = j.at("iterations").get<long>();
    m.rho = j.at("rho").get<double>();
    const auto dim = j.at("dim").get<Eigen::Index>();
    m.standardizer = Standardizer(vector_from_json(j.at("standardizer_mean")),
                                  vector_from_json(j.at("standardizer_scale")));
    if (m.standardizer.dim() != dim) throw Error(Errc::ParseError, "standardizer size mismatch");
    m.alpha = vector_from_json(j.at("alpha"));
    m.labels = vector_from_json(j.at("labels"));
    m.support_vectors = matrix_from_json(j.at("support_vectors"), m.alpha.size(), dim);
    m.support_indices = j.at("support_indices").get<std::vector<std::size_t>>();
    if (m.labels.size() != m.alpha.size() ||
        m.support_indices.size() != static_cast<std::size_t>(m.alpha.size())) {
      throw Error(Errc::ParseError, "support vector arrays disagree in length");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("SVM model: ") + e.what());
  }
}

void save_svm(const SvmModel& model, const std::filesystem::path& path) {
  write_json_file(to_json(model), path);
}

SvmModel load_svm(const std::filesystem::path& path) { return svm_from_json(read_json_file(path)); }

}  // namespace becaptcha
