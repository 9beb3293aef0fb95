#include <algorithm>
#include <filesystem>

#include <doctest.h>

#include "becaptcha/fixture.hpp"
#include "becaptcha/features.hpp"
#include "becaptcha/svm.hpp"
#include "helpers.hpp"
#include "qp_oracle.hpp"

using namespace becaptcha;

namespace {

Eigen::MatrixXd gaussian_cloud(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d,
                               double shift = 0.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng) + shift;
  return m;
}

}  // namespace

TEST_CASE("two points, one per class") {
  Eigen::MatrixXd x(2, 2);
  x << 0, 0, 1, 1;
  std::vector<int> y{1, -1};
  for (double C : {1.0, 10.0}) {
    SvmParams p;
    p.C = C;
    p.gamma = 1.0;
    const auto m = train_binary(x, y, p);
    CHECK(m.support_vectors.rows() == 2);
    CHECK(decision_score(m, x.row(0).transpose()) > 0);
    CHECK(decision_score(m, x.row(1).transpose()) < 0);
    // Equidistant from both points: on the bisector.
    Eigen::VectorXd mid(2);
    mid << 1, 0;
    CHECK(std::abs(decision_score(m, mid)) <= 1e-9);
  }
}

TEST_CASE("binary dual matches the brute-force QP optimum on 10 points") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd x = gaussian_cloud(rng, 10, 2);
    std::vector<int> y(10);
    for (int i = 0; i < 10; ++i) y[static_cast<std::size_t>(i)] = (x(i, 0) + 0.5 * x(i, 1) > 0) == (i % 4 != 0) ? 1 : -1;
    if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), -1) == 0) y[0] = -y[0];
    SvmParams p;
    p.C = 1.0 + rep;
    const auto m = train_binary(x, y, p);
    const double oracle = testing::binary_oracle(m, x, y);
    CHECK(std::abs(dual_objective(m) - oracle) <= 1e-4);
    CHECK(kkt_violation(m, x, y) <= 1e-3);
  }
}

TEST_CASE("one-class dual matches the brute-force QP optimum on 10 points") {
  std::mt19937_64 rng(42);
  for (double nu : {0.2, 0.35, 0.5}) {
    const Eigen::MatrixXd x = gaussian_cloud(rng, 10, 3);
    SvmParams p;
    p.nu = nu;
    const auto m = train_one_class(x, p);
    const double oracle = testing::one_class_oracle(m, x);
    CHECK(std::abs(dual_objective(m) - oracle) <= 1e-4);
    CHECK(kkt_violation(m, x, {}) <= 1e-3);
    CHECK(m.alpha.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("RBF separates XOR") {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 1, 1, 0, 1, 1, 0;
  std::vector<int> y{1, 1, -1, -1};
  SvmParams p;
  p.C = 10.0;
  const auto m = train_binary(x, y, p);
  for (int i = 0; i < 4; ++i) {
    CHECK(decision_score(m, x.row(i).transpose()) * y[static_cast<std::size_t>(i)] > 0);
  }
}

TEST_CASE("binary training errors") {
  Eigen::MatrixXd x(3, 2);
  x << 0, 0, 1, 1, 2, 2;
  std::vector<int> same{1, 1, 1};
  CHECK_THROWS_CODE(train_binary(x, same, {}), Errc::SingleClass);
  std::vector<int> short_labels{1, -1};
  CHECK_THROWS_CODE(train_binary(x, short_labels, {}), Errc::DimensionMismatch);
  x(1, 1) = NAN;
  std::vector<int> y{1, -1, 1};
  CHECK_THROWS_CODE(train_binary(x, y, {}), Errc::NonFinite);
}

TEST_CASE("one-class on two identical points") {
  Eigen::MatrixXd x(2, 3);
  x << 1, 2, 3, 1, 2, 3;
  SvmParams p;
  p.nu = 0.5;
  const auto m = train_one_class(x, p);
  CHECK(m.kernel.gamma == doctest::Approx(1.0 / 3.0));
  CHECK(std::abs(decision_score(m, x.row(0).transpose())) <= 1e-9);
  CHECK(kkt_violation(m, x, {}) <= 1e-3);
  CHECK_THROWS_CODE(train_one_class(x.topRows(1), p), Errc::TooFewSamples);
}

TEST_CASE("nu bounds the fraction of training outliers") {
  std::mt19937_64 rng(43);
  const Eigen::MatrixXd x = gaussian_cloud(rng, 200, 2);
  SvmParams p;
  p.nu = 0.1;
  const auto m = train_one_class(x, p);
  const Eigen::VectorXd s = decision_scores(m, x);
  const double frac = static_cast<double>((s.array() < 0).count()) / 200.0;
  CHECK(frac >= 0.05);
  CHECK(frac <= 0.15);
  CHECK(kkt_violation(m, x, {}) <= 1e-3);
}

TEST_CASE("fixture humans versus a far outlier") {
  FixtureConfig fc;
  fc.subjects = 20;
  fc.seed = 3;
  const auto humans = fixture_humans(fc);
  const Eigen::MatrixXd x = feature_matrix(humans, FeatureMode::TouchAccel);
  const auto m = train_one_class(x, {});
  Eigen::VectorXd far = x.row(0).transpose();
  far(4) += 50.0;  // mean velocity
  far(15) += 20.0;
  CHECK(decision_score(m, far) < decision_scores(m, x).minCoeff());
}

TEST_CASE("margin support vectors score on the margin") {
  std::mt19937_64 rng(44);
  Eigen::MatrixXd x(40, 2);
  x.topRows(20) = gaussian_cloud(rng, 20, 2, 1.0);
  x.bottomRows(20) = gaussian_cloud(rng, 20, 2, -1.0);
  std::vector<int> y(40, 1);
  std::fill(y.begin() + 20, y.end(), -1);
  SvmParams p;
  p.C = 2.0;
  const auto m = train_binary(x, y, p);
  int free = 0;
  for (Eigen::Index s = 0; s < m.alpha.size(); ++s) {
    if (m.alpha(s) > 1e-8 && m.alpha(s) < m.C - 1e-8) {
      ++free;
      const auto row = x.row(static_cast<Eigen::Index>(m.support_indices[static_cast<std::size_t>(s)]));
      CHECK(std::abs(m.labels(s) * decision_score(m, row.transpose()) - 1.0) <= 1e-3);
    }
  }
  CHECK(free > 0);
}

TEST_CASE("scores are invariant to a common shift and continuous") {
  std::mt19937_64 rng(45);
  const Eigen::MatrixXd x = gaussian_cloud(rng, 60, 3);
  SvmParams p;
  p.nu = 0.2;
  const auto m = train_one_class(x, p);
  const Eigen::MatrixXd shifted = x.rowwise() + Eigen::RowVector3d(5.0, -2.0, 7.0);
  const auto ms = train_one_class(shifted, p);
  const Eigen::VectorXd a = decision_scores(m, x);
  const Eigen::VectorXd b = decision_scores(ms, shifted);
  // equal up to solver tolerance: rounding in the standardized data can change the SMO path
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-3);

  for (Eigen::Index i = 0; i < 10; ++i) {
    Eigen::VectorXd q = x.row(i).transpose();
    const double s0 = decision_score(m, q);
    q(1) += 1e-9;
    CHECK(std::abs(decision_score(m, q) - s0) < 1e-6);
  }
  CHECK_THROWS_CODE(decision_score(m, Eigen::VectorXd::Zero(2)), Errc::DimensionMismatch);
}

TEST_CASE("translating data and model by the same standardizer shift") {
  std::mt19937_64 rng(46);
  const Eigen::MatrixXd x = gaussian_cloud(rng, 30, 2);
  auto m = train_one_class(x, {});
  const Eigen::Vector2d shift(3.0, -1.0);
  auto moved = m;
  moved.standardizer = Standardizer(m.standardizer.mean() + shift, m.standardizer.scale());
  for (Eigen::Index i = 0; i < 5; ++i) {
    const Eigen::VectorXd q = x.row(i).transpose();
    CHECK(decision_score(moved, q + shift) == doctest::Approx(decision_score(m, q)).epsilon(1e-12));
  }
}

TEST_CASE("duplicated training points do not change a separable solution") {
  Eigen::MatrixXd x(6, 2);
  x << 0, 0, 0.2, 0.1, 0.1, 0.3, 3, 3, 3.2, 2.9, 2.8, 3.1;
  std::vector<int> y{1, 1, 1, -1, -1, -1};
  SvmParams p;
  p.C = 100.0;
  p.gamma = 0.5;
  const auto m = train_binary(x, y, p);
  Eigen::MatrixXd xx(12, 2);
  xx << x, x;
  std::vector<int> yy = y;
  yy.insert(yy.end(), y.begin(), y.end());
  const auto mm = train_binary(xx, yy, p);
  // Standardization is refit but unchanged: duplicating rows keeps mean and std.
  std::mt19937_64 rng(47);
  const Eigen::MatrixXd probe = gaussian_cloud(rng, 20, 2, 1.5);
  CHECK((decision_scores(m, probe) - decision_scores(mm, probe)).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("median heuristic") {
  Eigen::MatrixXd unit(2, 1);
  unit << 0, 1;
  CHECK(default_gamma(unit, 0) == 1.0);
  CHECK(default_gamma(Eigen::MatrixXd::Ones(5, 4), 0) == 0.25);

  std::mt19937_64 rng(48);
  const Eigen::MatrixXd x = gaussian_cloud(rng, 101, 3);
  std::vector<double> d;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) d.push_back((x.row(i) - x.row(j)).squaredNorm());
  }
  std::sort(d.begin(), d.end());
  const double med = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  CHECK(default_gamma(x, 0) == doctest::Approx(1.0 / med).epsilon(1e-12));
}

TEST_CASE("SVM model file round-trip") {
  std::mt19937_64 rng(49);
  const Eigen::MatrixXd x = gaussian_cloud(rng, 30, 4);
  const auto m = train_one_class(x, {});
  const auto path = std::filesystem::temp_directory_path() / "becaptcha_svm_rt.json";
  save_svm(m, path);
  const auto back = load_svm(path);
  std::filesystem::remove(path);
  CHECK(decision_scores(back, x) == decision_scores(m, x));
  CHECK(back.rho == m.rho);
  CHECK(back.support_indices == m.support_indices);
}
