#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "becaptcha/error.hpp"

namespace becaptcha::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// A batch of sequences stored time-major: element t is a
/// (features x batch) matrix holding step t of every sequence.
template <typename Scalar>
using SeqBatch = std::vector<Mat<Scalar>>;

template <typename Scalar>
Mat<Scalar> sigmoid(const Mat<Scalar>& z) {
  return (Scalar(1) + (-z.array()).exp()).inverse().matrix();
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

/// Single LSTM layer, gate order (input, forget, cell, output).
template <typename Scalar>
struct LstmLayer {
  Mat<Scalar> W;  // 4H x in
  Mat<Scalar> U;  // 4H x H
  Vec<Scalar> b;  // 4H

  struct Cache {
    SeqBatch<Scalar> x, i, f, g, o, c, tanh_c, h;
  };

  LstmLayer() = default;
  LstmLayer(Eigen::Index in, Eigen::Index hidden)
      : W(Mat<Scalar>::Zero(4 * hidden, in)),
        U(Mat<Scalar>::Zero(4 * hidden, hidden)),
        b(Vec<Scalar>::Zero(4 * hidden)) {}

  Eigen::Index hidden() const { return U.cols(); }
  Eigen::Index input_dim() const { return W.cols(); }

  template <typename F>
  void for_each_param(F&& f) {
    f(W);
    f(U);
    f(b);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f(W);
    f(U);
    f(b);
  }

  SeqBatch<Scalar> forward(const SeqBatch<Scalar>& x, Cache* cache) const {
    const Eigen::Index H = hidden();
    const std::size_t T = x.size();
    const Eigen::Index B = T ? x.front().cols() : 0;
    Mat<Scalar> h = Mat<Scalar>::Zero(H, B);
    Mat<Scalar> c = Mat<Scalar>::Zero(H, B);
    SeqBatch<Scalar> out(T);
    if (cache) {
      cache->x = x;
      for (auto* v : {&cache->i, &cache->f, &cache->g, &cache->o, &cache->c, &cache->tanh_c,
                      &cache->h}) {
        v->assign(T, Mat<Scalar>());
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      if (x[t].rows() != input_dim() || x[t].cols() != B) {
        throw Error(Errc::ShapeMismatch, "LSTM input has wrong shape");
      }
      Mat<Scalar> z = W * x[t] + U * h;
      z.colwise() += b;
      Mat<Scalar> gi = sigmoid<Scalar>(z.topRows(H));
      Mat<Scalar> gf = sigmoid<Scalar>(z.middleRows(H, H));
      Mat<Scalar> gg = z.middleRows(2 * H, H).array().tanh().matrix();
      Mat<Scalar> go = sigmoid<Scalar>(z.bottomRows(H));
      c = (gf.array() * c.array() + gi.array() * gg.array()).matrix();
      Mat<Scalar> tc = c.array().tanh().matrix();
      h = (go.array() * tc.array()).matrix();
      out[t] = h;
      if (cache) {
        cache->i[t] = std::move(gi);
        cache->f[t] = std::move(gf);
        cache->g[t] = std::move(gg);
        cache->o[t] = std::move(go);
        cache->c[t] = c;
        cache->tanh_c[t] = std::move(tc);
        cache->h[t] = h;
      }
    }
    return out;
  }

  /// Backpropagation through time. `dh` holds dLoss/dh_t for every step
  /// (from layers above); parameter gradients are added into `grad`.
  SeqBatch<Scalar> backward(const Cache& cache, const SeqBatch<Scalar>& dh,
                            LstmLayer& grad) const {
    const Eigen::Index H = hidden();
    const std::size_t T = cache.x.size();
    SeqBatch<Scalar> dx(T);
    if (T == 0) return dx;
    const Eigen::Index B = cache.x.front().cols();
    Mat<Scalar> dh_next = Mat<Scalar>::Zero(H, B);
    Mat<Scalar> dc_next = Mat<Scalar>::Zero(H, B);
    Mat<Scalar> dz(4 * H, B);
    for (std::size_t step = T; step-- > 0;) {
      const auto& gi = cache.i[step].array();
      const auto& gf = cache.f[step].array();
      const auto& gg = cache.g[step].array();
      const auto& go = cache.o[step].array();
      const auto& tc = cache.tanh_c[step].array();
      const Mat<Scalar> dh_t = dh[step] + dh_next;
      const auto dht = dh_t.array();
      const Mat<Scalar> dc =
          (dc_next.array() + dht * go * (Scalar(1) - tc.square())).matrix();
      const Mat<Scalar> c_prev = step ? cache.c[step - 1] : Mat<Scalar>::Zero(H, B);
      const Mat<Scalar> h_prev = step ? cache.h[step - 1] : Mat<Scalar>::Zero(H, B);
      dz.topRows(H) = (dc.array() * gg * gi * (Scalar(1) - gi)).matrix();
      dz.middleRows(H, H) = (dc.array() * c_prev.array() * gf * (Scalar(1) - gf)).matrix();
      dz.middleRows(2 * H, H) = (dc.array() * gi * (Scalar(1) - gg.square())).matrix();
      dz.bottomRows(H) = (dht * tc * go * (Scalar(1) - go)).matrix();
      dc_next = (dc.array() * gf).matrix();

      grad.W.noalias() += dz * cache.x[step].transpose();
      grad.U.noalias() += dz * h_prev.transpose();
      grad.b += dz.rowwise().sum();
      dx[step].noalias() = W.transpose() * dz;
      dh_next.noalias() = U.transpose() * dz;
    }
    return dx;
  }
};

template <typename Scalar>
struct DenseLayer {
  Mat<Scalar> W;  // out x in
  Vec<Scalar> b;

  DenseLayer() = default;
  DenseLayer(Eigen::Index in, Eigen::Index out)
      : W(Mat<Scalar>::Zero(out, in)), b(Vec<Scalar>::Zero(out)) {}

  template <typename F>
  void for_each_param(F&& f) {
    f(W);
    f(b);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f(W);
    f(b);
  }

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    if (x.rows() != W.cols()) throw Error(Errc::ShapeMismatch, "dense input has wrong shape");
    Mat<Scalar> y = W * x;
    y.colwise() += b;
    return y;
  }

  Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& dy, DenseLayer& grad) const {
    grad.W.noalias() += dy * x.transpose();
    grad.b += dy.rowwise().sum();
    return W.transpose() * dy;
  }
};

/// Two stacked LSTM layers followed by a dense head. The head is applied
/// either at every step (sequence output) or at the final step only.
template <typename Scalar>
class LstmNet {
 public:
  struct Cache {
    typename LstmLayer<Scalar>::Cache l1, l2;
  };

  LstmNet() = default;
  LstmNet(Eigen::Index input_dim, Eigen::Index units1, Eigen::Index units2,
          Eigen::Index output_dim)
      : lstm1_(input_dim, units1), lstm2_(units1, units2), head_(units2, output_dim) {}

  Eigen::Index input_dim() const { return lstm1_.input_dim(); }
  Eigen::Index output_dim() const { return head_.W.rows(); }

  LstmLayer<Scalar>& lstm1() { return lstm1_; }
  LstmLayer<Scalar>& lstm2() { return lstm2_; }
  DenseLayer<Scalar>& head() { return head_; }
  const LstmLayer<Scalar>& lstm1() const { return lstm1_; }
  const LstmLayer<Scalar>& lstm2() const { return lstm2_; }
  const DenseLayer<Scalar>& head() const { return head_; }

  template <typename F>
  void for_each_param(F&& f) {
    lstm1_.for_each_param(f);
    lstm2_.for_each_param(f);
    head_.for_each_param(f);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    lstm1_.for_each_param(f);
    lstm2_.for_each_param(f);
    head_.for_each_param(f);
  }

  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for_each_param([&](const auto& m) { n += m.size(); });
    return n;
  }

  /// Parameters in declaration order: lstm1 (W, U, b), lstm2 (W, U, b),
  /// head (W, b); each matrix column-major.
  Vec<Scalar> flatten() const {
    Vec<Scalar> out(num_params());
    Eigen::Index off = 0;
    for_each_param([&](const auto& m) {
      out.segment(off, m.size()) = Eigen::Map<const Vec<Scalar>>(m.data(), m.size());
      off += m.size();
    });
    return out;
  }

  void unflatten(const Vec<Scalar>& flat) {
    if (flat.size() != num_params()) {
      throw Error(Errc::ShapeMismatch, "flat parameter vector has wrong length");
    }
    Eigen::Index off = 0;
    for_each_param([&](auto& m) {
      Eigen::Map<Vec<Scalar>>(m.data(), m.size()) = flat.segment(off, m.size());
      off += m.size();
    });
  }

  /// Same shapes, all zeros (gradient accumulator).
  LstmNet zeros_like() const {
    LstmNet z = *this;
    z.for_each_param([](auto& m) { m.setZero(); });
    return z;
  }

  /// Uniform in +-1/sqrt(fan_in); the LSTM gate pre-activation sums
  /// input and recurrent terms, so its fan-in is in + H.
  template <typename Urng>
  void init_uniform(Urng& rng, bool zero_head = false) {
    auto fill = [&rng](auto& m, double fan_in) {
      const double r = 1.0 / std::sqrt(fan_in);
      std::uniform_real_distribution<double> u(-r, r);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = Scalar(u(rng));
    };
    for (auto* l : {&lstm1_, &lstm2_}) {
      const double fan = static_cast<double>(l->input_dim() + l->hidden());
      l->for_each_param([&](auto& m) { fill(m, fan); });
    }
    if (zero_head) {
      head_.for_each_param([](auto& m) { m.setZero(); });
    } else {
      const double fan = static_cast<double>(head_.W.cols());
      head_.for_each_param([&](auto& m) { fill(m, fan); });
    }
  }

  /// Per-step outputs (output_dim x batch each).
  SeqBatch<Scalar> forward_sequence(const SeqBatch<Scalar>& x, Cache* cache) const {
    check_input(x);
    auto h1 = lstm1_.forward(x, cache ? &cache->l1 : nullptr);
    auto h2 = lstm2_.forward(h1, cache ? &cache->l2 : nullptr);
    SeqBatch<Scalar> y(h2.size());
    for (std::size_t t = 0; t < h2.size(); ++t) y[t] = head_.forward(h2[t]);
    return y;
  }

  SeqBatch<Scalar> backward_sequence(const Cache& cache, const SeqBatch<Scalar>& dy,
                                     LstmNet& grad) const {
    const auto& h2 = cache.l2.h;
    SeqBatch<Scalar> dh2(h2.size());
    for (std::size_t t = 0; t < h2.size(); ++t) {
      dh2[t] = head_.backward(h2[t], dy[t], grad.head_);
    }
    auto dh1 = lstm2_.backward(cache.l2, dh2, grad.lstm2_);
    return lstm1_.backward(cache.l1, dh1, grad.lstm1_);
  }

  /// Head applied to the last step only (output_dim x batch), pre-activation.
  Mat<Scalar> forward_final(const SeqBatch<Scalar>& x, Cache* cache) const {
    check_input(x);
    auto h1 = lstm1_.forward(x, cache ? &cache->l1 : nullptr);
    auto h2 = lstm2_.forward(h1, cache ? &cache->l2 : nullptr);
    return head_.forward(h2.back());
  }

  SeqBatch<Scalar> backward_final(const Cache& cache, const Mat<Scalar>& dy,
                                  LstmNet& grad) const {
    const auto& h2 = cache.l2.h;
    SeqBatch<Scalar> dh2(h2.size());
    for (std::size_t t = 0; t + 1 < h2.size(); ++t) {
      dh2[t] = Mat<Scalar>::Zero(h2[t].rows(), h2[t].cols());
    }
    dh2.back() = head_.backward(h2.back(), dy, grad.head_);
    auto dh1 = lstm2_.backward(cache.l2, dh2, grad.lstm2_);
    return lstm1_.backward(cache.l1, dh1, grad.lstm1_);
  }

 private:
  void check_input(const SeqBatch<Scalar>& x) const {
    if (x.empty()) throw Error(Errc::ShapeMismatch, "empty sequence");
    for (const auto& step : x) {
      if (step.rows() != input_dim() || step.cols() != x.front().cols()) {
        throw Error(Errc::ShapeMismatch, "sequence step has wrong shape");
      }
    }
  }

  LstmLayer<Scalar> lstm1_;
  LstmLayer<Scalar> lstm2_;
  DenseLayer<Scalar> head_;
};

/// Adam over a flat parameter vector.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, Scalar lr, Scalar beta1, Scalar beta2, Scalar eps)
      : m_(Vec<Scalar>::Zero(n)), v_(Vec<Scalar>::Zero(n)),
        lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Vec<Scalar>& params, const Vec<Scalar>& grad) {
    ++t_;
    m_ = beta1_ * m_ + (Scalar(1) - beta1_) * grad;
    v_ = beta2_ * v_ + (Scalar(1) - beta2_) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(beta1_, Scalar(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, Scalar(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

  long steps() const { return t_; }

 private:
  Vec<Scalar> m_, v_;
  Scalar lr_{}, beta1_{}, beta2_{}, eps_{};
  long t_ = 0;
};

}  // namespace becaptcha::nn
