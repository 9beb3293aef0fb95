#include "becaptcha/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "becaptcha/model_io.hpp"

namespace becaptcha {

using nn::LstmNet;
using nn::Mat;
using nn::SeqBatch;

namespace {

constexpr std::uint64_t kStreamInitG = 11;
constexpr std::uint64_t kStreamInitD = 12;
constexpr std::uint64_t kStreamTrain = 13;
constexpr std::uint64_t kStreamBank = 14;

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_sequence(const GanModel& gan, const Eigen::MatrixXd& seq) {
  if (seq.rows() != static_cast<Eigen::Index>(gan.net.seq_len) || seq.cols() != gan.net.data_dim) {
    throw Error(Errc::ShapeMismatch, "sequence must be " + std::to_string(gan.net.seq_len) +
                                         " x " + std::to_string(gan.net.data_dim));
  }
}

SeqBatch<double> to_batch(std::span<const Eigen::MatrixXd> seqs, std::span<const std::size_t> idx) {
  const Eigen::Index T = seqs[idx[0]].rows();
  const Eigen::Index d = seqs[idx[0]].cols();
  const auto B = static_cast<Eigen::Index>(idx.size());
  SeqBatch<double> out(static_cast<std::size_t>(T), Mat<double>(d, B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& s = seqs[idx[static_cast<std::size_t>(b)]];
    for (Eigen::Index t = 0; t < T; ++t) out[static_cast<std::size_t>(t)].col(b) = s.row(t).transpose();
  }
  return out;
}

SeqBatch<double> noise_batch(std::size_t T, Eigen::Index k, Eigen::Index B, Rng& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  SeqBatch<double> out(T, Mat<double>(k, B));
  for (auto& m : out) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
  }
  return out;
}

/// Generator pass with everything needed for its backward pass.
struct GenPass {
  LstmNet<double>::Cache cache;
  SeqBatch<double> out;
  SeqBatch<double> pass_mask;  // 1 where the output clamp is inactive
};

GenPass run_generator(const GanModel& gan, const SeqBatch<double>& seed,
                      const SeqBatch<double>& noise, bool keep_cache) {
  const std::size_t T = seed.size();
  SeqBatch<double> input(T);
  for (std::size_t t = 0; t < T; ++t) {
    input[t].resize(seed[t].rows() + noise[t].rows(), seed[t].cols());
    input[t] << seed[t], noise[t];
  }
  GenPass pass;
  pass.out = gan.generator.forward_sequence(input, keep_cache ? &pass.cache : nullptr);
  pass.pass_mask.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (gan.net.residual) pass.out[t] += seed[t];
    pass.pass_mask[t] = Mat<double>::Ones(pass.out[t].rows(), pass.out[t].cols());
    if (gan.modality == Modality::Touch) {
      auto& o = pass.out[t];
      for (Eigen::Index i = 0; i < o.size(); ++i) {
        double& v = o.data()[i];
        if (v < 0.0 || v > 1.0) {
          v = std::clamp(v, 0.0, 1.0);
          pass.pass_mask[t].data()[i] = 0.0;
        }
      }
    }
  }
  return pass;
}

Eigen::MatrixXd from_batch_column(const SeqBatch<double>& seq, Eigen::Index b) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(seq.size()), seq.front().rows());
  for (std::size_t t = 0; t < seq.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = seq[t].col(b).transpose();
  return out;
}

nlohmann::json net_config_json(const NetConfig& c) {
  return {{"data_dim", c.data_dim},
          {"noise_dim", c.noise_dim},
          {"lstm_units", {c.lstm_units[0], c.lstm_units[1]}},
          {"seq_len", c.seq_len},
          {"residual", c.residual}};
}

NetConfig net_config_from(const nlohmann::json& j) {
  NetConfig c;
  c.data_dim = j.at("data_dim").get<Eigen::Index>();
  c.noise_dim = j.at("noise_dim").get<Eigen::Index>();
  c.lstm_units = {j.at("lstm_units").at(0).get<Eigen::Index>(),
                  j.at("lstm_units").at(1).get<Eigen::Index>()};
  c.seq_len = j.at("seq_len").get<std::size_t>();
  c.residual = j.at("residual").get<bool>();
  return c;
}

}  // namespace

std::string_view to_string(Modality m) { return m == Modality::Touch ? "touch" : "accel"; }

Modality parse_modality(std::string_view s) {
  if (s == "touch") return Modality::Touch;
  if (s == "accel") return Modality::Accel;
  throw Error(Errc::InvalidArgument, "unknown modality '" + std::string(s) + "'");
}

std::string_view to_string(GeneratorLoss l) {
  return l == GeneratorLoss::Lsgan ? "lsgan" : "reconstruction";
}

GeneratorLoss parse_generator_loss(std::string_view s) {
  if (s == "lsgan") return GeneratorLoss::Lsgan;
  if (s == "reconstruction") return GeneratorLoss::Reconstruction;
  throw Error(Errc::InvalidArgument, "unknown generator loss '" + std::string(s) + "'");
}

NetConfig NetConfig::for_modality(Modality m) {
  NetConfig c;
  c.data_dim = m == Modality::Touch ? 2 : 3;
  return c;
}

GanModel init_gan(Modality modality, const NetConfig& net, std::uint64_t seed) {
  if (net.data_dim < 1 || net.noise_dim < 0 || net.lstm_units[0] < 1 || net.lstm_units[1] < 1 ||
      net.seq_len < 1) {
    throw Error(Errc::ShapeMismatch, "invalid network configuration");
  }
  GanModel gan;
  gan.modality = modality;
  gan.net = net;
  gan.generator = LstmNet<double>(net.data_dim + net.noise_dim, net.lstm_units[0],
                                  net.lstm_units[1], net.data_dim);
  gan.discriminator = LstmNet<double>(net.data_dim, net.lstm_units[0], net.lstm_units[1], 1);
  Rng rg = make_rng(seed, kStreamInitG);
  Rng rd = make_rng(seed, kStreamInitD);
  gan.generator.init_uniform(rg, net.residual);
  gan.discriminator.init_uniform(rd);
  gan.scale_mean = Eigen::VectorXd::Zero(net.data_dim);
  gan.scale_std = Eigen::VectorXd::Ones(net.data_dim);
  return gan;
}

Eigen::MatrixXd generator_forward(const GanModel& gan, const Eigen::MatrixXd& human_seq,
                                  const Eigen::MatrixXd& noise) {
  check_sequence(gan, human_seq);
  if (noise.rows() != human_seq.rows() || noise.cols() != gan.net.noise_dim) {
    throw Error(Errc::ShapeMismatch, "noise must be T x noise_dim");
  }
  const std::vector<Eigen::MatrixXd> seeds{human_seq};
  const std::vector<Eigen::MatrixXd> noises{noise};
  const std::size_t zero = 0;
  const auto seed = to_batch(seeds, std::span(&zero, 1));
  SeqBatch<double> nz(seed.size());
  for (std::size_t t = 0; t < nz.size(); ++t) nz[t] = noise.row(static_cast<Eigen::Index>(t)).transpose();
  return from_batch_column(run_generator(gan, seed, nz, false).out, 0);
}

Eigen::MatrixXd generator_forward(const GanModel& gan, const Eigen::MatrixXd& human_seq, Rng& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd noise(human_seq.rows(), gan.net.noise_dim);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = unit(rng);
  return generator_forward(gan, human_seq, noise);
}

double discriminator_forward(const GanModel& gan, const Eigen::MatrixXd& seq) {
  check_sequence(gan, seq);
  const std::vector<Eigen::MatrixXd> seqs{seq};
  const std::size_t zero = 0;
  const auto logit = gan.discriminator.forward_final(to_batch(seqs, std::span(&zero, 1)), nullptr);
  return nn::sigmoid(logit(0, 0));
}

double discriminator_accuracy(const GanModel& gan, std::span<const Eigen::MatrixXd> real,
                              std::uint64_t seed) {
  if (real.empty()) throw Error(Errc::InsufficientData, "no sequences to score");
  Rng rng = make_rng(seed);
  std::size_t correct = 0;
  for (const auto& r : real) {
    if (discriminator_forward(gan, r) >= 0.5) ++correct;
    if (discriminator_forward(gan, generator_forward(gan, r, rng)) < 0.5) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(2 * real.size());
}

GanModel train_gan(std::span<const Eigen::MatrixXd> human, Modality modality,
                   const NetConfig& net, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.batch_size == 0 || human.size() < cfg.batch_size) {
    throw Error(Errc::InsufficientData, "GAN training needs at least batch_size sequences");
  }
  GanModel gan = init_gan(modality, net, cfg.rng_seed);
  for (const auto& s : human) {
    check_sequence(gan, s);
    if (!s.allFinite()) throw Error(Errc::NonFinite, "non-finite training sequence");
  }

  nn::Adam<double> adam_g(gan.generator.num_params(), cfg.learning_rate, cfg.adam_beta1,
                          cfg.adam_beta2, cfg.adam_eps);
  nn::Adam<double> adam_d(gan.discriminator.num_params(), cfg.learning_rate, cfg.adam_beta1,
                          cfg.adam_beta2, cfg.adam_eps);
  Eigen::VectorXd params_g = gan.generator.flatten();
  Eigen::VectorXd params_d = gan.discriminator.flatten();

  Rng rng = make_rng(cfg.rng_seed, kStreamTrain);
  std::vector<std::size_t> order(human.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t T = net.seq_len;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_g = 0.0;
    double sum_d = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const auto B = static_cast<Eigen::Index>(idx.size());
      const double inv_b = 1.0 / static_cast<double>(B);
      const SeqBatch<double> real = to_batch(human, idx);

      // Discriminator step on real (target 1) and generated (target 0).
      {
        const auto fake = run_generator(gan, real, noise_batch(T, net.noise_dim, B, rng), false);
        LstmNet<double>::Cache cache_r, cache_f;
        const Mat<double> logit_r = gan.discriminator.forward_final(real, &cache_r);
        const Mat<double> logit_f = gan.discriminator.forward_final(fake.out, &cache_f);
        Mat<double> d_r(1, B), d_f(1, B);
        double loss = 0.0;
        for (Eigen::Index b = 0; b < B; ++b) {
          loss += softplus(-logit_r(0, b)) + softplus(logit_f(0, b));
          // Loss is the cross-entropy averaged over the 2B combined samples.
          d_r(0, b) = (nn::sigmoid(logit_r(0, b)) - 1.0) * 0.5 * inv_b;
          d_f(0, b) = nn::sigmoid(logit_f(0, b)) * 0.5 * inv_b;
        }
        loss *= 0.5 * inv_b;
        auto grad = gan.discriminator.zeros_like();
        gan.discriminator.backward_final(cache_r, d_r, grad);
        gan.discriminator.backward_final(cache_f, d_f, grad);
        adam_d.step(params_d, grad.flatten());
        gan.discriminator.unflatten(params_d);
        sum_d += loss;
      }

      // Generator step.
      {
        auto fake = run_generator(gan, real, noise_batch(T, net.noise_dim, B, rng), true);
        SeqBatch<double> d_out(T);
        double loss = 0.0;
        if (cfg.generator_loss == GeneratorLoss::Lsgan) {
          LstmNet<double>::Cache cache_d;
          const Mat<double> logit = gan.discriminator.forward_final(fake.out, &cache_d);
          Mat<double> d_logit(1, B);
          for (Eigen::Index b = 0; b < B; ++b) {
            const double p = nn::sigmoid(logit(0, b));
            loss += (p - 1.0) * (p - 1.0);
            d_logit(0, b) = 2.0 * (p - 1.0) * p * (1.0 - p) * inv_b;
          }
          loss *= inv_b;
          auto scratch = gan.discriminator.zeros_like();
          d_out = gan.discriminator.backward_final(cache_d, d_logit, scratch);
        } else {
          const double scale = 1.0 / static_cast<double>(B * net.data_dim * static_cast<Eigen::Index>(T));
          for (std::size_t t = 0; t < T; ++t) {
            const Mat<double> diff = fake.out[t] - real[t];
            loss += diff.squaredNorm() * scale;
            d_out[t] = 2.0 * scale * diff;
          }
        }
        for (std::size_t t = 0; t < T; ++t) d_out[t] = d_out[t].cwiseProduct(fake.pass_mask[t]);
        auto grad = gan.generator.zeros_like();
        gan.generator.backward_sequence(fake.cache, d_out, grad);
        adam_g.step(params_g, grad.flatten());
        gan.generator.unflatten(params_g);
        sum_g += loss;
      }
      ++batches;
    }

    EpochStats stats{sum_g / static_cast<double>(batches), sum_d / static_cast<double>(batches)};
    if (!std::isfinite(stats.generator_loss) || !std::isfinite(stats.discriminator_loss) ||
        !params_g.allFinite() || !params_d.allFinite()) {
      throw Error(Errc::Diverged, "non-finite loss at epoch " + std::to_string(epoch));
    }
    gan.history.push_back(stats);
    if (on_epoch) on_epoch(epoch, stats, gan);
  }

  // Seed bank: a seeded subset of the training sequences.
  std::vector<std::size_t> pick(human.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  Rng bank_rng = make_rng(cfg.rng_seed, kStreamBank);
  std::shuffle(pick.begin(), pick.end(), bank_rng);
  pick.resize(std::min(pick.size(), kSeedBankSize));
  for (auto i : pick) gan.seed_bank.push_back(human[i]);
  return gan;
}

std::vector<Eigen::MatrixXd> touch_sequences(std::span<const GestureSample> samples,
                                             std::size_t count) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(resample_touch(s.touch, count).xy());
  return out;
}

std::vector<Eigen::MatrixXd> accel_sequences(std::span<const GestureSample> samples,
                                             std::size_t count) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.accel) throw Error(Errc::InvalidArgument, "sample without accelerometer data");
    out.push_back(resample_accel(*s.accel, count).axes());
  }
  return out;
}

GanModel train_touch_gan(std::span<const GestureSample> human, const NetConfig& net,
                         const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (net.data_dim != 2) throw Error(Errc::ShapeMismatch, "touch GAN needs data_dim 2");
  const auto seqs = touch_sequences(human, net.seq_len);
  return train_gan(seqs, Modality::Touch, net, cfg, on_epoch);
}

GanModel train_accel_gan(std::span<const GestureSample> human, const NetConfig& net,
                         const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (net.data_dim != 3) throw Error(Errc::ShapeMismatch, "accel GAN needs data_dim 3");
  auto seqs = accel_sequences(human, net.seq_len);
  if (seqs.empty()) throw Error(Errc::InsufficientData, "no accelerometer sequences");

  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_sq = Eigen::Vector3d::Zero();
  double n = 0.0;
  for (const auto& s : seqs) {
    sum += s.colwise().sum().transpose();
    sum_sq += s.array().square().colwise().sum().matrix().transpose();
    n += static_cast<double>(s.rows());
  }
  const Eigen::Vector3d mean = sum / n;
  Eigen::Vector3d sd = (sum_sq / n - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  for (int a = 0; a < 3; ++a) {
    if (sd(a) < 1e-12) sd(a) = 1.0;
  }
  for (auto& s : seqs) {
    s = (s.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
  }
  GanModel gan = train_gan(seqs, Modality::Accel, net, cfg, on_epoch);
  gan.scale_mean = mean;
  gan.scale_std = sd;
  return gan;
}

GestureSample synth_gan(const GanModel& touch, const GanModel* accel, const SwipePriors& priors,
                        std::uint64_t seed) {
  if (touch.modality != Modality::Touch || touch.seed_bank.empty()) {
    throw Error(Errc::ModelMissing, "touch GAN missing or untrained");
  }
  Rng rng = make_rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  double duration = 0.0;
  for (int attempt = 0; attempt < kMaxPriorRejections && !(duration > 0.0); ++attempt) {
    duration = priors.duration.mean + priors.duration.std * unit(rng);
  }
  if (!(duration > 0.0)) {
    throw Error(Errc::PriorRejectionExceeded, "duration prior never produced a positive draw");
  }

  std::uniform_int_distribution<std::size_t> pick_touch(0, touch.seed_bank.size() - 1);
  const Eigen::MatrixXd xy = generator_forward(touch, touch.seed_bank[pick_touch(rng)], rng);
  const auto T = static_cast<std::size_t>(xy.rows());
  std::vector<TouchPoint> pts(T);
  for (std::size_t i = 0; i < T; ++i) {
    pts[i].x = xy(static_cast<Eigen::Index>(i), 0);
    pts[i].y = xy(static_cast<Eigen::Index>(i), 1);
    pts[i].t = duration * static_cast<double>(i) / static_cast<double>(T - 1);
  }

  std::optional<AccelSequence> acc;
  if (accel) {
    if (accel->modality != Modality::Accel || accel->seed_bank.empty()) {
      throw Error(Errc::ModelMissing, "accel GAN missing or untrained");
    }
    std::uniform_int_distribution<std::size_t> pick_acc(0, accel->seed_bank.size() - 1);
    const Eigen::MatrixXd z = generator_forward(*accel, accel->seed_bank[pick_acc(rng)], rng);
    const auto n = static_cast<std::size_t>(z.rows());
    std::vector<AccelSample> samples(n);
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Index r = static_cast<Eigen::Index>(k);
      samples[k].ax = z(r, 0) * accel->scale_std(0) + accel->scale_mean(0);
      samples[k].ay = z(r, 1) * accel->scale_std(1) + accel->scale_mean(1);
      samples[k].az = z(r, 2) * accel->scale_std(2) + accel->scale_mean(2);
      samples[k].t = duration * static_cast<double>(k) / static_cast<double>(n - 1);
    }
    acc.emplace(std::move(samples), static_cast<double>(n - 1) / duration);
  }

  SessionMeta meta{"synthetic", "gan", Orientation::Portrait, "", Source::Synthetic};
  return GestureSample{TouchTrajectory(std::move(pts), priors.screen_w, priors.screen_h),
                       std::move(acc), Label::FakeGan, std::move(meta)};
}

nlohmann::json to_json(const GanModel& gan) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : gan.history) history.push_back({h.generator_loss, h.discriminator_loss});
  nlohmann::json bank = nlohmann::json::array();
  for (const auto& s : gan.seed_bank) bank.push_back(eigen_to_json(s));
  return make_envelope(
      "gan", {{"modality", to_string(gan.modality)},
              {"config", net_config_json(gan.net)},
              {"parameter_order",
               "lstm1.W lstm1.U lstm1.b lstm2.W lstm2.U lstm2.b head.W head.b (column-major)"},
              {"generator", eigen_to_json(gan.generator.flatten())},
              {"discriminator", eigen_to_json(gan.discriminator.flatten())},
              {"history", std::move(history)},
              {"scale_mean", eigen_to_json(gan.scale_mean)},
              {"scale_std", eigen_to_json(gan.scale_std)},
              {"seed_bank", std::move(bank)}});
}

GanModel gan_from_json(const nlohmann::json& j) {
  open_envelope(j, "gan");
  try {
    GanModel gan = init_gan(parse_modality(j.at("modality").get<std::string>()),
                            net_config_from(j.at("config")), 0);
    gan.generator.unflatten(vector_from_json(j.at("generator")));
    gan.discriminator.unflatten(vector_from_json(j.at("discriminator")));
    for (const auto& h : j.at("history")) {
      gan.history.push_back({h.at(0).get<double>(), h.at(1).get<double>()});
    }
    gan.scale_mean = vector_from_json(j.at("scale_mean"));
    gan.scale_std = vector_from_json(j.at("scale_std"));
    if (gan.scale_mean.size() != gan.net.data_dim || gan.scale_std.size() != gan.net.data_dim) {
      throw Error(Errc::ParseError, "GAN scale vectors have wrong size");
    }
    const auto T = static_cast<Eigen::Index>(gan.net.seq_len);
    for (const auto& s : j.at("seed_bank")) {
      gan.seed_bank.push_back(matrix_from_json(s, T, gan.net.data_dim));
    }
    return gan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("GAN model: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ShapeMismatch) throw Error(Errc::ParseError, e.what());
    throw;
  }
}

void save_gan(const GanModel& gan, const std::filesystem::path& path) {
  write_json_file(to_json(gan), path);
}

GanModel load_gan(const std::filesystem::path& path) { return gan_from_json(read_json_file(path)); }

}  // namespace becaptcha
