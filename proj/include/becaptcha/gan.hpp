#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "becaptcha/gesture.hpp"
#include "becaptcha/handcrafted.hpp"
#include "becaptcha/lstm.hpp"
#include "becaptcha/rng.hpp"

namespace becaptcha {

enum class Modality { Touch, Accel };
enum class GeneratorLoss { Lsgan, Reconstruction };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);
std::string_view to_string(GeneratorLoss l);
GeneratorLoss parse_generator_loss(std::string_view s);

struct NetConfig {
  Eigen::Index data_dim = 2;
  Eigen::Index noise_dim = 8;
  std::array<Eigen::Index, 2> lstm_units{16, 16};
  std::size_t seq_len = 32;
  // Generator output = seed sequence + dense head, with the head starting at
  // zero so an untrained generator reproduces its seed.
  bool residual = true;

  static NetConfig for_modality(Modality m);
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t rng_seed = 0;
  GeneratorLoss generator_loss = GeneratorLoss::Lsgan;
};

struct EpochStats {
  double generator_loss = 0.0;
  double discriminator_loss = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

/// Sequences are T x d matrices in "model space": normalized coordinates for
/// touch, per-axis standardized values for accel (see scale_mean/scale_std).
struct GanModel {
  Modality modality = Modality::Touch;
  NetConfig net;
  nn::LstmNet<double> generator;
  nn::LstmNet<double> discriminator;
  std::vector<EpochStats> history;
  Eigen::VectorXd scale_mean;
  Eigen::VectorXd scale_std;
  // Training sequences kept for seeding generation at inference time.
  std::vector<Eigen::MatrixXd> seed_bank;
};

inline constexpr std::size_t kSeedBankSize = 256;

/// Fresh model with seeded uniform initialization.
GanModel init_gan(Modality modality, const NetConfig& net, std::uint64_t seed);

/// Generator pass on one seed sequence (T x d) and noise (T x noise_dim).
Eigen::MatrixXd generator_forward(const GanModel& gan, const Eigen::MatrixXd& human_seq,
                                  const Eigen::MatrixXd& noise);
/// Same, drawing standard-Gaussian noise from `rng`.
Eigen::MatrixXd generator_forward(const GanModel& gan, const Eigen::MatrixXd& human_seq,
                                  Rng& rng);

/// Probability that `seq` (T x d, model space) is real.
double discriminator_forward(const GanModel& gan, const Eigen::MatrixXd& seq);

/// Fraction of correct real/fake calls (threshold 0.5) over `real` and one
/// generated sequence per real one.
double discriminator_accuracy(const GanModel& gan, std::span<const Eigen::MatrixXd> real,
                              std::uint64_t seed);

using EpochCallback = std::function<void(int epoch, const EpochStats&, const GanModel&)>;

/// Adversarial training on model-space sequences. Per batch: one
/// discriminator step (binary cross-entropy, real = 1, generated = 0), then
/// one generator step through the updated discriminator.
GanModel train_gan(std::span<const Eigen::MatrixXd> human, Modality modality,
                   const NetConfig& net, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Touch samples resampled to `count` points, as count x 2 matrices.
std::vector<Eigen::MatrixXd> touch_sequences(std::span<const GestureSample> samples,
                                             std::size_t count);
/// Accelerometer samples resampled to `count` steps, raw units, count x 3.
std::vector<Eigen::MatrixXd> accel_sequences(std::span<const GestureSample> samples,
                                             std::size_t count);

GanModel train_touch_gan(std::span<const GestureSample> human, const NetConfig& net,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {});
/// Standardizes each axis over the corpus before training; the statistics
/// are kept in the model for de-standardizing generated output.
GanModel train_accel_gan(std::span<const GestureSample> human, const NetConfig& net,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Fake sample from trained generators. Timestamps are uniform over a
/// duration drawn from the human duration prior.
GestureSample synth_gan(const GanModel& touch, const GanModel* accel, const SwipePriors& priors,
                        std::uint64_t seed);

nlohmann::json to_json(const GanModel& gan);
GanModel gan_from_json(const nlohmann::json& j);
void save_gan(const GanModel& gan, const std::filesystem::path& path);
GanModel load_gan(const std::filesystem::path& path);

}  // namespace becaptcha
