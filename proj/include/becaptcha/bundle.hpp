#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "becaptcha/eval.hpp"
#include "becaptcha/features.hpp"
#include "becaptcha/gan.hpp"
#include "becaptcha/handcrafted.hpp"
#include "becaptcha/svm.hpp"

namespace becaptcha {

inline constexpr int kBundleFormatVersion = 1;
inline constexpr std::string_view kVersion = "0.1.0";

/// Everything the service needs, loaded once and never mutated.
struct ModelBundle {
  FeatureMode feature_mode = FeatureMode::Touch;
  SvmModel detector;
  double threshold = 0.0;
  // Scores requests without accelerometer data when the main detector uses it.
  std::optional<SvmModel> touch_detector;
  double touch_threshold = 0.0;
  SwipePriors priors;
  std::optional<GanModel> touch_gan;
  std::optional<GanModel> accel_gan;
  std::string created_at;
  int format_version = kBundleFormatVersion;
};

struct BundleTrainConfig {
  Scenario scenario = Scenario::OneClass;
  FeatureMode feature_mode = FeatureMode::TouchAccel;
  // Fakes used for multiclass training and for threshold calibration.
  BotMethod bot = BotMethod::Handcrafted;
  double calibration_frac = 0.3;
  std::uint64_t seed = 0;
  SvmParams svm;
  bool touch_fallback = true;
  std::string created_at;
};

/// Fits the detector on a random (1 - calibration_frac) share of the usable
/// humans (plus fakes for multiclass) and stores the EER threshold measured
/// on the rest. Throws InsufficientData, InvalidArgument.
ModelBundle train_bundle(std::span<const GestureSample> samples, const SwipePriors& priors,
                         const BundleTrainConfig& cfg);

struct Verdict {
  double human_score = 0.0;  // -inf when the gesture could not be scored
  bool is_human = false;
  double threshold = 0.0;
  std::optional<CombinedFeatureVector> features;
  std::vector<std::string> warnings;

  friend bool operator==(const Verdict& a, const Verdict& b);
};

/// Pure function of (bundle, gesture). A gesture without movement is
/// rejected with a warning instead of an exception.
Verdict verify(const ModelBundle& bundle, const GestureSample& gesture);

/// Verdict for a payload that cannot be scored at all.
Verdict rejected_verdict(const ModelBundle& bundle, std::string reason);

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& j);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
/// Throws BundleLoadError for anything that keeps the file from loading.
ModelBundle load_bundle(const std::filesystem::path& path);

/// FNV-1a 64 of the serialized bundle, 16 hex digits.
std::string bundle_hash(const ModelBundle& bundle);

}  // namespace becaptcha
