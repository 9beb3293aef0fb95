#include "becaptcha/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "becaptcha/model_io.hpp"
#include "becaptcha/rng.hpp"

namespace becaptcha {

using nlohmann::json;

namespace {

struct Group {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calib;
};

Group split_group(std::size_t n, double calib_frac, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_calib = static_cast<std::size_t>(std::llround(calib_frac * static_cast<double>(n)));
  Group g;
  g.calib.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_calib));
  g.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_calib), perm.end());
  std::sort(g.calib.begin(), g.calib.end());
  std::sort(g.train.begin(), g.train.end());
  return g;
}

Eigen::MatrixXd rows_of(std::span<const GestureSample> samples,
                        const std::vector<std::size_t>& pool, const std::vector<std::size_t>& idx,
                        FeatureMode mode) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), feature_dim(mode));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) =
        extract(samples[pool[idx[r]]], mode).as_array().transpose();
  }
  return out;
}

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

json features_json(const CombinedFeatureVector& f) {
  const Eigen::VectorXd a = f.as_array();
  json out = json::object();
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    out[std::string(kFeatureNames[static_cast<std::size_t>(k)])] = a(k);
  }
  return out;
}

CombinedFeatureVector features_from_json(const json& j) {
  const Eigen::Index n = j.contains(std::string(kFeatureNames[kTouchFeatureDim]))
                             ? kCombinedFeatureDim
                             : kTouchFeatureDim;
  Eigen::VectorXd a(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    a(k) = j.at(std::string(kFeatureNames[static_cast<std::size_t>(k)])).get<double>();
  }
  return CombinedFeatureVector::from_array(a);
}

}  // namespace

ModelBundle train_bundle(std::span<const GestureSample> samples, const SwipePriors& priors,
                         const BundleTrainConfig& cfg) {
  if (cfg.scenario == Scenario::CrossMulticlass) {
    throw Error(Errc::InvalidArgument, "a bundle detector is one_class or multiclass");
  }
  if (!(cfg.calibration_frac > 0.0 && cfg.calibration_frac < 1.0)) {
    throw Error(Errc::InvalidArgument, "calibration_frac must lie in (0, 1)");
  }
  std::vector<std::size_t> humans;
  std::vector<std::size_t> fakes;
  const Label fake = fake_label(cfg.bot);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label != Label::Human && s.label != fake) continue;
    if (cfg.feature_mode == FeatureMode::TouchAccel && !s.accel) continue;
    if (touch_features(s.touch).degenerate) continue;
    (s.label == Label::Human ? humans : fakes).push_back(i);
  }
  if (humans.size() < 10 || fakes.size() < 4) {
    throw Error(Errc::InsufficientData,
                "bundle training needs >= 10 humans and >= 4 fakes of the calibration method");
  }

  Rng rng = make_rng(cfg.seed, 7);
  const Group h = split_group(humans.size(), cfg.calibration_frac, rng);
  const Group f = split_group(fakes.size(), cfg.calibration_frac, rng);

  SvmParams svm = cfg.svm;
  svm.seed = mix_seed(cfg.seed, 8);

  const auto fit = [&](FeatureMode mode) -> std::pair<SvmModel, double> {
    const Eigen::MatrixXd xh = rows_of(samples, humans, h.train, mode);
    SvmModel model;
    if (cfg.scenario == Scenario::OneClass) {
      model = train_one_class(xh, svm);
    } else {
      const Eigen::MatrixXd xf = rows_of(samples, fakes, f.train, mode);
      Eigen::MatrixXd x(xh.rows() + xf.rows(), xh.cols());
      x << xh, xf;
      std::vector<int> y(static_cast<std::size_t>(x.rows()), -1);
      std::fill(y.begin(), y.begin() + xh.rows(), 1);
      model = train_binary(x, y, svm);
    }
    ScoreSet scores;
    scores.genuine = as_std(decision_scores(model, rows_of(samples, humans, h.calib, mode)));
    scores.impostor = as_std(decision_scores(model, rows_of(samples, fakes, f.calib, mode)));
    return {std::move(model), compute_eer(scores).threshold};
  };

  ModelBundle bundle;
  bundle.feature_mode = cfg.feature_mode;
  std::tie(bundle.detector, bundle.threshold) = fit(cfg.feature_mode);
  if (cfg.feature_mode == FeatureMode::TouchAccel && cfg.touch_fallback) {
    auto [model, thr] = fit(FeatureMode::Touch);
    bundle.touch_detector = std::move(model);
    bundle.touch_threshold = thr;
  }
  bundle.priors = priors;
  bundle.created_at = cfg.created_at;
  return bundle;
}

bool operator==(const Verdict& a, const Verdict& b) {
  const bool same_score = a.human_score == b.human_score ||
                          (std::isnan(a.human_score) && std::isnan(b.human_score));
  if (!same_score || a.is_human != b.is_human || a.threshold != b.threshold ||
      a.warnings != b.warnings || a.features.has_value() != b.features.has_value()) {
    return false;
  }
  if (!a.features) return true;
  const Eigen::VectorXd fa = a.features->as_array();
  const Eigen::VectorXd fb = b.features->as_array();
  return fa.size() == fb.size() && fa == fb;
}

Verdict rejected_verdict(const ModelBundle& bundle, std::string reason) {
  Verdict v;
  v.human_score = -std::numeric_limits<double>::infinity();
  v.is_human = false;
  v.threshold = bundle.threshold;
  v.warnings.push_back(std::move(reason));
  return v;
}

Verdict verify(const ModelBundle& bundle, const GestureSample& gesture) {
  const TouchFeatureVector touch = touch_features(gesture.touch);
  const SvmModel* detector = &bundle.detector;
  double threshold = bundle.threshold;
  FeatureMode mode = bundle.feature_mode;
  std::vector<std::string> warnings;
  if (mode == FeatureMode::TouchAccel && !gesture.accel) {
    if (!bundle.touch_detector) {
      throw Error(Errc::ModelMissing,
                  "gesture has no accelerometer data and the bundle has no touch-only detector");
    }
    detector = &*bundle.touch_detector;
    threshold = bundle.touch_threshold;
    mode = FeatureMode::Touch;
    warnings.emplace_back("accelerometer data absent; scored with the touch-only detector");
  }

  if (touch.degenerate) {
    Verdict v = rejected_verdict(bundle, "degenerate gesture: start and end points coincide");
    v.threshold = threshold;
    v.features = combine(touch);
    v.warnings.insert(v.warnings.begin(), warnings.begin(), warnings.end());
    return v;
  }

  Verdict v;
  v.features = mode == FeatureMode::Touch ? combine(touch)
                                          : combine(touch, accel_features(*gesture.accel));
  v.human_score = decision_score(*detector, v.features->as_array());
  v.threshold = threshold;
  v.is_human = v.human_score >= threshold;
  v.warnings = std::move(warnings);
  return v;
}

json to_json(const Verdict& v) {
  return {{"human_score", std::isfinite(v.human_score) ? json(v.human_score) : json(nullptr)},
          {"is_human", v.is_human},
          {"threshold", v.threshold},
          {"features", v.features ? features_json(*v.features) : json(nullptr)},
          {"warnings", v.warnings}};
}

Verdict verdict_from_json(const json& j) {
  try {
    Verdict v;
    const auto& score = j.at("human_score");
    v.human_score =
        score.is_null() ? -std::numeric_limits<double>::infinity() : score.get<double>();
    v.is_human = j.at("is_human").get<bool>();
    v.threshold = j.at("threshold").get<double>();
    if (!j.at("features").is_null()) v.features = features_from_json(j.at("features"));
    v.warnings = j.at("warnings").get<std::vector<std::string>>();
    return v;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

json to_json(const ModelBundle& b) {
  json body = {{"format_version", b.format_version},
               {"created_at", b.created_at},
               {"feature_mode", to_string(b.feature_mode)},
               {"detector", to_json(b.detector)},
               {"threshold", b.threshold},
               {"touch_detector", b.touch_detector ? to_json(*b.touch_detector) : json(nullptr)},
               {"touch_threshold", b.touch_threshold},
               {"priors", to_json(b.priors)},
               {"touch_gan", b.touch_gan ? to_json(*b.touch_gan) : json(nullptr)},
               {"accel_gan", b.accel_gan ? to_json(*b.accel_gan) : json(nullptr)}};
  return make_envelope("bundle", std::move(body));
}

ModelBundle bundle_from_json(const json& j) {
  const auto& body = open_envelope(j, "bundle");
  try {
    ModelBundle b;
    b.format_version = body.at("format_version").get<int>();
    if (b.format_version != kBundleFormatVersion) {
      throw Error(Errc::SchemaVersionMismatch,
                  "bundle format_version " + std::to_string(b.format_version));
    }
    b.created_at = body.at("created_at").get<std::string>();
    b.feature_mode = parse_feature_mode(body.at("feature_mode").get<std::string>());
    b.detector = svm_from_json(body.at("detector"));
    b.threshold = body.at("threshold").get<double>();
    if (!body.at("touch_detector").is_null()) {
      b.touch_detector = svm_from_json(body.at("touch_detector"));
      b.touch_threshold = body.at("touch_threshold").get<double>();
      if (b.touch_detector->dim() != kTouchFeatureDim) {
        throw Error(Errc::ParseError, "touch-only detector must take 6 features");
      }
    }
    b.priors = priors_from_json(body.at("priors"));
    if (!body.at("touch_gan").is_null()) b.touch_gan = gan_from_json(body.at("touch_gan"));
    if (!body.at("accel_gan").is_null()) b.accel_gan = gan_from_json(body.at("accel_gan"));
    if (b.detector.dim() != feature_dim(b.feature_mode)) {
      throw Error(Errc::ParseError, "detector input dimension does not match feature_mode");
    }
    return b;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  write_json_file(to_json(bundle), path);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  try {
    return bundle_from_json(read_json_file(path));
  } catch (const Error& e) {
    throw Error(Errc::BundleLoadError, path.string() + ": " + e.what());
  }
}

std::string bundle_hash(const ModelBundle& bundle) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(bundle).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace becaptcha
