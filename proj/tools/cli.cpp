#include "cli.hpp"

#include <chrono>
#include <csignal>
#include <ctime>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "becaptcha/bundle.hpp"
#include "becaptcha/eval.hpp"
#include "becaptcha/fixture.hpp"
#include "becaptcha/gan.hpp"
#include "becaptcha/handcrafted.hpp"
#include "becaptcha/model_io.hpp"
#include "becaptcha/service.hpp"
#include "becaptcha/session_io.hpp"

namespace becaptcha {

namespace {

using nlohmann::json;

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Runs `fn` with an output stream: the file at `path`, or stdout when empty.
template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream os(path);
  if (!os) throw Error(Errc::Io, "cannot write " + path);
  fn(os);
  if (!os) throw Error(Errc::Io, "write failed for " + path);
}

/// One raw capture per line:
/// {"screen_w", "screen_h", "touch": [[x_px, y_px, p|null, t_ms]...],
///  "accel": [[ax, ay, az, t_ms]...] | null, "accel_rate_hz"?, "label"?, "meta"?}
GestureSample ingest_record(const json& j, Label default_label, Source default_source) {
  std::vector<RawTouchPoint> raw;
  for (const auto& row : j.at("touch")) {
    if (!row.is_array() || row.size() != 4) {
      throw Error(Errc::ParseError, "raw touch row must be [x_px, y_px, p|null, t_ms]");
    }
    RawTouchPoint p;
    p.x_px = row[0].get<double>();
    p.y_px = row[1].get<double>();
    if (!row[2].is_null()) p.p = row[2].get<double>();
    p.t_ms = row[3].get<double>();
    raw.push_back(p);
  }
  const int w = j.at("screen_w").get<int>();
  const int h = j.at("screen_h").get<int>();
  double t0_ms = std::numeric_limits<double>::infinity();
  for (const auto& p : raw) t0_ms = std::min(t0_ms, p.t_ms);

  GestureSample g{normalize_touch(raw, w, h), std::nullopt, default_label, {}};
  if (j.contains("accel") && !j["accel"].is_null()) {
    std::vector<AccelSample> acc;
    for (const auto& row : j["accel"]) {
      const double t = (row.at(3).get<double>() - t0_ms) / 1000.0;
      if (t < 0.0) continue;  // before the touch started
      acc.push_back({row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>(), t});
    }
    std::stable_sort(acc.begin(), acc.end(),
                     [](const AccelSample& a, const AccelSample& b) { return a.t < b.t; });
    g.accel.emplace(std::move(acc), j.value("accel_rate_hz", kDefaultAccelRateHz));
  }
  if (j.contains("label")) g.label = parse_label(j["label"].get<std::string>());
  g.meta.source = default_source;
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    g.meta.subject_id = m.value("subject_id", "");
    g.meta.device_model = m.value("device_model", "");
    g.meta.captured_at = m.value("captured_at", "");
    if (m.contains("orientation")) {
      g.meta.orientation = parse_orientation(m["orientation"].get<std::string>());
    }
    if (m.contains("source")) g.meta.source = parse_source(m["source"].get<std::string>());
  }
  validate(g);
  return g;
}

std::vector<GestureSample> ingest_stream(std::istream& is, Label label, Source source) {
  std::vector<GestureSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(ingest_record(json::parse(line), label, source));
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<GestureSample> load_many(const std::vector<std::string>& paths) {
  std::vector<GestureSample> all;
  for (const auto& p : paths) {
    auto part = load_sessions(p);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

std::vector<GestureSample> with_label(std::span<const GestureSample> in, Label label) {
  std::vector<GestureSample> out;
  for (const auto& s : in) {
    if (s.label == label) out.push_back(s);
  }
  return out;
}

SwipePriors load_priors(const std::string& path) {
  return priors_from_json(read_json_file(path));
}

struct SvmFlags {
  double C = 1.0;
  double nu = 0.05;
  std::optional<double> gamma;
  double tol = 1e-3;

  void add(CLI::App* cmd) {
    cmd->add_option("--C", C, "Box constraint (multiclass)")->capture_default_str();
    cmd->add_option("--nu", nu, "Outlier fraction bound (one-class)")->capture_default_str();
    cmd->add_option("--gamma", gamma, "RBF width; default is the median heuristic");
    cmd->add_option("--tol", tol, "SMO stopping tolerance")->capture_default_str();
  }
  SvmParams params() const {
    SvmParams p;
    p.C = C;
    p.nu = nu;
    p.gamma = gamma;
    p.tol = tol;
    return p;
  }
};

const std::map<std::string, Scenario> kDetectorScenarios{
    {"one-class", Scenario::OneClass}, {"multiclass", Scenario::Multiclass}};
const std::map<std::string, FeatureMode> kModes{{"touch", FeatureMode::Touch},
                                                {"touch_accel", FeatureMode::TouchAccel}};
const std::map<std::string, Modality> kModalities{{"touch", Modality::Touch},
                                                  {"accel", Modality::Accel}};
const std::map<std::string, GeneratorLoss> kLosses{{"lsgan", GeneratorLoss::Lsgan},
                                                   {"reconstruction", GeneratorLoss::Reconstruction}};

Server* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Touch-swipe bot detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // ingest
  std::vector<std::string> ingest_in;
  std::string ingest_out;
  std::string ingest_label = "human";
  std::string ingest_source = "recorded";
  auto* ingest = app.add_subcommand("ingest", "Raw pixel/millisecond captures -> gesture file");
  ingest->add_option("--in", ingest_in, "Raw capture files (JSON lines)")->required();
  ingest->add_option("--out", ingest_out, "Gesture file to write")->required();
  ingest->add_option("--label", ingest_label, "Label for records without one")
      ->check(CLI::IsMember({"human", "fake_handcrafted", "fake_gan", "unknown"}));
  ingest->add_option("--source", ingest_source)
      ->check(CLI::IsMember({"recorded", "synthetic", "fixture"}));

  // fixture
  FixtureConfig fx;
  std::string fx_out;
  bool fx_no_accel = false;
  auto* fixture = app.add_subcommand("fixture", "Write the simulated pseudo-human corpus");
  fixture->add_option("--out", fx_out, "Gesture file to write")->required();
  fixture->add_option("--seed", fx.seed)->required();
  fixture->add_option("--subjects", fx.subjects)->capture_default_str();
  fixture->add_option("--per-subject", fx.gestures_per_subject)->capture_default_str();
  fixture->add_flag("--no-accel", fx_no_accel);

  // fit-priors
  std::vector<std::string> fp_in;
  std::string fp_out;
  std::size_t fp_floor = kDefaultPriorFloor;
  auto* fit = app.add_subcommand("fit-priors", "Fit swipe priors on human gestures");
  fit->add_option("--in", fp_in, "Gesture files (humans are used)")->required();
  fit->add_option("--out", fp_out, "Priors model file")->required();
  fit->add_option("--min-samples", fp_floor)->capture_default_str();

  // synth
  std::string sy_method;
  std::size_t sy_n = 0;
  std::uint64_t sy_seed = 0;
  std::string sy_priors, sy_bundle, sy_tgan, sy_agan, sy_out;
  std::optional<std::size_t> sy_points;
  double sy_log_base = kDefaultLogBase;
  bool sy_no_accel = false;
  auto* synth = app.add_subcommand("synth", "Generate synthetic fake gestures");
  synth->add_option("--method", sy_method)->required()->check(CLI::IsMember({"handcrafted", "gan"}));
  synth->add_option("--n", sy_n, "Number of gestures")->required();
  synth->add_option("--seed", sy_seed)->required();
  synth->add_option("--out", sy_out, "Gesture file (stdout if omitted)");
  synth->add_option("--priors", sy_priors, "Priors model file");
  synth->add_option("--bundle", sy_bundle, "Take priors and generators from a bundle");
  synth->add_option("--touch-gan", sy_tgan);
  synth->add_option("--accel-gan", sy_agan);
  synth->add_option("--points", sy_points, "Handcrafted point count (default: from priors)");
  synth->add_option("--log-base", sy_log_base)->capture_default_str();
  synth->add_flag("--no-accel", sy_no_accel);

  // train-gan
  std::string tg_modality;
  std::vector<std::string> tg_in;
  std::string tg_out;
  std::string tg_loss = "lsgan";
  TrainConfig tg_cfg;
  std::size_t tg_max = 0;
  auto* train_gan_cmd = app.add_subcommand("train-gan", "Train an LSTM GAN on human gestures");
  train_gan_cmd->add_option("--modality", tg_modality)->required()->check(CLI::IsMember({"touch", "accel"}));
  train_gan_cmd->add_option("--in", tg_in)->required();
  train_gan_cmd->add_option("--out", tg_out)->required();
  train_gan_cmd->add_option("--seed", tg_cfg.rng_seed)->required();
  train_gan_cmd->add_option("--epochs", tg_cfg.epochs)->capture_default_str();
  train_gan_cmd->add_option("--batch", tg_cfg.batch_size)->capture_default_str();
  train_gan_cmd->add_option("--lr", tg_cfg.learning_rate)->capture_default_str();
  train_gan_cmd->add_option("--beta1", tg_cfg.adam_beta1)->capture_default_str();
  train_gan_cmd->add_option("--loss", tg_loss)->check(CLI::IsMember({"lsgan", "reconstruction"}));
  train_gan_cmd->add_option("--max-humans", tg_max, "Use only the first N humans (0 = all)");

  // extract
  std::vector<std::string> ex_in;
  std::string ex_out;
  std::string ex_mode = "touch_accel";
  auto* extract_cmd = app.add_subcommand("extract", "Gesture features -> CSV");
  extract_cmd->add_option("--in", ex_in)->required();
  extract_cmd->add_option("--out", ex_out, "CSV file (stdout if omitted)");
  extract_cmd->add_option("--mode", ex_mode)->check(CLI::IsMember({"touch", "touch_accel"}));

  // train-detector
  std::string td_scenario = "one-class";
  std::string td_mode = "touch_accel";
  std::string td_bot = "handcrafted";
  std::vector<std::string> td_in;
  std::string td_priors, td_tgan, td_agan, td_out, td_created;
  std::uint64_t td_seed = 0;
  bool td_no_fallback = false;
  SvmFlags td_svm;
  auto* train_det = app.add_subcommand("train-detector", "Train an SVM detector into a bundle");
  train_det->add_option("--scenario", td_scenario)->check(CLI::IsMember({"one-class", "multiclass"}));
  train_det->add_option("--mode", td_mode)->check(CLI::IsMember({"touch", "touch_accel"}));
  train_det->add_option("--bot", td_bot, "Fakes for multiclass training and calibration")
      ->check(CLI::IsMember({"handcrafted", "gan"}));
  train_det->add_option("--in", td_in, "Gesture files with humans and fakes")->required();
  train_det->add_option("--priors", td_priors, "Priors (fitted on the humans if omitted)");
  train_det->add_option("--touch-gan", td_tgan);
  train_det->add_option("--accel-gan", td_agan);
  train_det->add_option("--out", td_out, "Bundle file")->required();
  train_det->add_option("--seed", td_seed)->required();
  train_det->add_option("--created-at", td_created, "Timestamp stored in the bundle");
  train_det->add_flag("--no-touch-fallback", td_no_fallback);
  td_svm.add(train_det);

  // eval
  std::string ev_scenario = "one-class";
  std::string ev_bot = "handcrafted";
  std::string ev_mode = "all";
  std::vector<std::string> ev_in;
  std::string ev_csv, ev_json;
  ProtocolConfig ev_cfg;
  SvmFlags ev_svm;
  auto* eval_cmd = app.add_subcommand("eval", "Repeated-split EER evaluation");
  eval_cmd->add_option("--scenario", ev_scenario)->check(CLI::IsMember({"one-class", "multiclass"}));
  eval_cmd->add_option("--bot", ev_bot)->check(CLI::IsMember({"handcrafted", "gan", "cross"}));
  eval_cmd->add_option("--mode", ev_mode)->check(CLI::IsMember({"touch", "touch_accel", "all"}));
  eval_cmd->add_option("--in", ev_in, "Gesture files with humans and fakes")->required();
  eval_cmd->add_option("--seed", ev_cfg.seed)->required();
  eval_cmd->add_option("--reps", ev_cfg.reps)->capture_default_str();
  eval_cmd->add_option("--train-frac", ev_cfg.train_frac)->capture_default_str();
  eval_cmd->add_option("--out", ev_csv, "EvalReport CSV (stdout if omitted)");
  eval_cmd->add_option("--json", ev_json, "Also write the reports as JSON");
  ev_svm.add(eval_cmd);

  // report-distributions
  std::vector<std::string> rd_in;
  std::string rd_csv, rd_json;
  std::size_t rd_bins = 20;
  std::size_t rd_min = 100;
  auto* report = app.add_subcommand("report-distributions",
                                    "Touch feature histograms and KS distances per group");
  report->add_option("--in", rd_in, "Gesture files with humans and both fake kinds")->required();
  report->add_option("--bins", rd_bins)->capture_default_str();
  report->add_option("--min-samples", rd_min)->capture_default_str();
  report->add_option("--out", rd_csv, "CSV (stdout if omitted)");
  report->add_option("--json", rd_json);

  // serve
  std::string sv_bundle;
  std::string sv_host = "127.0.0.1";
  int sv_port = 8080;
  auto* serve = app.add_subcommand("serve", "Run the verification HTTP service");
  serve->add_option("--bundle", sv_bundle, "Bundle file (else $BECAPTCHA_BUNDLE)");
  serve->add_option("--host", sv_host)->capture_default_str();
  serve->add_option("--port", sv_port)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) {
      std::vector<GestureSample> all;
      for (const auto& path : ingest_in) {
        std::ifstream is(path);
        if (!is) throw Error(Errc::Io, "cannot open " + path);
        try {
          auto part = ingest_stream(is, parse_label(ingest_label), parse_source(ingest_source));
          all.insert(all.end(), part.begin(), part.end());
        } catch (const Error& e) {
          throw Error(e.code(), path + ": " + e.what());
        }
      }
      save_sessions(all, ingest_out);
      std::cerr << "ingested " << all.size() << " gestures\n";
    } else if (*fixture) {
      fx.with_accel = !fx_no_accel;
      save_sessions(fixture_humans(fx), fx_out);
    } else if (*fit) {
      const auto humans = with_label(load_many(fp_in), Label::Human);
      write_json_file(to_json(fit_priors(humans, fp_floor)), fp_out);
    } else if (*synth) {
      std::optional<ModelBundle> bundle;
      if (!sy_bundle.empty()) bundle = load_bundle(sy_bundle);
      SwipePriors priors;
      if (!sy_priors.empty()) {
        priors = load_priors(sy_priors);
      } else if (bundle) {
        priors = bundle->priors;
      } else {
        throw Error(Errc::InvalidArgument, "synth needs --priors or --bundle");
      }
      std::optional<GanModel> tgan, agan;
      if (sy_method == "gan") {
        if (!sy_tgan.empty()) {
          tgan = load_gan(sy_tgan);
        } else if (bundle && bundle->touch_gan) {
          tgan = bundle->touch_gan;
        } else {
          throw Error(Errc::ModelMissing, "gan synthesis needs --touch-gan or a bundle with one");
        }
        if (!sy_agan.empty()) {
          agan = load_gan(sy_agan);
        } else if (bundle && bundle->accel_gan) {
          agan = bundle->accel_gan;
        }
        if (sy_no_accel) agan.reset();
      }
      std::vector<GestureSample> out;
      out.reserve(sy_n);
      for (std::size_t i = 0; i < sy_n; ++i) {
        const std::uint64_t seed = mix_seed(sy_seed, i);
        if (sy_method == "handcrafted") {
          HandcraftedOptions opts;
          opts.points = sy_points;
          opts.log_base = sy_log_base;
          opts.with_accel = priors.has_accel && !sy_no_accel;
          out.push_back(synth_handcrafted(priors, seed, opts));
        } else {
          out.push_back(synth_gan(*tgan, agan ? &*agan : nullptr, priors, seed));
        }
      }
      with_output(sy_out, [&](std::ostream& os) { write_sessions(os, out); });
    } else if (*train_gan_cmd) {
      auto humans = with_label(load_many(tg_in), Label::Human);
      if (tg_max > 0 && humans.size() > tg_max) humans.erase(humans.begin() + static_cast<std::ptrdiff_t>(tg_max), humans.end());
      tg_cfg.generator_loss = kLosses.at(tg_loss);
      const Modality modality = kModalities.at(tg_modality);
      const auto log = [](int epoch, const EpochStats& s, const GanModel&) {
        std::cerr << "epoch " << epoch << " g_loss " << s.generator_loss << " d_loss "
                  << s.discriminator_loss << '\n';
      };
      const NetConfig net = NetConfig::for_modality(modality);
      const GanModel gan = modality == Modality::Touch ? train_touch_gan(humans, net, tg_cfg, log)
                                                       : train_accel_gan(humans, net, tg_cfg, log);
      save_gan(gan, tg_out);
    } else if (*extract_cmd) {
      const auto samples = load_many(ex_in);
      const FeatureMode mode = kModes.at(ex_mode);
      std::vector<CombinedFeatureVector> rows;
      rows.reserve(samples.size());
      for (const auto& s : samples) rows.push_back(extract(s, mode));
      with_output(ex_out, [&](std::ostream& os) { write_feature_csv(os, rows); });
    } else if (*train_det) {
      const auto samples = load_many(td_in);
      const SwipePriors priors = td_priors.empty()
                                     ? fit_priors(with_label(samples, Label::Human))
                                     : load_priors(td_priors);
      BundleTrainConfig cfg;
      cfg.scenario = kDetectorScenarios.at(td_scenario);
      cfg.feature_mode = kModes.at(td_mode);
      cfg.bot = parse_bot_method(td_bot);
      cfg.seed = td_seed;
      cfg.svm = td_svm.params();
      cfg.touch_fallback = !td_no_fallback;
      cfg.created_at = td_created.empty() ? utc_now() : td_created;
      ModelBundle bundle = train_bundle(samples, priors, cfg);
      if (!td_tgan.empty()) bundle.touch_gan = load_gan(td_tgan);
      if (!td_agan.empty()) bundle.accel_gan = load_gan(td_agan);
      save_bundle(bundle, td_out);
      std::cerr << "bundle " << bundle_hash(bundle) << " threshold " << bundle.threshold << '\n';
    } else if (*eval_cmd) {
      const auto samples = load_many(ev_in);
      ev_cfg.svm = ev_svm.params();
      std::vector<FeatureMode> modes;
      if (ev_mode == "all") {
        modes = {FeatureMode::Touch, FeatureMode::TouchAccel};
      } else {
        modes = {kModes.at(ev_mode)};
      }
      std::vector<EvalReport> reports;
      for (const FeatureMode mode : modes) {
        if (ev_bot == "cross") {
          reports.push_back(run_cross_generation(samples, BotMethod::Handcrafted, BotMethod::Gan,
                                                 mode, ev_cfg));
          reports.push_back(run_cross_generation(samples, BotMethod::Gan, BotMethod::Handcrafted,
                                                 mode, ev_cfg));
        } else {
          reports.push_back(run_protocol(samples, kDetectorScenarios.at(ev_scenario), mode,
                                         parse_bot_method(ev_bot), ev_cfg));
        }
      }
      with_output(ev_csv, [&](std::ostream& os) { write_report_csv(os, reports); });
      if (!ev_json.empty()) {
        json arr = json::array();
        for (const auto& r : reports) arr.push_back(to_json(r));
        with_output(ev_json, [&](std::ostream& os) { os << arr.dump(2) << '\n'; });
      }
    } else if (*report) {
      const auto samples = load_many(rd_in);
      const auto dist = feature_distribution_report(
          with_label(samples, Label::Human), with_label(samples, Label::FakeHandcrafted),
          with_label(samples, Label::FakeGan), rd_bins, rd_min);
      with_output(rd_csv, [&](std::ostream& os) { write_distribution_csv(os, dist); });
      if (!rd_json.empty()) {
        with_output(rd_json, [&](std::ostream& os) { os << to_json(dist).dump() << '\n'; });
      }
    } else if (*serve) {
      std::string path = sv_bundle;
      if (path.empty()) {
        if (const char* env = std::getenv("BECAPTCHA_BUNDLE")) path = env;
      }
      if (path.empty()) throw Error(Errc::InvalidArgument, "serve needs --bundle or $BECAPTCHA_BUNDLE");
      Server server(load_bundle(path));
      const int port = server.bind(sv_host, sv_port);
      std::cerr << "listening on " << sv_host << ':' << port << '\n';
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.listen();
      g_server = nullptr;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::InvalidArgument ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args);
}

}  // namespace becaptcha
