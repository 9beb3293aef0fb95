#include "becaptcha/session_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace becaptcha {

using nlohmann::json;

json to_json(const GestureSample& sample) {
  json points = json::array();
  for (const auto& pt : sample.touch.points()) {
    points.push_back(json::array({pt.x, pt.y, pt.p ? json(*pt.p) : json(nullptr), pt.t}));
  }
  json accel = nullptr;
  if (sample.accel) {
    json samples = json::array();
    for (const auto& s : sample.accel->samples()) {
      samples.push_back(json::array({s.ax, s.ay, s.az, s.t}));
    }
    accel = {{"rate_hz", sample.accel->nominal_rate_hz()}, {"samples", std::move(samples)}};
  }
  return {
      {"touch",
       {{"points", std::move(points)},
        {"screen_w", sample.touch.screen_w()},
        {"screen_h", sample.touch.screen_h()}}},
      {"accel", std::move(accel)},
      {"label", to_string(sample.label)},
      {"meta",
       {{"subject_id", sample.meta.subject_id},
        {"device_model", sample.meta.device_model},
        {"orientation", to_string(sample.meta.orientation)},
        {"captured_at", sample.meta.captured_at},
        {"source", to_string(sample.meta.source)}}},
  };
}

GestureSample gesture_from_json(const json& j) {
  try {
    const auto& touch = j.at("touch");
    std::vector<TouchPoint> points;
    for (const auto& row : touch.at("points")) {
      if (!row.is_array() || row.size() != 4) {
        throw Error(Errc::ParseError, "touch point must be [x, y, p|null, t]");
      }
      TouchPoint pt;
      pt.x = row[0].get<double>();
      pt.y = row[1].get<double>();
      if (!row[2].is_null()) pt.p = row[2].get<double>();
      pt.t = row[3].get<double>();
      points.push_back(pt);
    }
    TouchTrajectory traj(std::move(points), touch.at("screen_w").get<int>(),
                         touch.at("screen_h").get<int>());

    std::optional<AccelSequence> accel;
    const auto& acc = j.at("accel");
    if (!acc.is_null()) {
      std::vector<AccelSample> samples;
      for (const auto& row : acc.at("samples")) {
        if (!row.is_array() || row.size() != 4) {
          throw Error(Errc::ParseError, "accel sample must be [ax, ay, az, t]");
        }
        samples.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>(),
                           row[3].get<double>()});
      }
      accel.emplace(std::move(samples), acc.at("rate_hz").get<double>());
    }

    SessionMeta meta;
    const auto& m = j.at("meta");
    meta.subject_id = m.at("subject_id").get<std::string>();
    meta.device_model = m.at("device_model").get<std::string>();
    meta.orientation = parse_orientation(m.at("orientation").get<std::string>());
    meta.captured_at = m.at("captured_at").get<std::string>();
    meta.source = parse_source(m.at("source").get<std::string>());

    GestureSample sample{std::move(traj), std::move(accel),
                         parse_label(j.at("label").get<std::string>()), std::move(meta)};
    validate(sample);
    return sample;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

void write_sessions(std::ostream& os, std::span<const GestureSample> samples) {
  os << json{{"schema", kGestureSchema}}.dump() << '\n';
  for (const auto& s : samples) os << to_json(s).dump() << '\n';
}

std::vector<GestureSample> read_sessions(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](Errc code, const std::string& what) {
    return Error(code, "line " + std::to_string(line_no) + ": " + what);
  };

  bool have_header = false;
  std::vector<GestureSample> out;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(Errc::ParseError, e.what());
    }
    if (!have_header) {
      if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string()) {
        throw fail(Errc::ParseError, "missing schema header");
      }
      if (j["schema"].get<std::string>() != kGestureSchema) {
        throw fail(Errc::SchemaVersionMismatch,
                   "expected " + std::string(kGestureSchema) + ", got " +
                       j["schema"].get<std::string>());
      }
      have_header = true;
      continue;
    }
    try {
      out.push_back(gesture_from_json(j));
    } catch (const Error& e) {
      throw fail(e.code() == Errc::ParseError ? Errc::ParseError : e.code(), e.what());
    }
  }
  if (!have_header) throw Error(Errc::ParseError, "line 1: empty gesture file");
  return out;
}

void save_sessions(std::span<const GestureSample> samples, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(Errc::Io, "cannot write " + path.string());
  write_sessions(os, samples);
  if (!os) throw Error(Errc::Io, "write failed for " + path.string());
}

std::vector<GestureSample> load_sessions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::Io, "cannot open " + path.string());
  return read_sessions(is);
}

}  // namespace becaptcha
