#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "becaptcha/error.hpp"

namespace becaptcha {

// Every persisted model (GAN, SVM detector, bundle, eval report) shares one
// JSON envelope: {"schema": "becaptcha-model/1", "kind": <kind>, ...body}.
inline constexpr const char* kModelSchema = "becaptcha-model/1";

inline nlohmann::json make_envelope(const std::string& kind, nlohmann::json body) {
  body["schema"] = kModelSchema;
  body["kind"] = kind;
  return body;
}

inline const nlohmann::json& open_envelope(const nlohmann::json& j, const std::string& kind) {
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string()) {
    throw Error(Errc::ParseError, "model file without schema field");
  }
  if (j["schema"].get<std::string>() != kModelSchema) {
    throw Error(Errc::SchemaVersionMismatch,
                "expected " + std::string(kModelSchema) + ", got " + j["schema"].get<std::string>());
  }
  if (!j.contains("kind") || j["kind"] != kind) {
    throw Error(Errc::ParseError, "model file is not of kind '" + kind + "'");
  }
  return j;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error(Errc::Io, "cannot write " + path.string());
  os << j.dump() << '\n';
  if (!os) throw Error(Errc::Io, "write failed for " + path.string());
}

template <typename Derived>
nlohmann::json eigen_to_json(const Eigen::DenseBase<Derived>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v.derived().data()[k]);
  return out;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::ParseError, "expected numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  return v;
}

/// Column-major matrix from a flat array.
inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows,
                                        Eigen::Index cols) {
  Eigen::VectorXd v = vector_from_json(j);
  if (v.size() != rows * cols) throw Error(Errc::ParseError, "matrix has wrong element count");
  return Eigen::Map<Eigen::MatrixXd>(v.data(), rows, cols);
}

}  // namespace becaptcha
