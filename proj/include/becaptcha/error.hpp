#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace becaptcha {

enum class Errc {
  EmptyGesture,
  OutOfScreen,
  ParseError,
  SchemaVersionMismatch,
  DegenerateGesture,
  ZeroDt,
  TooFewSamples,
  PriorRejectionExceeded,
  ShapeMismatch,
  Diverged,
  SingleClass,
  NonFinite,
  DimensionMismatch,
  EmptyScores,
  InsufficientData,
  ModelMissing,
  BundleLoadError,
  BindError,
  InvalidArgument,
  Io,
};

std::string_view to_string(Errc code);

// Every failure the library reports carries one of the codes above; callers
// that need to branch (CLI exit codes, HTTP status) switch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::EmptyGesture: return "EmptyGesture";
    case Errc::OutOfScreen: return "OutOfScreen";
    case Errc::ParseError: return "ParseError";
    case Errc::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case Errc::DegenerateGesture: return "DegenerateGesture";
    case Errc::ZeroDt: return "ZeroDt";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::PriorRejectionExceeded: return "PriorRejectionExceeded";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::Diverged: return "Diverged";
    case Errc::SingleClass: return "SingleClass";
    case Errc::NonFinite: return "NonFinite";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptyScores: return "EmptyScores";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::ModelMissing: return "ModelMissing";
    case Errc::BundleLoadError: return "BundleLoadError";
    case Errc::BindError: return "BindError";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace becaptcha
