#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "becaptcha/gesture.hpp"

namespace becaptcha {

inline constexpr const char* kGestureSchema = "becaptcha/1";

// Gesture files are line-delimited JSON: a {"schema": ...} header line, then
// one GestureSample object per line.

nlohmann::json to_json(const GestureSample& sample);
GestureSample gesture_from_json(const nlohmann::json& j);

void write_sessions(std::ostream& os, std::span<const GestureSample> samples);
std::vector<GestureSample> read_sessions(std::istream& is);

void save_sessions(std::span<const GestureSample> samples, const std::filesystem::path& path);
std::vector<GestureSample> load_sessions(const std::filesystem::path& path);

}  // namespace becaptcha
