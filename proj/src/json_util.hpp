#pragma once

// Small helpers for reading typed fields out of parsed JSON documents.

#include <algorithm>
#include <cstddef>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>

namespace cloudhealth::detail {

inline int line_of_offset(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

template <class Fail>
std::string require_string(const nlohmann::json& j, const char* key, Fail&& fail) {
  if (!j.contains(key) || !j[key].is_string()) fail(std::string("'") + key + "' must be a string");
  return j[key].template get<std::string>();
}

template <class Fail>
std::optional<std::string> optional_string(const nlohmann::json& j, const char* key, Fail&& fail) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_string()) fail(std::string("'") + key + "' must be a string");
  return j[key].template get<std::string>();
}

template <class Fail>
double require_number(const nlohmann::json& j, const char* key, Fail&& fail) {
  if (!j.contains(key) || !j[key].is_number()) fail(std::string("'") + key + "' must be a number");
  return j[key].template get<double>();
}

}  // namespace cloudhealth::detail
