#pragma once

// Internal helpers around toml++ shared by the config/calibration/world
// readers. Not installed.

#include <string>
#include <vector>

#include <toml.hpp>

#include "oneshot/error.hpp"

namespace oneshot::detail {

inline double toml_number(const toml::node_view<const toml::node>& node, const std::string& key) {
  if (auto v = node.value<double>()) return *v;
  throw ConfigError("missing or non-numeric key '" + key + "'");
}

inline double toml_number_or(const toml::node_view<const toml::node>& node, double fallback) {
  if (!node) return fallback;
  if (auto v = node.value<double>()) return *v;
  throw ConfigError("expected a number");
}

inline long long toml_integer(const toml::node_view<const toml::node>& node, const std::string& key) {
  if (auto v = node.value<long long>()) return *v;
  throw ConfigError("missing or non-integer key '" + key + "'");
}

inline std::vector<double> toml_number_array(const toml::node_view<const toml::node>& node,
                                             const std::string& key) {
  const toml::array* arr = node.as_array();
  if (arr == nullptr) throw ConfigError("missing or non-array key '" + key + "'");
  std::vector<double> out;
  out.reserve(arr->size());
  for (const toml::node& elem : *arr) {
    auto v = elem.value<double>();
    if (!v) throw ConfigError("non-numeric entry in '" + key + "'");
    out.push_back(*v);
  }
  return out;
}

inline toml::table parse_toml(std::string_view text, const std::string& source_name) {
  try {
    return toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    throw ConfigError(source_name + ": " + std::string(e.description()));
  }
}

}  // namespace oneshot::detail
