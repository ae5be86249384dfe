#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "pimoe/error.hpp"

namespace pimoe {

/// Throws ConfigError unless `j` is an object whose keys all appear in `known`.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                const std::string& where);

/// Reads `j[key]` into `out` when present; a type mismatch raises ConfigError.
template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, where + "." + key + ": " + e.what());
  }
}

}  // namespace pimoe
