#pragma once

#include <set>
#include <string>

#include "json.hpp"

#include "agov/error.hpp"

namespace agov::json_util {

// Strict-schema helpers: every failure is a ParseError naming the offending field.
void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where);

template <class T>
T get(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::ParseError, where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& key, const std::string& where, T fallback) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

}  // namespace agov::json_util
