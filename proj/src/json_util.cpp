#include "agov/json_util.hpp"

namespace agov::json_util {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (allowed.count(key) == 0) throw Error(ErrorCode::ParseError, where + ": unknown key '" + key + "'");
  }
}

}  // namespace agov::json_util
