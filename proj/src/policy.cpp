#include "agov/policy.hpp"

#include <cmath>

#include "agov/crypto.hpp"
#include "agov/error.hpp"
#include "agov/json_util.hpp"

namespace agov {

void validate_weights(const DetectorWeights& w) {
  double sum = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0) throw Error(ErrorCode::InvalidWeights, "weights must be finite and non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidWeights, "weights must sum to 1");
}

FilterMode PolicyDoc::filter_mode_for(const std::string& agent_kind) const {
  auto it = filter_modes.find(agent_kind);
  return it == filter_modes.end() ? FilterMode::Off : it->second;
}

void PolicyDoc::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(flag_threshold) || !in_unit(block_threshold)) {
    throw Error(ErrorCode::ValidationError, "thresholds must lie in [0,1]");
  }
  if (flag_threshold > block_threshold) {
    throw Error(ErrorCode::ValidationError, "flag_threshold must not exceed block_threshold");
  }
  try {
    validate_weights(weights);
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, e.what());
  }
  if (throttle_rate < 0.0 || max_agent_order_rate < 0.0 || penalty_beta < 0.0) {
    throw Error(ErrorCode::ValidationError, "rates and penalty must be non-negative");
  }
  if (version == 0) throw Error(ErrorCode::ValidationError, "policy version starts at 1");
}

nlohmann::json to_json(const PolicyDoc& p, bool with_digest) {
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& [kind, mode] : p.filter_modes) modes[kind] = to_string(mode);
  nlohmann::json j{
      {"version", p.version},
      {"firm_id", p.firm_id ? nlohmann::json(*p.firm_id) : nlohmann::json(nullptr)},
      {"flag_threshold", p.flag_threshold},
      {"block_threshold", p.block_threshold},
      {"weights", p.weights},
      {"filter_modes", modes},
      {"autonomy", to_string(p.autonomy)},
      {"on_flag", to_string(p.on_flag)},
      {"throttle_rate", p.throttle_rate},
      {"max_agent_order_rate", p.max_agent_order_rate},
      {"circuit_breaker",
       {{"enabled", p.circuit_breaker.enabled},
        {"metric", to_string(p.circuit_breaker.metric)},
        {"bound", p.circuit_breaker.bound}}},
      {"penalty_beta", p.penalty_beta},
      {"issuer", p.issuer},
  };
  if (with_digest) j["digest"] = p.digest();
  return j;
}

std::string PolicyDoc::digest() const { return to_hex(sha256(canonical(to_json(*this, false)))); }

using json_util::reject_unknown;

template <class T>
T get_field(const nlohmann::json& j, const std::string& key, const std::string& where) {
  return json_util::get<T>(j, key, where);
}

PolicyDoc policy_from_json(const nlohmann::json& j, const PolicyDefaults& defaults) {
  const std::string where = "policy";
  reject_unknown(j,
                 {"version", "firm_id", "flag_threshold", "block_threshold", "weights", "filter_modes", "autonomy",
                  "on_flag", "throttle_rate", "max_agent_order_rate", "circuit_breaker", "penalty_beta", "issuer",
                  "digest"},
                 where);
  PolicyDoc p;
  p.version = get_field<std::uint64_t>(j, "version", where);
  if (j.contains("firm_id") && !j.at("firm_id").is_null()) p.firm_id = get_field<FirmId>(j, "firm_id", where);
  p.flag_threshold = j.contains("flag_threshold") ? get_field<double>(j, "flag_threshold", where) : defaults.flag_threshold;
  // Absent block threshold: block at the flag level.
  p.block_threshold = j.contains("block_threshold") ? get_field<double>(j, "block_threshold", where) : p.flag_threshold;
  p.weights = j.contains("weights") ? get_field<DetectorWeights>(j, "weights", where) : defaults.weights;
  if (j.contains("filter_modes")) {
    const auto& modes = j.at("filter_modes");
    if (!modes.is_object()) throw Error(ErrorCode::ParseError, "policy.filter_modes: expected an object");
    for (const auto& [kind, mode] : modes.items()) p.filter_modes[kind] = parse_filter_mode(mode.get<std::string>());
  }
  if (j.contains("autonomy")) p.autonomy = parse_autonomy(get_field<std::string>(j, "autonomy", where));
  if (j.contains("on_flag")) p.on_flag = parse_on_flag(get_field<std::string>(j, "on_flag", where));
  if (j.contains("throttle_rate")) p.throttle_rate = get_field<double>(j, "throttle_rate", where);
  if (j.contains("max_agent_order_rate")) p.max_agent_order_rate = get_field<double>(j, "max_agent_order_rate", where);
  if (j.contains("circuit_breaker")) {
    const auto& cb = j.at("circuit_breaker");
    reject_unknown(cb, {"enabled", "metric", "bound"}, "policy.circuit_breaker");
    p.circuit_breaker.enabled = get_field<bool>(cb, "enabled", "policy.circuit_breaker");
    p.circuit_breaker.metric = parse_breaker_metric(get_field<std::string>(cb, "metric", "policy.circuit_breaker"));
    p.circuit_breaker.bound = get_field<double>(cb, "bound", "policy.circuit_breaker");
  }
  if (j.contains("penalty_beta")) p.penalty_beta = get_field<double>(j, "penalty_beta", where);
  if (j.contains("issuer")) p.issuer = get_field<std::string>(j, "issuer", where);
  p.validate();
  if (j.contains("digest") && get_field<std::string>(j, "digest", where) != p.digest()) {
    throw Error(ErrorCode::ValidationError, "policy digest does not match its content");
  }
  return p;
}

}  // namespace agov
