#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "agov/order_book.hpp"
#include "agov/sim_kernel.hpp"

namespace agov {

enum class DecisionSource { SelfReg, FirmGov, ExternalReg, Human };
enum class ControlAction { Allow, Modify, Block, Quarantine, Unquarantine, Throttle };
enum class FilterMode { Off, Rerank, Block };
enum class Autonomy { RuleBased, HumanInLoop };
// What a flagged verdict proposes.
enum class OnFlag { None, Quarantine, Throttle };
enum class BreakerMetric { AggSpoofScore, FirmLossLimit, OrderRate };

std::string_view to_string(DecisionSource v) noexcept;
std::string_view to_string(ControlAction v) noexcept;
std::string_view to_string(FilterMode v) noexcept;
std::string_view to_string(Autonomy v) noexcept;
std::string_view to_string(OnFlag v) noexcept;
std::string_view to_string(BreakerMetric v) noexcept;

// Parsers throw ParseError naming the bad value.
DecisionSource parse_decision_source(std::string_view s);
ControlAction parse_control_action(std::string_view s);
FilterMode parse_filter_mode(std::string_view s);
Autonomy parse_autonomy(std::string_view s);
OnFlag parse_on_flag(std::string_view s);
BreakerMetric parse_breaker_metric(std::string_view s);

// Higher rank may override lower: Human > FirmGov/ExternalReg > SelfReg.
int authority_rank(DecisionSource s) noexcept;

struct ControlDecision {
  std::uint64_t id{0};
  SimTime at;
  DecisionSource source{DecisionSource::SelfReg};
  AgentId subject{0};
  FirmId firm_id{0};
  ControlAction action{ControlAction::Allow};
  std::string reason;
  std::uint64_t policy_version{0};
  // Throttle: max orders per step.
  double rate{0.0};
};

nlohmann::json to_json(const ControlDecision& d);
ControlDecision decision_from_json(const nlohmann::json& j);

// Canonical serialization shared by policies, scenarios, ledger payloads and reports:
// sorted object keys, no whitespace, shortest round-trip number formatting.
inline std::string canonical(const nlohmann::json& j) { return j.dump(); }

}  // namespace agov
