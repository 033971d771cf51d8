#include "agov/governance.hpp"

#include "agov/error.hpp"

namespace agov {

namespace {

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values, const char* what) {
  for (E v : values) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::ParseError, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(DecisionSource v) noexcept {
  switch (v) {
    case DecisionSource::SelfReg: return "SelfReg";
    case DecisionSource::FirmGov: return "FirmGov";
    case DecisionSource::ExternalReg: return "ExternalReg";
    case DecisionSource::Human: return "Human";
  }
  return "?";
}

std::string_view to_string(ControlAction v) noexcept {
  switch (v) {
    case ControlAction::Allow: return "Allow";
    case ControlAction::Modify: return "Modify";
    case ControlAction::Block: return "Block";
    case ControlAction::Quarantine: return "Quarantine";
    case ControlAction::Unquarantine: return "Unquarantine";
    case ControlAction::Throttle: return "Throttle";
  }
  return "?";
}

std::string_view to_string(FilterMode v) noexcept {
  switch (v) {
    case FilterMode::Off: return "Off";
    case FilterMode::Rerank: return "Rerank";
    case FilterMode::Block: return "Block";
  }
  return "?";
}

std::string_view to_string(Autonomy v) noexcept {
  return v == Autonomy::RuleBased ? "RuleBased" : "HumanInLoop";
}

std::string_view to_string(OnFlag v) noexcept {
  switch (v) {
    case OnFlag::None: return "None";
    case OnFlag::Quarantine: return "Quarantine";
    case OnFlag::Throttle: return "Throttle";
  }
  return "?";
}

std::string_view to_string(BreakerMetric v) noexcept {
  switch (v) {
    case BreakerMetric::AggSpoofScore: return "AggSpoofScore";
    case BreakerMetric::FirmLossLimit: return "FirmLossLimit";
    case BreakerMetric::OrderRate: return "OrderRate";
  }
  return "?";
}

DecisionSource parse_decision_source(std::string_view s) {
  return parse_enum(s, std::array{DecisionSource::SelfReg, DecisionSource::FirmGov, DecisionSource::ExternalReg,
                                  DecisionSource::Human},
                    "decision source");
}

ControlAction parse_control_action(std::string_view s) {
  return parse_enum(s, std::array{ControlAction::Allow, ControlAction::Modify, ControlAction::Block,
                                  ControlAction::Quarantine, ControlAction::Unquarantine, ControlAction::Throttle},
                    "control action");
}

FilterMode parse_filter_mode(std::string_view s) {
  return parse_enum(s, std::array{FilterMode::Off, FilterMode::Rerank, FilterMode::Block}, "filter mode");
}

Autonomy parse_autonomy(std::string_view s) {
  return parse_enum(s, std::array{Autonomy::RuleBased, Autonomy::HumanInLoop}, "autonomy");
}

OnFlag parse_on_flag(std::string_view s) {
  return parse_enum(s, std::array{OnFlag::None, OnFlag::Quarantine, OnFlag::Throttle}, "on_flag");
}

BreakerMetric parse_breaker_metric(std::string_view s) {
  return parse_enum(s, std::array{BreakerMetric::AggSpoofScore, BreakerMetric::FirmLossLimit, BreakerMetric::OrderRate},
                    "breaker metric");
}

int authority_rank(DecisionSource s) noexcept {
  switch (s) {
    case DecisionSource::SelfReg: return 0;
    case DecisionSource::FirmGov: return 1;
    case DecisionSource::ExternalReg: return 1;
    case DecisionSource::Human: return 2;
  }
  return 0;
}

nlohmann::json to_json(const ControlDecision& d) {
  return nlohmann::json{{"id", d.id},
                        {"step", d.at.step},
                        {"seq", d.at.seq},
                        {"source", to_string(d.source)},
                        {"subject", d.subject},
                        {"firm_id", d.firm_id},
                        {"action", to_string(d.action)},
                        {"reason", d.reason},
                        {"policy_version", d.policy_version},
                        {"rate", d.rate}};
}

ControlDecision decision_from_json(const nlohmann::json& j) {
  ControlDecision d;
  d.id = j.at("id").get<std::uint64_t>();
  d.at = SimTime{j.at("step").get<std::uint64_t>(), j.at("seq").get<std::uint64_t>()};
  d.source = parse_decision_source(j.at("source").get<std::string>());
  d.subject = j.at("subject").get<AgentId>();
  d.firm_id = j.at("firm_id").get<FirmId>();
  d.action = parse_control_action(j.at("action").get<std::string>());
  d.reason = j.at("reason").get<std::string>();
  d.policy_version = j.at("policy_version").get<std::uint64_t>();
  d.rate = j.at("rate").get<double>();
  return d;
}

}  // namespace agov
