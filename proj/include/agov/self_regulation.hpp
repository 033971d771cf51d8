#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "agov/audit_ledger.hpp"
#include "agov/governance.hpp"
#include "agov/intent.hpp"
#include "agov/policy.hpp"
#include "agov/telemetry.hpp"

namespace agov {

struct FeatureParams {
  // Orders at or above this size count as "large". The simulation sets it to
  // 5x the market-wide median placed size over the trailing window.
  Qty large_qty_threshold{25};
  std::uint64_t short_lifetime_steps{10};
};

struct SpoofFeatures {
  double cancel_ratio{0.0};
  double large_order_share{0.0};
  double opposite_exec{0.0};
  double short_lifetime{0.0};

  std::array<double, 4> values() const { return {cancel_ratio, large_order_share, opposite_exec, short_lifetime}; }
  bool operator==(const SpoofFeatures&) const = default;
};

nlohmann::json to_json(const SpoofFeatures& f);

// Throws MixedAgents if the records span more than one agent.
SpoofFeatures extract_features(std::span<const TelemetryRecord> window, const FeatureParams& params);
// Convex combination w.f; throws InvalidWeights.
double spoof_score(const SpoofFeatures& f, const DetectorWeights& w);

struct FilterResult {
  ControlDecision decision;
  double penalty{0.0};
  double counterfactual_score{0.0};
};

FilterResult filter_action(const OrderIntent& proposed, std::span<const TelemetryRecord> window,
                           const PolicyDoc& policy, FilterMode mode, const FeatureParams& params,
                           bool quarantined = false);

struct DetectionVerdict {
  AgentId agent_id{0};
  FirmId firm_id{0};
  SimTime window_end;
  double score{0.0};
  SpoofFeatures features;
  bool flagged{false};
  double threshold{0.0};
  std::uint64_t policy_version{0};
};

nlohmann::json to_json(const DetectionVerdict& v);

struct WindowEvaluation {
  DetectionVerdict verdict;
  // Quarantine/Throttle proposal when flagged and the policy asks for one.
  std::optional<ControlDecision> proposal;
  // HumanInLoop: the proposal waits for approval instead of being applied.
  bool needs_approval{false};
};

WindowEvaluation evaluate_window(AgentId agent_id, std::span<const TelemetryRecord> window, const PolicyDoc& policy,
                                 const FeatureParams& params, SimTime window_end);

struct IdCounter {
  std::uint64_t next{1};
  std::uint64_t take() noexcept { return next++; }
};

struct AgentControlState {
  bool quarantined{false};
  DecisionSource quarantined_by{DecisionSource::SelfReg};
  std::optional<double> throttle_rate;
  double tokens{0.0};
};

/// Per-agent embedded block: keeps the agent's sliding telemetry window, screens
/// every proposed action in the same step, and writes every intervention to the ledger.
class SelfRegulationBlock {
public:
  SelfRegulationBlock(AgentId agent, FirmId firm, std::string agent_kind, AuditLedger* ledger, IdCounter* ids)
      : agent_(agent), firm_(firm), kind_(std::move(agent_kind)), ledger_(ledger), ids_(ids) {}

  AgentId agent_id() const noexcept { return agent_; }
  FirmId firm_id() const noexcept { return firm_; }
  const std::string& agent_kind() const noexcept { return kind_; }
  const AgentControlState& state() const noexcept { return state_; }

  // Refills the throttle bucket; call once at each step boundary.
  void begin_step();
  // Applies quarantine/throttle/filter to one proposed place; cancels are always allowed.
  FilterResult screen(const OrderIntent& intent, const PolicyDoc& policy, const FeatureParams& params, SimTime at);
  void record(TelemetryRecord rec, const PolicyDoc& policy, const FeatureParams& params);
  WindowEvaluation evaluate(const PolicyDoc& policy, const FeatureParams& params, SimTime at);
  // Returns false when a higher-authority decision is already in force.
  bool apply(const ControlDecision& d);
  void prune(std::uint64_t now_step, std::uint64_t window_steps);

  std::span<const TelemetryRecord> window() const noexcept { return {records_.data(), records_.size()}; }
  double last_score() const noexcept { return last_score_; }

private:
  void log_decision(const ControlDecision& d);

  AgentId agent_;
  FirmId firm_;
  std::string kind_;
  AuditLedger* ledger_;
  IdCounter* ids_;
  AgentControlState state_;
  std::vector<TelemetryRecord> records_;
  double last_score_{0.0};
};

}  // namespace agov
