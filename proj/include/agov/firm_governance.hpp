#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "agov/audit_ledger.hpp"
#include "agov/governance.hpp"
#include "agov/policy.hpp"
#include "agov/self_regulation.hpp"
#include "agov/telemetry.hpp"

namespace agov {

using Pseudonym = std::string;

// Stable per-run pseudonym: hex of a hash over (run_seed, firm_id, agent_id).
Pseudonym make_pseudonym(std::uint64_t run_seed, FirmId firm, AgentId agent);

struct WindowSpan {
  std::uint64_t index{0};
  std::uint64_t first_step{0};  // inclusive
  std::uint64_t last_step{0};   // inclusive

  std::uint64_t length() const noexcept { return last_step - first_step + 1; }
};

struct AgentCluster {
  Pseudonym pseudonym;
  Qty placed_qty{0};
  Qty cancelled_qty{0};
  Qty executed_qty{0};
  Qty aggressive_qty{0};
  Qty large_cancelled_qty{0};
  std::uint32_t max_orders_per_step{0};
  double score{0.0};
  bool flagged{false};
  double pnl{0.0};
  bool quarantined{false};
  bool throttled{false};
  // Per-step series over the window (index 0 = first_step).
  std::vector<Qty> large_cancel_series;
  std::vector<Qty> aggressive_series;
};

/// Windowed firm telemetry. Crosses the firm boundary, so it carries only
/// pseudonyms and quantities; no agent ids, order ids or prices.
struct FirmAggregate {
  FirmId firm_id{0};
  WindowSpan window;
  Qty placed_qty{0};
  Qty cancelled_qty{0};
  Qty executed_qty{0};
  Qty large_cancelled_qty{0};
  double max_agent_score{0.0};
  std::uint32_t flagged_agents{0};
  double pnl{0.0};
  Qty large_qty_threshold{0};
  std::vector<Qty> large_cancel_series;
  std::vector<Qty> aggressive_series;
  std::vector<AgentCluster> clusters;  // sorted by pseudonym
};

nlohmann::json to_json(const FirmAggregate& a);
FirmAggregate firm_aggregate_from_json(const nlohmann::json& j);

// Per-agent inputs gathered inside the firm at window close.
struct AgentWindowInput {
  AgentId agent_id{0};
  double score{0.0};
  bool flagged{false};
  double pnl{0.0};
  bool quarantined{false};
  bool throttled{false};
};

// Throws MixedFirms if any record belongs to another firm.
FirmAggregate aggregate(FirmId firm, std::span<const TelemetryRecord> records, const WindowSpan& window,
                        std::span<const AgentWindowInput> agents, std::uint64_t run_seed, Qty large_qty_threshold);

struct PendingApproval {
  std::uint64_t id{0};
  ControlDecision proposal;
  SimTime raised_at;
};

// Breaches become decisions (RuleBased) or pending approvals (HumanInLoop). The
// returned decisions carry pseudonyms in `reason`; the caller resolves subjects.
struct PolicyEvaluation {
  std::vector<ControlDecision> decisions;
  std::vector<ControlDecision> pending;
};

PolicyEvaluation evaluate_policy(const PolicyDoc& policy, const FirmAggregate& agg,
                                 const std::map<Pseudonym, AgentId>& directory, SimTime at);

// score(A->B) = matched burst pairs / max(|A|, |B|); a pair matches when the two
// bursts are at most `lag` steps apart. Matching is greedy and one-to-one in time order.
double burst_correlation(std::span<const std::uint64_t> a_bursts, std::span<const std::uint64_t> b_bursts,
                         std::uint64_t lag);
std::vector<std::uint64_t> burst_steps(std::span<const Qty> series, std::uint64_t first_step, Qty threshold);

struct CollusionSignal {
  double score{0.0};
  std::vector<Pseudonym> implicated;  // [injector side, executor side]
};

struct AgentSeries {
  Pseudonym pseudonym;
  std::uint64_t first_step{0};
  std::vector<Qty> large_cancel_series;
  std::vector<Qty> aggressive_series;
};

// Best directed pair over the firm's agents; score 0 with fewer than two agents.
CollusionSignal correlate_agents(std::span<const AgentSeries> agents, std::uint64_t lag, Qty burst_threshold);

/// Layer-2 block for one firm: policy in force (hot-swappable at step boundaries),
/// window aggregation, circuit breakers and the within-firm collusion check.
class FirmGovernance {
public:
  FirmGovernance(FirmId firm, PolicyDoc initial, std::uint64_t run_seed, AuditLedger* ledger, IdCounter* ids);

  FirmId firm_id() const noexcept { return firm_; }
  const PolicyDoc& policy() const noexcept { return policy_; }
  std::optional<std::uint64_t> staged_version() const;

  // Accepts a strictly newer version; it takes effect at the next boundary.
  // Throws StaleVersion.
  std::uint64_t update_policy(const PolicyDoc& next);
  // Returns true when a staged policy became active.
  bool on_step_boundary(SimTime at);

  void register_agent(AgentId agent);
  const Pseudonym& pseudonym(AgentId agent) const;
  const std::map<Pseudonym, AgentId>& directory() const noexcept { return directory_; }

  void log_decision(const ControlDecision& d);
  void log_pending(const PendingApproval& p);
  void log_collusion(const CollusionSignal& s, SimTime at);

private:
  FirmId firm_;
  PolicyDoc policy_;
  std::optional<PolicyDoc> staged_;
  std::uint64_t run_seed_;
  AuditLedger* ledger_;
  IdCounter* ids_;
  std::map<AgentId, Pseudonym> pseudonyms_;
  std::map<Pseudonym, AgentId> directory_;
};

}  // namespace agov
