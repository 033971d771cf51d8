#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "agov/agents.hpp"
#include "agov/audit_ledger.hpp"
#include "agov/external_regulator.hpp"
#include "agov/firm_governance.hpp"
#include "agov/order_book.hpp"
#include "agov/scenario.hpp"
#include "agov/self_regulation.hpp"
#include "agov/sim_kernel.hpp"
#include "agov/telemetry.hpp"

namespace agov {

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // nothing is written when absent
  bool keep_telemetry{false};                   // keep every TelemetryRecord in the result
};

// Human/operator command entering at the next step boundary.
struct ControlCommand {
  std::string command;  // quarantine | unquarantine | throttle | approve_pending | circuit_breaker
  std::uint64_t subject{0};
  nlohmann::json params = nlohmann::json::object();
};

ControlCommand command_from_json(const nlohmann::json& j);

struct VerdictRecord {
  std::uint64_t window{0};
  std::uint64_t step{0};
  AgentId agent_id{0};
  FirmId firm_id{0};
  AgentKind kind{AgentKind::ZI};
  double score{0.0};
  bool flagged{false};
  std::uint64_t policy_version{0};
  SpoofFeatures features;
  std::size_t records{0};  // telemetry records in the window
};

struct QuarantineEvent {
  AgentId agent_id{0};
  SimTime applied_at;
  DecisionSource source{DecisionSource::SelfReg};
};

struct SpooferStats {
  AgentId agent_id{0};
  AgentKind kind{AgentKind::ScriptedSpoofer};
  std::vector<std::uint64_t> inject_steps;
  std::uint64_t fakes_attempted{0};
  std::uint64_t fakes_blocked{0};
  std::uint64_t cycles{0};
};

struct AcceptedOrder {
  AgentId agent_id{0};
  std::uint64_t step{0};
};

struct RunResult {
  nlohmann::json report;
  std::string report_text;  // canonical, newline-terminated
  MetricsReport overall;
  std::vector<MetricsReport> windows;
  std::vector<VerdictRecord> verdicts;
  std::vector<AuditFlag> flags;
  std::vector<QuarantineEvent> quarantines;
  std::vector<SpooferStats> spoofers;
  std::vector<AcceptedOrder> accepted_orders;
  // Resting orders per agent observed at each end of step (agent -> step -> count),
  // only for agents that were ever quarantined.
  std::map<AgentId, std::map<std::uint64_t, std::size_t>> resting_after_quarantine;
  std::vector<std::optional<double>> mid;
  std::vector<double> fundamental;
  std::vector<TradePoint> trades;
  std::vector<TelemetryRecord> telemetry;  // only with keep_telemetry
  std::string ledger_bytes;
  std::vector<std::string> regulator_store;  // serialized aggregates the regulator holds
  std::vector<double> pair_scores;            // every ordered firm pair, every window
};

using EventSink = std::function<void(const std::string& type, const nlohmann::json& data)>;

/// Full layered loop for one scenario. Headless runs call step() until done();
/// the service interleaves the same calls with commands under one lock.
class Simulation {
public:
  Simulation(Scenario scenario, RunOptions options = {});
  ~Simulation();

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  bool done() const noexcept { return next_step_ >= sc_.steps; }
  std::uint64_t next_step() const noexcept { return next_step_; }
  void step();
  RunResult finish();

  void set_sink(EventSink sink);

  // Validates now (throws UnknownAgent / InvalidCommand / ValidationError), applies
  // at the next step boundary. Returns the command id.
  std::uint64_t enqueue(ControlCommand cmd);
  // Firm-scoped documents go to that firm, GLOBAL ones through the regulator.
  // Throws StaleVersion. Takes effect at the next step boundary.
  std::uint64_t submit_policy(PolicyDoc doc, DecisionSource source);
  const AuditFlag& review_flag(std::uint64_t flag_id, ReviewVerdict verdict, const std::string& note,
                               DecisionSource source);

  nlohmann::json state_json() const;
  nlohmann::json flags_json() const;
  nlohmann::json ledger_head_json() const;
  nlohmann::json pending_json() const;

  const Scenario& scenario() const noexcept { return sc_; }
  const AuditLedger& ledger() const noexcept { return *ledger_; }

private:
  struct AgentRuntime;
  struct OrderMeta {
    AgentId agent_id{0};
    FirmId firm_id{0};
    Side side{Side::Buy};
    std::optional<Price> price;
    OrderKind kind{OrderKind::Limit};
    Qty qty{0};
    std::uint64_t placed_step{0};
  };
  struct Pending {
    PendingApproval approval;
    std::string origin;  // SelfRegPending | FirmPending
  };

  void on_wake(const Event& ev);
  void on_cancel_timeout(const Event& ev);
  void on_window_close(const Event& ev);
  void on_shock(const Event& ev);
  void on_command(const Event& ev);

  void process_place(AgentRuntime& ar, const OrderIntent& intent, SimTime at);
  void process_cancel(AgentRuntime& ar, OrderId id, SimTime at, ActionKind action);
  void emit(TelemetryRecord rec);
  void apply_decision(const ControlDecision& d);
  void resolve_pending(std::uint64_t pending_id, bool approve, SimTime at, const std::string& why);
  void run_approver(SimTime at);
  void sample_end_of_step(std::uint64_t t);
  double mark_price() const;
  double wealth_of(const AgentRuntime& ar) const;
  const PolicyDoc& policy_for(FirmId firm) const;
  FirmGovernance& firm_gov(FirmId firm);
  AgentRuntime& agent(AgentId id);
  const AgentRuntime& agent(AgentId id) const;
  FeatureParams feature_params() const;
  void update_large_threshold(std::uint64_t t);
  std::vector<FirmGovernance*> firm_ptrs();

  Scenario sc_;
  RunOptions opts_;
  SimKernel kernel_;
  OrderBook book_;
  FundamentalProcess fundamental_;
  std::unique_ptr<AuditLedger> ledger_;
  IdCounter ids_;
  std::vector<std::unique_ptr<AgentRuntime>> agents_;  // ascending agent id
  std::map<AgentId, std::size_t> agent_index_;
  std::map<FirmId, std::unique_ptr<FirmGovernance>> firms_;
  std::unique_ptr<ExternalRegulator> regulator_;
  std::map<OrderId, OrderMeta> live_;
  OrderId next_order_id_{1};
  std::uint64_t next_step_{0};
  std::optional<std::uint64_t> sampled_step_;
  std::optional<Price> last_trade_price_;
  Qty large_threshold_{25};
  std::deque<std::pair<std::uint64_t, Qty>> placed_sizes_;
  std::map<FirmId, std::vector<TelemetryRecord>> firm_buffer_;
  std::map<AgentId, double> window_start_wealth_;
  std::map<std::uint64_t, ControlCommand> commands_;  // queued, keyed by command id
  std::vector<std::uint64_t> command_order_;
  std::uint64_t next_command_id_{1};
  std::map<std::uint64_t, Pending> pending_;
  std::uint64_t next_pending_id_{1};
  EventSink sink_;

  RunResult result_;
  std::map<std::string, std::uint64_t> counts_;
  std::ofstream telemetry_out_;
  std::ofstream tape_out_;
  std::ofstream trace_out_;
  std::uint64_t trade_count_{0};
  std::uint64_t order_count_{0};
};

// Headless convenience wrapper.
RunResult run_scenario(const Scenario& scenario, const RunOptions& options = {});

}  // namespace agov
