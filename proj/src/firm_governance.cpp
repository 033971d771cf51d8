#include "agov/firm_governance.hpp"

#include <algorithm>
#include <set>

#include "agov/crypto.hpp"
#include "agov/error.hpp"

namespace agov {

Pseudonym make_pseudonym(std::uint64_t run_seed, FirmId firm, AgentId agent) {
  std::string buf = "pseudonym";
  append_u64be(buf, run_seed);
  append_u64be(buf, firm);
  append_u64be(buf, agent);
  return "p" + to_hex(sha256(buf)).substr(0, 16);
}

namespace {

nlohmann::json to_json(const AgentCluster& c) {
  return nlohmann::json{{"pseudonym", c.pseudonym},
                        {"placed_qty", c.placed_qty},
                        {"cancelled_qty", c.cancelled_qty},
                        {"executed_qty", c.executed_qty},
                        {"aggressive_qty", c.aggressive_qty},
                        {"large_cancelled_qty", c.large_cancelled_qty},
                        {"max_orders_per_step", c.max_orders_per_step},
                        {"score", c.score},
                        {"flagged", c.flagged},
                        {"pnl", c.pnl},
                        {"quarantined", c.quarantined},
                        {"throttled", c.throttled},
                        {"large_cancel_series", c.large_cancel_series},
                        {"aggressive_series", c.aggressive_series}};
}

AgentCluster cluster_from_json(const nlohmann::json& j) {
  AgentCluster c;
  c.pseudonym = j.at("pseudonym").get<std::string>();
  c.placed_qty = j.at("placed_qty").get<Qty>();
  c.cancelled_qty = j.at("cancelled_qty").get<Qty>();
  c.executed_qty = j.at("executed_qty").get<Qty>();
  c.aggressive_qty = j.at("aggressive_qty").get<Qty>();
  c.large_cancelled_qty = j.at("large_cancelled_qty").get<Qty>();
  c.max_orders_per_step = j.at("max_orders_per_step").get<std::uint32_t>();
  c.score = j.at("score").get<double>();
  c.flagged = j.at("flagged").get<bool>();
  c.pnl = j.at("pnl").get<double>();
  c.quarantined = j.at("quarantined").get<bool>();
  c.throttled = j.at("throttled").get<bool>();
  c.large_cancel_series = j.at("large_cancel_series").get<std::vector<Qty>>();
  c.aggressive_series = j.at("aggressive_series").get<std::vector<Qty>>();
  return c;
}

}  // namespace

nlohmann::json to_json(const FirmAggregate& a) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : a.clusters) clusters.push_back(to_json(c));
  return nlohmann::json{{"firm_id", a.firm_id},
                        {"window", a.window.index},
                        {"first_step", a.window.first_step},
                        {"last_step", a.window.last_step},
                        {"placed_qty", a.placed_qty},
                        {"cancelled_qty", a.cancelled_qty},
                        {"executed_qty", a.executed_qty},
                        {"large_cancelled_qty", a.large_cancelled_qty},
                        {"max_agent_score", a.max_agent_score},
                        {"flagged_agents", a.flagged_agents},
                        {"pnl", a.pnl},
                        {"large_qty_threshold", a.large_qty_threshold},
                        {"large_cancel_series", a.large_cancel_series},
                        {"aggressive_series", a.aggressive_series},
                        {"clusters", clusters}};
}

FirmAggregate firm_aggregate_from_json(const nlohmann::json& j) {
  FirmAggregate a;
  a.firm_id = j.at("firm_id").get<FirmId>();
  a.window = WindowSpan{j.at("window").get<std::uint64_t>(), j.at("first_step").get<std::uint64_t>(),
                        j.at("last_step").get<std::uint64_t>()};
  a.placed_qty = j.at("placed_qty").get<Qty>();
  a.cancelled_qty = j.at("cancelled_qty").get<Qty>();
  a.executed_qty = j.at("executed_qty").get<Qty>();
  a.large_cancelled_qty = j.at("large_cancelled_qty").get<Qty>();
  a.max_agent_score = j.at("max_agent_score").get<double>();
  a.flagged_agents = j.at("flagged_agents").get<std::uint32_t>();
  a.pnl = j.at("pnl").get<double>();
  a.large_qty_threshold = j.at("large_qty_threshold").get<Qty>();
  a.large_cancel_series = j.at("large_cancel_series").get<std::vector<Qty>>();
  a.aggressive_series = j.at("aggressive_series").get<std::vector<Qty>>();
  for (const auto& c : j.at("clusters")) a.clusters.push_back(cluster_from_json(c));
  return a;
}

FirmAggregate aggregate(FirmId firm, std::span<const TelemetryRecord> records, const WindowSpan& window,
                        std::span<const AgentWindowInput> agents, std::uint64_t run_seed, Qty large_qty_threshold) {
  FirmAggregate agg;
  agg.firm_id = firm;
  agg.window = window;
  agg.large_qty_threshold = large_qty_threshold;
  const std::size_t n = window.length();
  agg.large_cancel_series.assign(n, 0);
  agg.aggressive_series.assign(n, 0);

  std::map<AgentId, AgentCluster> by_agent;
  std::map<AgentId, std::map<std::uint64_t, std::uint32_t>> orders_per_step;
  auto cluster_for = [&](AgentId id) -> AgentCluster& {
    auto [it, inserted] = by_agent.try_emplace(id);
    if (inserted) {
      it->second.pseudonym = make_pseudonym(run_seed, firm, id);
      it->second.large_cancel_series.assign(n, 0);
      it->second.aggressive_series.assign(n, 0);
    }
    return it->second;
  };
  for (const auto& a : agents) {
    auto& c = cluster_for(a.agent_id);
    c.score = a.score;
    c.flagged = a.flagged;
    c.pnl = a.pnl;
    c.quarantined = a.quarantined;
    c.throttled = a.throttled;
  }

  for (const auto& r : records) {
    if (r.firm_id != firm) throw Error(ErrorCode::MixedFirms, "record of firm " + std::to_string(r.firm_id));
    if (r.at.step < window.first_step || r.at.step > window.last_step) continue;
    const std::size_t k = r.at.step - window.first_step;
    auto& c = cluster_for(r.agent_id);
    switch (r.action) {
      case ActionKind::Place:
        ++orders_per_step[r.agent_id][r.at.step];
        if (r.blocked) break;
        c.placed_qty += r.order_qty;
        c.executed_qty += r.executed_qty;
        c.aggressive_qty += r.executed_qty;
        c.aggressive_series[k] += r.executed_qty;
        break;
      case ActionKind::Fill:
        c.executed_qty += r.executed_qty;
        break;
      case ActionKind::Cancel:
        c.cancelled_qty += r.cancelled_qty;
        if (r.order_qty >= large_qty_threshold) {
          c.large_cancelled_qty += r.cancelled_qty;
          c.large_cancel_series[k] += r.cancelled_qty;
        }
        break;
      case ActionKind::ForcedCancel:
        break;
    }
  }

  for (auto& [id, c] : by_agent) {
    for (const auto& [step, count] : orders_per_step[id]) c.max_orders_per_step = std::max(c.max_orders_per_step, count);
    agg.placed_qty += c.placed_qty;
    agg.cancelled_qty += c.cancelled_qty;
    agg.executed_qty += c.executed_qty;
    agg.large_cancelled_qty += c.large_cancelled_qty;
    agg.max_agent_score = std::max(agg.max_agent_score, c.score);
    agg.flagged_agents += c.flagged ? 1 : 0;
    agg.pnl += c.pnl;
    for (std::size_t k = 0; k < n; ++k) {
      agg.large_cancel_series[k] += c.large_cancel_series[k];
      agg.aggressive_series[k] += c.aggressive_series[k];
    }
    agg.clusters.push_back(std::move(c));
  }
  std::sort(agg.clusters.begin(), agg.clusters.end(),
            [](const AgentCluster& a, const AgentCluster& b) { return a.pseudonym < b.pseudonym; });
  return agg;
}

PolicyEvaluation evaluate_policy(const PolicyDoc& policy, const FirmAggregate& agg,
                                 const std::map<Pseudonym, AgentId>& directory, SimTime at) {
  std::vector<ControlDecision> out;
  auto emit = [&](const AgentCluster& c, ControlAction action, double rate, std::string reason) {
    auto it = directory.find(c.pseudonym);
    if (it == directory.end()) return;
    ControlDecision d;
    d.at = at;
    d.source = DecisionSource::FirmGov;
    d.subject = it->second;
    d.firm_id = agg.firm_id;
    d.action = action;
    d.rate = rate;
    d.reason = std::move(reason) + " [" + c.pseudonym + "]";
    d.policy_version = policy.version;
    out.push_back(std::move(d));
  };

  std::set<Pseudonym> quarantining;
  const auto& cb = policy.circuit_breaker;
  if (cb.enabled) {
    for (const auto& c : agg.clusters) {
      if (c.quarantined) continue;
      bool breach = false;
      std::string why;
      switch (cb.metric) {
        case BreakerMetric::AggSpoofScore:
          breach = agg.max_agent_score >= cb.bound && c.score >= cb.bound;
          why = "circuit breaker: spoof score " + std::to_string(c.score);
          break;
        case BreakerMetric::FirmLossLimit:
          breach = agg.pnl <= -cb.bound && c.pnl < 0.0;
          why = "circuit breaker: firm loss " + std::to_string(agg.pnl);
          break;
        case BreakerMetric::OrderRate:
          breach = static_cast<double>(c.max_orders_per_step) > cb.bound;
          why = "circuit breaker: order rate " + std::to_string(c.max_orders_per_step);
          break;
      }
      if (breach) {
        quarantining.insert(c.pseudonym);
        emit(c, ControlAction::Quarantine, 0.0, why);
      }
    }
  }
  if (policy.max_agent_order_rate > 0.0) {
    for (const auto& c : agg.clusters) {
      if (c.quarantined || c.throttled || quarantining.count(c.pseudonym) != 0) continue;
      if (static_cast<double>(c.max_orders_per_step) > policy.max_agent_order_rate) {
        emit(c, ControlAction::Throttle, policy.max_agent_order_rate,
             "order rate " + std::to_string(c.max_orders_per_step) + "/step above limit");
      }
    }
  }

  PolicyEvaluation ev;
  if (policy.autonomy == Autonomy::HumanInLoop) {
    ev.pending = std::move(out);
  } else {
    ev.decisions = std::move(out);
  }
  return ev;
}

std::vector<std::uint64_t> burst_steps(std::span<const Qty> series, std::uint64_t first_step, Qty threshold) {
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (series[k] > 0 && series[k] >= threshold) out.push_back(first_step + k);
  }
  return out;
}

double burst_correlation(std::span<const std::uint64_t> a_bursts, std::span<const std::uint64_t> b_bursts,
                         std::uint64_t lag) {
  const std::size_t denom = std::max(a_bursts.size(), b_bursts.size());
  if (denom == 0) return 0.0;
  std::vector<bool> used(b_bursts.size(), false);
  std::size_t matched = 0;
  for (std::uint64_t a : a_bursts) {
    for (std::size_t j = 0; j < b_bursts.size(); ++j) {
      if (used[j]) continue;
      const std::uint64_t b = b_bursts[j];
      const std::uint64_t gap = a > b ? a - b : b - a;
      if (gap <= lag) {
        used[j] = true;
        ++matched;
        break;
      }
    }
  }
  return static_cast<double>(matched) / static_cast<double>(denom);
}

CollusionSignal correlate_agents(std::span<const AgentSeries> agents, std::uint64_t lag, Qty burst_threshold) {
  CollusionSignal best;
  if (agents.size() < 2) return best;
  for (const auto& a : agents) {
    const auto a_bursts = burst_steps(a.large_cancel_series, a.first_step, burst_threshold);
    if (a_bursts.empty()) continue;
    for (const auto& b : agents) {
      if (&a == &b) continue;
      const auto b_bursts = burst_steps(b.aggressive_series, b.first_step, burst_threshold);
      const double s = burst_correlation(a_bursts, b_bursts, lag);
      if (s > best.score) {
        best.score = s;
        best.implicated = {a.pseudonym, b.pseudonym};
      }
    }
  }
  return best;
}

FirmGovernance::FirmGovernance(FirmId firm, PolicyDoc initial, std::uint64_t run_seed, AuditLedger* ledger,
                               IdCounter* ids)
    : firm_(firm), policy_(std::move(initial)), run_seed_(run_seed), ledger_(ledger), ids_(ids) {
  policy_.firm_id = firm_;
}

std::optional<std::uint64_t> FirmGovernance::staged_version() const {
  if (!staged_) return std::nullopt;
  return staged_->version;
}

std::uint64_t FirmGovernance::update_policy(const PolicyDoc& next) {
  const std::uint64_t current = staged_ ? staged_->version : policy_.version;
  if (next.version <= current) {
    throw Error(ErrorCode::StaleVersion,
                "firm " + std::to_string(firm_) + " has v" + std::to_string(current) + ", got v" + std::to_string(next.version));
  }
  next.validate();
  staged_ = next;
  staged_->firm_id = firm_;
  return next.version;
}

bool FirmGovernance::on_step_boundary(SimTime at) {
  if (!staged_) return false;
  const std::uint64_t old = policy_.version;
  policy_ = std::move(*staged_);
  staged_.reset();
  if (ledger_ != nullptr) {
    ledger_->append("FirmPolicyChanged",
                    nlohmann::json{{"firm_id", firm_},
                                   {"old_version", old},
                                   {"new_version", policy_.version},
                                   {"digest", policy_.digest()},
                                   {"issuer", policy_.issuer}},
                    at);
  }
  return true;
}

void FirmGovernance::register_agent(AgentId agent) {
  auto p = make_pseudonym(run_seed_, firm_, agent);
  pseudonyms_[agent] = p;
  directory_[p] = agent;
}

const Pseudonym& FirmGovernance::pseudonym(AgentId agent) const {
  auto it = pseudonyms_.find(agent);
  if (it == pseudonyms_.end()) throw Error(ErrorCode::UnknownAgent, std::to_string(agent));
  return it->second;
}

void FirmGovernance::log_decision(const ControlDecision& d) {
  if (ledger_ == nullptr) return;
  ledger_->append(d.source == DecisionSource::Human ? "HumanDecision" : "FirmDecision", to_json(d), d.at);
}

void FirmGovernance::log_pending(const PendingApproval& p) {
  if (ledger_ == nullptr) return;
  auto j = to_json(p.proposal);
  j["pending_id"] = p.id;
  ledger_->append("FirmPending", j, p.raised_at);
}

void FirmGovernance::log_collusion(const CollusionSignal& s, SimTime at) {
  if (ledger_ == nullptr) return;
  ledger_->append("FirmCollusionSignal",
                  nlohmann::json{{"firm_id", firm_}, {"score", s.score}, {"implicated", s.implicated}}, at);
}

}  // namespace agov
