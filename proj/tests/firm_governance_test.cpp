#include <gtest/gtest.h>

#include "agov/error.hpp"
#include "agov/firm_governance.hpp"
#include "agov/simulation.hpp"
#include "support/fixtures.hpp"

using namespace agov;

namespace {

TelemetryRecord placed(AgentId agent, FirmId firm, std::uint64_t step, Qty qty) {
  TelemetryRecord r;
  r.at = {step, kNormalSeqBase};
  r.agent_id = agent;
  r.firm_id = firm;
  r.action = ActionKind::Place;
  r.order_qty = qty;
  r.posted_qty = qty;
  return r;
}

FirmAggregate agg_with(std::vector<AgentCluster> clusters) {
  FirmAggregate a;
  a.firm_id = 1;
  for (const auto& c : clusters) a.max_agent_score = std::max(a.max_agent_score, c.score);
  a.clusters = std::move(clusters);
  return a;
}

AgentCluster cluster(Pseudonym p, double score, std::uint32_t rate = 0) {
  AgentCluster c;
  c.pseudonym = std::move(p);
  c.score = score;
  c.max_orders_per_step = rate;
  return c;
}

}  // namespace

TEST(Aggregate, EmptyIsZero) {
  const auto a = aggregate(1, {}, {0, 0, 24}, {}, 1, 25);
  EXPECT_EQ(a.placed_qty, 0);
  EXPECT_EQ(a.cancelled_qty, 0);
  EXPECT_EQ(a.executed_qty, 0);
  EXPECT_EQ(a.large_cancelled_qty, 0);
  EXPECT_TRUE(a.clusters.empty());
}

TEST(Aggregate, SumsAcrossAgents) {
  std::vector<TelemetryRecord> rs{placed(1, 1, 3, 10), placed(2, 1, 4, 15)};
  const auto a = aggregate(1, rs, {0, 0, 24}, {}, 1, 25);
  EXPECT_EQ(a.placed_qty, 25);
  EXPECT_EQ(a.clusters.size(), 2u);
}

TEST(Aggregate, MixedFirmsRejected) {
  std::vector<TelemetryRecord> rs{placed(1, 1, 3, 10), placed(2, 2, 4, 15)};
  try {
    aggregate(1, rs, {0, 0, 24}, {}, 1, 25);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MixedFirms);
  }
}

TEST(Aggregate, LargeCancelSeriesAndOrderRate) {
  std::vector<TelemetryRecord> rs;
  for (int i = 0; i < 3; ++i) rs.push_back(placed(1, 1, 5, 50));
  TelemetryRecord c;
  c.at = {7, kNormalSeqBase};
  c.agent_id = 1;
  c.firm_id = 1;
  c.action = ActionKind::Cancel;
  c.order_qty = 50;
  c.cancelled_qty = 40;
  rs.push_back(c);
  const auto a = aggregate(1, rs, {0, 0, 24}, {}, 1, 25);
  EXPECT_EQ(a.large_cancelled_qty, 40);
  EXPECT_EQ(a.large_cancel_series[7], 40);
  ASSERT_EQ(a.clusters.size(), 1u);
  EXPECT_EQ(a.clusters[0].max_orders_per_step, 3u);
}

TEST(Pseudonym, StablePerSeed) {
  EXPECT_EQ(make_pseudonym(42, 1, 7), make_pseudonym(42, 1, 7));
  EXPECT_NE(make_pseudonym(42, 1, 7), make_pseudonym(43, 1, 7));
  EXPECT_NE(make_pseudonym(42, 1, 7), make_pseudonym(42, 1, 8));
  const auto p = make_pseudonym(42, 1, 7);
  ASSERT_EQ(p.size(), 17u);
  EXPECT_EQ(p[0], 'p');
  for (char ch : p.substr(1)) EXPECT_TRUE(std::isxdigit(static_cast<unsigned char>(ch)));
}

TEST(Aggregate, SerializedFormHasNoAgentIds) {
  std::vector<TelemetryRecord> rs{placed(1234, 1, 3, 10)};
  const auto a = aggregate(1, rs, {0, 0, 24}, {}, 99, 25);
  const auto text = to_json(a).dump();
  EXPECT_EQ(text.find("agent_id"), std::string::npos);
  EXPECT_EQ(text.find("1234"), std::string::npos);
  const auto back = firm_aggregate_from_json(to_json(a));
  EXPECT_EQ(back.placed_qty, 10);
  EXPECT_EQ(back.clusters.at(0).pseudonym, make_pseudonym(99, 1, 1234));
}

TEST(EvaluatePolicy, BelowBreakerNoDecision) {
  PolicyDoc p;
  p.circuit_breaker = {true, BreakerMetric::AggSpoofScore, 0.7};
  const auto ev = evaluate_policy(p, agg_with({cluster("aa", 0.3)}), {{"aa", 5}}, {});
  EXPECT_TRUE(ev.decisions.empty());
  EXPECT_TRUE(ev.pending.empty());
}

TEST(EvaluatePolicy, OrderRateThrottle) {
  PolicyDoc p;
  p.version = 4;
  p.max_agent_order_rate = 10;
  const auto ev = evaluate_policy(p, agg_with({cluster("aa", 0.0, 12), cluster("bb", 0.0, 10)}), {{"aa", 5}, {"bb", 6}}, {});
  ASSERT_EQ(ev.decisions.size(), 1u);
  EXPECT_EQ(ev.decisions[0].action, ControlAction::Throttle);
  EXPECT_EQ(ev.decisions[0].subject, 5u);
  EXPECT_EQ(ev.decisions[0].source, DecisionSource::FirmGov);
  EXPECT_EQ(ev.decisions[0].policy_version, 4u);
  EXPECT_DOUBLE_EQ(ev.decisions[0].rate, 10.0);
}

TEST(EvaluatePolicy, HumanInLoopBreachIsPending) {
  PolicyDoc p;
  p.autonomy = Autonomy::HumanInLoop;
  p.circuit_breaker = {true, BreakerMetric::AggSpoofScore, 0.7};
  const auto ev = evaluate_policy(p, agg_with({cluster("aa", 0.9)}), {{"aa", 5}}, {});
  EXPECT_TRUE(ev.decisions.empty());
  ASSERT_EQ(ev.pending.size(), 1u);
  EXPECT_EQ(ev.pending[0].action, ControlAction::Quarantine);
}

TEST(FirmGovernance, PolicyVersioningAtBoundary) {
  AuditLedger ledger;
  IdCounter ids;
  PolicyDoc v3;
  v3.version = 3;
  FirmGovernance fg(1, v3, 42, &ledger, &ids);
  PolicyDoc v4 = v3;
  v4.version = 4;
  v4.flag_threshold = 0.4;
  EXPECT_EQ(fg.update_policy(v4), 4u);
  // Not in force until the boundary.
  EXPECT_EQ(fg.policy().version, 3u);
  EXPECT_EQ(fg.staged_version(), 4u);
  EXPECT_TRUE(fg.on_step_boundary({10, 0}));
  EXPECT_EQ(fg.policy().version, 4u);
  EXPECT_FALSE(fg.on_step_boundary({11, 0}));
  ASSERT_EQ(ledger.size(), 1u);
  EXPECT_EQ(ledger.entries()[0].payload_kind, "FirmPolicyChanged");

  for (std::uint64_t v : {3u, 4u}) {
    PolicyDoc stale = v3;
    stale.version = v;
    try {
      fg.update_policy(stale);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::StaleVersion);
    }
  }
}

TEST(FirmGovernance, RejectsInvalidPolicy) {
  FirmGovernance fg(1, PolicyDoc{}, 42, nullptr, nullptr);
  PolicyDoc bad;
  bad.version = 2;
  bad.flag_threshold = 0.9;
  bad.block_threshold = 0.5;
  EXPECT_THROW(fg.update_policy(bad), Error);
}

TEST(Correlation, Examples) {
  EXPECT_EQ(burst_correlation({}, {}, 2), 0.0);
  const std::vector<std::uint64_t> a{10, 30, 50, 70}, b{11, 31, 51, 71};
  EXPECT_DOUBLE_EQ(burst_correlation(a, b, 2), 1.0);
  const std::vector<std::uint64_t> far{15, 35, 55, 75};
  EXPECT_DOUBLE_EQ(burst_correlation(a, far, 2), 0.0);
  // Unequal counts normalize by the larger one.
  const std::vector<std::uint64_t> two{11, 31};
  EXPECT_DOUBLE_EQ(burst_correlation(a, two, 2), 0.5);
}

TEST(Correlation, BurstSteps) {
  const std::vector<Qty> s{0, 10, 60, 0, 80};
  EXPECT_EQ(burst_steps(s, 100, 50), (std::vector<std::uint64_t>{102, 104}));
}

TEST(Correlation, CorrelateAgentsPicksDirectedPair) {
  std::vector<AgentSeries> agents(3);
  agents[0].pseudonym = "inj";
  agents[1].pseudonym = "exe";
  agents[2].pseudonym = "zzz";
  for (auto& a : agents) {
    a.large_cancel_series.assign(100, 0);
    a.aggressive_series.assign(100, 0);
  }
  for (std::size_t t : {10u, 30u, 50u, 70u}) {
    agents[0].large_cancel_series[t] = 150;
    agents[1].aggressive_series[t + 1] = 80;
  }
  const auto sig = correlate_agents(agents, 2, 50);
  EXPECT_DOUBLE_EQ(sig.score, 1.0);
  EXPECT_EQ(sig.implicated, (std::vector<Pseudonym>{"inj", "exe"}));
  EXPECT_EQ(correlate_agents(std::span(agents).first(1), 2, 50).score, 0.0);
}

// Every aggregate the regulator received must equal a recount of the raw telemetry.
TEST(Aggregate, RecountMatchesSimulation) {
  auto sc = fixtures::scenario("spoofer_on", 3, [](nlohmann::json& j) { j["steps"] = 400; });
  RunOptions o;
  o.keep_telemetry = true;
  const auto run = run_scenario(sc, o);
  ASSERT_FALSE(run.regulator_store.empty());
  std::uint64_t last_window = 0;
  std::map<FirmId, std::int64_t> prev_window;
  for (const auto& msg : run.regulator_store) {
    const auto a = firm_aggregate_from_json(nlohmann::json::parse(msg));
    Qty placed = 0, cancelled = 0, executed = 0;
    for (const auto& r : run.telemetry) {
      if (r.firm_id != a.firm_id || r.at.step < a.window.first_step || r.at.step > a.window.last_step) continue;
      if (r.action == ActionKind::Place && !r.blocked) {
        placed += r.order_qty;
        executed += r.executed_qty;
      } else if (r.action == ActionKind::Fill) {
        executed += r.executed_qty;
      } else if (r.action == ActionKind::Cancel) {
        cancelled += r.cancelled_qty;
      }
    }
    EXPECT_EQ(a.placed_qty, placed) << "firm " << a.firm_id << " window " << a.window.index;
    EXPECT_EQ(a.cancelled_qty, cancelled);
    EXPECT_EQ(a.executed_qty, executed);
    // Windows arrive gapless per firm.
    auto [it, fresh] = prev_window.try_emplace(a.firm_id, -1);
    EXPECT_EQ(static_cast<std::int64_t>(a.window.index), it->second + 1);
    it->second = static_cast<std::int64_t>(a.window.index);
    last_window = std::max(last_window, a.window.index);
  }
  EXPECT_EQ(last_window + 1, sc.steps / sc.windows.eval_every);
}
