#include "agov/self_regulation.hpp"

#include <algorithm>
#include <map>

#include "agov/error.hpp"

namespace agov {

nlohmann::json to_json(const SpoofFeatures& f) {
  return nlohmann::json{{"cancel_ratio", f.cancel_ratio},
                        {"large_order_share", f.large_order_share},
                        {"opposite_exec", f.opposite_exec},
                        {"short_lifetime", f.short_lifetime}};
}

nlohmann::json to_json(const DetectionVerdict& v) {
  return nlohmann::json{{"agent_id", v.agent_id},
                        {"firm_id", v.firm_id},
                        {"step", v.window_end.step},
                        {"seq", v.window_end.seq},
                        {"score", v.score},
                        {"features", to_json(v.features)},
                        {"flagged", v.flagged},
                        {"threshold", v.threshold},
                        {"policy_version", v.policy_version}};
}

namespace {

double ratio(double num, double den) { return den > 0.0 ? std::min(1.0, num / den) : 0.0; }

}  // namespace

SpoofFeatures extract_features(std::span<const TelemetryRecord> window, const FeatureParams& params) {
  if (!window.empty()) {
    const AgentId first = window.front().agent_id;
    for (const auto& r : window) {
      if (r.agent_id != first) throw Error(ErrorCode::MixedAgents, "feature window spans several agents");
    }
  }

  struct LargeOrder {
    Side side;
    Qty resting;
    std::uint64_t placed_step;
  };
  std::map<OrderId, LargeOrder> large;
  auto large_resting_on = [&large](Side side) {
    return std::any_of(large.begin(), large.end(), [side](const auto& kv) { return kv.second.side == side; });
  };

  double posted = 0, large_posted = 0, cancelled = 0, executed = 0, executed_opposite = 0;
  double large_rested = 0, large_short_cancelled = 0;

  for (const auto& r : window) {
    if (r.blocked) continue;
    switch (r.action) {
      case ActionKind::Place: {
        posted += static_cast<double>(r.posted_qty);
        executed += static_cast<double>(r.executed_qty);
        if (r.executed_qty > 0 && large_resting_on(opposite(r.side))) executed_opposite += static_cast<double>(r.executed_qty);
        const bool is_large = r.order_kind == OrderKind::Limit && r.order_qty >= params.large_qty_threshold;
        if (is_large && r.posted_qty > 0) {
          large_posted += static_cast<double>(r.posted_qty);
          large_rested += 1.0;
          large[r.order_id] = LargeOrder{r.side, r.posted_qty, r.at.step};
        }
        break;
      }
      case ActionKind::Fill: {
        executed += static_cast<double>(r.executed_qty);
        if (large_resting_on(opposite(r.side))) executed_opposite += static_cast<double>(r.executed_qty);
        if (auto it = large.find(r.order_id); it != large.end()) {
          it->second.resting -= r.executed_qty;
          if (it->second.resting <= 0) large.erase(it);
        }
        break;
      }
      case ActionKind::Cancel: {
        cancelled += static_cast<double>(r.cancelled_qty);
        if (auto it = large.find(r.order_id); it != large.end()) {
          if (r.at.step - it->second.placed_step <= params.short_lifetime_steps) large_short_cancelled += 1.0;
          large.erase(it);
        }
        break;
      }
      case ActionKind::ForcedCancel:
        large.erase(r.order_id);
        break;
    }
  }

  SpoofFeatures f;
  f.cancel_ratio = ratio(cancelled, posted);
  f.large_order_share = ratio(large_posted, posted);
  f.opposite_exec = ratio(executed_opposite, executed);
  f.short_lifetime = ratio(large_short_cancelled, large_rested);
  return f;
}

double spoof_score(const SpoofFeatures& f, const DetectorWeights& w) {
  validate_weights(w);
  const auto v = f.values();
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) s += w[i] * v[i];
  return std::clamp(s, 0.0, 1.0);
}

FilterResult filter_action(const OrderIntent& proposed, std::span<const TelemetryRecord> window,
                           const PolicyDoc& policy, FilterMode mode, const FeatureParams& params, bool quarantined) {
  FilterResult out;
  out.decision.action = ControlAction::Allow;
  out.decision.source = DecisionSource::SelfReg;
  out.decision.policy_version = policy.version;
  if (!window.empty()) {
    out.decision.subject = window.front().agent_id;
    out.decision.firm_id = window.front().firm_id;
  }
  if (quarantined) {
    out.decision.action = ControlAction::Block;
    out.decision.reason = "quarantined";
    return out;
  }
  if (mode == FilterMode::Off || proposed.kind != IntentKind::Place) return out;

  std::vector<TelemetryRecord> cf(window.begin(), window.end());
  TelemetryRecord hyp;
  hyp.at = window.empty() ? SimTime{} : window.back().at;
  hyp.agent_id = out.decision.subject;
  hyp.firm_id = out.decision.firm_id;
  hyp.action = ActionKind::Place;
  hyp.order_id = 0;
  hyp.side = proposed.side;
  hyp.order_kind = proposed.order_kind;
  hyp.price = proposed.price;
  hyp.order_qty = proposed.qty;
  hyp.posted_qty = proposed.order_kind == OrderKind::Limit ? proposed.qty : 0;
  hyp.placed_step = hyp.at.step;
  cf.push_back(hyp);
  const double s = spoof_score(extract_features(cf, params), policy.weights);
  out.counterfactual_score = s;

  if (mode == FilterMode::Rerank) {
    out.penalty = policy.penalty_beta * std::max(0.0, s - policy.flag_threshold);
  } else if (mode == FilterMode::Block && s >= policy.block_threshold) {
    out.decision.action = ControlAction::Block;
    out.decision.reason = "counterfactual spoof score " + std::to_string(s) + " >= block threshold";
  }
  return out;
}

WindowEvaluation evaluate_window(AgentId agent_id, std::span<const TelemetryRecord> window, const PolicyDoc& policy,
                                 const FeatureParams& params, SimTime window_end) {
  WindowEvaluation ev;
  auto& v = ev.verdict;
  v.agent_id = agent_id;
  v.firm_id = window.empty() ? 0 : window.front().firm_id;
  v.window_end = window_end;
  v.features = extract_features(window, params);
  v.score = spoof_score(v.features, policy.weights);
  v.threshold = policy.flag_threshold;
  v.flagged = v.score >= policy.flag_threshold;
  v.policy_version = policy.version;
  if (v.flagged && policy.on_flag != OnFlag::None) {
    ControlDecision d;
    d.at = window_end;
    d.source = DecisionSource::SelfReg;
    d.subject = agent_id;
    d.firm_id = v.firm_id;
    d.action = policy.on_flag == OnFlag::Quarantine ? ControlAction::Quarantine : ControlAction::Throttle;
    d.rate = d.action == ControlAction::Throttle ? policy.throttle_rate : 0.0;
    d.reason = "spoof score " + std::to_string(v.score) + " >= flag threshold";
    d.policy_version = policy.version;
    ev.proposal = d;
    ev.needs_approval = policy.autonomy == Autonomy::HumanInLoop;
  }
  return ev;
}

void SelfRegulationBlock::begin_step() {
  if (state_.throttle_rate) {
    const double cap = std::max(1.0, *state_.throttle_rate);
    state_.tokens = std::min(cap, state_.tokens + *state_.throttle_rate);
  }
}

void SelfRegulationBlock::log_decision(const ControlDecision& d) {
  if (ledger_ != nullptr) ledger_->append("SelfRegDecision", to_json(d), d.at);
}

FilterResult SelfRegulationBlock::screen(const OrderIntent& intent, const PolicyDoc& policy, const FeatureParams& params,
                                         SimTime at) {
  FilterResult r;
  if (intent.kind == IntentKind::Cancel) {
    r.decision.action = ControlAction::Allow;
  } else if (state_.quarantined) {
    r = filter_action(intent, window(), policy, FilterMode::Off, params, true);
  } else if (state_.throttle_rate && state_.tokens < 1.0) {
    r.decision.action = ControlAction::Block;
    r.decision.reason = "throttled";
  } else {
    if (state_.throttle_rate) state_.tokens -= 1.0;
    r = filter_action(intent, window(), policy, policy.filter_mode_for(kind_), params, false);
  }
  r.decision.at = at;
  r.decision.subject = agent_;
  r.decision.firm_id = firm_;
  r.decision.source = DecisionSource::SelfReg;
  r.decision.policy_version = policy.version;
  if (r.decision.action != ControlAction::Allow) {
    r.decision.id = ids_ != nullptr ? ids_->take() : 0;
    log_decision(r.decision);
  }
  return r;
}

void SelfRegulationBlock::record(TelemetryRecord rec, const PolicyDoc& policy, const FeatureParams& params) {
  records_.push_back(std::move(rec));
  if (records_.back().action == ActionKind::Place || records_.back().action == ActionKind::Cancel ||
      records_.back().action == ActionKind::Fill) {
    last_score_ = spoof_score(extract_features(window(), params), policy.weights);
  }
  records_.back().score = last_score_;
}

WindowEvaluation SelfRegulationBlock::evaluate(const PolicyDoc& policy, const FeatureParams& params, SimTime at) {
  auto ev = evaluate_window(agent_, window(), policy, params, at);
  ev.verdict.firm_id = firm_;
  if (ev.proposal) ev.proposal->firm_id = firm_;
  if (ledger_ != nullptr) ledger_->append("SelfRegVerdict", to_json(ev.verdict), at);
  if (ev.proposal && !ev.needs_approval) {
    const bool redundant = (ev.proposal->action == ControlAction::Quarantine && state_.quarantined) ||
                           (ev.proposal->action == ControlAction::Throttle && state_.throttle_rate);
    if (redundant) {
      ev.proposal.reset();
    } else {
      ev.proposal->id = ids_ != nullptr ? ids_->take() : 0;
      apply(*ev.proposal);
      log_decision(*ev.proposal);
    }
  }
  return ev;
}

bool SelfRegulationBlock::apply(const ControlDecision& d) {
  switch (d.action) {
    case ControlAction::Quarantine:
      if (state_.quarantined) {
        if (authority_rank(d.source) > authority_rank(state_.quarantined_by)) state_.quarantined_by = d.source;
        return false;
      }
      state_.quarantined = true;
      state_.quarantined_by = d.source;
      return true;
    case ControlAction::Unquarantine:
      if (!state_.quarantined || authority_rank(d.source) < authority_rank(state_.quarantined_by)) return false;
      state_.quarantined = false;
      return true;
    case ControlAction::Throttle:
      state_.throttle_rate = d.rate;
      state_.tokens = std::max(1.0, d.rate);
      return true;
    default:
      return false;
  }
}

void SelfRegulationBlock::prune(std::uint64_t now_step, std::uint64_t window_steps) {
  auto keep_from = std::find_if(records_.begin(), records_.end(),
                                [&](const TelemetryRecord& r) { return r.at.step + window_steps > now_step; });
  records_.erase(records_.begin(), keep_from);
}

}  // namespace agov
