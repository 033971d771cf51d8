#include "agov/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "agov/crypto.hpp"
#include "agov/error.hpp"
#include "agov/json_util.hpp"

namespace agov {

struct Simulation::AgentRuntime {
  AgentRuntime(AgentConfig c, AuditLedger* ledger, IdCounter* ids)
      : cfg(c), agent(make_agent(c)), block(c.agent_id, c.firm_id, std::string(to_string(c.kind)), ledger, ids) {}

  AgentConfig cfg;
  std::unique_ptr<Agent> agent;
  SelfRegulationBlock block;
  RngStream* rng{nullptr};
  std::set<OrderId> open;
  Qty inventory{0};
  double cash{0.0};
  std::optional<std::size_t> spoof_stats;
  bool ever_quarantined{false};
  std::optional<DetectionVerdict> last_verdict;
};

namespace {

nlohmann::json time_json(SimTime t) { return nlohmann::json{{"step", t.step}, {"seq", t.seq}}; }

nlohmann::json levels_json(const std::vector<Level>& levels) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& l : levels) out.push_back({{"price", l.price}, {"qty", l.total_qty}, {"orders", l.order_count}});
  return out;
}

std::optional<double> mid_of(const OrderBook& book) {
  auto b = book.best_bid();
  auto a = book.best_ask();
  if (!b || !a) return std::nullopt;
  return static_cast<double>(*b + *a) / 2.0;
}

const std::set<std::string> kCommands{"quarantine", "unquarantine", "throttle", "approve_pending", "circuit_breaker"};

}  // namespace

ControlCommand command_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "control: expected an object");
  json_util::reject_unknown(j, {"command", "subject", "params"}, "control");
  ControlCommand c;
  c.command = json_util::get<std::string>(j, "command", "control");
  c.subject = json_util::get<std::uint64_t>(j, "subject", "control");
  if (j.contains("params") && !j.at("params").is_null()) {
    if (!j.at("params").is_object()) throw Error(ErrorCode::ParseError, "control.params: expected an object");
    c.params = j.at("params");
  }
  return c;
}

Simulation::Simulation(Scenario scenario, RunOptions options)
    : sc_(std::move(scenario)),
      opts_(std::move(options)),
      kernel_(sc_.master_seed),
      fundamental_(sc_.fundamental),
      large_threshold_(sc_.windows.min_large_qty) {
  if (opts_.out_dir) {
    std::filesystem::create_directories(*opts_.out_dir);
    ledger_ = std::make_unique<AuditLedger>(*opts_.out_dir / "ledger.log");
    telemetry_out_.open(*opts_.out_dir / "telemetry.jsonl", std::ios::binary | std::ios::trunc);
    tape_out_.open(*opts_.out_dir / "tape.jsonl", std::ios::binary | std::ios::trunc);
    trace_out_.open(*opts_.out_dir / "trace.log", std::ios::binary | std::ios::trunc);
    if (!telemetry_out_ || !tape_out_ || !trace_out_) {
      throw Error(ErrorCode::IoFailure, "cannot write to " + opts_.out_dir->string());
    }
    kernel_.set_trace(&trace_out_);
  } else {
    ledger_ = std::make_unique<AuditLedger>();
  }
  const auto& gov = sc_.governance;
  AuditLedger* selfreg_ledger = gov.self_regulation ? ledger_.get() : nullptr;
  AuditLedger* firm_ledger = gov.firm ? ledger_.get() : nullptr;

  for (const auto& f : sc_.firms) {
    auto fg = std::make_unique<FirmGovernance>(f.firm_id, f.policy, sc_.master_seed, firm_ledger, &ids_);
    for (const auto& a : f.agents) fg->register_agent(a.agent_id);
    firms_.emplace(f.firm_id, std::move(fg));
  }
  for (const auto& cfg : sc_.all_agents()) {
    auto ar = std::make_unique<AgentRuntime>(cfg, selfreg_ledger, &ids_);
    ar->rng = &kernel_.rng_stream("agent/" + std::to_string(cfg.agent_id));
    if (cfg.kind == AgentKind::ScriptedSpoofer || cfg.kind == AgentKind::ColluderInjector ||
        cfg.kind == AgentKind::ColluderExploiter) {
      ar->spoof_stats = result_.spoofers.size();
      result_.spoofers.push_back(SpooferStats{cfg.agent_id, cfg.kind, {}, 0, 0, 0});
    }
    agent_index_[cfg.agent_id] = agents_.size();
    agents_.push_back(std::move(ar));
  }
  if (gov.regulator) {
    std::vector<FirmId> ids;
    for (const auto& [id, fg] : firms_) ids.push_back(id);
    regulator_ = std::make_unique<ExternalRegulator>(
        ids,
        CollusionParams{sc_.windows.collusion_lag, sc_.calibration.collusion_threshold,
                        sc_.windows.collusion_history_windows},
        ledger_.get());
  }

  kernel_.set_handler(EventKind::AgentWake, [this](const Event& e) { on_wake(e); });
  kernel_.set_handler(EventKind::CancelTimeout, [this](const Event& e) { on_cancel_timeout(e); });
  kernel_.set_handler(EventKind::WindowClose, [this](const Event& e) { on_window_close(e); });
  kernel_.set_handler(EventKind::FundamentalShock, [this](const Event& e) { on_shock(e); });
  kernel_.set_handler(EventKind::ControlCommand, [this](const Event& e) { on_command(e); });

  for (const auto& s : sc_.fundamental.shocks) {
    if (s.step < sc_.steps) kernel_.schedule_boundary(EventKind::FundamentalShock, s.step, ShockPayload{s.delta});
  }
  for (auto& ar : agents_) {
    std::uint64_t first = 0;
    if (ar->cfg.kind == AgentKind::ZI) first = ar->agent->next_wake(0, *ar->rng) - 1;
    if (first < sc_.steps) kernel_.schedule_at_step(EventKind::AgentWake, first, AgentPayload{ar->cfg.agent_id});
    window_start_wealth_[ar->cfg.agent_id] = 0.0;
  }
  const std::uint64_t E = sc_.windows.eval_every;
  if (E - 1 < sc_.steps) kernel_.schedule(EventKind::WindowClose, SimTime{E - 1, kEndOfStepSeq}, WindowPayload{0});
}

Simulation::~Simulation() = default;

void Simulation::set_sink(EventSink sink) {
  sink_ = std::move(sink);
  if (sink_) {
    ledger_->set_observer([this](const AuditEntry& e) {
      nlohmann::json payload = nlohmann::json::parse(e.payload, nullptr, false);
      sink_("ledger", nlohmann::json{{"seq", e.seq},
                                     {"at", time_json(e.at)},
                                     {"kind", e.payload_kind},
                                     {"payload", payload},
                                     {"entry_hash", to_hex(e.entry_hash)}});
    });
  } else {
    ledger_->set_observer(nullptr);
  }
}

Simulation::AgentRuntime& Simulation::agent(AgentId id) {
  auto it = agent_index_.find(id);
  if (it == agent_index_.end()) throw Error(ErrorCode::UnknownAgent, "agent " + std::to_string(id));
  return *agents_[it->second];
}

const Simulation::AgentRuntime& Simulation::agent(AgentId id) const {
  auto it = agent_index_.find(id);
  if (it == agent_index_.end()) throw Error(ErrorCode::UnknownAgent, "agent " + std::to_string(id));
  return *agents_[it->second];
}

FirmGovernance& Simulation::firm_gov(FirmId firm) {
  auto it = firms_.find(firm);
  if (it == firms_.end()) throw Error(ErrorCode::ValidationError, "unknown firm " + std::to_string(firm));
  return *it->second;
}

const PolicyDoc& Simulation::policy_for(FirmId firm) const { return firms_.at(firm)->policy(); }

std::vector<FirmGovernance*> Simulation::firm_ptrs() {
  std::vector<FirmGovernance*> out;
  for (auto& [id, fg] : firms_) out.push_back(fg.get());
  return out;
}

FeatureParams Simulation::feature_params() const {
  return FeatureParams{large_threshold_, sc_.windows.short_lifetime_steps};
}

double Simulation::mark_price() const {
  if (auto m = mid_of(book_)) return *m;
  if (last_trade_price_) return static_cast<double>(*last_trade_price_);
  return fundamental_.value();
}

double Simulation::wealth_of(const AgentRuntime& ar) const {
  return ar.cash + static_cast<double>(ar.inventory) * mark_price();
}

void Simulation::update_large_threshold(std::uint64_t t) {
  const std::uint64_t W = sc_.windows.window_steps;
  while (!placed_sizes_.empty() && placed_sizes_.front().first + W <= t) placed_sizes_.pop_front();
  if (placed_sizes_.empty()) {
    large_threshold_ = sc_.windows.min_large_qty;
    return;
  }
  std::vector<Qty> v;
  v.reserve(placed_sizes_.size());
  for (const auto& [s, q] : placed_sizes_) v.push_back(q);
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double median = static_cast<double>(v[n / 2]);
  if (n % 2 == 0) {
    const Qty lower = *std::max_element(v.begin(), v.begin() + n / 2);
    median = (median + static_cast<double>(lower)) / 2.0;
  }
  large_threshold_ =
      std::max<Qty>(sc_.windows.min_large_qty, static_cast<Qty>(std::llround(sc_.windows.large_order_multiplier * median)));
}

void Simulation::step() {
  if (done()) return;
  const std::uint64_t t = next_step_;
  const SimTime boundary{t, 0};

  if (regulator_) {
    for (const auto& sp : sc_.policy_schedule) {
      if (sp.step != t) continue;
      auto ptrs = firm_ptrs();
      regulator_->publish_policy(sp.policy, ptrs, boundary);
      ++counts_["regulator_policies"];
    }
  }
  for (auto& [id, fg] : firms_) fg->on_step_boundary(boundary);
  run_approver(boundary);
  for (std::uint64_t id : command_order_) kernel_.schedule_boundary(EventKind::ControlCommand, t, CommandPayload{id});
  command_order_.clear();

  fundamental_.step(kernel_.rng_stream("fundamental"));
  update_large_threshold(t);
  for (auto& ar : agents_) {
    ar->block.prune(t, sc_.windows.window_steps);
    ar->block.begin_step();
  }
  kernel_.run_until(t);
  sample_end_of_step(t);
  ++next_step_;
}

void Simulation::sample_end_of_step(std::uint64_t t) {
  if (sampled_step_ && *sampled_step_ == t) return;
  sampled_step_ = t;
  const auto mid = mid_of(book_);
  result_.mid.push_back(mid);
  result_.fundamental.push_back(fundamental_.value());
  for (auto& ar : agents_) {
    ar->agent->on_step_end(wealth_of(*ar));
    if (ar->ever_quarantined) result_.resting_after_quarantine[ar->cfg.agent_id][t] = ar->open.size();
  }
  if (sink_) {
    nlohmann::json j{{"step", t}, {"fundamental", fundamental_.value()}};
    j["mid"] = mid ? nlohmann::json(*mid) : nlohmann::json(nullptr);
    sink_("step", j);
  }
}

void Simulation::on_shock(const Event& ev) { fundamental_.apply_shock(std::get<ShockPayload>(ev.payload).delta); }

void Simulation::on_wake(const Event& ev) {
  auto& ar = agent(std::get<AgentPayload>(ev.payload).agent);
  const auto snap = book_.snapshot(sc_.book_depth);
  std::vector<Order> open;
  for (OrderId id : ar.open) {
    if (const Order* o = book_.find(id)) open.push_back(*o);
  }
  const AgentContext ctx{ev.at, snap, fundamental_.value(), ar.inventory, ar.cash, open};
  const auto intents = ar.agent->on_wake(ctx, *ar.rng);
  for (const auto& intent : intents) {
    if (intent.kind == IntentKind::Place) {
      process_place(ar, intent, ev.at);
    } else {
      process_cancel(ar, intent.cancel_id, ev.at, ActionKind::Cancel);
    }
  }
  const std::uint64_t next = ar.agent->next_wake(ev.at.step, *ar.rng);
  if (next < sc_.steps) kernel_.schedule_at_step(EventKind::AgentWake, next, AgentPayload{ar.cfg.agent_id});
}

void Simulation::on_cancel_timeout(const Event& ev) {
  const auto& p = std::get<OrderPayload>(ev.payload);
  process_cancel(agent(p.agent), p.order_id, ev.at, ActionKind::Cancel);
}

void Simulation::process_place(AgentRuntime& ar, const OrderIntent& intent, SimTime at) {
  const auto& policy = policy_for(ar.cfg.firm_id);
  FilterResult fr;
  if (sc_.governance.self_regulation) {
    fr = ar.block.screen(intent, policy, feature_params(), at);
  } else {
    fr.decision.action = ar.block.state().quarantined ? ControlAction::Block : ControlAction::Allow;
  }
  const bool blocked = fr.decision.action == ControlAction::Block;
  ar.agent->on_screened(intent, blocked, fr.penalty);
  if (ar.spoof_stats && intent.tag == kFakeTag) {
    auto& st = result_.spoofers[*ar.spoof_stats];
    ++st.fakes_attempted;
    if (blocked) ++st.fakes_blocked;
  }

  TelemetryRecord rec;
  rec.at = at;
  rec.agent_id = ar.cfg.agent_id;
  rec.firm_id = ar.cfg.firm_id;
  rec.action = ActionKind::Place;
  rec.side = intent.side;
  rec.order_kind = intent.order_kind;
  rec.price = intent.price;
  rec.order_qty = intent.qty;
  rec.placed_step = at.step;
  rec.blocked = blocked;
  rec.decision = fr.decision.action;
  rec.penalty = fr.penalty;
  if (blocked) {
    ++counts_["blocked_places"];
    emit(rec);
    return;
  }

  const OrderId oid = next_order_id_++;
  ++order_count_;
  const auto mid_before = mid_of(book_);
  book_.set_clock(at);
  const auto res = book_.submit(Order{oid, ar.cfg.agent_id, ar.cfg.firm_id, intent.side, intent.price, intent.qty,
                                      intent.qty, intent.order_kind, at});
  result_.accepted_orders.push_back({ar.cfg.agent_id, at.step});

  std::vector<TelemetryRecord> fills;
  for (const auto& tr : res.trades) {
    ++trade_count_;
    rec.executed_qty += tr.qty;
    ++rec.trade_count;
    last_trade_price_ = tr.price;
    const double notional = static_cast<double>(tr.price) * static_cast<double>(tr.qty);
    auto& buyer = agent(tr.buy_agent_id);
    auto& seller = agent(tr.sell_agent_id);
    buyer.inventory += tr.qty;
    buyer.cash -= notional;
    seller.inventory -= tr.qty;
    seller.cash += notional;
    result_.trades.push_back(TradePoint{at.step, tr.price, tr.qty, tr.aggressor_side, mid_before});
    if (tape_out_.is_open()) {
      tape_out_ << nlohmann::json{{"at", time_json(at)},
                                  {"price", tr.price},
                                  {"qty", tr.qty},
                                  {"aggressor_side", tr.aggressor_side == Side::Buy ? "Buy" : "Sell"},
                                  {"buy_agent_id", tr.buy_agent_id},
                                  {"sell_agent_id", tr.sell_agent_id},
                                  {"buy_order_id", tr.buy_order_id},
                                  {"sell_order_id", tr.sell_order_id}}
                       .dump()
                << '\n';
    }

    const OrderId passive = tr.aggressor_side == Side::Buy ? tr.sell_order_id : tr.buy_order_id;
    const AgentId owner = tr.aggressor_side == Side::Buy ? tr.sell_agent_id : tr.buy_agent_id;
    const auto& meta = live_.at(passive);
    TelemetryRecord fill;
    fill.at = at;
    fill.agent_id = owner;
    fill.firm_id = meta.firm_id;
    fill.action = ActionKind::Fill;
    fill.order_id = passive;
    fill.side = meta.side;
    fill.order_kind = meta.kind;
    fill.price = meta.price;
    fill.order_qty = meta.qty;
    fill.executed_qty = tr.qty;
    fill.trade_count = 1;
    fill.placed_step = meta.placed_step;
    fills.push_back(fill);
    if (book_.find(passive) == nullptr) {
      agent(owner).open.erase(passive);
      live_.erase(passive);
    }
  }
  rec.order_id = oid;
  const Order* resting = res.resting ? book_.find(oid) : nullptr;
  rec.posted_qty = resting != nullptr ? resting->remaining : 0;
  emit(rec);
  for (auto& f : fills) emit(std::move(f));

  if (resting != nullptr) {
    live_[oid] = OrderMeta{ar.cfg.agent_id, ar.cfg.firm_id, intent.side, intent.price, intent.order_kind, intent.qty, at.step};
    ar.open.insert(oid);
    if (auto life = ar.agent->order_lifetime(); life && at.step + *life < sc_.steps) {
      kernel_.schedule_at_step(EventKind::CancelTimeout, at.step + *life, OrderPayload{ar.cfg.agent_id, oid});
    }
  }
  ar.agent->on_accepted(intent, oid, resting != nullptr);
}

void Simulation::process_cancel(AgentRuntime& ar, OrderId id, SimTime at, ActionKind action) {
  if (ar.open.count(id) == 0) return;
  const OrderMeta meta = live_.at(id);
  book_.set_clock(at);
  const Qty qty = book_.cancel(id);
  ar.open.erase(id);
  live_.erase(id);
  TelemetryRecord rec;
  rec.at = at;
  rec.agent_id = ar.cfg.agent_id;
  rec.firm_id = ar.cfg.firm_id;
  rec.action = action;
  rec.order_id = id;
  rec.side = meta.side;
  rec.order_kind = meta.kind;
  rec.price = meta.price;
  rec.order_qty = meta.qty;
  rec.cancelled_qty = qty;
  rec.placed_step = meta.placed_step;
  rec.decision = action == ActionKind::ForcedCancel ? ControlAction::Quarantine : ControlAction::Allow;
  emit(rec);
}

void Simulation::emit(TelemetryRecord rec) {
  auto& ar = agent(rec.agent_id);
  if (sc_.governance.self_regulation) {
    ar.block.record(rec, policy_for(rec.firm_id), feature_params());
    rec.score = ar.block.last_score();
  }
  if (rec.action == ActionKind::Place && !rec.blocked) placed_sizes_.emplace_back(rec.at.step, rec.order_qty);
  if (sc_.governance.firm) firm_buffer_[rec.firm_id].push_back(rec);
  if (telemetry_out_.is_open() || sink_) {
    const auto j = to_json(rec);
    if (telemetry_out_.is_open()) telemetry_out_ << j.dump() << '\n';
    if (sink_) sink_("telemetry", j);
  }
  if (opts_.keep_telemetry) result_.telemetry.push_back(std::move(rec));
}

void Simulation::apply_decision(const ControlDecision& d) {
  auto& ar = agent(d.subject);
  const bool was = ar.block.state().quarantined;
  ar.block.apply(d);
  if (!was && ar.block.state().quarantined) {
    ar.ever_quarantined = true;
    result_.quarantines.push_back(QuarantineEvent{d.subject, d.at, d.source});
    const std::vector<OrderId> ids(ar.open.begin(), ar.open.end());
    for (OrderId id : ids) process_cancel(ar, id, d.at, ActionKind::ForcedCancel);
  }
}

void Simulation::resolve_pending(std::uint64_t pending_id, bool approve, SimTime at, const std::string& why) {
  auto it = pending_.find(pending_id);
  if (it == pending_.end()) return;
  ControlDecision d = it->second.approval.proposal;
  pending_.erase(it);
  d.id = ids_.take();
  d.source = DecisionSource::Human;
  d.at = at;
  d.reason = why;
  d.policy_version = policy_for(d.firm_id).version;
  auto j = to_json(d);
  j["pending_id"] = pending_id;
  j["approved"] = approve;
  ledger_->append("HumanDecision", j, at);
  ++counts_["human_decisions"];
  if (approve) apply_decision(d);
}

void Simulation::run_approver(SimTime at) {
  const auto& ap = sc_.governance.approver;
  std::vector<std::pair<std::uint64_t, bool>> todo;
  for (const auto& [id, p] : pending_) {
    const std::uint64_t raised = p.approval.raised_at.step;
    switch (ap.mode) {
      case ApproverMode::ApproveAll:
        if (at.step > raised) todo.emplace_back(id, true);
        break;
      case ApproverMode::RejectAll:
        if (at.step > raised) todo.emplace_back(id, false);
        break;
      case ApproverMode::ApproveAfterK:
        if (at.step > raised && at.step >= raised + ap.delay_steps) todo.emplace_back(id, true);
        break;
      case ApproverMode::Manual:
        break;
    }
  }
  for (const auto& [id, approve] : todo) {
    resolve_pending(id, approve, at, approve ? "scripted approver: approved" : "scripted approver: rejected");
  }
}

void Simulation::on_window_close(const Event& ev) {
  const std::uint64_t t = ev.at.step;
  const std::uint64_t k = std::get<WindowPayload>(ev.payload).index;
  const std::uint64_t E = sc_.windows.eval_every;
  sample_end_of_step(t);
  const WindowSpan span{k, k * E, t};
  const FeatureParams fp = feature_params();

  auto already_pending = [this](const ControlDecision& d) {
    return std::any_of(pending_.begin(), pending_.end(), [&](const auto& kv) {
      const auto& q = kv.second.approval.proposal;
      return q.subject == d.subject && q.action == d.action;
    });
  };

  if (sc_.governance.self_regulation) {
    for (auto& arp : agents_) {
      auto& ar = *arp;
      const bool was = ar.block.state().quarantined;
      auto wev = ar.block.evaluate(policy_for(ar.cfg.firm_id), fp, ev.at);
      ++counts_["selfreg_verdicts"];
      if (wev.verdict.flagged) ++counts_["selfreg_flagged"];
      ar.last_verdict = wev.verdict;
      result_.verdicts.push_back(VerdictRecord{k, t, ar.cfg.agent_id, ar.cfg.firm_id, ar.cfg.kind, wev.verdict.score,
                                               wev.verdict.flagged, wev.verdict.policy_version, wev.verdict.features,
                                               ar.block.window().size()});
      if (!was && ar.block.state().quarantined) {
        ar.ever_quarantined = true;
        result_.quarantines.push_back(QuarantineEvent{ar.cfg.agent_id, ev.at, DecisionSource::SelfReg});
        const std::vector<OrderId> ids(ar.open.begin(), ar.open.end());
        for (OrderId id : ids) process_cancel(ar, id, ev.at, ActionKind::ForcedCancel);
      }
      if (wev.proposal && wev.needs_approval) {
        const bool moot = (wev.proposal->action == ControlAction::Quarantine && ar.block.state().quarantined) ||
                          already_pending(*wev.proposal);
        if (!moot) {
          const std::uint64_t pid = next_pending_id_++;
          pending_[pid] = Pending{PendingApproval{pid, *wev.proposal, ev.at}, "SelfRegPending"};
          auto j = to_json(*wev.proposal);
          j["pending_id"] = pid;
          ledger_->append("SelfRegPending", j, ev.at);
        }
      }
    }
  }

  std::vector<std::string> messages;
  if (sc_.governance.firm) {
    for (auto& [fid, fgp] : firms_) {
      auto& fg = *fgp;
      std::vector<AgentWindowInput> inputs;
      for (const auto& cfg : sc_.firm(fid).agents) {
        const auto& ar = agent(cfg.agent_id);
        AgentWindowInput in;
        in.agent_id = cfg.agent_id;
        if (ar.last_verdict) {
          in.score = ar.last_verdict->score;
          in.flagged = ar.last_verdict->flagged;
        }
        in.pnl = wealth_of(ar) - window_start_wealth_[cfg.agent_id];
        in.quarantined = ar.block.state().quarantined;
        in.throttled = ar.block.state().throttle_rate.has_value();
        inputs.push_back(in);
      }
      const auto& buf = firm_buffer_[fid];
      auto agg = aggregate(fid, buf, span, inputs, sc_.master_seed, large_threshold_);
      auto pe = evaluate_policy(fg.policy(), agg, fg.directory(), ev.at);
      for (auto& d : pe.decisions) {
        d.id = ids_.take();
        fg.log_decision(d);
        ++counts_["firm_decisions"];
        apply_decision(d);
      }
      for (auto& d : pe.pending) {
        if (already_pending(d)) continue;
        const std::uint64_t pid = next_pending_id_++;
        pending_[pid] = Pending{PendingApproval{pid, d, ev.at}, "FirmPending"};
        fg.log_pending(pending_[pid].approval);
        ++counts_["firm_pending"];
      }
      if (agg.clusters.size() >= 2) {
        std::vector<AgentSeries> series;
        for (const auto& c : agg.clusters) {
          series.push_back(AgentSeries{c.pseudonym, span.first_step, c.large_cancel_series, c.aggressive_series});
        }
        const auto sig = correlate_agents(series, sc_.windows.collusion_lag, std::max<Qty>(1, large_threshold_));
        if (sig.score > 0.0 && sig.score >= sc_.calibration.collusion_threshold) {
          fg.log_collusion(sig, ev.at);
          ++counts_["firm_collusion_signals"];
        }
      }
      messages.push_back(to_json(agg).dump());
      firm_buffer_[fid].clear();
    }
  }
  if (regulator_) {
    regulator_->ingest(k, messages, ev.at);
    for (double v : regulator_->pair_scores(k)) result_.pair_scores.push_back(v);
    regulator_->detect_cross_firm(k, ev.at);
    result_.regulator_store.insert(result_.regulator_store.end(), messages.begin(), messages.end());
  }

  const std::size_t first = static_cast<std::size_t>(span.first_step);
  const std::size_t n = static_cast<std::size_t>(span.length());
  auto m = market_quality(std::span(result_.mid).subspan(first, n), std::span(result_.fundamental).subspan(first, n),
                          result_.trades, sc_.fundamental.shocks, span.first_step);
  m.window = k;
  result_.windows.push_back(m);
  if (sink_) sink_("metrics", to_json(m));

  for (auto& ar : agents_) window_start_wealth_[ar->cfg.agent_id] = wealth_of(*ar);
  if (t + E < sc_.steps) kernel_.schedule(EventKind::WindowClose, SimTime{t + E, kEndOfStepSeq}, WindowPayload{k + 1});
}

std::uint64_t Simulation::enqueue(ControlCommand cmd) {
  if (cmd.params.is_null()) cmd.params = nlohmann::json::object();
  if (kCommands.count(cmd.command) == 0) throw Error(ErrorCode::InvalidCommand, "unknown command '" + cmd.command + "'");
  const auto& p = cmd.params;
  if (cmd.command == "quarantine" || cmd.command == "unquarantine" || cmd.command == "throttle") {
    agent(static_cast<AgentId>(cmd.subject));
    if (cmd.command == "throttle") {
      json_util::reject_unknown(p, {"rate"}, "control.params");
      const double rate = json_util::get<double>(p, "rate", "control.params");
      if (!(rate > 0.0)) throw Error(ErrorCode::ValidationError, "throttle rate must be > 0");
    } else {
      json_util::reject_unknown(p, {}, "control.params");
    }
  } else if (cmd.command == "approve_pending") {
    json_util::reject_unknown(p, {"approve"}, "control.params");
    if (p.contains("approve")) json_util::get<bool>(p, "approve", "control.params");
    if (pending_.count(cmd.subject) == 0) {
      throw Error(ErrorCode::ValidationError, "no pending approval " + std::to_string(cmd.subject));
    }
  } else {
    firm_gov(static_cast<FirmId>(cmd.subject));
    json_util::reject_unknown(p, {"enabled", "metric", "bound"}, "control.params");
    json_util::get<bool>(p, "enabled", "control.params");
    if (p.contains("metric")) parse_breaker_metric(json_util::get<std::string>(p, "metric", "control.params"));
    if (p.contains("bound")) json_util::get<double>(p, "bound", "control.params");
  }
  const std::uint64_t id = next_command_id_++;
  commands_[id] = std::move(cmd);
  command_order_.push_back(id);
  return id;
}

void Simulation::on_command(const Event& ev) {
  const std::uint64_t id = std::get<CommandPayload>(ev.payload).command_id;
  const ControlCommand cmd = commands_.at(id);
  commands_.erase(id);
  try {
    if (cmd.command == "approve_pending") {
      const bool approve = cmd.params.value("approve", true);
      resolve_pending(cmd.subject, approve, ev.at, approve ? "approved by operator" : "rejected by operator");
      return;
    }
    if (cmd.command == "circuit_breaker") {
      auto& fg = firm_gov(static_cast<FirmId>(cmd.subject));
      PolicyDoc doc = fg.policy();
      doc.version = std::max(doc.version, fg.staged_version().value_or(0)) + 1;
      doc.circuit_breaker.enabled = cmd.params.at("enabled").get<bool>();
      if (cmd.params.contains("metric")) doc.circuit_breaker.metric = parse_breaker_metric(cmd.params.at("metric").get<std::string>());
      if (cmd.params.contains("bound")) doc.circuit_breaker.bound = cmd.params.at("bound").get<double>();
      doc.issuer = "human";
      fg.update_policy(doc);
      ledger_->append("HumanDecision",
                      nlohmann::json{{"command", cmd.command},
                                     {"command_id", id},
                                     {"firm_id", cmd.subject},
                                     {"policy_version", doc.version},
                                     {"circuit_breaker", to_json(doc)["circuit_breaker"]}},
                      ev.at);
      ++counts_["human_decisions"];
      return;
    }
    auto& ar = agent(static_cast<AgentId>(cmd.subject));
    ControlDecision d;
    d.id = ids_.take();
    d.at = ev.at;
    d.source = DecisionSource::Human;
    d.subject = ar.cfg.agent_id;
    d.firm_id = ar.cfg.firm_id;
    d.action = cmd.command == "quarantine"     ? ControlAction::Quarantine
               : cmd.command == "unquarantine" ? ControlAction::Unquarantine
                                               : ControlAction::Throttle;
    d.rate = d.action == ControlAction::Throttle ? cmd.params.at("rate").get<double>() : 0.0;
    d.reason = "operator command";
    d.policy_version = policy_for(ar.cfg.firm_id).version;
    auto j = to_json(d);
    j["command_id"] = id;
    ledger_->append("HumanDecision", j, ev.at);
    ++counts_["human_decisions"];
    apply_decision(d);
  } catch (const Error& e) {
    if (sink_) sink_("command_error", nlohmann::json{{"command_id", id}, {"code", to_string(e.code())}, {"message", e.detail()}});
  }
}

std::uint64_t Simulation::submit_policy(PolicyDoc doc, DecisionSource source) {
  doc.validate();
  if (doc.firm_id) {
    auto& fg = firm_gov(*doc.firm_id);
    if (source == DecisionSource::Human && doc.issuer == "firm") doc.issuer = "human";
    return fg.update_policy(doc);
  }
  if (!regulator_) throw Error(ErrorCode::ValidationError, "GLOBAL policies need the regulator layer");
  auto ptrs = firm_ptrs();
  ++counts_["regulator_policies"];
  return regulator_->publish_policy(std::move(doc), ptrs, SimTime{next_step_, 0});
}

const AuditFlag& Simulation::review_flag(std::uint64_t flag_id, ReviewVerdict verdict, const std::string& note,
                                         DecisionSource source) {
  if (!regulator_) throw Error(ErrorCode::UnknownFlag, "regulator layer is off");
  return regulator_->review_flag(flag_id, verdict, note, source, SimTime{next_step_, 0});
}

nlohmann::json Simulation::flags_json() const {
  nlohmann::json out = nlohmann::json::array();
  if (regulator_) {
    for (const auto& f : regulator_->flags()) out.push_back(to_json(f));
  }
  return out;
}

nlohmann::json Simulation::ledger_head_json() const {
  nlohmann::json j{{"entries", ledger_->size()}, {"head_hash", to_hex(ledger_->head_hash())}};
  j["head_seq"] = ledger_->size() == 0 ? nlohmann::json(nullptr) : nlohmann::json(ledger_->size() - 1);
  return j;
}

nlohmann::json Simulation::pending_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [id, p] : pending_) {
    out.push_back({{"pending_id", id},
                   {"origin", p.origin},
                   {"raised_at", time_json(p.approval.raised_at)},
                   {"proposal", to_json(p.approval.proposal)}});
  }
  return out;
}

nlohmann::json Simulation::state_json() const {
  const auto snap = book_.snapshot(sc_.book_depth);
  nlohmann::json book{{"bids", levels_json(snap.bids)}, {"asks", levels_json(snap.asks)}};
  book["best_bid"] = snap.best_bid ? nlohmann::json(*snap.best_bid) : nlohmann::json(nullptr);
  book["best_ask"] = snap.best_ask ? nlohmann::json(*snap.best_ask) : nlohmann::json(nullptr);
  book["mid"] = snap.mid() ? nlohmann::json(*snap.mid()) : nlohmann::json(nullptr);

  nlohmann::json agents = nlohmann::json::array();
  for (const auto& ar : agents_) {
    const auto& st = ar->block.state();
    nlohmann::json a{{"agent_id", ar->cfg.agent_id},
                     {"firm_id", ar->cfg.firm_id},
                     {"kind", to_string(ar->cfg.kind)},
                     {"quarantined", st.quarantined},
                     {"score", ar->block.last_score()},
                     {"inventory", ar->inventory},
                     {"cash", ar->cash},
                     {"open_orders", ar->open.size()}};
    a["throttle_rate"] = st.throttle_rate ? nlohmann::json(*st.throttle_rate) : nlohmann::json(nullptr);
    a["flagged"] = ar->last_verdict ? ar->last_verdict->flagged : false;
    agents.push_back(a);
  }
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& [id, fg] : firms_) {
    nlohmann::json p{{"firm_id", id}, {"version", fg->policy().version}, {"digest", fg->policy().digest()}};
    const auto staged = fg->staged_version();
    p["staged_version"] = staged ? nlohmann::json(*staged) : nlohmann::json(nullptr);
    policies.push_back(p);
  }
  return nlohmann::json{{"scenario", sc_.name},
                        {"step", next_step_},
                        {"steps", sc_.steps},
                        {"done", done()},
                        {"fundamental", fundamental_.value()},
                        {"book", book},
                        {"agents", agents},
                        {"policies", policies},
                        {"pending", pending_json()},
                        {"ledger", ledger_head_json()}};
}

RunResult Simulation::finish() {
  for (auto& ar : agents_) {
    if (!ar->spoof_stats) continue;
    const auto* sp = dynamic_cast<const SpooferAgent*>(ar->agent.get());
    auto& st = result_.spoofers[*ar->spoof_stats];
    st.inject_steps = sp->inject_steps();
    st.cycles = sp->fsm().cycles;
  }
  if (regulator_) result_.flags = regulator_->flags();
  result_.overall = market_quality(result_.mid, result_.fundamental, result_.trades, sc_.fundamental.shocks, 0);
  result_.overall.window = 0;

  std::map<std::string, std::uint64_t> kinds;
  for (const auto& e : ledger_->entries()) ++kinds[e.payload_kind];

  nlohmann::json wealth = nlohmann::json::array();
  for (const auto& ar : agents_) {
    wealth.push_back({{"agent_id", ar->cfg.agent_id},
                      {"firm_id", ar->cfg.firm_id},
                      {"kind", to_string(ar->cfg.kind)},
                      {"inventory", ar->inventory},
                      {"cash", ar->cash},
                      {"wealth", wealth_of(*ar)},
                      {"quarantined", ar->block.state().quarantined}});
  }
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& m : result_.windows) windows.push_back(to_json(m));
  nlohmann::json flags = nlohmann::json::array();
  std::map<std::string, std::uint64_t> flag_kinds;
  for (const auto& f : result_.flags) {
    flags.push_back(to_json(f));
    ++flag_kinds[std::string(to_string(f.kind))];
  }
  nlohmann::json spoofers = nlohmann::json::array();
  for (const auto& s : result_.spoofers) {
    spoofers.push_back({{"agent_id", s.agent_id},
                        {"kind", to_string(s.kind)},
                        {"cycles", s.cycles},
                        {"first_inject_step", s.inject_steps.empty() ? nlohmann::json(nullptr) : nlohmann::json(s.inject_steps.front())},
                        {"fakes_attempted", s.fakes_attempted},
                        {"fakes_blocked", s.fakes_blocked}});
  }
  auto count = [this](const char* key) {
    auto it = counts_.find(key);
    return it == counts_.end() ? std::uint64_t{0} : it->second;
  };
  nlohmann::json counts{
      {"self_regulation",
       {{"verdicts", count("selfreg_verdicts")},
        {"flagged_verdicts", count("selfreg_flagged")},
        {"blocked_places", count("blocked_places")},
        {"decisions", kinds["SelfRegDecision"]},
        {"pending", kinds["SelfRegPending"]}}},
      {"firm",
       {{"decisions", count("firm_decisions")},
        {"pending", count("firm_pending")},
        {"policy_changes", kinds["FirmPolicyChanged"]},
        {"collusion_signals", count("firm_collusion_signals")}}},
      {"regulator", {{"flags", result_.flags.size()}, {"flags_by_kind", flag_kinds}, {"policies_published", kinds["RegulatorPolicyPublished"]}}},
      {"human", {{"decisions", count("human_decisions")}}}};
  kinds.erase("");
  nlohmann::json report{{"scenario", sc_.name},
                        {"scenario_hash", sc_.hash()},
                        {"calibration_hash", sc_.calibration_hash},
                        {"master_seed", sc_.master_seed},
                        {"steps", sc_.steps},
                        {"metrics", to_json(result_.overall)},
                        {"windows", windows},
                        {"counts", counts},
                        {"ledger_kinds", kinds},
                        {"flags", flags},
                        {"spoofers", spoofers},
                        {"final_wealth", wealth},
                        {"orders_accepted", order_count_},
                        {"trades", trade_count_},
                        {"ledger", {{"entries", ledger_->size()}, {"head_hash", to_hex(ledger_->head_hash())}}}};
  result_.report = report;
  result_.report_text = report.dump(2) + "\n";
  result_.ledger_bytes = ledger_->serialize();

  if (opts_.out_dir) {
    std::ofstream rep(*opts_.out_dir / "report.json", std::ios::binary | std::ios::trunc);
    rep << result_.report_text;
    std::ofstream fl(*opts_.out_dir / "flags.jsonl", std::ios::binary | std::ios::trunc);
    for (const auto& f : result_.flags) fl << to_json(f).dump() << '\n';
    if (!rep || !fl) throw Error(ErrorCode::IoFailure, "cannot write report to " + opts_.out_dir->string());
    telemetry_out_.close();
    tape_out_.close();
    trace_out_.close();
  }
  return std::move(result_);
}

RunResult run_scenario(const Scenario& scenario, const RunOptions& options) {
  Simulation sim(scenario, options);
  while (!sim.done()) sim.step();
  return sim.finish();
}

}  // namespace agov
