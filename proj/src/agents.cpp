#include "agov/agents.hpp"

#include <algorithm>
#include <cmath>

#include "agov/error.hpp"
#include "agov/json_util.hpp"

namespace agov {

void FundamentalProcess::step(RngStream& rng) {
  const double eps = rng.normal(0.0, params_.shock_std);
  value_ += params_.reversion_rate * (params_.mean - value_) + eps;
  value_ = std::max(1.0, value_);
}

void FundamentalProcess::apply_shock(double delta) { value_ = std::max(1.0, value_ + delta); }

std::string_view to_string(AgentKind k) noexcept {
  switch (k) {
    case AgentKind::ZI: return "zi";
    case AgentKind::MarketMaker: return "market_maker";
    case AgentKind::ScriptedSpoofer: return "scripted_spoofer";
    case AgentKind::ColluderInjector: return "colluder_injector";
    case AgentKind::ColluderExploiter: return "colluder_exploiter";
    case AgentKind::QLearner: return "q_learner";
  }
  return "?";
}

AgentKind parse_agent_kind(std::string_view s) {
  for (auto k : {AgentKind::ZI, AgentKind::MarketMaker, AgentKind::ScriptedSpoofer, AgentKind::ColluderInjector,
                 AgentKind::ColluderExploiter, AgentKind::QLearner}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::ParseError, "unknown agent kind '" + std::string(s) + "'");
}

AgentAutonomy autonomy_of(AgentKind k) noexcept {
  return k == AgentKind::QLearner ? AgentAutonomy::Learning : AgentAutonomy::RuleBased;
}

std::string_view to_string(SpooferPhase p) noexcept {
  switch (p) {
    case SpooferPhase::Inject: return "Inject";
    case SpooferPhase::Exploit: return "Exploit";
    case SpooferPhase::Withdraw: return "Withdraw";
    case SpooferPhase::Cooldown: return "Cooldown";
  }
  return "?";
}

std::string_view to_string(QAction a) noexcept {
  switch (a) {
    case QAction::PlaceBidAtBest: return "PlaceBidAtBest";
    case QAction::PlaceAskAtBest: return "PlaceAskAtBest";
    case QAction::PlaceLargeDeepBid: return "PlaceLargeDeepBid";
    case QAction::PlaceLargeDeepAsk: return "PlaceLargeDeepAsk";
    case QAction::MarketBuy: return "MarketBuy";
    case QAction::MarketSell: return "MarketSell";
    case QAction::CancelAll: return "CancelAll";
    case QAction::Hold: return "Hold";
  }
  return "?";
}

// ---------------------------------------------------------------------------

namespace {

using json_util::get_or;

void require(bool ok, const std::string& where, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ValidationError, where + ": " + what);
}

}  // namespace

AgentParams agent_params_from_json(AgentKind kind, const nlohmann::json& j, const std::string& where) {
  const nlohmann::json params = j.is_null() ? nlohmann::json::object() : j;
  switch (kind) {
    case AgentKind::ZI: {
      json_util::reject_unknown(params, {"arrival_rate", "noise_std", "max_qty", "order_lifetime", "imbalance_weight"}, where);
      ZiParams p;
      p.arrival_rate = get_or(params, "arrival_rate", where, p.arrival_rate);
      p.noise_std = get_or(params, "noise_std", where, p.noise_std);
      p.max_qty = get_or(params, "max_qty", where, p.max_qty);
      p.order_lifetime = get_or(params, "order_lifetime", where, p.order_lifetime);
      p.imbalance_weight = get_or(params, "imbalance_weight", where, p.imbalance_weight);
      require(p.arrival_rate > 0.0 && p.arrival_rate <= 1.0, where, "arrival_rate must be in (0,1]");
      require(p.noise_std >= 0.0, where, "noise_std must be >= 0");
      require(p.max_qty >= 1, where, "max_qty must be >= 1");
      require(p.order_lifetime >= 1, where, "order_lifetime must be >= 1");
      return p;
    }
    case AgentKind::MarketMaker: {
      json_util::reject_unknown(params, {"half_spread", "quote_qty", "refresh_interval"}, where);
      MarketMakerParams p;
      p.half_spread = get_or(params, "half_spread", where, p.half_spread);
      p.quote_qty = get_or(params, "quote_qty", where, p.quote_qty);
      p.refresh_interval = get_or(params, "refresh_interval", where, p.refresh_interval);
      require(p.half_spread >= 0.5, where, "half_spread must be >= 0.5");
      require(p.quote_qty >= 1, where, "quote_qty must be >= 1");
      require(p.refresh_interval >= 1, where, "refresh_interval must be >= 1");
      return p;
    }
    case AgentKind::ScriptedSpoofer:
    case AgentKind::ColluderInjector:
    case AgentKind::ColluderExploiter: {
      json_util::reject_unknown(params,
                                {"fake_qty", "fake_depth", "n_fakes", "exploit_qty", "exploit_side", "exploit_offset",
                                 "inject_steps", "exploit_steps", "cooldown_steps", "start_step"},
                                where);
      SpooferParams p;
      p.fake_qty = get_or(params, "fake_qty", where, p.fake_qty);
      p.fake_depth = get_or(params, "fake_depth", where, p.fake_depth);
      p.n_fakes = get_or(params, "n_fakes", where, p.n_fakes);
      p.exploit_qty = get_or(params, "exploit_qty", where, p.exploit_qty);
      const auto side = get_or<std::string>(params, "exploit_side", where, "Sell");
      require(side == "Buy" || side == "Sell", where, "exploit_side must be Buy or Sell");
      p.exploit_side = side == "Buy" ? Side::Buy : Side::Sell;
      p.exploit_offset = get_or(params, "exploit_offset", where, p.exploit_offset);
      p.inject_steps = get_or(params, "inject_steps", where, p.inject_steps);
      p.exploit_steps = get_or(params, "exploit_steps", where, p.exploit_steps);
      p.cooldown_steps = get_or(params, "cooldown_steps", where, p.cooldown_steps);
      p.start_step = get_or(params, "start_step", where, p.start_step);
      require(p.fake_qty >= 1 && p.n_fakes >= 1 && p.exploit_qty >= 1, where, "quantities must be >= 1");
      require(p.fake_depth >= 0, where, "fake_depth must be >= 0");
      require(p.exploit_offset >= 1 && p.exploit_offset <= p.fake_depth + 1, where,
              "exploit_offset must be in [1, fake_depth+1]");
      require(p.inject_steps >= 1 && p.exploit_steps >= 1 && p.cooldown_steps >= 1, where, "phase durations must be >= 1");
      if (kind == AgentKind::ColluderInjector) {
        p.exploit = false;
      } else if (kind == AgentKind::ColluderExploiter) {
        p.place_fakes = false;
        p.exploit_requires_decoys = false;
      }
      return p;
    }
    case AgentKind::QLearner: {
      json_util::reject_unknown(params,
                                {"alpha", "gamma", "epsilon", "epsilon_decay", "epsilon_min", "order_qty", "large_qty",
                                 "deep_offset", "max_inventory", "inventory_unit", "order_lifetime"},
                                where);
      QLearnerParams p;
      p.alpha = get_or(params, "alpha", where, p.alpha);
      p.gamma = get_or(params, "gamma", where, p.gamma);
      p.epsilon = get_or(params, "epsilon", where, p.epsilon);
      p.epsilon_decay = get_or(params, "epsilon_decay", where, p.epsilon_decay);
      p.epsilon_min = get_or(params, "epsilon_min", where, p.epsilon_min);
      p.order_qty = get_or(params, "order_qty", where, p.order_qty);
      p.large_qty = get_or(params, "large_qty", where, p.large_qty);
      p.deep_offset = get_or(params, "deep_offset", where, p.deep_offset);
      p.max_inventory = get_or(params, "max_inventory", where, p.max_inventory);
      p.inventory_unit = get_or(params, "inventory_unit", where, p.inventory_unit);
      p.order_lifetime = get_or(params, "order_lifetime", where, p.order_lifetime);
      require(p.alpha > 0.0 && p.alpha <= 1.0, where, "alpha must be in (0,1]");
      require(p.gamma >= 0.0 && p.gamma < 1.0, where, "gamma must be in [0,1)");
      require(p.epsilon >= 0.0 && p.epsilon <= 1.0, where, "epsilon must be in [0,1]");
      require(p.epsilon_decay > 0.0 && p.epsilon_decay <= 1.0, where, "epsilon_decay must be in (0,1]");
      require(p.order_qty >= 1 && p.large_qty >= 1 && p.inventory_unit >= 1, where, "quantities must be >= 1");
      require(p.order_lifetime >= 1, where, "order_lifetime must be >= 1");
      return p;
    }
  }
  throw Error(ErrorCode::ParseError, where + ": unsupported agent kind");
}

nlohmann::json to_json(const AgentConfig& c) {
  nlohmann::json params = std::visit(
      [](const auto& p) -> nlohmann::json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ZiParams>) {
          return {{"arrival_rate", p.arrival_rate}, {"noise_std", p.noise_std}, {"max_qty", p.max_qty},
                  {"order_lifetime", p.order_lifetime}, {"imbalance_weight", p.imbalance_weight}};
        } else if constexpr (std::is_same_v<T, MarketMakerParams>) {
          return {{"half_spread", p.half_spread}, {"quote_qty", p.quote_qty}, {"refresh_interval", p.refresh_interval}};
        } else if constexpr (std::is_same_v<T, SpooferParams>) {
          return {{"fake_qty", p.fake_qty},         {"fake_depth", p.fake_depth},
                  {"n_fakes", p.n_fakes},           {"exploit_qty", p.exploit_qty},
                  {"exploit_side", to_string(p.exploit_side)}, {"exploit_offset", p.exploit_offset},
                  {"inject_steps", p.inject_steps}, {"exploit_steps", p.exploit_steps},
                  {"cooldown_steps", p.cooldown_steps}, {"start_step", p.start_step}};
        } else {
          return {{"alpha", p.alpha},           {"gamma", p.gamma},
                  {"epsilon", p.epsilon},       {"epsilon_decay", p.epsilon_decay},
                  {"epsilon_min", p.epsilon_min}, {"order_qty", p.order_qty},
                  {"large_qty", p.large_qty},   {"deep_offset", p.deep_offset},
                  {"max_inventory", p.max_inventory}, {"inventory_unit", p.inventory_unit},
                  {"order_lifetime", p.order_lifetime}};
        }
      },
      c.params);
  return {{"agent_id", c.agent_id}, {"firm_id", c.firm_id}, {"kind", to_string(c.kind)}, {"params", params}};
}

// ---------------------------------------------------------------------------

double book_imbalance(const BookSnapshot& book) {
  double bid = 0.0, ask = 0.0;
  for (const auto& lv : book.bids) bid += static_cast<double>(lv.total_qty);
  for (const auto& lv : book.asks) ask += static_cast<double>(lv.total_qty);
  const double total = bid + ask;
  return total > 0.0 ? (bid - ask) / total : 0.0;
}

double reference_price(const BookSnapshot& book, double fundamental) {
  if (book.mid_x2) return static_cast<double>(*book.mid_x2) / 2.0;
  if (book.best_bid) return static_cast<double>(*book.best_bid);
  if (book.best_ask) return static_cast<double>(*book.best_ask);
  return fundamental;
}

std::vector<OrderIntent> zi_act(const ZiParams& p, const BookSnapshot& book, double fundamental, RngStream& rng) {
  const double noise = rng.normal(0.0, p.noise_std);
  const Qty qty = rng.uniform_int(1, p.max_qty);
  const double belief = fundamental + noise + p.imbalance_weight * book_imbalance(book);
  const Price valuation = std::max<Price>(1, std::lround(belief));
  const double ref = reference_price(book, fundamental);
  const double v = static_cast<double>(valuation);
  if (v > ref) return {OrderIntent::limit(Side::Buy, valuation, qty)};
  if (v < ref) return {OrderIntent::limit(Side::Sell, valuation, qty)};
  return {};
}

std::vector<OrderIntent> market_maker_act(const MarketMakerParams& p, const BookSnapshot& book, double fundamental,
                                          const MarketMakerQuotes& current) {
  const double ref = book.mid_x2 ? static_cast<double>(*book.mid_x2) / 2.0 : fundamental;
  const Price bid = std::max<Price>(1, static_cast<Price>(std::floor(ref - p.half_spread)));
  const Price ask = std::max<Price>(bid + 1, static_cast<Price>(std::ceil(ref + p.half_spread)));
  std::vector<OrderIntent> out;
  if (!current.bid || current.bid->price != bid) {
    if (current.bid) out.push_back(OrderIntent::cancel(current.bid->id));
    out.push_back(OrderIntent::limit(Side::Buy, bid, p.quote_qty, kQuoteBidTag));
  }
  if (!current.ask || current.ask->price != ask) {
    if (current.ask) out.push_back(OrderIntent::cancel(current.ask->id));
    out.push_back(OrderIntent::limit(Side::Sell, ask, p.quote_qty, kQuoteAskTag));
  }
  return out;
}

std::pair<std::vector<OrderIntent>, SpooferFsm> spoofer_act(const SpooferFsm& fsm, const SpooferParams& p,
                                                            const BookSnapshot& book) {
  std::vector<OrderIntent> out;
  SpooferFsm next = fsm;
  const Side fake_side = opposite(p.exploit_side);
  switch (fsm.phase) {
    case SpooferPhase::Inject: {
      if (!next.injected) {
        if (!book.best_bid || !book.best_ask) return {out, next};
        const Price fake_price =
            p.exploit_side == Side::Sell ? *book.best_bid - p.fake_depth : *book.best_ask + p.fake_depth;
        if (fake_price <= 0) return {out, next};
        next.injected = true;
        next.fake_price = fake_price;
        if (p.place_fakes) {
          for (int i = 0; i < p.n_fakes; ++i) out.push_back(OrderIntent::limit(fake_side, fake_price, p.fake_qty, kFakeTag));
        }
      }
      if (++next.phase_steps >= p.inject_steps) {
        next.phase = SpooferPhase::Exploit;
        next.phase_steps = 0;
      }
      break;
    }
    case SpooferPhase::Exploit: {
      const bool armed = !p.exploit_requires_decoys || !next.fake_order_ids.empty();
      if (next.phase_steps == 0 && p.exploit && armed && next.fake_price) {
        const Price price =
            p.exploit_side == Side::Sell ? *next.fake_price + p.exploit_offset : *next.fake_price - p.exploit_offset;
        if (price > 0) out.push_back(OrderIntent::limit(p.exploit_side, price, p.exploit_qty, kExploitTag));
      }
      if (++next.phase_steps >= p.exploit_steps) {
        next.phase = SpooferPhase::Withdraw;
        next.phase_steps = 0;
      }
      break;
    }
    case SpooferPhase::Withdraw: {
      for (OrderId id : next.fake_order_ids) out.push_back(OrderIntent::cancel(id));
      next.fake_order_ids.clear();
      next.phase = SpooferPhase::Cooldown;
      next.phase_steps = 0;
      ++next.cycles;
      break;
    }
    case SpooferPhase::Cooldown: {
      if (++next.phase_steps >= p.cooldown_steps) {
        next.phase = SpooferPhase::Inject;
        next.phase_steps = 0;
        next.injected = false;
        next.fake_price.reset();
      }
      break;
    }
  }
  return {out, next};
}

// ---------------------------------------------------------------------------

double QTable::max_value(std::size_t state) const {
  return *std::max_element(q[state].begin(), q[state].end());
}

std::size_t QTable::argmax(std::size_t state) const {
  const auto& row = q[state];
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

QState ql_state(Qty inventory, const BookSnapshot& book, const QLearnerParams& p) {
  QState s;
  const double inv = static_cast<double>(inventory) / static_cast<double>(p.inventory_unit);
  s.inventory_bucket = static_cast<int>(std::clamp<long>(std::lround(inv), -2, 2));
  const double imb = book_imbalance(book);
  s.imbalance_bucket = imb < -0.6 ? -2 : imb < -0.2 ? -1 : imb <= 0.2 ? 0 : imb <= 0.6 ? 1 : 2;
  if (!book.best_bid || !book.best_ask) {
    s.spread_bucket = 2;
  } else {
    const Price spread = *book.best_ask - *book.best_bid;
    s.spread_bucket = spread <= 1 ? 0 : spread <= 3 ? 1 : 2;
  }
  return s;
}

QAction ql_act(const QTable& table, std::size_t state, double epsilon, RngStream& rng) {
  if (rng.uniform01() < epsilon) return static_cast<QAction>(rng.uniform_int(0, kQActions - 1));
  return static_cast<QAction>(table.argmax(state));
}

void ql_update(QTable& table, std::size_t s, QAction a, double reward, std::size_t s_next, double alpha, double gamma) {
  double& q = table.q[s][static_cast<std::size_t>(a)];
  q += alpha * (reward + gamma * table.max_value(s_next) - q);
}

std::vector<OrderIntent> ql_intents(QAction a, const QLearnerParams& p, const BookSnapshot& book, Qty inventory,
                                    const std::vector<OrderId>& open_orders) {
  const bool can_buy = inventory + p.order_qty <= p.max_inventory;
  const bool can_sell = inventory - p.order_qty >= -p.max_inventory;
  switch (a) {
    case QAction::PlaceBidAtBest:
      if (book.best_bid && can_buy) return {OrderIntent::limit(Side::Buy, *book.best_bid, p.order_qty)};
      return {};
    case QAction::PlaceAskAtBest:
      if (book.best_ask && can_sell) return {OrderIntent::limit(Side::Sell, *book.best_ask, p.order_qty)};
      return {};
    case QAction::PlaceLargeDeepBid:
      if (book.best_bid && *book.best_bid - p.deep_offset > 0 && inventory + p.large_qty <= p.max_inventory)
        return {OrderIntent::limit(Side::Buy, *book.best_bid - p.deep_offset, p.large_qty)};
      return {};
    case QAction::PlaceLargeDeepAsk:
      if (book.best_ask && inventory - p.large_qty >= -p.max_inventory)
        return {OrderIntent::limit(Side::Sell, *book.best_ask + p.deep_offset, p.large_qty)};
      return {};
    case QAction::MarketBuy:
      if (book.best_ask && can_buy) return {OrderIntent::market(Side::Buy, p.order_qty)};
      return {};
    case QAction::MarketSell:
      if (book.best_bid && can_sell) return {OrderIntent::market(Side::Sell, p.order_qty)};
      return {};
    case QAction::CancelAll: {
      std::vector<OrderIntent> out;
      for (OrderId id : open_orders) out.push_back(OrderIntent::cancel(id));
      return out;
    }
    case QAction::Hold:
      return {};
  }
  return {};
}

// ---------------------------------------------------------------------------

std::vector<OrderIntent> ZiAgent::on_wake(const AgentContext& ctx, RngStream& rng) {
  return zi_act(std::get<ZiParams>(config().params), ctx.book, ctx.fundamental, rng);
}

std::uint64_t ZiAgent::next_wake(std::uint64_t now, RngStream& rng) {
  const double gap = std::ceil(rng.exponential(std::get<ZiParams>(config().params).arrival_rate));
  return now + static_cast<std::uint64_t>(std::max(1.0, std::min(gap, 1.0e6)));
}

std::optional<std::uint64_t> ZiAgent::order_lifetime() const {
  return std::get<ZiParams>(config().params).order_lifetime;
}

std::vector<OrderIntent> MarketMakerAgent::on_wake(const AgentContext& ctx, RngStream&) {
  MarketMakerQuotes q;
  for (const auto& o : ctx.open_orders) {
    auto& slot = o.side == Side::Buy ? q.bid : q.ask;
    // Extra resting quotes (should not happen) are cancelled below.
    if (!slot) slot = Quote{o.id, *o.price};
  }
  auto out = market_maker_act(std::get<MarketMakerParams>(config().params), ctx.book, ctx.fundamental, q);
  for (const auto& o : ctx.open_orders) {
    const auto& slot = o.side == Side::Buy ? q.bid : q.ask;
    if (slot && slot->id != o.id) out.insert(out.begin(), OrderIntent::cancel(o.id));
  }
  return out;
}

std::uint64_t MarketMakerAgent::next_wake(std::uint64_t now, RngStream&) {
  return now + std::get<MarketMakerParams>(config().params).refresh_interval;
}

std::vector<OrderIntent> SpooferAgent::on_wake(const AgentContext& ctx, RngStream&) {
  const auto& p = std::get<SpooferParams>(config().params);
  if (ctx.now.step < p.start_step) return {};
  const bool was_fresh_inject = fsm_.phase == SpooferPhase::Inject && !fsm_.injected;
  auto [intents, next] = spoofer_act(fsm_, p, ctx.book);
  if (was_fresh_inject && next.injected) inject_log_.push_back(ctx.now.step);
  fsm_ = std::move(next);
  return intents;
}

std::uint64_t SpooferAgent::next_wake(std::uint64_t now, RngStream&) { return now + 1; }

void SpooferAgent::on_accepted(const OrderIntent& intent, OrderId id, bool resting) {
  if (intent.tag == kFakeTag && resting) fsm_.fake_order_ids.push_back(id);
}

QLearnerAgent::QLearnerAgent(AgentConfig cfg) : Agent(std::move(cfg)) {
  epsilon_ = std::get<QLearnerParams>(config().params).epsilon;
}

std::vector<OrderIntent> QLearnerAgent::on_wake(const AgentContext& ctx, RngStream& rng) {
  const auto& p = std::get<QLearnerParams>(config().params);
  const std::size_t s = ql_state(ctx.inventory, ctx.book, p).index();
  if (last_state_ && last_action_ && last_wealth_) {
    const double reward = wealth_now_ - *last_wealth_ - pending_penalty_;
    ql_update(table_, *last_state_, *last_action_, reward, s, p.alpha, p.gamma);
  }
  const QAction a = ql_act(table_, s, epsilon_, rng);
  epsilon_ = std::max(p.epsilon_min, epsilon_ * p.epsilon_decay);
  last_state_ = s;
  last_action_ = a;
  last_wealth_ = wealth_now_;
  pending_penalty_ = 0.0;
  std::vector<OrderId> open;
  for (const auto& o : ctx.open_orders) open.push_back(o.id);
  return ql_intents(a, p, ctx.book, ctx.inventory, open);
}

std::uint64_t QLearnerAgent::next_wake(std::uint64_t now, RngStream&) { return now + 1; }

std::optional<std::uint64_t> QLearnerAgent::order_lifetime() const {
  return std::get<QLearnerParams>(config().params).order_lifetime;
}

void QLearnerAgent::on_screened(const OrderIntent&, bool, double penalty) { pending_penalty_ += penalty; }

void QLearnerAgent::on_step_end(double wealth) { wealth_now_ = wealth; }

std::unique_ptr<Agent> make_agent(const AgentConfig& cfg) {
  switch (cfg.kind) {
    case AgentKind::ZI: return std::make_unique<ZiAgent>(cfg);
    case AgentKind::MarketMaker: return std::make_unique<MarketMakerAgent>(cfg);
    case AgentKind::ScriptedSpoofer:
    case AgentKind::ColluderInjector:
    case AgentKind::ColluderExploiter: return std::make_unique<SpooferAgent>(cfg);
    case AgentKind::QLearner: return std::make_unique<QLearnerAgent>(cfg);
  }
  throw Error(ErrorCode::ValidationError, "unsupported agent kind");
}

}  // namespace agov
