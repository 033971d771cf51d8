#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "agov/intent.hpp"
#include "agov/order_book.hpp"
#include "agov/rng.hpp"

namespace agov {

// ---------------------------------------------------------------------------
// Fundamental value

struct FundamentalShock {
  std::uint64_t step{0};
  double delta{0.0};
};

struct FundamentalParams {
  double initial{1000.0};
  double mean{1000.0};
  double reversion_rate{0.05};  // kappa in (0,1]
  double shock_std{0.5};
  std::vector<FundamentalShock> shocks;
};

class FundamentalProcess {
public:
  explicit FundamentalProcess(const FundamentalParams& p) : params_(p), value_(p.initial) {}

  double value() const noexcept { return value_; }
  // v <- v + kappa (mean - v) + eps, eps ~ N(0, sigma^2); clamped to >= 1 tick.
  void step(RngStream& rng);
  void apply_shock(double delta);

private:
  FundamentalParams params_;
  double value_;
};

// ---------------------------------------------------------------------------
// Agent configuration

enum class AgentKind { ZI, MarketMaker, ScriptedSpoofer, ColluderInjector, ColluderExploiter, QLearner };
enum class AgentAutonomy { RuleBased, Learning };

std::string_view to_string(AgentKind k) noexcept;
AgentKind parse_agent_kind(std::string_view s);
AgentAutonomy autonomy_of(AgentKind k) noexcept;

struct ZiParams {
  double arrival_rate{0.2};  // Poisson wake rate per step
  double noise_std{3.0};
  Qty max_qty{10};
  std::uint64_t order_lifetime{30};
  // Ticks of valuation shift per unit of top-of-book depth imbalance.
  double imbalance_weight{0.0};
};

struct MarketMakerParams {
  double half_spread{1.0};
  Qty quote_qty{5};
  std::uint64_t refresh_interval{1};
};

enum class SpooferPhase { Inject, Exploit, Withdraw, Cooldown };
std::string_view to_string(SpooferPhase p) noexcept;

struct SpooferParams {
  Qty fake_qty{50};
  Price fake_depth{1};  // ticks behind the best quote
  int n_fakes{3};
  Qty exploit_qty{10};
  Side exploit_side{Side::Sell};
  // Exploit limit price sits this many ticks inside the decoy price, so the
  // exploit never trades against the decoys.
  Price exploit_offset{1};
  std::uint64_t inject_steps{3};
  std::uint64_t exploit_steps{1};
  std::uint64_t cooldown_steps{10};
  std::uint64_t start_step{0};
  bool place_fakes{true};
  bool exploit{true};
  bool exploit_requires_decoys{true};
};

struct QLearnerParams {
  double alpha{0.1};
  double gamma{0.9};
  double epsilon{0.1};
  double epsilon_decay{1.0};  // multiplicative, per step
  double epsilon_min{0.01};
  Qty order_qty{5};
  Qty large_qty{50};
  Price deep_offset{2};
  Qty max_inventory{50};
  Qty inventory_unit{10};  // inventory bucket width
  std::uint64_t order_lifetime{20};
};

using AgentParams = std::variant<ZiParams, MarketMakerParams, SpooferParams, QLearnerParams>;

struct AgentConfig {
  AgentId agent_id{0};
  FirmId firm_id{0};
  AgentKind kind{AgentKind::ZI};
  AgentAutonomy autonomy{AgentAutonomy::RuleBased};
  AgentParams params;
};

nlohmann::json to_json(const AgentConfig& c);
// Strict parse of the "params" object for `kind`; unknown keys are a ParseError.
AgentParams agent_params_from_json(AgentKind kind, const nlohmann::json& j, const std::string& where);

// ---------------------------------------------------------------------------
// Decision functions

// (bid depth - ask depth) / (bid depth + ask depth) over the snapshot levels; 0 if empty.
double book_imbalance(const BookSnapshot& book);

// Reference price for the side rule: mid if two-sided, else the one best quote, else
// the fundamental.
double reference_price(const BookSnapshot& book, double fundamental);

// Always consumes three draws (noise: two, qty: one) so the stream stays aligned
// whether or not the agent abstains.
std::vector<OrderIntent> zi_act(const ZiParams& p, const BookSnapshot& book, double fundamental, RngStream& rng);

struct Quote {
  OrderId id{0};
  Price price{0};
};

struct MarketMakerQuotes {
  std::optional<Quote> bid;
  std::optional<Quote> ask;
};

// Bid at floor(ref - h), ask at ceil(ref + h), ref = mid or fundamental when one-sided.
std::vector<OrderIntent> market_maker_act(const MarketMakerParams& p, const BookSnapshot& book, double fundamental,
                                          const MarketMakerQuotes& current);

inline constexpr std::uint32_t kFakeTag = 1;
inline constexpr std::uint32_t kExploitTag = 2;
inline constexpr std::uint32_t kQuoteBidTag = 3;
inline constexpr std::uint32_t kQuoteAskTag = 4;

struct SpooferFsm {
  SpooferPhase phase{SpooferPhase::Inject};
  std::uint64_t phase_steps{0};
  bool injected{false};
  std::optional<Price> fake_price;
  std::vector<OrderId> fake_order_ids;
  std::uint64_t cycles{0};
};

std::pair<std::vector<OrderIntent>, SpooferFsm> spoofer_act(const SpooferFsm& fsm, const SpooferParams& p,
                                                            const BookSnapshot& book);

enum class QAction : std::uint8_t {
  PlaceBidAtBest,
  PlaceAskAtBest,
  PlaceLargeDeepBid,
  PlaceLargeDeepAsk,
  MarketBuy,
  MarketSell,
  CancelAll,
  Hold,
};
inline constexpr std::size_t kQActions = 8;
inline constexpr std::size_t kQStates = 5 * 5 * 3;
std::string_view to_string(QAction a) noexcept;

struct QTable {
  std::array<std::array<double, kQActions>, kQStates> q{};

  double max_value(std::size_t state) const;
  std::size_t argmax(std::size_t state) const;  // ties -> lowest index
};

struct QState {
  int inventory_bucket{0};  // -2..2
  int imbalance_bucket{0};  // -2..2
  int spread_bucket{0};     // 0..2

  std::size_t index() const noexcept {
    return static_cast<std::size_t>(((inventory_bucket + 2) * 5 + (imbalance_bucket + 2)) * 3 + spread_bucket);
  }
};

QState ql_state(Qty inventory, const BookSnapshot& book, const QLearnerParams& p);
// One uniform draw always; a second (action) draw only when exploring.
QAction ql_act(const QTable& table, std::size_t state, double epsilon, RngStream& rng);
void ql_update(QTable& table, std::size_t s, QAction a, double reward, std::size_t s_next, double alpha, double gamma);
std::vector<OrderIntent> ql_intents(QAction a, const QLearnerParams& p, const BookSnapshot& book, Qty inventory,
                                    const std::vector<OrderId>& open_orders);

// ---------------------------------------------------------------------------
// Agent runtime wrappers used by the simulation loop

struct AgentContext {
  SimTime now;
  const BookSnapshot& book;
  double fundamental{0.0};
  Qty inventory{0};
  double cash{0.0};
  const std::vector<Order>& open_orders;  // this agent's resting orders, ascending id
};

class Agent {
public:
  explicit Agent(AgentConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Agent() = default;

  const AgentConfig& config() const noexcept { return cfg_; }
  AgentId id() const noexcept { return cfg_.agent_id; }

  virtual std::vector<OrderIntent> on_wake(const AgentContext& ctx, RngStream& rng) = 0;
  // Step of the next wake after `now`.
  virtual std::uint64_t next_wake(std::uint64_t now, RngStream& rng) = 0;
  // Orders that should be auto-cancelled after this many steps, if any.
  virtual std::optional<std::uint64_t> order_lifetime() const { return std::nullopt; }

  virtual void on_accepted(const OrderIntent&, OrderId, bool /*resting*/) {}
  virtual void on_screened(const OrderIntent&, bool /*blocked*/, double /*penalty*/) {}
  virtual void on_step_end(double /*wealth*/) {}

private:
  AgentConfig cfg_;
};

class ZiAgent final : public Agent {
public:
  using Agent::Agent;
  std::vector<OrderIntent> on_wake(const AgentContext& ctx, RngStream& rng) override;
  std::uint64_t next_wake(std::uint64_t now, RngStream& rng) override;
  std::optional<std::uint64_t> order_lifetime() const override;
};

class MarketMakerAgent final : public Agent {
public:
  using Agent::Agent;
  std::vector<OrderIntent> on_wake(const AgentContext& ctx, RngStream& rng) override;
  std::uint64_t next_wake(std::uint64_t now, RngStream& rng) override;
};

class SpooferAgent final : public Agent {
public:
  using Agent::Agent;
  std::vector<OrderIntent> on_wake(const AgentContext& ctx, RngStream& rng) override;
  std::uint64_t next_wake(std::uint64_t now, RngStream& rng) override;
  void on_accepted(const OrderIntent& intent, OrderId id, bool resting) override;

  const SpooferFsm& fsm() const noexcept { return fsm_; }
  // Steps at which an Inject phase placed (or attempted) decoys.
  const std::vector<std::uint64_t>& inject_steps() const noexcept { return inject_log_; }

private:
  SpooferFsm fsm_;
  std::vector<std::uint64_t> inject_log_;
};

class QLearnerAgent final : public Agent {
public:
  explicit QLearnerAgent(AgentConfig cfg);
  std::vector<OrderIntent> on_wake(const AgentContext& ctx, RngStream& rng) override;
  std::uint64_t next_wake(std::uint64_t now, RngStream& rng) override;
  std::optional<std::uint64_t> order_lifetime() const override;
  void on_screened(const OrderIntent& intent, bool blocked, double penalty) override;
  void on_step_end(double wealth) override;

  const QTable& table() const noexcept { return table_; }
  double epsilon() const noexcept { return epsilon_; }

private:
  QTable table_;
  double epsilon_;
  std::optional<std::size_t> last_state_;
  std::optional<QAction> last_action_;
  std::optional<double> last_wealth_;
  double wealth_now_{0.0};
  double pending_penalty_{0.0};
};

std::unique_ptr<Agent> make_agent(const AgentConfig& cfg);

}  // namespace agov
