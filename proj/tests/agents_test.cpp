#include <gtest/gtest.h>

#include <cmath>

#include "agov/agents.hpp"
#include "agov/error.hpp"

using namespace agov;

namespace {

BookSnapshot book_of(std::vector<Level> bids, std::vector<Level> asks) {
  BookSnapshot s;
  s.bids = std::move(bids);
  s.asks = std::move(asks);
  if (!s.bids.empty()) s.best_bid = s.bids.front().price;
  if (!s.asks.empty()) s.best_ask = s.asks.front().price;
  if (s.best_bid && s.best_ask) s.mid_x2 = *s.best_bid + *s.best_ask;
  return s;
}

ZiParams quiet_zi() {
  ZiParams p;
  p.noise_std = 0.0;  // valuation is then the fundamental itself
  p.max_qty = 10;
  return p;
}

}  // namespace

TEST(Fundamental, MeanReversionWithoutNoise) {
  FundamentalParams fp;
  fp.initial = 1100;
  fp.mean = 1000;
  fp.reversion_rate = 0.1;
  fp.shock_std = 0.0;
  FundamentalProcess f(fp);
  RngStream r(1, "fundamental");
  f.step(r);
  EXPECT_DOUBLE_EQ(f.value(), 1090.0);
  f.apply_shock(-5000);
  EXPECT_DOUBLE_EQ(f.value(), 1.0);
}

TEST(ZeroIntelligence, BuysBelowValuation) {
  RngStream r(1, "zi");
  const auto out = zi_act(quiet_zi(), book_of({}, {{100, 5, 1}}), 101.2, r);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].side, Side::Buy);
  EXPECT_EQ(out[0].price, 101);
  EXPECT_GE(out[0].qty, 1);
  EXPECT_LE(out[0].qty, 10);
}

TEST(ZeroIntelligence, SellsAboveValuation) {
  RngStream r(1, "zi");
  const auto out = zi_act(quiet_zi(), book_of({{100, 5, 1}}, {}), 97.0, r);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].side, Side::Sell);
  EXPECT_EQ(out[0].price, 97);
}

TEST(ZeroIntelligence, AbstainsAtMid) {
  RngStream r(1, "zi");
  EXPECT_TRUE(zi_act(quiet_zi(), book_of({{99, 5, 1}}, {{101, 5, 1}}), 100.0, r).empty());
  // Abstaining still consumes the same draws as acting.
  RngStream a(3, "zi"), b(3, "zi");
  zi_act(quiet_zi(), book_of({{99, 5, 1}}, {{101, 5, 1}}), 100.0, a);
  zi_act(quiet_zi(), book_of({{99, 5, 1}}, {{101, 5, 1}}), 120.0, b);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(MarketMaker, QuotesAroundMid) {
  MarketMakerParams p;
  p.half_spread = 1.0;
  p.quote_qty = 7;
  const auto out = market_maker_act(p, book_of({{100, 1, 1}}, {{101, 1, 1}}), 0.0, {});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], OrderIntent::limit(Side::Buy, 99, 7, kQuoteBidTag));
  EXPECT_EQ(out[1], OrderIntent::limit(Side::Sell, 102, 7, kQuoteAskTag));
}

TEST(MarketMaker, NoChangeWhenQuotesInPlace) {
  MarketMakerParams p;
  MarketMakerQuotes q{Quote{5, 99}, Quote{6, 102}};
  EXPECT_TRUE(market_maker_act(p, book_of({{100, 1, 1}}, {{101, 1, 1}}), 0.0, q).empty());
}

TEST(MarketMaker, EmptyBookUsesFundamental) {
  MarketMakerParams p;
  const auto out = market_maker_act(p, book_of({}, {}), 100.0, {});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].price, 99);
  EXPECT_EQ(out[1].price, 101);
}

TEST(MarketMaker, ReplacesStaleQuote) {
  MarketMakerParams p;
  MarketMakerQuotes q{Quote{5, 97}, Quote{6, 102}};
  const auto out = market_maker_act(p, book_of({{100, 1, 1}}, {{101, 1, 1}}), 0.0, q);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], OrderIntent::cancel(5));
  EXPECT_EQ(out[1].price, 99);
}

TEST(Spoofer, InjectPlacesDecoysBehindBest) {
  SpooferParams p;
  p.fake_qty = 50;
  p.fake_depth = 1;
  p.n_fakes = 3;
  p.inject_steps = 3;
  SpooferFsm f;
  auto [out, next] = spoofer_act(f, p, book_of({{100, 1, 1}}, {{102, 1, 1}}));
  ASSERT_EQ(out.size(), 3u);
  for (const auto& i : out) EXPECT_EQ(i, OrderIntent::limit(Side::Buy, 99, 50, kFakeTag));
  EXPECT_EQ(next.phase, SpooferPhase::Inject);
  // Later inject steps place nothing new; phase moves on after the duration.
  auto r2 = spoofer_act(next, p, book_of({{100, 1, 1}}, {{102, 1, 1}}));
  EXPECT_TRUE(r2.first.empty());
  auto r3 = spoofer_act(r2.second, p, book_of({{100, 1, 1}}, {{102, 1, 1}}));
  EXPECT_EQ(r3.second.phase, SpooferPhase::Exploit);
}

TEST(Spoofer, WithdrawCancelsEveryDecoy) {
  SpooferParams p;
  SpooferFsm f;
  f.phase = SpooferPhase::Withdraw;
  f.fake_order_ids = {7, 8, 9};
  auto [out, next] = spoofer_act(f, p, book_of({{100, 1, 1}}, {{102, 1, 1}}));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], OrderIntent::cancel(7));
  EXPECT_EQ(out[2], OrderIntent::cancel(9));
  EXPECT_TRUE(next.fake_order_ids.empty());
  EXPECT_EQ(next.phase, SpooferPhase::Cooldown);
}

TEST(Spoofer, OneSidedBookHolds) {
  SpooferParams p;
  SpooferFsm f;
  auto [out, next] = spoofer_act(f, p, book_of({{100, 1, 1}}, {}));
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(next.phase, SpooferPhase::Inject);
  EXPECT_FALSE(next.injected);
}

TEST(Spoofer, ExploitSellsAboveDecoysOnOppositeSide) {
  SpooferParams p;
  p.exploit_qty = 20;
  p.exploit_offset = 1;
  SpooferFsm f;
  f.phase = SpooferPhase::Exploit;
  f.fake_price = 99;
  f.fake_order_ids = {1};
  auto [out, next] = spoofer_act(f, p, book_of({{100, 1, 1}}, {{102, 1, 1}}));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], OrderIntent::limit(Side::Sell, 100, 20, kExploitTag));
  EXPECT_EQ(next.phase, SpooferPhase::Withdraw);
}

TEST(Spoofer, FullCycleReturnsToInject) {
  SpooferParams p;
  p.inject_steps = 2;
  p.exploit_steps = 1;
  p.cooldown_steps = 3;
  const auto book = book_of({{100, 1, 1}}, {{102, 1, 1}});
  SpooferFsm f;
  std::vector<SpooferPhase> phases;
  for (int i = 0; i < 7; ++i) {
    f = spoofer_act(f, p, book).second;
    phases.push_back(f.phase);
  }
  using P = SpooferPhase;
  EXPECT_EQ(phases, (std::vector<P>{P::Inject, P::Exploit, P::Withdraw, P::Cooldown, P::Cooldown, P::Cooldown, P::Inject}));
  EXPECT_EQ(f.cycles, 1u);
}

TEST(QLearning, GreedyTieGoesToLowestIndex) {
  QTable t;
  RngStream r(1, "q");
  EXPECT_EQ(ql_act(t, 0, 0.0, r), QAction::PlaceBidAtBest);
  t.q[0][static_cast<std::size_t>(QAction::CancelAll)] = 5.0;
  EXPECT_EQ(ql_act(t, 0, 0.0, r), QAction::CancelAll);
}

TEST(QLearning, FullExplorationIsUniform) {
  QTable t;
  RngStream r(2024, "q");
  std::array<int, kQActions> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(ql_act(t, 0, 1.0, r))];
  double chi2 = 0.0;
  const double e = static_cast<double>(n) / kQActions;
  for (int c : counts) chi2 += (c - e) * (c - e) / e;
  // Upper 1% point of chi-square with 7 degrees of freedom.
  EXPECT_LT(chi2, 18.475) << chi2;
}

TEST(QLearning, UpdateArithmetic) {
  QTable t;
  ql_update(t, 3, QAction::Hold, 10.0, 4, 0.5, 0.0);
  EXPECT_DOUBLE_EQ(t.q[3][static_cast<std::size_t>(QAction::Hold)], 5.0);

  QTable u;
  u.q[3][0] = 4.0;
  ql_update(u, 3, QAction::PlaceBidAtBest, 0.0, 4, 0.5, 0.9);
  EXPECT_DOUBLE_EQ(u.q[3][0], 2.0);

  // With a future value: 1 + 0.5 * (2 + 0.9 * 6 - 1) = 4.2
  QTable v;
  v.q[1][2] = 1.0;
  v.q[2][5] = 6.0;
  ql_update(v, 1, QAction::PlaceLargeDeepBid, 2.0, 2, 0.5, 0.9);
  EXPECT_NEAR(v.q[1][2], 4.2, 1e-9);
}

TEST(QLearning, ConvergesToRewardWithoutDiscount) {
  QTable t;
  for (int i = 0; i < 100; ++i) ql_update(t, 0, QAction::Hold, 7.5, 1, 0.5, 0.0);
  EXPECT_LT(std::abs(t.q[0][static_cast<std::size_t>(QAction::Hold)] - 7.5), 1e-6);
}

TEST(QLearning, StateIndexCoversAllCells) {
  std::vector<bool> seen(kQStates, false);
  for (int inv = -2; inv <= 2; ++inv)
    for (int imb = -2; imb <= 2; ++imb)
      for (int sp = 0; sp <= 2; ++sp) {
        const auto idx = QState{inv, imb, sp}.index();
        ASSERT_LT(idx, kQStates);
        EXPECT_FALSE(seen[idx]);
        seen[idx] = true;
      }
}

TEST(QLearning, IntentsRespectInventoryAndBook) {
  QLearnerParams p;
  p.order_qty = 5;
  p.large_qty = 50;
  p.max_inventory = 50;
  const auto book = book_of({{100, 1, 1}}, {{102, 1, 1}});
  EXPECT_EQ(ql_intents(QAction::PlaceLargeDeepBid, p, book, 0, {}).size(), 1u);
  EXPECT_TRUE(ql_intents(QAction::PlaceLargeDeepBid, p, book, 10, {}).empty());
  EXPECT_TRUE(ql_intents(QAction::MarketSell, p, book_of({}, {{102, 1, 1}}), 0, {}).empty());
  EXPECT_EQ(ql_intents(QAction::CancelAll, p, book, 0, {3, 4}).size(), 2u);
  EXPECT_TRUE(ql_intents(QAction::Hold, p, book, 0, {3}).empty());
}

TEST(AgentConfig, ParamsParseStrictly) {
  const auto params = agent_params_from_json(AgentKind::ZI, {{"arrival_rate", 0.3}, {"max_qty", 4}}, "agent");
  EXPECT_DOUBLE_EQ(std::get<ZiParams>(params).arrival_rate, 0.3);
  EXPECT_THROW(agent_params_from_json(AgentKind::ZI, {{"arrival_rte", 0.3}}, "agent"), Error);
}
