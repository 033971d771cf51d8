#include <gtest/gtest.h>

#include "agov/error.hpp"
#include "agov/order_book.hpp"
#include "support/reference_book.hpp"

using namespace agov;

namespace {

Order limit(OrderId id, Side side, Price price, Qty qty, AgentId agent = 1) {
  Order o;
  o.id = id;
  o.agent_id = agent;
  o.side = side;
  o.price = price;
  o.qty = qty;
  return o;
}

Order market(OrderId id, Side side, Qty qty) {
  Order o;
  o.id = id;
  o.agent_id = 1;
  o.side = side;
  o.qty = qty;
  o.kind = OrderKind::Market;
  return o;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoFailure;
}

}  // namespace

TEST(OrderBook, LimitIntoEmptyBookRests) {
  OrderBook b;
  const auto r = b.submit(limit(1, Side::Buy, 100, 5));
  EXPECT_TRUE(r.trades.empty());
  EXPECT_TRUE(r.resting);
  EXPECT_EQ(b.best_bid(), 100);
}

TEST(OrderBook, ExecutesAtRestingPrice) {
  OrderBook b;
  b.submit(limit(1, Side::Sell, 100, 5));
  const auto r = b.submit(limit(2, Side::Buy, 101, 3));
  ASSERT_EQ(r.trades.size(), 1u);
  EXPECT_EQ(r.trades[0].price, 100);
  EXPECT_EQ(r.trades[0].qty, 3);
  EXPECT_EQ(r.trades[0].aggressor_side, Side::Buy);
  EXPECT_FALSE(r.resting);
  EXPECT_EQ(b.find(1)->remaining, 2);
}

TEST(OrderBook, PriceTimePriority) {
  OrderBook b;
  b.submit(limit(1, Side::Sell, 100, 2));
  b.submit(limit(2, Side::Sell, 100, 3));
  const auto r = b.submit(market(3, Side::Buy, 4));
  ASSERT_EQ(r.trades.size(), 2u);
  EXPECT_EQ(r.trades[0].sell_order_id, 1u);
  EXPECT_EQ(r.trades[0].qty, 2);
  EXPECT_EQ(r.trades[1].sell_order_id, 2u);
  EXPECT_EQ(r.trades[1].qty, 2);
}

TEST(OrderBook, MarketRemainderDiscarded) {
  OrderBook b;
  b.submit(limit(1, Side::Sell, 100, 2));
  const auto r = b.submit(market(2, Side::Buy, 5));
  EXPECT_EQ(r.trades.size(), 1u);
  EXPECT_FALSE(r.resting);
  EXPECT_TRUE(b.empty());
}

TEST(OrderBook, CancelSemantics) {
  OrderBook b;
  b.submit(limit(1, Side::Buy, 100, 5));
  EXPECT_EQ(b.cancel(1), 5);
  EXPECT_FALSE(b.best_bid().has_value());
  EXPECT_EQ(code_of([&] { b.cancel(1); }), ErrorCode::UnknownOrder);
  EXPECT_EQ(code_of([&] { b.cancel(99); }), ErrorCode::UnknownOrder);

  b.submit(limit(2, Side::Buy, 100, 5));
  b.submit(limit(3, Side::Sell, 100, 3));
  EXPECT_EQ(b.cancel(2), 2);
}

TEST(OrderBook, FilledOrderIsGone) {
  OrderBook b;
  b.submit(limit(1, Side::Buy, 100, 5));
  b.submit(limit(2, Side::Sell, 99, 5));
  EXPECT_EQ(b.find(1), nullptr);
  EXPECT_EQ(code_of([&] { b.cancel(1); }), ErrorCode::UnknownOrder);
}

TEST(OrderBook, RejectsBadOrders) {
  OrderBook b;
  EXPECT_EQ(code_of([&] { b.submit(limit(1, Side::Buy, 100, 0)); }), ErrorCode::InvalidOrder);
  Order no_price = limit(2, Side::Buy, 100, 1);
  no_price.price.reset();
  EXPECT_EQ(code_of([&] { b.submit(no_price); }), ErrorCode::InvalidOrder);
  EXPECT_EQ(code_of([&] { b.submit(limit(3, Side::Buy, 0, 1)); }), ErrorCode::InvalidOrder);
  b.submit(limit(4, Side::Buy, 100, 1));
  EXPECT_EQ(code_of([&] { b.submit(limit(4, Side::Buy, 100, 1)); }), ErrorCode::DuplicateOrderId);
}

TEST(OrderBook, SnapshotExamples) {
  OrderBook b;
  auto s = b.snapshot(5);
  EXPECT_TRUE(s.bids.empty());
  EXPECT_TRUE(s.asks.empty());
  EXPECT_FALSE(s.mid().has_value());

  b.submit(limit(1, Side::Buy, 100, 5));
  b.submit(limit(2, Side::Buy, 99, 2));
  b.submit(limit(3, Side::Sell, 101, 1));
  s = b.snapshot(5);
  ASSERT_TRUE(s.mid().has_value());
  EXPECT_DOUBLE_EQ(*s.mid(), 100.5);
  EXPECT_EQ(*s.mid_x2, 201);

  b.submit(limit(4, Side::Buy, 98, 2));
  s = b.snapshot(1);
  ASSERT_EQ(s.bids.size(), 1u);
  EXPECT_EQ(s.bids[0], (Level{100, 5, 1}));
}

TEST(OrderBook, SelfMatchAllowed) {
  OrderBook b;
  b.submit(limit(1, Side::Sell, 100, 5, 7));
  const auto r = b.submit(limit(2, Side::Buy, 100, 5, 7));
  ASSERT_EQ(r.trades.size(), 1u);
  EXPECT_EQ(r.trades[0].buy_agent_id, 7u);
  EXPECT_EQ(r.trades[0].sell_agent_id, 7u);
}

TEST(OrderBook, CancellingEverythingEmptiesBook) {
  OrderBook b;
  OrderId id = 1;
  for (Price p = 90; p < 100; ++p) b.submit(limit(id++, Side::Buy, p, 3));
  for (Price p = 101; p < 110; ++p) b.submit(limit(id++, Side::Sell, p, 3));
  for (auto oid : b.resting_ids()) b.cancel(oid);
  EXPECT_TRUE(b.empty());
  const auto s = b.snapshot(100);
  EXPECT_TRUE(s.bids.empty());
  EXPECT_TRUE(s.asks.empty());
}

TEST(OrderBook, NeverCrossedAndConserves) {
  std::mt19937_64 rng(5);
  OrderBook b;
  Qty bought = 0, sold = 0;
  for (OrderId id = 1; id <= 5000; ++id) {
    const Side side = rng() % 2 ? Side::Buy : Side::Sell;
    const Qty q = 1 + static_cast<Qty>(rng() % 10);
    const auto r = b.submit(limit(id, side, 95 + static_cast<Price>(rng() % 11), q));
    Qty filled = 0;
    for (const auto& t : r.trades) {
      ASSERT_GT(t.qty, 0);
      filled += t.qty;
      bought += t.qty;
      sold += t.qty;
    }
    ASSERT_LE(filled, q);
    if (b.best_bid() && b.best_ask()) ASSERT_LT(*b.best_bid(), *b.best_ask());
  }
  EXPECT_EQ(bought, sold);
}

TEST(OrderBook, MatchesBruteForceOnRandomSequences) {
  // Smaller sweep than the acceptance run; same oracle.
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto diff = reftest::compare_random_sequence(seed, 300);
    ASSERT_TRUE(diff.empty()) << "seed " << seed << ": " << diff;
  }
}
