#pragma once

// Brute-force matcher used as an oracle for OrderBook: a flat vector of resting
// orders scanned linearly for the best counterparty on every fill.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "agov/order_book.hpp"

namespace reftest {

struct RefOrder {
  agov::OrderId id;
  agov::AgentId agent;
  agov::Side side;
  agov::Price price;
  agov::Qty remaining;
  std::uint64_t arrival;
};

struct RefTrade {
  agov::OrderId buy, sell;
  agov::Price price;
  agov::Qty qty;
  bool operator==(const RefTrade&) const = default;
};

class RefBook {
public:
  std::vector<RefTrade> submit(agov::OrderId id, agov::AgentId agent, agov::Side side, std::optional<agov::Price> price,
                               agov::Qty qty) {
    std::vector<RefTrade> out;
    const bool market = !price.has_value();
    while (qty > 0) {
      // Best counterparty: best price, then earliest arrival.
      int best = -1;
      for (int i = 0; i < static_cast<int>(resting_.size()); ++i) {
        const auto& r = resting_[i];
        if (r.side == side) continue;
        const bool crosses = market || (side == agov::Side::Buy ? r.price <= *price : r.price >= *price);
        if (!crosses) continue;
        if (best < 0) {
          best = i;
          continue;
        }
        const auto& b = resting_[best];
        const bool better_price = side == agov::Side::Buy ? r.price < b.price : r.price > b.price;
        if (better_price || (r.price == b.price && r.arrival < b.arrival)) best = i;
      }
      if (best < 0) break;
      auto& r = resting_[best];
      const agov::Qty f = std::min(qty, r.remaining);
      out.push_back(side == agov::Side::Buy ? RefTrade{id, r.id, r.price, f} : RefTrade{r.id, id, r.price, f});
      qty -= f;
      r.remaining -= f;
      if (r.remaining == 0) resting_.erase(resting_.begin() + best);
    }
    if (qty > 0 && !market) resting_.push_back({id, agent, side, *price, qty, clock_++});
    return out;
  }

  std::optional<agov::Qty> cancel(agov::OrderId id) {
    for (auto it = resting_.begin(); it != resting_.end(); ++it) {
      if (it->id == id) {
        const auto q = it->remaining;
        resting_.erase(it);
        return q;
      }
    }
    return std::nullopt;
  }

  // (price, total qty, count) per level, best first.
  std::vector<agov::Level> levels(agov::Side side) const {
    std::vector<agov::Level> out;
    std::vector<agov::Price> prices;
    for (const auto& r : resting_) {
      if (r.side == side) prices.push_back(r.price);
    }
    std::sort(prices.begin(), prices.end());
    prices.erase(std::unique(prices.begin(), prices.end()), prices.end());
    if (side == agov::Side::Buy) std::reverse(prices.begin(), prices.end());
    for (auto p : prices) {
      agov::Level lv{p, 0, 0};
      for (const auto& r : resting_) {
        if (r.side == side && r.price == p) {
          lv.total_qty += r.remaining;
          ++lv.order_count;
        }
      }
      out.push_back(lv);
    }
    return out;
  }

  std::vector<agov::OrderId> ids() const {
    std::vector<agov::OrderId> v;
    for (const auto& r : resting_) v.push_back(r.id);
    std::sort(v.begin(), v.end());
    return v;
  }

private:
  std::vector<RefOrder> resting_;
  std::uint64_t clock_{0};
};

// Replays one random submit/cancel sequence against both books. Returns an
// empty string on agreement, otherwise a description of the first mismatch.
inline std::string compare_random_sequence(std::uint64_t seed, int max_ops) {
  std::mt19937_64 rng(seed);
  auto uni = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  agov::OrderBook book;
  RefBook ref;
  std::vector<agov::OrderId> issued;
  agov::OrderId next_id = 1;
  const int ops = static_cast<int>(uni(1, max_ops));
  for (int op = 0; op < ops; ++op) {
    if (!issued.empty() && uni(0, 3) == 0) {
      const auto id = issued[static_cast<std::size_t>(uni(0, static_cast<std::int64_t>(issued.size()) - 1))];
      const auto want = ref.cancel(id);
      std::optional<agov::Qty> got;
      try {
        got = book.cancel(id);
      } catch (const agov::Error&) {
      }
      if (want != got) return "cancel mismatch at op " + std::to_string(op);
      continue;
    }
    const auto side = uni(0, 1) ? agov::Side::Buy : agov::Side::Sell;
    const bool market = uni(0, 9) == 0;
    const agov::Qty qty = uni(1, 20);
    std::optional<agov::Price> price;
    if (!market) price = uni(95, 105);
    agov::Order o;
    o.id = next_id++;
    o.agent_id = static_cast<agov::AgentId>(uni(1, 5));
    o.side = side;
    o.price = price;
    o.qty = qty;
    o.kind = market ? agov::OrderKind::Market : agov::OrderKind::Limit;
    const auto got = book.submit(o);
    const auto want = ref.submit(o.id, o.agent_id, side, price, qty);
    if (got.trades.size() != want.size()) return "trade count mismatch at op " + std::to_string(op);
    for (std::size_t i = 0; i < want.size(); ++i) {
      const auto& t = got.trades[i];
      if (RefTrade{t.buy_order_id, t.sell_order_id, t.price, t.qty} != want[i]) {
        return "trade mismatch at op " + std::to_string(op);
      }
    }
    issued.push_back(o.id);
  }
  const auto snap = book.snapshot(1000);
  if (snap.bids != ref.levels(agov::Side::Buy) || snap.asks != ref.levels(agov::Side::Sell)) return "final book levels differ";
  if (book.resting_ids() != ref.ids()) return "final resting ids differ";
  return {};
}

}  // namespace reftest
