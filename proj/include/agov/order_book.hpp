#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "agov/sim_kernel.hpp"

namespace agov {

using Price = std::int64_t;  // integer ticks
using Qty = std::int64_t;
using OrderId = std::uint64_t;
using AgentId = std::uint32_t;
using FirmId = std::uint32_t;

enum class Side { Buy, Sell };
enum class OrderKind { Limit, Market };

constexpr Side opposite(Side s) noexcept { return s == Side::Buy ? Side::Sell : Side::Buy; }
std::string_view to_string(Side s) noexcept;
std::string_view to_string(OrderKind k) noexcept;

struct Order {
  OrderId id{0};
  AgentId agent_id{0};
  FirmId firm_id{0};
  Side side{Side::Buy};
  std::optional<Price> price;  // absent for market orders
  Qty qty{0};
  Qty remaining{0};
  OrderKind kind{OrderKind::Limit};
  SimTime placed_at;
};

struct Trade {
  OrderId buy_order_id{0};
  OrderId sell_order_id{0};
  AgentId buy_agent_id{0};
  AgentId sell_agent_id{0};
  Price price{0};
  Qty qty{0};
  SimTime at;
  Side aggressor_side{Side::Buy};
};

struct Level {
  Price price{0};
  Qty total_qty{0};
  std::size_t order_count{0};

  bool operator==(const Level&) const = default;
};

struct BookSnapshot {
  SimTime at;
  std::vector<Level> bids;  // best first
  std::vector<Level> asks;
  std::optional<Price> best_bid;
  std::optional<Price> best_ask;
  // Twice the mid price, exact. Absent if either side is empty.
  std::optional<std::int64_t> mid_x2;

  std::optional<double> mid() const {
    if (!mid_x2) return std::nullopt;
    return static_cast<double>(*mid_x2) / 2.0;
  }
};

struct SubmitResult {
  std::vector<Trade> trades;
  bool resting{false};
};

/// Price-time priority limit order book for a single instrument.
class OrderBook {
public:
  // Throws DuplicateOrderId / InvalidOrder.
  SubmitResult submit(Order order);
  // Throws UnknownOrder when the id is not resting.
  Qty cancel(OrderId id);
  BookSnapshot snapshot(std::size_t depth) const;

  const Order* find(OrderId id) const;
  bool empty() const noexcept { return index_.empty(); }
  std::size_t resting_count() const noexcept { return index_.size(); }
  std::vector<OrderId> resting_ids() const;  // ascending id
  std::optional<Price> best_bid() const;
  std::optional<Price> best_ask() const;

  void set_clock(SimTime t) noexcept { clock_ = t; }

private:
  using Queue = std::list<Order>;
  struct Locator {
    Side side;
    Price price;
    Queue::iterator it;
  };

  void rest(Order order);

  std::map<Price, Queue, std::greater<>> bids_;
  std::map<Price, Queue> asks_;
  std::unordered_map<OrderId, Locator> index_;
  // Every id ever submitted, to reject reuse.
  std::unordered_set<OrderId> seen_;
  SimTime clock_{};
};

}  // namespace agov
