#pragma once

#include <cstdint>
#include <optional>

#include "agov/order_book.hpp"

namespace agov {

enum class IntentKind { Place, Cancel };

// What an agent proposes; governance decides whether it reaches the book.
struct OrderIntent {
  IntentKind kind{IntentKind::Place};
  Side side{Side::Buy};
  OrderKind order_kind{OrderKind::Limit};
  std::optional<Price> price;
  Qty qty{0};
  OrderId cancel_id{0};
  // Opaque label the agent uses to recognise its own orders on acceptance.
  std::uint32_t tag{0};

  static OrderIntent limit(Side side, Price price, Qty qty, std::uint32_t tag = 0) {
    return OrderIntent{IntentKind::Place, side, OrderKind::Limit, price, qty, 0, tag};
  }
  static OrderIntent market(Side side, Qty qty, std::uint32_t tag = 0) {
    return OrderIntent{IntentKind::Place, side, OrderKind::Market, std::nullopt, qty, 0, tag};
  }
  static OrderIntent cancel(OrderId id) {
    return OrderIntent{IntentKind::Cancel, Side::Buy, OrderKind::Limit, std::nullopt, 0, id, 0};
  }

  bool operator==(const OrderIntent&) const = default;
};

}  // namespace agov
