#include "agov/order_book.hpp"

#include <algorithm>

#include "agov/error.hpp"

namespace agov {

std::string_view to_string(Side s) noexcept { return s == Side::Buy ? "Buy" : "Sell"; }
std::string_view to_string(OrderKind k) noexcept { return k == OrderKind::Limit ? "Limit" : "Market"; }

namespace {

template <class Book>
void match_against(Book& book, Order& incoming, auto&& crosses, auto&& on_fill) {
  while (incoming.remaining > 0 && !book.empty()) {
    auto level = book.begin();
    if (!crosses(level->first)) break;
    auto& queue = level->second;
    while (incoming.remaining > 0 && !queue.empty()) {
      Order& resting = queue.front();
      const Qty fill = std::min(incoming.remaining, resting.remaining);
      incoming.remaining -= fill;
      resting.remaining -= fill;
      on_fill(resting, fill);
      if (resting.remaining == 0) queue.pop_front();
    }
    if (queue.empty()) book.erase(level);
  }
}

}  // namespace

SubmitResult OrderBook::submit(Order order) {
  if (order.qty <= 0) throw Error(ErrorCode::InvalidOrder, "qty must be positive");
  if (order.kind == OrderKind::Limit && (!order.price || *order.price <= 0)) {
    throw Error(ErrorCode::InvalidOrder, "limit order needs a positive price");
  }
  if (!seen_.insert(order.id).second) throw Error(ErrorCode::DuplicateOrderId, std::to_string(order.id));

  order.remaining = order.qty;
  if (order.placed_at == SimTime{}) order.placed_at = clock_;

  SubmitResult result;
  std::vector<OrderId> filled;
  auto on_fill = [&](const Order& resting, Qty fill) {
    Trade t;
    if (order.side == Side::Buy) {
      t.buy_order_id = order.id;
      t.buy_agent_id = order.agent_id;
      t.sell_order_id = resting.id;
      t.sell_agent_id = resting.agent_id;
    } else {
      t.sell_order_id = order.id;
      t.sell_agent_id = order.agent_id;
      t.buy_order_id = resting.id;
      t.buy_agent_id = resting.agent_id;
    }
    t.price = *resting.price;
    t.qty = fill;
    t.at = clock_;
    t.aggressor_side = order.side;
    result.trades.push_back(t);
    if (resting.remaining == 0) filled.push_back(resting.id);
  };

  const bool is_market = order.kind == OrderKind::Market;
  if (order.side == Side::Buy) {
    match_against(asks_, order,
                  [&](Price p) { return is_market || p <= *order.price; }, on_fill);
  } else {
    match_against(bids_, order,
                  [&](Price p) { return is_market || p >= *order.price; }, on_fill);
  }
  // on_fill sees the order before it is popped; drop fully filled ids afterwards.
  for (OrderId id : filled) index_.erase(id);

  if (order.remaining > 0 && !is_market) {
    rest(order);
    result.resting = true;
  }
  return result;
}

void OrderBook::rest(Order order) {
  const Price p = *order.price;
  const Side side = order.side;
  const OrderId id = order.id;
  if (side == Side::Buy) {
    auto& q = bids_[p];
    q.push_back(std::move(order));
    index_[id] = Locator{side, p, std::prev(q.end())};
  } else {
    auto& q = asks_[p];
    q.push_back(std::move(order));
    index_[id] = Locator{side, p, std::prev(q.end())};
  }
}

Qty OrderBook::cancel(OrderId id) {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::UnknownOrder, std::to_string(id));
  const Locator loc = it->second;
  const Qty qty = loc.it->remaining;
  auto erase_from = [&](auto& book) {
    auto level = book.find(loc.price);
    level->second.erase(loc.it);
    if (level->second.empty()) book.erase(level);
  };
  if (loc.side == Side::Buy) erase_from(bids_); else erase_from(asks_);
  index_.erase(it);
  return qty;
}

const Order* OrderBook::find(OrderId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &*it->second.it;
}

std::vector<OrderId> OrderBook::resting_ids() const {
  std::vector<OrderId> ids;
  ids.reserve(index_.size());
  for (const auto& [id, loc] : index_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::optional<Price> OrderBook::best_bid() const {
  if (bids_.empty()) return std::nullopt;
  return bids_.begin()->first;
}

std::optional<Price> OrderBook::best_ask() const {
  if (asks_.empty()) return std::nullopt;
  return asks_.begin()->first;
}

BookSnapshot OrderBook::snapshot(std::size_t depth) const {
  BookSnapshot s;
  s.at = clock_;
  auto collect = [depth](const auto& book, std::vector<Level>& out) {
    for (const auto& [price, queue] : book) {
      if (out.size() >= depth) break;
      Level lv{price, 0, queue.size()};
      for (const auto& o : queue) lv.total_qty += o.remaining;
      out.push_back(lv);
    }
  };
  collect(bids_, s.bids);
  collect(asks_, s.asks);
  s.best_bid = best_bid();
  s.best_ask = best_ask();
  if (s.best_bid && s.best_ask) s.mid_x2 = *s.best_bid + *s.best_ask;
  return s;
}

}  // namespace agov
