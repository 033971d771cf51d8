#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "json.hpp"

#include "agov/governance.hpp"
#include "agov/order_book.hpp"

namespace agov {

// Place/Cancel are agent actions. Fill is a passive execution of a resting order;
// ForcedCancel is a governance cancel on quarantine. Neither is an agent action.
enum class ActionKind { Place, Cancel, Fill, ForcedCancel };

std::string_view to_string(ActionKind k) noexcept;

struct TelemetryRecord {
  SimTime at;
  AgentId agent_id{0};
  FirmId firm_id{0};
  ActionKind action{ActionKind::Place};
  OrderId order_id{0};  // 0 when a Place was blocked before an id was assigned
  Side side{Side::Buy};
  OrderKind order_kind{OrderKind::Limit};
  std::optional<Price> price;
  Qty order_qty{0};      // original order size
  Qty posted_qty{0};     // Place: remainder that came to rest on the book
  Qty executed_qty{0};   // Place: aggressive fills; Fill: passive fill
  Qty cancelled_qty{0};  // Cancel/ForcedCancel: resting qty removed
  std::uint32_t trade_count{0};
  std::uint64_t placed_step{0};  // step the referenced order was placed
  bool blocked{false};
  ControlAction decision{ControlAction::Allow};
  double penalty{0.0};
  double score{0.0};  // detector score after this record

  bool accepted() const noexcept { return !blocked; }
};

nlohmann::json to_json(const TelemetryRecord& r);

}  // namespace agov
