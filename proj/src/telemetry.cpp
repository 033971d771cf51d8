#include "agov/telemetry.hpp"

namespace agov {

std::string_view to_string(ActionKind k) noexcept {
  switch (k) {
    case ActionKind::Place: return "Place";
    case ActionKind::Cancel: return "Cancel";
    case ActionKind::Fill: return "Fill";
    case ActionKind::ForcedCancel: return "ForcedCancel";
  }
  return "?";
}

nlohmann::json to_json(const TelemetryRecord& r) {
  return nlohmann::json{
      {"step", r.at.step},
      {"seq", r.at.seq},
      {"agent_id", r.agent_id},
      {"firm_id", r.firm_id},
      {"action", to_string(r.action)},
      {"order_id", r.order_id},
      {"side", to_string(r.side)},
      {"order_kind", to_string(r.order_kind)},
      {"price", r.price ? nlohmann::json(*r.price) : nlohmann::json(nullptr)},
      {"order_qty", r.order_qty},
      {"posted_qty", r.posted_qty},
      {"executed_qty", r.executed_qty},
      {"cancelled_qty", r.cancelled_qty},
      {"trade_count", r.trade_count},
      {"placed_step", r.placed_step},
      {"blocked", r.blocked},
      {"decision", to_string(r.decision)},
      {"penalty", r.penalty},
      {"score", r.score},
  };
}

}  // namespace agov
