#include "agov/sim_kernel.hpp"

#include <cassert>
#include <ostream>
#include <sstream>

#include "agov/error.hpp"

namespace agov {

std::string to_string(const SimTime& t) {
  return "(" + std::to_string(t.step) + "," + std::to_string(t.seq) + ")";
}

std::string_view to_string(EventKind k) noexcept {
  switch (k) {
    case EventKind::AgentWake: return "AgentWake";
    case EventKind::OrderArrival: return "OrderArrival";
    case EventKind::CancelTimeout: return "CancelTimeout";
    case EventKind::WindowClose: return "WindowClose";
    case EventKind::FundamentalShock: return "FundamentalShock";
    case EventKind::ControlCommand: return "ControlCommand";
  }
  return "?";
}

std::string format_trace_line(const Event& ev) {
  std::ostringstream os;
  os << ev.id << ' ' << ev.at.step << ' ' << ev.at.seq << ' ' << to_string(ev.kind);
  std::visit(
      [&os](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, AgentPayload>) {
          os << " agent=" << p.agent;
        } else if constexpr (std::is_same_v<T, OrderPayload>) {
          os << " agent=" << p.agent << " order=" << p.order_id;
        } else if constexpr (std::is_same_v<T, WindowPayload>) {
          os << " window=" << p.index;
        } else if constexpr (std::is_same_v<T, ShockPayload>) {
          os << " delta=" << p.delta;
        } else if constexpr (std::is_same_v<T, CommandPayload>) {
          os << " command=" << p.command_id;
        }
      },
      ev.payload);
  return os.str();
}

void SimKernel::set_handler(EventKind kind, Handler h) { handlers_[kind] = std::move(h); }

std::uint64_t SimKernel::schedule(EventKind kind, SimTime at, EventPayload payload) {
  if (at < now_) {
    throw Error(ErrorCode::SchedulingInPast, "event at " + to_string(at) + " but now is " + to_string(now_));
  }
  auto& slots = used_[at.step];
  if (!slots.insert(at.seq).second) {
    throw Error(ErrorCode::DuplicateTime, "slot " + to_string(at) + " already taken");
  }
  const std::uint64_t id = next_id_++;
  queue_.push(Event{id, at, kind, std::move(payload)});
  return id;
}

std::uint64_t SimKernel::next_free_seq(std::uint64_t step, std::uint64_t base) {
  auto& cursor = band_cursor_.try_emplace({step, base}, base).first->second;
  // Same-step scheduling from inside a handler must land after the event being run.
  if (step == now_.step && cursor <= now_.seq && now_.seq >= base && now_.seq < kEndOfStepSeq) {
    cursor = now_.seq + 1;
  }
  const auto& slots = used_[step];
  while (slots.count(cursor) != 0) ++cursor;
  return cursor++;
}

std::uint64_t SimKernel::schedule_at_step(EventKind kind, std::uint64_t step, EventPayload payload) {
  if (step < now_.step) {
    throw Error(ErrorCode::SchedulingInPast, "step " + std::to_string(step) + " but now is " + to_string(now_));
  }
  return schedule(kind, SimTime{step, next_free_seq(step, kNormalSeqBase)}, std::move(payload));
}

std::uint64_t SimKernel::schedule_boundary(EventKind kind, std::uint64_t step, EventPayload payload) {
  if (step < now_.step) {
    throw Error(ErrorCode::SchedulingInPast, "step " + std::to_string(step) + " but now is " + to_string(now_));
  }
  return schedule(kind, SimTime{step, next_free_seq(step, kBoundarySeqBase)}, std::move(payload));
}

std::size_t SimKernel::run_until(std::uint64_t t_end) {
  std::size_t processed = 0;
  while (!queue_.empty() && queue_.top().at.step <= t_end) {
    Event ev = queue_.top();
    queue_.pop();
    assert(ev.at >= now_ && "event dequeued out of order");
    now_ = ev.at;
    if (trace_ != nullptr) *trace_ << format_trace_line(ev) << '\n';
    if (auto it = handlers_.find(ev.kind); it != handlers_.end() && it->second) it->second(ev);
    ++processed;
    ++processed_total_;
  }
  if (now_.step < t_end) now_ = SimTime{t_end, 0};
  // Slot bookkeeping for finished steps is no longer needed.
  used_.erase(used_.begin(), used_.lower_bound(now_.step));
  band_cursor_.erase(band_cursor_.begin(), band_cursor_.lower_bound({now_.step, 0}));
  return processed;
}

RngStream& SimKernel::rng_stream(const std::string& label) {
  auto it = streams_.find(label);
  if (it == streams_.end()) it = streams_.emplace(label, RngStream(master_seed_, label)).first;
  return it->second;
}

}  // namespace agov
