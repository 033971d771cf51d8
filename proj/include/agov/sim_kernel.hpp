#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <queue>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "agov/rng.hpp"

namespace agov {

struct SimTime {
  std::uint64_t step{0};
  std::uint64_t seq{0};

  auto operator<=>(const SimTime&) const = default;
};

std::string to_string(const SimTime& t);

enum class EventKind { AgentWake, OrderArrival, CancelTimeout, WindowClose, FundamentalShock, ControlCommand };

std::string_view to_string(EventKind k) noexcept;

// Intra-step sequence bands. Boundary work (control commands, shocks) sorts before
// ordinary events, window closes sort after everything else in the step.
inline constexpr std::uint64_t kBoundarySeqBase = 0;
inline constexpr std::uint64_t kNormalSeqBase = 1'000'000;
inline constexpr std::uint64_t kEndOfStepSeq = UINT64_MAX / 2;

struct NoPayload {};
struct AgentPayload { std::uint32_t agent{0}; };
struct OrderPayload { std::uint32_t agent{0}; std::uint64_t order_id{0}; };
struct WindowPayload { std::uint64_t index{0}; };
struct ShockPayload { double delta{0.0}; };
struct CommandPayload { std::uint64_t command_id{0}; };

using EventPayload = std::variant<NoPayload, AgentPayload, OrderPayload, WindowPayload, ShockPayload, CommandPayload>;

struct Event {
  std::uint64_t id{0};
  SimTime at;
  EventKind kind{EventKind::AgentWake};
  EventPayload payload;
};

// One line per event, fields in fixed order: id step seq kind payload...
std::string format_trace_line(const Event& ev);

/// Discrete-event kernel: virtual clock, ordered queue and named random streams.
class SimKernel {
public:
  using Handler = std::function<void(const Event&)>;

  explicit SimKernel(std::uint64_t master_seed = 0) : master_seed_(master_seed) {}

  SimKernel(const SimKernel&) = delete;
  SimKernel& operator=(const SimKernel&) = delete;

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  SimTime now() const noexcept { return now_; }

  void set_handler(EventKind kind, Handler h);

  // Explicit timestamp. Throws SchedulingInPast / DuplicateTime.
  std::uint64_t schedule(EventKind kind, SimTime at, EventPayload payload = NoPayload{});
  // Next free ordinary slot in `step` (FIFO among equal steps).
  std::uint64_t schedule_at_step(EventKind kind, std::uint64_t step, EventPayload payload = NoPayload{});
  // Next free boundary slot in `step`; sorts before ordinary events of that step.
  std::uint64_t schedule_boundary(EventKind kind, std::uint64_t step, EventPayload payload = NoPayload{});

  std::size_t run_until(std::uint64_t t_end);

  std::size_t pending() const noexcept { return queue_.size(); }
  std::uint64_t processed_total() const noexcept { return processed_total_; }

  // Continues the same stream on repeated calls with the same label.
  RngStream& rng_stream(const std::string& label);

  void set_trace(std::ostream* out) noexcept { trace_ = out; }

private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const noexcept { return a.at > b.at; }
  };

  std::uint64_t next_free_seq(std::uint64_t step, std::uint64_t base);

  std::uint64_t master_seed_;
  SimTime now_{};
  std::uint64_t next_id_{1};
  std::uint64_t processed_total_{0};
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  // Occupied (step, seq) slots for steps not yet fully processed.
  std::map<std::uint64_t, std::unordered_set<std::uint64_t>> used_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> band_cursor_;
  std::map<EventKind, Handler> handlers_;
  std::map<std::string, RngStream> streams_;
  std::ostream* trace_{nullptr};
};

}  // namespace agov
