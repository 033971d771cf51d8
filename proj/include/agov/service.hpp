#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "json.hpp"

#include "agov/error.hpp"
#include "agov/scenario.hpp"
#include "agov/simulation.hpp"

namespace httplib {
class Server;
}

namespace agov {

// Fan-out of server-sent events. Each subscriber keeps its own cursor into a
// bounded ring; a slow reader that falls off the ring skips ahead.
class EventHub {
public:
  explicit EventHub(std::size_t capacity = 1 << 16) : capacity_(capacity) {}

  void publish(const std::string& type, const nlohmann::json& data);
  void close();

  // Blocks up to `wait` for messages past `cursor`. Returns the formatted SSE
  // text (possibly empty) and advances the cursor. nullopt once closed and drained.
  std::optional<std::string> next(std::uint64_t& cursor, std::chrono::milliseconds wait);
  std::uint64_t head() const;

private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> ring_;
  std::uint64_t first_{0};  // sequence number of ring_.front()
  std::size_t capacity_;
  bool closed_{false};
};

struct ServiceOptions {
  std::string host{"127.0.0.1"};
  int port{0};  // 0 picks a free port
  std::uint64_t pace_ms{0};
  bool start_paused{false};
  RunOptions run;
};

int http_status(ErrorCode code) noexcept;
nlohmann::json error_body(ErrorCode code, const std::string& message);

// Simulation loop on one thread; HTTP handlers on the server's pool. Every
// touch of the simulation goes through `mu_`.
class Service {
public:
  Service(Scenario scenario, ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and starts both threads. Throws AddressInUse.
  void start();
  void stop();
  // Blocks until the simulation has run every step.
  void wait_finished();
  int port() const noexcept { return port_; }
  bool finished() const;
  // Report of the finished run; nullopt while running.
  std::optional<std::string> report_text() const;
  void resume();

private:
  void install_routes();
  void loop();

  ServiceOptions opts_;
  std::unique_ptr<Simulation> sim_;
  std::unique_ptr<httplib::Server> http_;
  EventHub hub_;
  mutable std::mutex mu_;
  std::condition_variable done_cv_;
  std::condition_variable run_cv_;
  std::optional<RunResult> result_;
  bool paused_{false};
  std::atomic<bool> stopping_{false};
  int port_{0};
  std::thread sim_thread_;
  std::thread http_thread_;
};

}  // namespace agov
