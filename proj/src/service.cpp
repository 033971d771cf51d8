#include "agov/service.hpp"

#include <chrono>

#include "httplib.h"

#include "agov/policy.hpp"

namespace agov {

void EventHub::publish(const std::string& type, const nlohmann::json& data) {
  std::string msg = "event: " + type + "\ndata: " + data.dump() + "\n\n";
  {
    std::lock_guard lk(mu_);
    if (closed_) return;
    ring_.push_back(std::move(msg));
    if (ring_.size() > capacity_) {
      ring_.pop_front();
      ++first_;
    }
  }
  cv_.notify_all();
}

void EventHub::close() {
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::uint64_t EventHub::head() const {
  std::lock_guard lk(mu_);
  return first_ + ring_.size();
}

std::optional<std::string> EventHub::next(std::uint64_t& cursor, std::chrono::milliseconds wait) {
  std::unique_lock lk(mu_);
  auto end = [&] { return first_ + ring_.size(); };
  cv_.wait_for(lk, wait, [&] { return closed_ || cursor < end(); });
  std::string out;
  if (cursor < first_) {
    out += ": skipped " + std::to_string(first_ - cursor) + " events\n\n";
    cursor = first_;
  }
  // Cap one chunk so a big backlog does not hold the lock for long.
  for (int n = 0; cursor < end() && n < 512; ++n, ++cursor) out += ring_[cursor - first_];
  if (out.empty() && closed_) return std::nullopt;
  return out;
}

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::ValidationError:
    case ErrorCode::InvalidCommand:
    case ErrorCode::InvalidWeights:
      return 400;
    case ErrorCode::UnknownAgent:
    case ErrorCode::UnknownFlag:
      return 404;
    case ErrorCode::StaleVersion:
    case ErrorCode::IllegalTransition:
      return 409;
    default:
      return 500;
  }
}

nlohmann::json error_body(ErrorCode code, const std::string& message) {
  return {{"code", to_string(code)}, {"message", message}};
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), error_body(code, message));
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("body is not JSON: ") + e.what());
  }
}

}  // namespace

Service::Service(Scenario scenario, ServiceOptions options)
    : opts_(std::move(options)), paused_(opts_.start_paused) {
  sim_ = std::make_unique<Simulation>(std::move(scenario), opts_.run);
  sim_->set_sink([this](const std::string& type, const nlohmann::json& data) { hub_.publish(type, data); });
  http_ = std::make_unique<httplib::Server>();
  // httplib defaults to SO_REUSEPORT, which lets a second server share the port.
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
  auto guarded = [this](auto fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.detail());
      } catch (const std::exception& e) {
        send_error(res, ErrorCode::ValidationError, e.what());
      }
    };
  };
  auto& s = *http_;

  s.Get("/state", guarded([this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lk(mu_);
    auto j = sim_->state_json();
    j["finished"] = result_.has_value();
    j["paused"] = paused_;
    send_json(res, 200, j);
  }));

  s.Get("/flags", guarded([this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lk(mu_);
    send_json(res, 200, sim_->flags_json());
  }));

  s.Get("/pending", guarded([this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lk(mu_);
    send_json(res, 200, sim_->pending_json());
  }));

  s.Get("/ledger/head", guarded([this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lk(mu_);
    send_json(res, 200, sim_->ledger_head_json());
  }));

  s.Get("/report", guarded([this](const httplib::Request&, httplib::Response& res) {
    std::lock_guard lk(mu_);
    if (!result_) {
      send_json(res, 409, error_body(ErrorCode::ValidationError, "run still in progress"));
      return;
    }
    res.status = 200;
    res.set_content(result_->report_text, "application/json");
  }));

  s.Post("/control", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto cmd = command_from_json(parse_body(req));
    std::lock_guard lk(mu_);
    if (result_) throw Error(ErrorCode::InvalidCommand, "run has finished");
    const auto id = sim_->enqueue(cmd);
    send_json(res, 202, {{"command_id", id}, {"applies_at_step", sim_->next_step()}});
  }));

  s.Post("/policy", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    std::lock_guard lk(mu_);
    if (result_) throw Error(ErrorCode::InvalidCommand, "run has finished");
    const auto& cal = sim_->scenario().calibration;
    PolicyDoc doc = policy_from_json(body, PolicyDefaults{cal.weights, cal.flag_threshold});
    const auto version = doc.version;
    sim_->submit_policy(std::move(doc), DecisionSource::Human);
    send_json(res, 202, {{"version", version}, {"applies_at_step", sim_->next_step()}});
  }));

  s.Post(R"(/flags/(\d+)/review)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    if (!body.is_object() || !body.contains("verdict") || !body.at("verdict").is_string()) {
      throw Error(ErrorCode::ParseError, "review: missing field 'verdict'");
    }
    for (const auto& [k, v] : body.items()) {
      if (k != "verdict" && k != "note") throw Error(ErrorCode::ParseError, "review: unknown field '" + k + "'");
    }
    const auto verdict = parse_review_verdict(body.at("verdict").get<std::string>());
    const std::string note = body.value("note", std::string{});
    const auto id = std::stoull(req.matches[1].str());
    std::lock_guard lk(mu_);
    const auto& f = sim_->review_flag(id, verdict, note, DecisionSource::Human);
    send_json(res, 200, to_json(f));
  }));

  s.Post("/run", guarded([this](const httplib::Request&, httplib::Response& res) {
    resume();
    send_json(res, 200, {{"paused", false}});
  }));

  s.Get("/telemetry/stream", [this](const httplib::Request& req, httplib::Response& res) {
    // ?from=0 replays what the ring still holds; default is live only.
    std::uint64_t cursor = req.has_param("from") ? std::stoull(req.get_param_value("from")) : hub_.head();
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, cursor](std::size_t, httplib::DataSink& sink) mutable {
      while (!stopping_) {
        auto chunk = hub_.next(cursor, std::chrono::milliseconds(250));
        if (!chunk) {
          sink.done();
          return true;
        }
        if (chunk->empty()) chunk = ": keepalive\n\n";
        if (!sink.write(chunk->data(), chunk->size())) return false;
        return true;
      }
      return false;
    });
  });
}

void Service::start() {
  if (opts_.port == 0) {
    port_ = http_->bind_to_any_port(opts_.host);
    if (port_ <= 0) throw Error(ErrorCode::AddressInUse, "cannot bind " + opts_.host);
  } else {
    if (!http_->bind_to_port(opts_.host, opts_.port)) {
      throw Error(ErrorCode::AddressInUse, opts_.host + ":" + std::to_string(opts_.port));
    }
    port_ = opts_.port;
  }
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  // stop() before the accept loop is up would leave listen running forever.
  http_->wait_until_ready();
  sim_thread_ = std::thread([this] { loop(); });
}

void Service::loop() {
  while (!stopping_) {
    {
      std::unique_lock lk(mu_);
      run_cv_.wait(lk, [this] { return !paused_ || stopping_; });
      if (stopping_) return;
      if (sim_->done()) {
        result_ = sim_->finish();
        hub_.publish("finished", {{"steps", sim_->scenario().steps}, {"head_hash", result_->report["ledger"]["head_hash"]}});
        break;
      }
      sim_->step();
    }
    if (opts_.pace_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(opts_.pace_ms));
  }
  done_cv_.notify_all();
}

void Service::resume() {
  {
    std::lock_guard lk(mu_);
    paused_ = false;
  }
  run_cv_.notify_all();
}

bool Service::finished() const {
  std::lock_guard lk(mu_);
  return result_.has_value();
}

void Service::wait_finished() {
  std::unique_lock lk(mu_);
  done_cv_.wait(lk, [this] { return result_.has_value() || stopping_; });
}

std::optional<std::string> Service::report_text() const {
  std::lock_guard lk(mu_);
  if (!result_) return std::nullopt;
  return result_->report_text;
}

void Service::stop() {
  if (stopping_.exchange(true)) return;
  run_cv_.notify_all();
  done_cv_.notify_all();
  hub_.close();
  if (http_) http_->stop();
  if (sim_thread_.joinable()) sim_thread_.join();
  if (http_thread_.joinable()) http_thread_.join();
}

}  // namespace agov
