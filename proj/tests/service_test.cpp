#include <gtest/gtest.h>

#include "httplib.h"

#include "agov/error.hpp"
#include "agov/service.hpp"
#include "support/fixtures.hpp"

using namespace agov;

namespace {

Scenario short_baseline(std::uint64_t steps = 200) {
  return fixtures::scenario("baseline", 42, [&](nlohmann::json& j) { j["steps"] = steps; });
}

ServiceOptions paused() {
  ServiceOptions o;
  o.start_paused = true;
  return o;
}

nlohmann::json body_of(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

}  // namespace

TEST(Service, StateAtStepZeroWhilePaused) {
  Service svc(short_baseline(), paused());
  svc.start();
  httplib::Client c("127.0.0.1", svc.port());
  auto r = c.Get("/state");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const auto j = body_of(r);
  EXPECT_EQ(j.at("step"), 0);
  EXPECT_EQ(j.at("paused"), true);
  EXPECT_EQ(j.at("agents").size(), 20u);

  auto head = c.Get("/ledger/head");
  ASSERT_TRUE(head);
  EXPECT_EQ(body_of(head).at("entries"), 0);
  auto flags = c.Get("/flags");
  ASSERT_TRUE(flags);
  EXPECT_TRUE(body_of(flags).empty());
}

TEST(Service, ControlQuarantineIsLogged) {
  Service svc(short_baseline(), paused());
  svc.start();
  httplib::Client c("127.0.0.1", svc.port());
  auto r = c.Post("/control", R"({"command":"quarantine","subject":7})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 202);
  EXPECT_EQ(body_of(r).at("applies_at_step"), 0);

  auto bad = c.Post("/control", R"({"command":"quarantine","subject":999})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 404);
  EXPECT_EQ(body_of(bad).at("code"), "UnknownAgent");

  auto junk = c.Post("/control", "{not json", "application/json");
  ASSERT_TRUE(junk);
  EXPECT_EQ(junk->status, 400);
  EXPECT_TRUE(body_of(junk).contains("message"));

  ASSERT_TRUE(c.Post("/run", "", "application/json"));
  svc.wait_finished();
  const auto rep = nlohmann::json::parse(*svc.report_text());
  EXPECT_EQ(rep.at("ledger_kinds").at("HumanDecision"), 1);
  auto state = body_of(c.Get("/state"));
  for (const auto& a : state.at("agents"))
    if (a.at("agent_id") == 7) EXPECT_TRUE(a.at("quarantined").get<bool>());
}

TEST(Service, StalePolicyConflict) {
  Service svc(short_baseline(), paused());
  svc.start();
  httplib::Client c("127.0.0.1", svc.port());
  auto ok = c.Post("/policy", R"({"version":2,"firm_id":1,"on_flag":"Quarantine"})", "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 202);
  auto stale = c.Post("/policy", R"({"version":2,"firm_id":1})", "application/json");
  ASSERT_TRUE(stale);
  EXPECT_EQ(stale->status, 409);
  const auto e = body_of(stale);
  EXPECT_EQ(e.at("code"), "StaleVersion");
  EXPECT_TRUE(e.at("message").is_string());
}

TEST(Service, ReportOnlyAfterFinish) {
  Service svc(short_baseline(100), paused());
  svc.start();
  httplib::Client c("127.0.0.1", svc.port());
  auto early = c.Get("/report");
  ASSERT_TRUE(early);
  EXPECT_EQ(early->status, 409);
  svc.resume();
  svc.wait_finished();
  auto late = c.Get("/report");
  ASSERT_TRUE(late);
  EXPECT_EQ(late->status, 200);
  EXPECT_EQ(late->body, run_scenario(short_baseline(100)).report_text);
}

TEST(Service, FlagReview) {
  auto sc = fixtures::scenario("colluders_two_firms", 3, [](nlohmann::json& j) { j["steps"] = 800; });
  Service svc(sc, ServiceOptions{});
  svc.start();
  svc.wait_finished();
  httplib::Client c("127.0.0.1", svc.port());
  const auto flags = body_of(c.Get("/flags"));
  ASSERT_FALSE(flags.empty());
  const auto id = flags[0].at("id").get<std::uint64_t>();
  const std::string path = "/flags/" + std::to_string(id) + "/review";
  auto r = c.Post(path, R"({"verdict":"Resolve","note":"seen"})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(body_of(r).at("status"), "Resolved");
  auto again = c.Post(path, R"({"verdict":"Dismiss"})", "application/json");
  ASSERT_TRUE(again);
  EXPECT_EQ(again->status, 409);
  auto missing = c.Post("/flags/99999/review", R"({"verdict":"Dismiss"})", "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  auto nov = c.Post(path, R"({"note":"x"})", "application/json");
  ASSERT_TRUE(nov);
  EXPECT_EQ(nov->status, 400);
}

TEST(Service, TelemetryStream) {
  Service svc(short_baseline(300), paused());
  svc.start();
  svc.resume();
  svc.wait_finished();
  httplib::Client c("127.0.0.1", svc.port());
  std::string got;
  auto r = c.Get("/telemetry/stream?from=0", [&](const char* data, std::size_t n) {
    got.append(data, n);
    return got.find("event: finished") == std::string::npos;
  });
  EXPECT_NE(got.find("event: step\ndata: "), std::string::npos);
  EXPECT_NE(got.find("event: telemetry\n"), std::string::npos);
  EXPECT_NE(got.find("event: finished\n"), std::string::npos);
}

TEST(Service, SecondBindFails) {
  Service a(short_baseline(), paused());
  a.start();
  ServiceOptions o = paused();
  o.port = a.port();
  Service b(short_baseline(), o);
  try {
    b.start();
    FAIL() << "second bind succeeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AddressInUse);
  }
}

TEST(Service, MatchesHeadlessReport) {
  const auto sc = fixtures::scenario("spoofer_on", 7, [](nlohmann::json& j) { j["steps"] = 400; });
  Service svc(sc, ServiceOptions{});
  svc.start();
  svc.wait_finished();
  EXPECT_EQ(*svc.report_text(), run_scenario(sc).report_text);
}
