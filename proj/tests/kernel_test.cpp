#include <gtest/gtest.h>

#include <sstream>

#include "agov/error.hpp"
#include "agov/sim_kernel.hpp"

using namespace agov;

TEST(RngStream, SameLabelContinuesStream) {
  SimKernel k(42);
  const double a = k.rng_stream("zi_trader_0").uniform01();
  const double b = k.rng_stream("zi_trader_0").uniform01();
  EXPECT_NE(a, b);
  EXPECT_EQ(k.rng_stream("zi_trader_0").draws(), 2u);
}

TEST(RngStream, SameSeedSameDraws) {
  SimKernel k1(42), k2(42);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(k1.rng_stream("zi_trader_0").next_u64(), k2.rng_stream("zi_trader_0").next_u64());
  }
}

TEST(RngStream, DistinctLabelsDiffer) {
  SimKernel k(42);
  EXPECT_NE(k.rng_stream("a").next_u64(), k.rng_stream("b").next_u64());
  // One-character neighbours across many seeds too.
  for (std::uint64_t s = 0; s < 200; ++s) {
    RngStream x(s, "agent_1"), y(s, "agent_2");
    EXPECT_NE(x.next_u64(), y.next_u64()) << s;
  }
}

TEST(RngStream, AddingAStreamDoesNotPerturbAnother) {
  SimKernel k1(7), k2(7);
  k2.rng_stream("newcomer").next_u64();
  EXPECT_EQ(k1.rng_stream("zi_3").next_u64(), k2.rng_stream("zi_3").next_u64());
}

TEST(RngStream, UniformIntStaysInRange) {
  RngStream r(1, "x");
  for (int i = 0; i < 10000; ++i) {
    const auto v = r.uniform_int(-3, 4);
    ASSERT_GE(v, -3);
    ASSERT_LE(v, 4);
  }
}

TEST(RngStream, NormalMoments) {
  RngStream r(9, "n");
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal(2.0, 3.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 2.0, 0.05);
  EXPECT_NEAR(var, 9.0, 0.15);
}

TEST(SimKernel, OrdersByStepThenSeq) {
  SimKernel k(1);
  std::vector<std::uint64_t> seen;
  k.set_handler(EventKind::AgentWake, [&](const Event& e) { seen.push_back(std::get<AgentPayload>(e.payload).agent); });
  k.schedule(EventKind::AgentWake, {2, 5}, AgentPayload{3});
  k.schedule(EventKind::AgentWake, {1, 9}, AgentPayload{2});
  k.schedule(EventKind::AgentWake, {1, 1}, AgentPayload{1});
  k.run_until(10);
  EXPECT_EQ(seen, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(SimKernel, FifoAmongEqualSteps) {
  SimKernel k(1);
  std::vector<std::uint32_t> seen;
  k.set_handler(EventKind::AgentWake, [&](const Event& e) { seen.push_back(std::get<AgentPayload>(e.payload).agent); });
  for (std::uint32_t i = 0; i < 5; ++i) k.schedule_at_step(EventKind::AgentWake, 3, AgentPayload{i});
  k.run_until(3);
  EXPECT_EQ(seen, (std::vector<std::uint32_t>{0, 1, 2, 3, 4}));
}

TEST(SimKernel, BoundaryBeforeOrdinaryAndWindowCloseLast) {
  SimKernel k(1);
  std::vector<EventKind> seen;
  auto h = [&](const Event& e) { seen.push_back(e.kind); };
  k.set_handler(EventKind::AgentWake, h);
  k.set_handler(EventKind::ControlCommand, h);
  k.set_handler(EventKind::WindowClose, h);
  k.schedule(EventKind::WindowClose, {4, kEndOfStepSeq}, WindowPayload{0});
  k.schedule_at_step(EventKind::AgentWake, 4, AgentPayload{1});
  k.schedule_boundary(EventKind::ControlCommand, 4, CommandPayload{1});
  k.run_until(4);
  EXPECT_EQ(seen, (std::vector<EventKind>{EventKind::ControlCommand, EventKind::AgentWake, EventKind::WindowClose}));
}

TEST(SimKernel, RejectsPastAndDuplicateTimes) {
  SimKernel k(1);
  k.set_handler(EventKind::AgentWake, [](const Event&) {});
  k.schedule(EventKind::AgentWake, {5, kNormalSeqBase});
  try {
    k.schedule(EventKind::AgentWake, {5, kNormalSeqBase});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateTime);
  }
  k.run_until(5);
  try {
    k.schedule(EventKind::AgentWake, {4, kNormalSeqBase});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchedulingInPast);
  }
}

TEST(SimKernel, HandlerMaySchedule) {
  SimKernel k(1);
  int n = 0;
  k.set_handler(EventKind::AgentWake, [&](const Event& e) {
    ++n;
    if (e.at.step < 9) k.schedule_at_step(EventKind::AgentWake, e.at.step + 1);
  });
  k.schedule_at_step(EventKind::AgentWake, 0);
  k.run_until(100);
  EXPECT_EQ(n, 10);
  EXPECT_EQ(k.now().step, 100u);  // run_until leaves the clock at its bound
}

TEST(SimKernel, ClockNeverDecreases) {
  SimKernel k(3);
  SimTime last{};
  bool ok = true;
  auto& rng = k.rng_stream("sched");
  k.set_handler(EventKind::AgentWake, [&](const Event& e) {
    ok = ok && !(e.at < last);
    last = e.at;
    if (e.at.step < 500) k.schedule_at_step(EventKind::AgentWake, e.at.step + static_cast<std::uint64_t>(rng.uniform_int(0, 3)));
  });
  for (int i = 0; i < 5; ++i) k.schedule_at_step(EventKind::AgentWake, 0);
  k.run_until(600);
  EXPECT_TRUE(ok);
}

TEST(SimKernel, TraceIsDeterministic) {
  auto trace = [](std::uint64_t seed) {
    std::ostringstream os;
    SimKernel k(seed);
    k.set_trace(&os);
    auto& rng = k.rng_stream("t");
    k.set_handler(EventKind::AgentWake, [&](const Event& e) {
      if (e.at.step < 200) k.schedule_at_step(EventKind::AgentWake, e.at.step + 1 + static_cast<std::uint64_t>(rng.uniform_int(0, 2)),
                                              AgentPayload{static_cast<std::uint32_t>(rng.uniform_int(0, 9))});
    });
    for (int i = 0; i < 4; ++i) k.schedule_at_step(EventKind::AgentWake, 0);
    k.run_until(300);
    return os.str();
  };
  EXPECT_EQ(trace(11), trace(11));
  EXPECT_NE(trace(11), trace(12));
  EXPECT_FALSE(trace(11).empty());
}
