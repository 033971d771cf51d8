#include <gtest/gtest.h>

#include <random>

#include "agov/calibration.hpp"
#include "agov/error.hpp"
#include "support/fixtures.hpp"

using namespace agov;

namespace {

nlohmann::json set_json() {
  return nlohmann::json{{"name", "t"}, {"positive", {"spoofer_on"}}, {"negative", {"baseline"}}, {"seeds", {1, 2}}};
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoFailure;
}

}  // namespace

TEST(LabeledSet, Validation) {
  EXPECT_NO_THROW(labeled_set_from_json(set_json()));
  auto pos_only = set_json();
  pos_only["negative"] = nlohmann::json::array();
  EXPECT_EQ(code_of([&] { labeled_set_from_json(pos_only); }), ErrorCode::ValidationError);
  auto no_neg = set_json();
  no_neg.erase("negative");
  EXPECT_EQ(code_of([&] { labeled_set_from_json(no_neg); }), ErrorCode::ParseError);
  auto grid = set_json();
  grid["weight_step"] = 0.3;
  EXPECT_EQ(code_of([&] { labeled_set_from_json(grid); }), ErrorCode::ValidationError);
  auto extra = set_json();
  extra["budget"] = 1;
  EXPECT_EQ(code_of([&] { labeled_set_from_json(extra); }), ErrorCode::ParseError);
}

TEST(GridSearch, NeedsBothClasses) {
  std::vector<Sample> only_pos{{{1, 1, 1, 1}, true}};
  EXPECT_EQ(code_of([&] { grid_search(only_pos, 0.05, 0.25, 0.25); }), ErrorCode::ValidationError);
}

TEST(GridSearch, SeparableData) {
  std::vector<Sample> s;
  for (int i = 0; i < 50; ++i) s.push_back({{1.0, 0.9, 1.0, 1.0}, true});
  for (int i = 0; i < 200; ++i) s.push_back({{0.2, 0.0, 0.1, 0.0}, false});
  const auto g = grid_search(s, 0.05, 0.25, 0.05);
  EXPECT_DOUBLE_EQ(g.recall, 1.0);
  EXPECT_DOUBLE_EQ(g.fpr, 0.0);
  // Equal weights win the tie, then the highest separating threshold.
  EXPECT_EQ(g.weights, (DetectorWeights{0.25, 0.25, 0.25, 0.25}));
  EXPECT_NEAR(g.threshold, 0.95, 1e-12);
}

TEST(GridSearch, Infeasible) {
  std::vector<Sample> s{{{1, 1, 1, 1}, true}, {{1, 1, 1, 1}, false}};
  EXPECT_EQ(code_of([&] { grid_search(s, 0.05, 0.25, 0.25); }), ErrorCode::InfeasibleTarget);
}

// Best recall over the grid, found by plain enumeration.
TEST(GridSearch, RecallMatchesEnumeration) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Sample> s;
    for (int i = 0; i < 60; ++i) {
      const bool pos = i % 3 == 0;
      Sample x;
      x.positive = pos;
      for (auto& f : x.features) f = pos ? 0.3 + 0.7 * u(rng) : 0.6 * u(rng);
      s.push_back(x);
    }
    double best = -1;
    const double step = 0.25;
    for (int a = 0; a <= 4; ++a)
      for (int b = 0; a + b <= 4; ++b)
        for (int c = 0; a + b + c <= 4; ++c) {
          const double w[4] = {a * step, b * step, c * step, (4 - a - b - c) * step};
          for (int k = 1; k <= 10; ++k) {
            const double thr = k / 10.0;
            int tp = 0, fp = 0, np = 0, nn = 0;
            for (const auto& x : s) {
              const double v = w[0] * x.features[0] + w[1] * x.features[1] + w[2] * x.features[2] + w[3] * x.features[3];
              const bool hit = v >= thr - 1e-9;
              if (x.positive) {
                ++np;
                tp += hit;
              } else {
                ++nn;
                fp += hit;
              }
            }
            if (static_cast<double>(fp) / nn <= 0.05) best = std::max(best, static_cast<double>(tp) / np);
          }
        }
    const auto g = grid_search(s, 0.05, 0.25, 0.1);
    EXPECT_DOUBLE_EQ(g.recall, best) << trial;
    EXPECT_LE(g.fpr, 0.05);
  }
}

TEST(NullThreshold, PercentileAndFloor) {
  std::vector<double> zeros(100, 0.0);
  EXPECT_DOUBLE_EQ(null_threshold(zeros, 0.5), 0.5);
  std::vector<double> ramp;
  for (int i = 1; i <= 100; ++i) ramp.push_back(i / 100.0);
  EXPECT_DOUBLE_EQ(null_threshold(ramp, 0.1), 0.99);
}

TEST(Calibrate, DeterministicOnShortSet) {
  auto j = set_json();
  j["steps"] = 400;
  const auto set = labeled_set_from_json(j);
  const auto a = calibrate(set, {fixtures::source_dir()});
  const auto b = calibrate(set, {fixtures::source_dir()});
  EXPECT_EQ(a.serialize(), b.serialize());
  EXPECT_GT(a.positive_windows, 0u);
  EXPECT_GT(a.negative_windows, 0u);
  EXPECT_LE(a.fpr, 0.05);
  ASSERT_EQ(a.scenarios.size(), 2u);
  EXPECT_EQ(a.scenarios[0].rfind("spoofer_on:", 0), 0u);
}
