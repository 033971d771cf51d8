#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "agov/scenario.hpp"
#include "agov/simulation.hpp"

namespace agov {

// Labeled scenario set for `calibrate`. Positive scenarios contain a scripted
// spoofer, negative ones only honest traders.
struct LabeledSet {
  std::string name;
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> null_seeds;  // negative scenarios again, for the collusion null
  double max_fpr{0.05};
  double weight_step{0.05};
  double threshold_step{0.05};
  double min_collusion_threshold{0.5};
  std::optional<std::uint64_t> steps;  // overrides scenario length when set
};

LabeledSet labeled_set_from_json(const nlohmann::json& j);
LabeledSet load_labeled_set(const std::filesystem::path& path);

struct Sample {
  std::array<double, 4> features{};
  bool positive{false};
};

// Windows scored by the per-agent blocks: scripted-spoofer windows that contain
// an inject step are positive; honest (ZI, market maker) windows with any
// activity are negative when `honest_negative` is set.
std::vector<Sample> label_windows(const RunResult& run, std::uint64_t window_steps, bool honest_negative);

struct GridPoint {
  DetectorWeights weights{};
  double threshold{0.0};
  double recall{0.0};
  double fpr{0.0};
  double margin{0.0};
};

// Recall is maximized subject to fpr <= max_fpr. Ties prefer lower fpr, then
// the larger smallest weight (no feature left unused), then the higher
// threshold, then a threshold further from both the positive 5th percentile and
// the negative 99th percentile. Throws InfeasibleTarget when nothing meets the
// fpr bound; the message carries the best point found.
GridPoint grid_search(std::span<const Sample> samples, double max_fpr, double weight_step, double threshold_step);

// 99th percentile (nearest rank) of the null scores, floored at `floor`.
double null_threshold(std::vector<double> scores, double floor);

using Progress = std::function<void(const std::string&)>;

Calibration calibrate(const LabeledSet& set, const std::vector<std::filesystem::path>& roots,
                      const Progress& progress = {});

}  // namespace agov
