#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "agov/agents.hpp"
#include "agov/policy.hpp"

namespace agov {

struct WindowConfig {
  std::uint64_t window_steps{50};  // self-reg sliding window W
  std::uint64_t eval_every{25};    // evaluation cadence; also the firm/regulator tumbling window
  std::uint64_t short_lifetime_steps{10};
  double large_order_multiplier{5.0};
  Qty min_large_qty{25};
  std::uint64_t collusion_lag{2};
  std::uint64_t collusion_history_windows{4};
};

enum class ApproverMode { ApproveAll, RejectAll, ApproveAfterK, Manual };
std::string_view to_string(ApproverMode m) noexcept;

struct ApproverConfig {
  ApproverMode mode{ApproverMode::ApproveAll};
  std::uint64_t delay_steps{0};  // ApproveAfterK
};

struct GovernanceConfig {
  bool self_regulation{true};
  bool firm{true};
  bool regulator{true};
  ApproverConfig approver;
  std::optional<double> collusion_threshold;  // overrides the calibration file
};

struct FirmConfig {
  FirmId firm_id{0};
  PolicyDoc policy;
  std::vector<AgentConfig> agents;
};

struct ScheduledPolicy {
  std::uint64_t step{0};
  PolicyDoc policy;
};

struct Calibration {
  DetectorWeights weights{0.25, 0.25, 0.25, 0.25};
  double flag_threshold{0.5};
  double collusion_threshold{0.5};
  double recall{0.0};
  double fpr{0.0};
  std::uint64_t positive_windows{0};
  std::uint64_t negative_windows{0};
  std::string source;  // free text, e.g. the labeled set that produced it
  std::vector<std::string> scenarios;  // name:sha256 of each labeled scenario

  std::string serialize() const;
};

// key=value lines; '#' starts a comment. Throws ParseError.
Calibration parse_calibration(const std::string& text);
Calibration load_calibration(const std::filesystem::path& path);

struct Scenario {
  std::string name;
  std::uint64_t master_seed{0};
  std::uint64_t steps{1000};
  std::size_t book_depth{10};
  FundamentalParams fundamental;
  WindowConfig windows;
  GovernanceConfig governance;
  std::vector<FirmConfig> firms;
  std::vector<ScheduledPolicy> policy_schedule;
  Calibration calibration;
  std::string calibration_hash;  // sha256 of the calibration file bytes, empty if none
  std::optional<std::filesystem::path> calibration_file;

  nlohmann::json document;  // validated source document with master_seed as run

  std::vector<AgentConfig> all_agents() const;
  const FirmConfig& firm(FirmId id) const;
  std::string hash() const;  // sha256 of the canonical document
  void set_seed(std::uint64_t seed);
};

// Strict: unknown keys are a ParseError naming them; broken invariants are a
// ValidationError. `base_dir` resolves a relative calibration_file.
Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

// Looks for `name_or_path` as a file, then as scenarios/<name>.json under the
// given search roots.
std::filesystem::path resolve_scenario(const std::string& name_or_path,
                                       const std::vector<std::filesystem::path>& roots);

}  // namespace agov
