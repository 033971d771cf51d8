#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "agov/governance.hpp"

namespace agov {

using DetectorWeights = std::array<double, 4>;

struct CircuitBreaker {
  bool enabled{false};
  BreakerMetric metric{BreakerMetric::AggSpoofScore};
  double bound{1.0};

  bool operator==(const CircuitBreaker&) const = default;
};

/// Versioned mandate document. Serialized as canonical JSON; `digest` is the SHA-256
/// of the canonical form with the digest field removed.
struct PolicyDoc {
  std::uint64_t version{1};
  std::optional<FirmId> firm_id;  // nullopt = GLOBAL
  double flag_threshold{0.5};
  double block_threshold{0.8};
  DetectorWeights weights{0.25, 0.25, 0.25, 0.25};
  std::map<std::string, FilterMode> filter_modes;  // by agent kind; missing = Off
  Autonomy autonomy{Autonomy::RuleBased};
  OnFlag on_flag{OnFlag::None};
  double throttle_rate{0.1};
  double max_agent_order_rate{0.0};  // orders per step, 0 disables
  CircuitBreaker circuit_breaker;
  double penalty_beta{10.0};
  std::string issuer{"firm"};

  FilterMode filter_mode_for(const std::string& agent_kind) const;
  // Throws ValidationError on broken invariants (threshold order, weights).
  void validate() const;
  std::string digest() const;

  bool operator==(const PolicyDoc&) const = default;
};

// Values a policy may leave out; normally filled from the detector calibration.
struct PolicyDefaults {
  DetectorWeights weights{0.25, 0.25, 0.25, 0.25};
  double flag_threshold{0.5};
};

nlohmann::json to_json(const PolicyDoc& p, bool with_digest = true);
// Strict: unknown keys are a ParseError. A present digest must match.
PolicyDoc policy_from_json(const nlohmann::json& j, const PolicyDefaults& defaults = {});

void validate_weights(const DetectorWeights& w);

}  // namespace agov
