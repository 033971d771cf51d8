#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "agov/agents.hpp"
#include "agov/audit_ledger.hpp"
#include "agov/firm_governance.hpp"
#include "agov/policy.hpp"

namespace agov {

// ---------------------------------------------------------------------------
// Market quality

struct TradePoint {
  std::uint64_t step{0};
  Price price{0};
  Qty qty{0};
  Side aggressor{Side::Buy};
  std::optional<double> mid_before;
};

struct MetricsReport {
  std::uint64_t window{0};
  std::uint64_t first_step{0};
  std::uint64_t last_step{0};
  double volatility{0.0};
  double efficiency_dev{0.0};
  std::optional<double> discovery_halflife;
  double effective_spread{0.0};
  std::uint64_t trades{0};
};

nlohmann::json to_json(const MetricsReport& m);

// mid[k] and fundamental[k] belong to step first_step + k. Absent mids are skipped
// (returns are taken between consecutive present mids). Throws LengthMismatch.
MetricsReport market_quality(std::span<const std::optional<double>> mid, std::span<const double> fundamental,
                             std::span<const TradePoint> trades, std::span<const FundamentalShock> shocks,
                             std::uint64_t first_step = 0);

// ---------------------------------------------------------------------------
// Audit flags

enum class FlagKind { CrossFirmCollusion, MarketQualityDrift, LedgerIntegrity };
enum class FlagStatus { Open, UnderReview, Resolved, Dismissed };
enum class ReviewVerdict { Review, Resolve, Dismiss };

std::string_view to_string(FlagKind k) noexcept;
std::string_view to_string(FlagStatus s) noexcept;
std::string_view to_string(ReviewVerdict v) noexcept;
ReviewVerdict parse_review_verdict(std::string_view s);

struct AuditFlag {
  std::uint64_t id{0};
  SimTime raised_at;
  std::uint64_t window{0};
  FlagKind kind{FlagKind::CrossFirmCollusion};
  std::string reason;
  nlohmann::json evidence = nlohmann::json::object();
  FlagStatus status{FlagStatus::Open};
  std::string note;

  bool terminal() const noexcept { return status == FlagStatus::Resolved || status == FlagStatus::Dismissed; }
};

nlohmann::json to_json(const AuditFlag& f);

struct CollusionParams {
  std::uint64_t lag{2};
  double threshold{0.5};
  // Number of most recent windows whose series are concatenated for detection.
  std::uint64_t history_windows{4};
};

/// Layer-3 block. Sees only serialized FirmAggregates crossing the firm boundary.
class ExternalRegulator {
public:
  ExternalRegulator(std::vector<FirmId> firms, CollusionParams params, AuditLedger* ledger);

  // One serialized aggregate per firm for `window`. Throws DuplicateWindow on a
  // repeated (firm, window); a firm missing for more than two consecutive windows
  // raises a MarketQualityDrift flag.
  void ingest(std::uint64_t window, std::span<const std::string> messages, SimTime at);

  // Correlates every ordered firm pair over the stored history; new flags are returned.
  std::vector<AuditFlag> detect_cross_firm(std::uint64_t window, SimTime at);
  // Directed firm-level score as used by detect_cross_firm (exposed for calibration).
  double pair_score(FirmId injector_side, FirmId executor_side, std::uint64_t window) const;
  std::vector<double> pair_scores(std::uint64_t window) const;

  // Stages `doc` on every targeted firm (GLOBAL = all). Throws StaleVersion when
  // doc.version is not above the version in force or staged at any target.
  std::uint64_t publish_policy(PolicyDoc doc, std::span<FirmGovernance* const> firms, SimTime at);

  const AuditFlag& review_flag(std::uint64_t flag_id, ReviewVerdict verdict, const std::string& note,
                               DecisionSource source, SimTime at);

  const std::vector<AuditFlag>& flags() const noexcept { return flags_; }
  const std::map<std::pair<FirmId, std::uint64_t>, FirmAggregate>& store() const noexcept { return store_; }
  const CollusionParams& params() const noexcept { return params_; }
  void set_collusion_threshold(double t) noexcept { params_.threshold = t; }

private:
  AuditFlag& raise(FlagKind kind, std::string reason, nlohmann::json evidence, std::uint64_t window, SimTime at);
  void log_transition(const AuditFlag& f, FlagStatus from, DecisionSource source, SimTime at);
  struct Bursts {
    std::vector<std::uint64_t> large_cancel;
    std::vector<std::uint64_t> aggressive;
  };
  // Burst steps over the last history_windows windows ending at `window`; each
  // window uses its own large-order threshold.
  Bursts history(FirmId firm, std::uint64_t window) const;

  std::vector<FirmId> firms_;
  CollusionParams params_;
  AuditLedger* ledger_;
  std::map<std::pair<FirmId, std::uint64_t>, FirmAggregate> store_;
  std::map<FirmId, std::uint64_t> missing_streak_;
  std::vector<AuditFlag> flags_;
  std::uint64_t next_flag_id_{1};
};

}  // namespace agov
