#include "agov/external_regulator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "agov/error.hpp"

namespace agov {

nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json j{{"window", m.window},
                   {"first_step", m.first_step},
                   {"last_step", m.last_step},
                   {"volatility", m.volatility},
                   {"efficiency_dev", m.efficiency_dev},
                   {"effective_spread", m.effective_spread},
                   {"trades", m.trades}};
  j["discovery_halflife"] = m.discovery_halflife ? nlohmann::json(*m.discovery_halflife) : nlohmann::json(nullptr);
  return j;
}

MetricsReport market_quality(std::span<const std::optional<double>> mid, std::span<const double> fundamental,
                             std::span<const TradePoint> trades, std::span<const FundamentalShock> shocks,
                             std::uint64_t first_step) {
  if (mid.size() != fundamental.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "mid has " + std::to_string(mid.size()) + " steps, fundamental " + std::to_string(fundamental.size()));
  }
  MetricsReport m;
  m.first_step = first_step;
  m.last_step = mid.empty() ? first_step : first_step + mid.size() - 1;

  std::vector<double> returns;
  std::optional<double> prev;
  double dev_sum = 0.0;
  std::size_t dev_n = 0;
  for (std::size_t k = 0; k < mid.size(); ++k) {
    if (!mid[k]) continue;
    if (prev) returns.push_back(std::log(*mid[k] / *prev));
    prev = mid[k];
    dev_sum += std::abs(*mid[k] - fundamental[k]);
    ++dev_n;
  }
  if (!returns.empty()) {
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    m.volatility = std::sqrt(var / static_cast<double>(returns.size()));
  }
  m.efficiency_dev = dev_n == 0 ? 0.0 : dev_sum / static_cast<double>(dev_n);

  double spread_sum = 0.0;
  std::size_t spread_n = 0;
  for (const auto& t : trades) {
    if (t.step < m.first_step || t.step > m.last_step || mid.empty()) continue;
    ++m.trades;
    if (!t.mid_before) continue;
    const double sign = t.aggressor == Side::Buy ? 1.0 : -1.0;
    spread_sum += (static_cast<double>(t.price) - *t.mid_before) * sign;
    ++spread_n;
  }
  m.effective_spread = spread_n == 0 ? 0.0 : std::max(0.0, spread_sum / static_cast<double>(spread_n));

  double hl_sum = 0.0;
  std::size_t hl_n = 0;
  for (const auto& s : shocks) {
    if (mid.empty() || s.step < m.first_step || s.step > m.last_step) continue;
    std::size_t k = s.step - first_step;
    while (k < mid.size() && !mid[k]) ++k;
    if (k == mid.size()) continue;
    const std::size_t k0 = k;
    const double half = std::abs(*mid[k0] - fundamental[k0]) / 2.0;
    for (; k < mid.size(); ++k) {
      if (mid[k] && std::abs(*mid[k] - fundamental[k]) <= half) {
        hl_sum += static_cast<double>(k - (s.step - first_step));
        ++hl_n;
        break;
      }
    }
  }
  if (hl_n > 0) m.discovery_halflife = hl_sum / static_cast<double>(hl_n);
  return m;
}

std::string_view to_string(FlagKind k) noexcept {
  switch (k) {
    case FlagKind::CrossFirmCollusion: return "CrossFirmCollusion";
    case FlagKind::MarketQualityDrift: return "MarketQualityDrift";
    case FlagKind::LedgerIntegrity: return "LedgerIntegrity";
  }
  return "?";
}

std::string_view to_string(FlagStatus s) noexcept {
  switch (s) {
    case FlagStatus::Open: return "Open";
    case FlagStatus::UnderReview: return "UnderReview";
    case FlagStatus::Resolved: return "Resolved";
    case FlagStatus::Dismissed: return "Dismissed";
  }
  return "?";
}

std::string_view to_string(ReviewVerdict v) noexcept {
  switch (v) {
    case ReviewVerdict::Review: return "Review";
    case ReviewVerdict::Resolve: return "Resolve";
    case ReviewVerdict::Dismiss: return "Dismiss";
  }
  return "?";
}

ReviewVerdict parse_review_verdict(std::string_view s) {
  if (s == "Review") return ReviewVerdict::Review;
  if (s == "Resolve") return ReviewVerdict::Resolve;
  if (s == "Dismiss") return ReviewVerdict::Dismiss;
  throw Error(ErrorCode::ParseError, "unknown review verdict '" + std::string(s) + "'");
}

nlohmann::json to_json(const AuditFlag& f) {
  return nlohmann::json{{"id", f.id},
                        {"raised_at", {{"step", f.raised_at.step}, {"seq", f.raised_at.seq}}},
                        {"window", f.window},
                        {"kind", to_string(f.kind)},
                        {"reason", f.reason},
                        {"evidence", f.evidence},
                        {"status", to_string(f.status)},
                        {"note", f.note}};
}

ExternalRegulator::ExternalRegulator(std::vector<FirmId> firms, CollusionParams params, AuditLedger* ledger)
    : firms_(std::move(firms)), params_(params), ledger_(ledger) {
  std::sort(firms_.begin(), firms_.end());
  for (FirmId f : firms_) missing_streak_[f] = 0;
}

void ExternalRegulator::ingest(std::uint64_t window, std::span<const std::string> messages, SimTime at) {
  std::set<FirmId> seen;
  std::vector<FirmAggregate> parsed;
  for (const auto& m : messages) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(m);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("firm aggregate: ") + e.what());
    }
    auto agg = firm_aggregate_from_json(j);
    if (agg.window.index != window) {
      throw Error(ErrorCode::ValidationError, "aggregate for window " + std::to_string(agg.window.index) +
                                                  " delivered at window " + std::to_string(window));
    }
    if (!seen.insert(agg.firm_id).second || store_.count({agg.firm_id, window}) != 0) {
      throw Error(ErrorCode::DuplicateWindow,
                  "firm " + std::to_string(agg.firm_id) + " window " + std::to_string(window));
    }
    parsed.push_back(std::move(agg));
  }
  for (auto& agg : parsed) {
    const FirmId f = agg.firm_id;
    store_.emplace(std::make_pair(f, window), std::move(agg));
  }
  for (FirmId f : firms_) {
    auto& streak = missing_streak_[f];
    if (seen.count(f) != 0) {
      streak = 0;
      continue;
    }
    // Grace of two windows; one flag per missing streak.
    if (++streak == 3) {
      raise(FlagKind::MarketQualityDrift, "missing telemetry",
            nlohmann::json{{"firm_id", f}, {"missing_windows", streak}}, window, at);
    }
  }
}

ExternalRegulator::Bursts ExternalRegulator::history(FirmId firm, std::uint64_t window) const {
  Bursts out;
  const std::uint64_t h = std::max<std::uint64_t>(1, params_.history_windows);
  const std::uint64_t from = window + 1 >= h ? window + 1 - h : 0;
  for (std::uint64_t w = from; w <= window; ++w) {
    auto it = store_.find({firm, w});
    if (it == store_.end()) continue;
    const auto& a = it->second;
    const Qty theta = std::max<Qty>(1, a.large_qty_threshold);
    for (auto s : burst_steps(a.large_cancel_series, a.window.first_step, theta)) out.large_cancel.push_back(s);
    for (auto s : burst_steps(a.aggressive_series, a.window.first_step, theta)) out.aggressive.push_back(s);
  }
  return out;
}

double ExternalRegulator::pair_score(FirmId a, FirmId b, std::uint64_t window) const {
  const auto ha = history(a, window);
  if (ha.large_cancel.empty()) return 0.0;
  const auto hb = history(b, window);
  return burst_correlation(ha.large_cancel, hb.aggressive, params_.lag);
}

std::vector<double> ExternalRegulator::pair_scores(std::uint64_t window) const {
  std::vector<double> out;
  for (FirmId a : firms_) {
    for (FirmId b : firms_) {
      if (a != b) out.push_back(pair_score(a, b, window));
    }
  }
  return out;
}

std::vector<AuditFlag> ExternalRegulator::detect_cross_firm(std::uint64_t window, SimTime at) {
  std::vector<AuditFlag> raised;
  if (firms_.size() < 2) return raised;
  for (FirmId a : firms_) {
    for (FirmId b : firms_) {
      if (a == b) continue;
      const double score = pair_score(a, b, window);
      if (score < params_.threshold || score <= 0.0) continue;
      const bool already = std::any_of(flags_.begin(), flags_.end(), [&](const AuditFlag& f) {
        return f.kind == FlagKind::CrossFirmCollusion && !f.terminal() &&
               f.evidence.at("firms") == nlohmann::json::array({a, b});
      });
      if (already) continue;

      // Pseudonyms most active on each side over the same history.
      std::map<Pseudonym, Qty> inj, exe;
      const std::uint64_t h = std::max<std::uint64_t>(1, params_.history_windows);
      for (std::uint64_t w = window + 1 >= h ? window + 1 - h : 0; w <= window; ++w) {
        if (auto it = store_.find({a, w}); it != store_.end()) {
          for (const auto& c : it->second.clusters) inj[c.pseudonym] += c.large_cancelled_qty;
        }
        if (auto it = store_.find({b, w}); it != store_.end()) {
          for (const auto& c : it->second.clusters) exe[c.pseudonym] += c.aggressive_qty;
        }
      }
      auto top = [](const std::map<Pseudonym, Qty>& m) {
        Pseudonym best;
        Qty v = -1;
        for (const auto& [p, q] : m) {
          if (q > v) {
            v = q;
            best = p;
          }
        }
        return best;
      };
      nlohmann::json evidence{{"firms", {a, b}},
                              {"score", score},
                              {"lag", params_.lag},
                              {"threshold", params_.threshold},
                              {"pseudonyms", {top(inj), top(exe)}}};
      raised.push_back(raise(FlagKind::CrossFirmCollusion,
                             "large cancels at firm " + std::to_string(a) + " track aggressive executions at firm " +
                                 std::to_string(b),
                             std::move(evidence), window, at));
    }
  }
  return raised;
}

std::uint64_t ExternalRegulator::publish_policy(PolicyDoc doc, std::span<FirmGovernance* const> firms, SimTime at) {
  doc.validate();
  std::vector<FirmGovernance*> targets;
  for (auto* f : firms) {
    if (!doc.firm_id || *doc.firm_id == f->firm_id()) targets.push_back(f);
  }
  if (targets.empty()) throw Error(ErrorCode::ValidationError, "policy targets no known firm");
  for (auto* f : targets) {
    const std::uint64_t current = std::max(f->policy().version, f->staged_version().value_or(0));
    if (doc.version <= current) {
      throw Error(ErrorCode::StaleVersion, "firm " + std::to_string(f->firm_id()) + " has v" +
                                               std::to_string(current) + ", got v" + std::to_string(doc.version));
    }
  }
  for (auto* f : targets) {
    PolicyDoc copy = doc;
    copy.firm_id = f->firm_id();
    f->update_policy(copy);
  }
  if (ledger_ != nullptr) {
    ledger_->append("RegulatorPolicyPublished",
                    nlohmann::json{{"scope", doc.firm_id ? nlohmann::json(*doc.firm_id) : nlohmann::json("GLOBAL")},
                                   {"version", doc.version},
                                   {"digest", doc.digest()},
                                   {"policy", to_json(doc)}},
                    at);
  }
  return doc.version;
}

AuditFlag& ExternalRegulator::raise(FlagKind kind, std::string reason, nlohmann::json evidence, std::uint64_t window,
                                    SimTime at) {
  AuditFlag f;
  f.id = next_flag_id_++;
  f.raised_at = at;
  f.window = window;
  f.kind = kind;
  f.reason = std::move(reason);
  f.evidence = std::move(evidence);
  flags_.push_back(std::move(f));
  if (ledger_ != nullptr) ledger_->append("RegulatorFlag", to_json(flags_.back()), at);
  return flags_.back();
}

void ExternalRegulator::log_transition(const AuditFlag& f, FlagStatus from, DecisionSource source, SimTime at) {
  if (ledger_ == nullptr) return;
  ledger_->append("RegulatorFlagTransition",
                  nlohmann::json{{"flag_id", f.id},
                                 {"from", to_string(from)},
                                 {"to", to_string(f.status)},
                                 {"source", to_string(source)},
                                 {"note", f.note}},
                  at);
}

const AuditFlag& ExternalRegulator::review_flag(std::uint64_t flag_id, ReviewVerdict verdict, const std::string& note,
                                                DecisionSource source, SimTime at) {
  auto it = std::find_if(flags_.begin(), flags_.end(), [&](const AuditFlag& f) { return f.id == flag_id; });
  if (it == flags_.end()) throw Error(ErrorCode::UnknownFlag, "flag " + std::to_string(flag_id));
  AuditFlag& f = *it;
  if (f.terminal() || (verdict == ReviewVerdict::Review && f.status != FlagStatus::Open)) {
    throw Error(ErrorCode::IllegalTransition,
                "flag " + std::to_string(flag_id) + " is " + std::string(to_string(f.status)) + ", cannot " +
                    std::string(to_string(verdict)));
  }
  f.note = note;
  if (f.status == FlagStatus::Open) {
    f.status = FlagStatus::UnderReview;
    log_transition(f, FlagStatus::Open, source, at);
  }
  if (verdict != ReviewVerdict::Review) {
    f.status = verdict == ReviewVerdict::Resolve ? FlagStatus::Resolved : FlagStatus::Dismissed;
    log_transition(f, FlagStatus::UnderReview, source, at);
  }
  return f;
}

}  // namespace agov
