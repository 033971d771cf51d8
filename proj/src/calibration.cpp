#include "agov/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <sstream>
#include <thread>

#include "agov/error.hpp"
#include "agov/json_util.hpp"

namespace agov {

using json_util::get;
using json_util::get_or;
using json_util::reject_unknown;

LabeledSet labeled_set_from_json(const nlohmann::json& j) {
  const std::string where = "labeled set";
  if (!j.is_object()) throw Error(ErrorCode::ParseError, where + ": expected an object");
  reject_unknown(j,
                 {"name", "positive", "negative", "seeds", "null_seeds", "max_fpr", "weight_step", "threshold_step",
                  "min_collusion_threshold", "steps"},
                 where);
  LabeledSet s;
  s.name = get_or<std::string>(j, "name", where, "");
  s.positive = get<std::vector<std::string>>(j, "positive", where);
  s.negative = get<std::vector<std::string>>(j, "negative", where);
  s.seeds = get<std::vector<std::uint64_t>>(j, "seeds", where);
  s.null_seeds = get_or<std::vector<std::uint64_t>>(j, "null_seeds", where, {});
  s.max_fpr = get_or(j, "max_fpr", where, s.max_fpr);
  s.weight_step = get_or(j, "weight_step", where, s.weight_step);
  s.threshold_step = get_or(j, "threshold_step", where, s.threshold_step);
  s.min_collusion_threshold = get_or(j, "min_collusion_threshold", where, s.min_collusion_threshold);
  if (j.contains("steps")) s.steps = get<std::uint64_t>(j, "steps", where);

  auto fail = [](const std::string& m) { throw Error(ErrorCode::ValidationError, "labeled set: " + m); };
  if (s.positive.empty() || s.negative.empty()) fail("needs at least one positive and one negative scenario");
  if (s.seeds.empty()) fail("seeds must not be empty");
  if (!(s.max_fpr >= 0.0 && s.max_fpr <= 1.0)) fail("max_fpr must be in [0,1]");
  auto grid_ok = [](double step) {
    if (!(step > 0.0 && step <= 1.0)) return false;
    const double n = 1.0 / step;
    return std::abs(n - std::round(n)) < 1e-9;
  };
  if (!grid_ok(s.weight_step) || !grid_ok(s.threshold_step)) fail("grid steps must divide 1");
  if (!(s.min_collusion_threshold > 0.0 && s.min_collusion_threshold <= 1.0)) {
    fail("min_collusion_threshold must be in (0,1]");
  }
  if (s.steps && *s.steps < 100) fail("steps must be >= 100");
  return s;
}

LabeledSet load_labeled_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return labeled_set_from_json(j);
}

std::vector<Sample> label_windows(const RunResult& run, std::uint64_t window_steps, bool honest_negative) {
  std::vector<Sample> out;
  std::map<AgentId, const SpooferStats*> spoofers;
  for (const auto& s : run.spoofers) spoofers[s.agent_id] = &s;
  for (const auto& v : run.verdicts) {
    const auto f = v.features.values();
    if (v.kind == AgentKind::ScriptedSpoofer) {
      auto it = spoofers.find(v.agent_id);
      if (it == spoofers.end()) continue;
      const auto& inj = it->second->inject_steps;
      const std::uint64_t lo = v.step + 1 >= window_steps ? v.step + 1 - window_steps : 0;
      const bool active = std::any_of(inj.begin(), inj.end(), [&](std::uint64_t s) { return s >= lo && s <= v.step; });
      if (active) out.push_back(Sample{f, true});
    } else if (honest_negative && (v.kind == AgentKind::ZI || v.kind == AgentKind::MarketMaker)) {
      if (v.records > 0) out.push_back(Sample{f, false});
    }
  }
  return out;
}

namespace {

// Nearest-rank quantile of a sorted vector.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

std::string fmt(const GridPoint& g) {
  std::ostringstream o;
  o << "weights=" << g.weights[0] << "," << g.weights[1] << "," << g.weights[2] << "," << g.weights[3]
    << " threshold=" << g.threshold << " recall=" << g.recall << " fpr=" << g.fpr;
  return o.str();
}

}  // namespace

GridPoint grid_search(std::span<const Sample> samples, double max_fpr, double weight_step, double threshold_step) {
  std::size_t npos = 0;
  for (const auto& s : samples) npos += s.positive ? 1 : 0;
  const std::size_t nneg = samples.size() - npos;
  if (npos == 0 || nneg == 0) {
    throw Error(ErrorCode::ValidationError, "calibration needs both positive and negative windows");
  }

  const int wn = static_cast<int>(std::lround(1.0 / weight_step));
  const int tn = static_cast<int>(std::lround(1.0 / threshold_step));
  std::optional<GridPoint> best, best_any;
  std::vector<double> pos, neg;
  pos.reserve(npos);
  neg.reserve(nneg);

  auto better = [](const GridPoint& a, const GridPoint& b) {
    if (a.recall != b.recall) return a.recall > b.recall;
    if (a.fpr != b.fpr) return a.fpr < b.fpr;
    const double amin = *std::min_element(a.weights.begin(), a.weights.end());
    const double bmin = *std::min_element(b.weights.begin(), b.weights.end());
    if (amin != bmin) return amin > bmin;
    if (a.threshold != b.threshold) return a.threshold > b.threshold;
    return a.margin > b.margin + 1e-12;
  };

  for (int a = 0; a <= wn; ++a) {
    for (int b = 0; a + b <= wn; ++b) {
      for (int c = 0; a + b + c <= wn; ++c) {
        const int d = wn - a - b - c;
        const DetectorWeights w{a / double(wn), b / double(wn), c / double(wn), d / double(wn)};
        pos.clear();
        neg.clear();
        for (const auto& s : samples) {
          double v = 0.0;
          for (std::size_t i = 0; i < 4; ++i) v += w[i] * s.features[i];
          (s.positive ? pos : neg).push_back(v);
        }
        std::sort(pos.begin(), pos.end());
        std::sort(neg.begin(), neg.end());
        const double p05 = quantile(pos, 0.05);
        const double n99 = quantile(neg, 0.99);
        // Thresholds strictly inside (0, 1]; a zero threshold flags idle agents.
        for (int k = 1; k <= tn; ++k) {
          const double thr = k / double(tn);
          // Score compared with a small tolerance so grid weights that sum to
          // exactly thr are counted as reaching it.
          const double cut = thr - 1e-9;
          const auto pos_hit = pos.end() - std::lower_bound(pos.begin(), pos.end(), cut);
          const auto neg_hit = neg.end() - std::lower_bound(neg.begin(), neg.end(), cut);
          GridPoint g{w, thr, double(pos_hit) / double(npos), double(neg_hit) / double(nneg),
                      std::min(p05 - thr, thr - n99)};
          if (!best_any || g.fpr < best_any->fpr || (g.fpr == best_any->fpr && better(g, *best_any))) best_any = g;
          if (g.fpr > max_fpr) continue;
          if (!best || better(g, *best)) best = g;
        }
      }
    }
  }
  if (!best) {
    throw Error(ErrorCode::InfeasibleTarget, "no grid point meets fpr <= " + std::to_string(max_fpr) +
                                                 "; best found " + fmt(*best_any));
  }
  return *best;
}

double null_threshold(std::vector<double> scores, double floor) {
  std::sort(scores.begin(), scores.end());
  return std::max(floor, quantile(scores, 0.99));
}

Calibration calibrate(const LabeledSet& set, const std::vector<std::filesystem::path>& roots,
                      const Progress& progress) {
  auto load = [&](const std::string& name) {
    Scenario sc = load_scenario(resolve_scenario(name, roots));
    if (set.steps) sc.steps = *set.steps;
    return sc;
  };
  struct Job {
    Scenario sc;
    bool positive;
    bool null_only;
  };
  std::vector<Job> jobs;
  std::vector<std::string> used;
  for (const auto& name : set.positive) {
    Scenario sc = load(name);
    used.push_back(name + ":" + sc.hash());
    for (auto seed : set.seeds) {
      sc.set_seed(seed);
      jobs.push_back({sc, true, false});
    }
  }
  for (const auto& name : set.negative) {
    Scenario sc = load(name);
    used.push_back(name + ":" + sc.hash());
    for (auto seed : set.seeds) {
      sc.set_seed(seed);
      jobs.push_back({sc, false, false});
    }
    for (auto seed : set.null_seeds) {
      sc.set_seed(seed);
      jobs.push_back({sc, false, true});
    }
  }

  // Runs are independent and each is deterministic, so they can share cores;
  // results are consumed in job order.
  std::vector<std::future<RunResult>> futures;
  const std::size_t par = std::max(1u, std::thread::hardware_concurrency());
  std::vector<RunResult> results(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); i += par) {
    futures.clear();
    const std::size_t end = std::min(jobs.size(), i + par);
    for (std::size_t k = i; k < end; ++k) {
      futures.push_back(std::async(std::launch::async, [&, k] { return run_scenario(jobs[k].sc, {}); }));
    }
    for (std::size_t k = i; k < end; ++k) results[k] = futures[k - i].get();
    if (progress) progress("ran " + std::to_string(end) + "/" + std::to_string(jobs.size()) + " calibration runs");
  }

  std::vector<Sample> samples;
  std::vector<double> null_scores;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& job = jobs[i];
    if (!job.null_only) {
      auto s = label_windows(results[i], job.sc.windows.window_steps, !job.positive);
      samples.insert(samples.end(), s.begin(), s.end());
    }
    if (!job.positive) null_scores.insert(null_scores.end(), results[i].pair_scores.begin(), results[i].pair_scores.end());
  }

  const GridPoint g = grid_search(samples, set.max_fpr, set.weight_step, set.threshold_step);
  Calibration c;
  c.weights = g.weights;
  c.flag_threshold = g.threshold;
  c.collusion_threshold = null_threshold(null_scores, set.min_collusion_threshold);
  c.recall = g.recall;
  c.fpr = g.fpr;
  for (const auto& s : samples) (s.positive ? c.positive_windows : c.negative_windows) += 1;
  c.source = set.name.empty() ? "calibrate" : "calibrate " + set.name;
  c.scenarios = used;
  return c;
}

}  // namespace agov
