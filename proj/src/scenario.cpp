#include "agov/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "agov/crypto.hpp"
#include "agov/error.hpp"
#include "agov/json_util.hpp"

namespace agov {

using json_util::get;
using json_util::get_or;
using json_util::reject_unknown;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ValidationError, what);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_double(double v) {
  // Shortest round-trip form, same as the JSON serializer.
  return nlohmann::json(v).dump();
}

FundamentalParams fundamental_from_json(const nlohmann::json& j) {
  const std::string where = "fundamental";
  reject_unknown(j, {"initial", "mean", "reversion_rate", "shock_std", "shocks"}, where);
  FundamentalParams p;
  p.initial = get_or(j, "initial", where, p.initial);
  p.mean = get_or(j, "mean", where, p.initial);
  p.reversion_rate = get_or(j, "reversion_rate", where, p.reversion_rate);
  p.shock_std = get_or(j, "shock_std", where, p.shock_std);
  if (j.contains("shocks")) {
    for (const auto& s : j.at("shocks")) {
      reject_unknown(s, {"step", "delta"}, "fundamental.shocks[]");
      p.shocks.push_back({get<std::uint64_t>(s, "step", "fundamental.shocks[]"), get<double>(s, "delta", "fundamental.shocks[]")});
    }
  }
  require(p.initial >= 1.0, "fundamental.initial must be >= 1");
  require(p.reversion_rate > 0.0 && p.reversion_rate <= 1.0, "fundamental.reversion_rate must be in (0,1]");
  require(p.shock_std >= 0.0, "fundamental.shock_std must be >= 0");
  std::sort(p.shocks.begin(), p.shocks.end(),
            [](const FundamentalShock& a, const FundamentalShock& b) { return a.step < b.step; });
  return p;
}

WindowConfig windows_from_json(const nlohmann::json& j) {
  const std::string where = "windows";
  reject_unknown(j,
                 {"window_steps", "eval_every", "short_lifetime_steps", "large_order_multiplier", "min_large_qty",
                  "collusion_lag", "collusion_history_windows"},
                 where);
  WindowConfig w;
  w.window_steps = get_or(j, "window_steps", where, w.window_steps);
  w.eval_every = get_or(j, "eval_every", where, w.eval_every);
  w.short_lifetime_steps = get_or(j, "short_lifetime_steps", where, w.short_lifetime_steps);
  w.large_order_multiplier = get_or(j, "large_order_multiplier", where, w.large_order_multiplier);
  w.min_large_qty = get_or(j, "min_large_qty", where, w.min_large_qty);
  w.collusion_lag = get_or(j, "collusion_lag", where, w.collusion_lag);
  w.collusion_history_windows = get_or(j, "collusion_history_windows", where, w.collusion_history_windows);
  require(w.window_steps >= 1 && w.eval_every >= 1, "windows: window_steps and eval_every must be >= 1");
  require(w.large_order_multiplier > 0.0 && w.min_large_qty >= 1, "windows: large-order rule must be positive");
  require(w.collusion_history_windows >= 1, "windows.collusion_history_windows must be >= 1");
  return w;
}

ApproverMode parse_approver_mode(const std::string& s) {
  if (s == "approve_all") return ApproverMode::ApproveAll;
  if (s == "reject_all") return ApproverMode::RejectAll;
  if (s == "approve_after_k") return ApproverMode::ApproveAfterK;
  if (s == "manual") return ApproverMode::Manual;
  throw Error(ErrorCode::ParseError, "governance.approver.mode: unknown value '" + s + "'");
}

GovernanceConfig governance_from_json(const nlohmann::json& j) {
  const std::string where = "governance";
  reject_unknown(j, {"self_regulation", "firm", "regulator", "approver", "collusion_threshold"}, where);
  GovernanceConfig g;
  g.self_regulation = get_or(j, "self_regulation", where, g.self_regulation);
  g.firm = get_or(j, "firm", where, g.firm);
  g.regulator = get_or(j, "regulator", where, g.regulator);
  if (j.contains("approver")) {
    const auto& a = j.at("approver");
    reject_unknown(a, {"mode", "delay_steps"}, "governance.approver");
    g.approver.mode = parse_approver_mode(get<std::string>(a, "mode", "governance.approver"));
    g.approver.delay_steps = get_or<std::uint64_t>(a, "delay_steps", "governance.approver", 0);
  }
  if (j.contains("collusion_threshold")) g.collusion_threshold = get<double>(j, "collusion_threshold", where);
  require(!g.firm || g.self_regulation, "governance: the firm layer requires self-regulation telemetry");
  require(!g.regulator || g.firm, "governance: the regulator layer requires firm aggregates");
  return g;
}

}  // namespace

std::string_view to_string(ApproverMode m) noexcept {
  switch (m) {
    case ApproverMode::ApproveAll: return "approve_all";
    case ApproverMode::RejectAll: return "reject_all";
    case ApproverMode::ApproveAfterK: return "approve_after_k";
    case ApproverMode::Manual: return "manual";
  }
  return "?";
}

std::string Calibration::serialize() const {
  std::ostringstream out;
  out << "# detector calibration\n";
  out << "weights=" << fmt_double(weights[0]) << "," << fmt_double(weights[1]) << "," << fmt_double(weights[2]) << ","
      << fmt_double(weights[3]) << "\n";
  out << "flag_threshold=" << fmt_double(flag_threshold) << "\n";
  out << "collusion_threshold=" << fmt_double(collusion_threshold) << "\n";
  out << "recall=" << fmt_double(recall) << "\n";
  out << "fpr=" << fmt_double(fpr) << "\n";
  out << "positive_windows=" << positive_windows << "\n";
  out << "negative_windows=" << negative_windows << "\n";
  if (!source.empty()) out << "source=" << source << "\n";
  if (!scenarios.empty()) {
    out << "scenarios=";
    for (std::size_t i = 0; i < scenarios.size(); ++i) out << (i ? "," : "") << scenarios[i];
    out << "\n";
  }
  return out.str();
}

Calibration parse_calibration(const std::string& text) {
  Calibration c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::set<std::string> seen;
  auto number = [&](const std::string& v, const std::string& key) {
    try {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "calibration line " + std::to_string(lineno) + ": bad number for " + key);
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "calibration line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (!seen.insert(key).second) throw Error(ErrorCode::ParseError, "calibration: duplicate key " + key);
    if (key == "weights") {
      std::istringstream ws(val);
      std::string part;
      std::size_t i = 0;
      while (std::getline(ws, part, ',')) {
        if (i >= 4) throw Error(ErrorCode::ParseError, "calibration: weights needs 4 values");
        c.weights[i++] = number(part, key);
      }
      if (i != 4) throw Error(ErrorCode::ParseError, "calibration: weights needs 4 values");
    } else if (key == "flag_threshold") {
      c.flag_threshold = number(val, key);
    } else if (key == "collusion_threshold") {
      c.collusion_threshold = number(val, key);
    } else if (key == "recall") {
      c.recall = number(val, key);
    } else if (key == "fpr") {
      c.fpr = number(val, key);
    } else if (key == "positive_windows") {
      c.positive_windows = static_cast<std::uint64_t>(number(val, key));
    } else if (key == "negative_windows") {
      c.negative_windows = static_cast<std::uint64_t>(number(val, key));
    } else if (key == "source") {
      c.source = val;
    } else if (key == "scenarios") {
      std::istringstream ss(val);
      std::string part;
      while (std::getline(ss, part, ',')) {
        if (part.empty()) throw Error(ErrorCode::ParseError, "calibration: empty scenarios entry");
        c.scenarios.push_back(part);
      }
    } else {
      throw Error(ErrorCode::ParseError, "calibration: unknown key " + key);
    }
  }
  validate_weights(c.weights);
  return c;
}

Calibration load_calibration(const std::filesystem::path& path) { return parse_calibration(read_text(path)); }

std::vector<AgentConfig> Scenario::all_agents() const {
  std::vector<AgentConfig> out;
  for (const auto& f : firms) out.insert(out.end(), f.agents.begin(), f.agents.end());
  std::sort(out.begin(), out.end(), [](const AgentConfig& a, const AgentConfig& b) { return a.agent_id < b.agent_id; });
  return out;
}

const FirmConfig& Scenario::firm(FirmId id) const {
  for (const auto& f : firms) {
    if (f.firm_id == id) return f;
  }
  throw Error(ErrorCode::ValidationError, "unknown firm " + std::to_string(id));
}

std::string Scenario::hash() const { return to_hex(sha256(document.dump())); }

void Scenario::set_seed(std::uint64_t seed) {
  master_seed = seed;
  document["master_seed"] = seed;
}

Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "scenario: expected an object");
  reject_unknown(j,
                 {"name", "master_seed", "steps", "book_depth", "fundamental", "windows", "governance",
                  "calibration_file", "policy_schedule", "firms"},
                 "scenario");
  Scenario s;
  s.document = j;
  s.name = get<std::string>(j, "name", "scenario");
  s.master_seed = get<std::uint64_t>(j, "master_seed", "scenario");
  s.steps = get<std::uint64_t>(j, "steps", "scenario");
  s.book_depth = get_or<std::size_t>(j, "book_depth", "scenario", s.book_depth);
  require(s.steps >= 1, "scenario.steps must be >= 1");
  require(s.book_depth >= 1, "scenario.book_depth must be >= 1");
  if (j.contains("fundamental")) s.fundamental = fundamental_from_json(j.at("fundamental"));
  if (j.contains("windows")) s.windows = windows_from_json(j.at("windows"));
  if (j.contains("governance")) s.governance = governance_from_json(j.at("governance"));

  if (j.contains("calibration_file")) {
    std::filesystem::path p = get<std::string>(j, "calibration_file", "scenario");
    if (p.is_relative()) p = base_dir / p;
    const std::string bytes = read_text(p);
    s.calibration = parse_calibration(bytes);
    s.calibration_hash = to_hex(sha256(bytes));
    s.calibration_file = p;
  }
  if (s.governance.collusion_threshold) s.calibration.collusion_threshold = *s.governance.collusion_threshold;
  const PolicyDefaults defaults{s.calibration.weights, s.calibration.flag_threshold};

  if (!j.contains("firms") || !j.at("firms").is_array()) throw Error(ErrorCode::ParseError, "scenario: missing field 'firms'");
  std::set<FirmId> firm_ids;
  std::set<AgentId> agent_ids;
  for (const auto& fj : j.at("firms")) {
    reject_unknown(fj, {"firm_id", "policy", "agents"}, "firms[]");
    FirmConfig f;
    f.firm_id = get<FirmId>(fj, "firm_id", "firms[]");
    const std::string where = "firms[" + std::to_string(f.firm_id) + "]";
    require(firm_ids.insert(f.firm_id).second, where + ": duplicate firm_id");
    f.policy = fj.contains("policy") ? policy_from_json(fj.at("policy"), defaults) : [&] {
      PolicyDoc p;
      p.weights = defaults.weights;
      p.flag_threshold = defaults.flag_threshold;
      return p;
    }();
    require(!f.policy.firm_id || *f.policy.firm_id == f.firm_id, where + ": policy targets another firm");
    f.policy.firm_id = f.firm_id;
    if (!fj.contains("agents") || !fj.at("agents").is_array()) throw Error(ErrorCode::ParseError, where + ": missing field 'agents'");
    for (const auto& aj : fj.at("agents")) {
      reject_unknown(aj, {"agent_id", "agent_ids", "kind", "params"}, where + ".agents[]");
      std::vector<AgentId> ids;
      if (aj.contains("agent_id")) ids.push_back(get<AgentId>(aj, "agent_id", where + ".agents[]"));
      if (aj.contains("agent_ids")) {
        auto more = get<std::vector<AgentId>>(aj, "agent_ids", where + ".agents[]");
        ids.insert(ids.end(), more.begin(), more.end());
      }
      if (ids.empty()) throw Error(ErrorCode::ParseError, where + ".agents[]: missing field 'agent_id'");
      const AgentKind kind = parse_agent_kind(get<std::string>(aj, "kind", where + ".agents[]"));
      const auto params = agent_params_from_json(kind, aj.contains("params") ? aj.at("params") : nlohmann::json(),
                                                 where + ".agents[].params");
      for (AgentId id : ids) {
        require(id >= 1, where + ": agent ids start at 1");
        require(agent_ids.insert(id).second, "agent " + std::to_string(id) + " is listed more than once");
        f.agents.push_back(AgentConfig{id, f.firm_id, kind, autonomy_of(kind), params});
      }
    }
    require(!f.agents.empty(), where + ": a firm needs at least one agent");
    s.firms.push_back(std::move(f));
  }
  require(!s.firms.empty(), "scenario: at least one firm is required");

  if (j.contains("policy_schedule")) {
    for (const auto& pj : j.at("policy_schedule")) {
      reject_unknown(pj, {"step", "policy"}, "policy_schedule[]");
      ScheduledPolicy sp;
      sp.step = get<std::uint64_t>(pj, "step", "policy_schedule[]");
      if (!pj.contains("policy")) throw Error(ErrorCode::ParseError, "policy_schedule[]: missing field 'policy'");
      sp.policy = policy_from_json(pj.at("policy"), defaults);
      require(!sp.policy.firm_id || firm_ids.count(*sp.policy.firm_id) != 0, "policy_schedule: unknown firm");
      require(sp.step >= 1 && sp.step < s.steps, "policy_schedule: step must fall inside the run");
      s.policy_schedule.push_back(std::move(sp));
    }
    std::stable_sort(s.policy_schedule.begin(), s.policy_schedule.end(),
                     [](const ScheduledPolicy& a, const ScheduledPolicy& b) { return a.step < b.step; });
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

std::filesystem::path resolve_scenario(const std::string& name_or_path, const std::vector<std::filesystem::path>& roots) {
  std::filesystem::path direct(name_or_path);
  if (std::filesystem::is_regular_file(direct)) return direct;
  for (const auto& r : roots) {
    auto p = r / "scenarios" / (name_or_path + ".json");
    if (std::filesystem::is_regular_file(p)) return p;
  }
  throw Error(ErrorCode::IoFailure, "scenario not found: " + name_or_path);
}

}  // namespace agov
