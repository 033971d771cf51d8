#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "agov/audit_ledger.hpp"
#include "agov/calibration.hpp"
#include "agov/crypto.hpp"
#include "agov/error.hpp"
#include "agov/scenario.hpp"
#include "agov/service.hpp"
#include "agov/simulation.hpp"

using namespace agov;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitLedger = 4;

std::vector<fs::path> search_roots() { return {fs::current_path(), fs::path(AGOV_SOURCE_DIR)}; }

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InfeasibleTarget: return kExitInfeasible;
    case ErrorCode::CorruptLedger: return kExitLedger;
    case ErrorCode::IoFailure:
    case ErrorCode::AddressInUse: return kExitIo;
    default: return kExitValidation;
  }
}

Scenario load(const std::string& name, std::optional<std::uint64_t> seed) {
  auto sc = load_scenario(resolve_scenario(name, search_roots()));
  if (seed) sc.set_seed(*seed);
  return sc;
}

fs::path resolve_set(const std::string& name) {
  if (fs::exists(name)) return name;
  for (const auto& r : search_roots()) {
    auto p = r / "calibration" / (name + ".json");
    if (fs::exists(p)) return p;
  }
  throw Error(ErrorCode::IoFailure, "no labeled set named " + name);
}

nlohmann::json summary(const RunResult& r) {
  return {{"scenario", r.report["scenario"]},
          {"master_seed", r.report["master_seed"]},
          {"metrics", r.report["metrics"]},
          {"counts", r.report["counts"]},
          {"ledger", r.report["ledger"]}};
}

int cmd_run(const std::string& scenario, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
  auto sc = load(scenario, seed);
  RunOptions o;
  o.out_dir = out ? fs::path(*out) : fs::path("runs") / (sc.name + "-" + std::to_string(sc.master_seed));
  auto r = run_scenario(sc, o);
  auto s = summary(r);
  s["out"] = o.out_dir->string();
  std::cout << s.dump(2) << "\n";
  return kExitOk;
}

int cmd_calibrate(const std::string& set_name, const std::string& out) {
  const auto set = load_labeled_set(resolve_set(set_name));
  auto c = calibrate(set, search_roots(), [](const std::string& m) { std::cerr << m << "\n"; });
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + out);
  f << c.serialize();
  if (!f.flush()) throw Error(ErrorCode::IoFailure, "cannot write " + out);
  std::cout << c.serialize();
  return kExitOk;
}

std::atomic<bool> g_interrupted{false};

int cmd_serve(const std::string& scenario, const std::string& addr, std::uint64_t pace, std::optional<std::uint64_t> seed,
              std::optional<std::string> out, bool paused, bool exit_when_done) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ValidationError, "--addr must be HOST:PORT");
  ServiceOptions o;
  o.host = addr.substr(0, colon);
  try {
    o.port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::ValidationError, "bad port in --addr " + addr);
  }
  if (o.port < 0 || o.port > 65535) throw Error(ErrorCode::ValidationError, "port out of range");
  o.pace_ms = pace;
  o.start_paused = paused;
  if (out) o.run.out_dir = fs::path(*out);

  Service svc(load(scenario, seed), o);
  svc.start();
  std::cerr << "listening on " << o.host << ":" << svc.port() << "\n";
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  while (!g_interrupted) {
    if (exit_when_done && svc.finished()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  if (auto rep = svc.report_text()) std::cout << *rep;
  svc.stop();
  return kExitOk;
}

int cmd_verify(const std::string& file, std::optional<std::string> attestation, std::optional<std::string> key) {
  const std::string bytes = read_file(file);
  const auto v = verify_ledger_bytes(bytes);
  nlohmann::json out{{"file", file}, {"verdict", v.ok ? "Intact" : "Broken"}, {"entries", v.entry_count},
                     {"head_hash", to_hex(v.head_hash)}};
  if (!v.ok) {
    out["first_bad_seq"] = v.first_bad_seq;
    out["reason"] = v.reason;
  }
  bool ok = v.ok;
  if (attestation) {
    if (!key) throw Error(ErrorCode::ValidationError, "--attestation needs --key");
    nlohmann::json aj;
    try {
      aj = nlohmann::json::parse(read_file(*attestation));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, *attestation + ": " + e.what());
    }
    const bool att_ok = verify_attestation(attestation_from_json(aj), bytes, *key);
    out["attestation"] = att_ok ? "Valid" : "Invalid";
    ok = ok && att_ok;
  }
  std::cout << out.dump(2) << "\n";
  return ok ? kExitOk : kExitLedger;
}

int cmd_attest(const std::string& file, const std::string& key, const std::string& out) {
  const std::string bytes = read_file(file);
  const auto att = attest_ledger_bytes(bytes, key, SimTime{});
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + out);
  f << to_json(att).dump(2) << "\n";
  std::cout << to_json(att).dump(2) << "\n";
  return kExitOk;
}

int cmd_report(const std::string& dir) {
  const fs::path d(dir);
  nlohmann::json rep;
  try {
    rep = nlohmann::json::parse(read_file(d / "report.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, (d / "report.json").string() + ": " + e.what());
  }
  const auto v = verify_ledger_file(d / "ledger.log");
  const std::string head = to_hex(v.head_hash);
  const bool head_match = rep.at("ledger").at("head_hash") == head &&
                          rep.at("ledger").at("entries") == v.entry_count;

  std::cout << "scenario     " << rep.at("scenario").get<std::string>() << "  seed " << rep.at("master_seed") << "  steps "
            << rep.at("steps") << "\n";
  std::cout << "hash         " << rep.at("scenario_hash").get<std::string>() << "\n";
  const auto& m = rep.at("metrics");
  std::cout << "volatility   " << m.at("volatility") << "\n";
  std::cout << "eff_dev      " << m.at("efficiency_dev") << "\n";
  std::cout << "eff_spread   " << m.at("effective_spread") << "\n";
  std::cout << "halflife     " << m.at("discovery_halflife") << "\n";
  std::cout << "trades       " << m.at("trades") << "\n";
  for (const auto& [layer, counts] : rep.at("counts").items()) std::cout << layer << "  " << counts.dump() << "\n";
  std::cout << "flags        " << rep.at("flags").size() << "\n";
  for (const auto& f : rep.at("flags")) {
    std::cout << "  #" << f.at("id") << " " << f.at("kind").get<std::string>() << " window " << f.at("window") << " "
              << f.at("status").get<std::string>() << "\n";
  }
  std::cout << "ledger       " << (v.ok ? "Intact" : "Broken") << " " << v.entry_count << " entries, head " << head
            << (head_match ? "" : "  (does not match report)") << "\n";
  if (!v.ok) std::cout << "  first bad seq " << v.first_bad_seq << ": " << v.reason << "\n";
  return v.ok && head_match ? kExitOk : kExitLedger;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agov: layered governance market simulator"};
  app.require_subcommand(1);

  std::string scenario, out_file, set_name, addr, file, dir, key;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir, attestation, key_opt;
  std::uint64_t pace = 0;
  bool paused = false, exit_when_done = false;

  auto* run = app.add_subcommand("run", "run a scenario headless");
  run->add_option("scenario", scenario, "scenario name or path")->required();
  run->add_option("--seed", seed, "override master seed");
  run->add_option("--out", out_dir, "output directory (default runs/<name>-<seed>)");

  auto* cal = app.add_subcommand("calibrate", "grid-search detector weights on a labeled set");
  cal->add_option("set", set_name, "labeled set name or path")->required();
  cal->add_option("--out", out_file, "calibration file to write")->required();

  auto* serve = app.add_subcommand("serve", "run a scenario behind the HTTP service");
  serve->add_option("scenario", scenario)->required();
  serve->add_option("--addr", addr, "HOST:PORT")->required();
  serve->add_option("--pace", pace, "delay per step in ms");
  serve->add_option("--seed", seed);
  serve->add_option("--out", out_dir);
  serve->add_flag("--paused", paused, "wait for POST /run before stepping");
  serve->add_flag("--exit-when-done", exit_when_done, "stop once every step has run");

  auto* verify = app.add_subcommand("verify-ledger", "check a ledger's hash chain");
  verify->add_option("file", file)->required();
  verify->add_option("--attestation", attestation, "attestation JSON to check as well");
  verify->add_option("--key", key_opt, "auditor key for the attestation");

  auto* attest = app.add_subcommand("attest", "write an HMAC attestation of a ledger head");
  attest->add_option("file", file)->required();
  attest->add_option("--key", key, "auditor key")->required();
  attest->add_option("--out", out_file)->required();

  auto* report = app.add_subcommand("report", "summarize a run directory");
  report->add_option("run-dir", dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(scenario, seed, out_dir);
    if (*cal) return cmd_calibrate(set_name, out_file);
    if (*serve) return cmd_serve(scenario, addr, pace, seed, out_dir, paused, exit_when_done);
    if (*verify) return cmd_verify(file, attestation, key_opt);
    if (*attest) return cmd_attest(file, key, out_file);
    if (*report) return cmd_report(dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
