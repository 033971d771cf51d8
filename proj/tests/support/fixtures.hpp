#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "json.hpp"

#include "agov/audit_ledger.hpp"
#include "agov/scenario.hpp"

namespace fixtures {

inline std::filesystem::path source_dir() { return AGOV_SOURCE_DIR; }
inline std::filesystem::path scenario_dir() { return source_dir() / "scenarios"; }

inline nlohmann::json scenario_json(const std::string& name) {
  return nlohmann::json::parse(agov::read_file(scenario_dir() / (name + ".json")));
}

// Shipped scenario with optional edits to its JSON before validation.
inline agov::Scenario scenario(const std::string& name, std::uint64_t seed,
                               const std::function<void(nlohmann::json&)>& edit = {}) {
  auto j = scenario_json(name);
  j["master_seed"] = seed;
  if (edit) edit(j);
  return agov::scenario_from_json(j, scenario_dir());
}

}  // namespace fixtures
