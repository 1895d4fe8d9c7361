#pragma once

#include <string>

#include "cavesim/fleet.hpp"

namespace cavesim::scenario {

struct ScenarioError : std::runtime_error {
  explicit ScenarioError(const std::string& what) : std::runtime_error("scenario: " + what) {}
};

// Parses a JSON scenario file into a MissionConfig, loading or generating the
// referenced world. Field errors name the offending key.
fleet::MissionConfig load_scenario(const std::string& path);
fleet::MissionConfig parse_scenario_json(const std::string& text, const std::string& base_dir);

// The demo scenario bundled with the CLI (written by `cavesim init-scenario`).
std::string demo_scenario_text();

}  // namespace cavesim::scenario
