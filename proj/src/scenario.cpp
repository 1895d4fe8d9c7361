#include "cavesim/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cavesim::scenario {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key) {
  if (!j.contains(key)) throw ScenarioError(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ScenarioError(std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

fleet::Policy parse_policy(const std::string& name) {
  if (name == "deep_lateral") return fleet::Policy::kDeepLateral;
  if (name == "highest_frontier") return fleet::Policy::kHighestFrontier;
  if (name == "unknown_ratio") return fleet::Policy::kUnknownRatio;
  if (name == "full_coverage_bounded") return fleet::Policy::kFullCoverageBounded;
  throw ScenarioError("unknown policy '" + name + "'");
}

std::shared_ptr<const worldsim::GroundTruthWorld> parse_world(const json& j,
                                                              const std::string& base_dir) {
  const json& w = require(j, "world");
  if (w.contains("file")) {
    std::filesystem::path p = w.at("file").get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    return std::make_shared<worldsim::GroundTruthWorld>(worldsim::load_world(p.string()));
  }
  if (w.contains("generate")) {
    const json& g = w.at("generate");
    worldsim::CaveParams params;
    params.tunnel_count = static_cast<int>(number(g, "tunnel_count", params.tunnel_count));
    params.tunnel_width = number(g, "tunnel_width", params.tunnel_width);
    params.tunnel_length = number(g, "tunnel_length", params.tunnel_length);
    params.resolution = number(g, "resolution", params.resolution);
    params.vertical_fraction = number(g, "vertical_fraction", params.vertical_fraction);
    params.chamber_count = static_cast<int>(number(g, "chamber_count", params.chamber_count));
    params.chamber_radius = number(g, "chamber_radius", params.chamber_radius);
    const auto seed = static_cast<uint64_t>(number(g, "seed", 1));
    return std::make_shared<worldsim::GroundTruthWorld>(worldsim::generate_cave(seed, params));
  }
  if (w.contains("corridor")) {
    const json& c = w.at("corridor");
    return std::make_shared<worldsim::GroundTruthWorld>(worldsim::make_corridor(
        number(c, "resolution", 0.2), number(c, "length", 160.0), number(c, "width", 4.0),
        number(c, "height", 3.0), number(c, "bend_amplitude", 0.0),
        number(c, "bend_period", 40.0)));
  }
  if (w.contains("box")) {
    const json& b = w.at("box");
    return std::make_shared<worldsim::GroundTruthWorld>(worldsim::make_box_room(
        number(b, "resolution", 0.2),
        Vec3{number(b, "x", 8.0), number(b, "y", 8.0), number(b, "z", 3.0)}));
  }
  throw ScenarioError("world: expected one of 'file', 'generate', 'corridor', 'box'");
}

}  // namespace

fleet::MissionConfig parse_scenario_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("invalid JSON: ") + e.what());
  }

  fleet::MissionConfig config;
  config.world = parse_world(j, base_dir);

  if (!j.contains("robots") || !j.at("robots").is_number_integer())
    throw ScenarioError("field 'robots' must be an integer");
  config.robot_count = j.at("robots").get<int>();
  if (config.robot_count < 1) throw ScenarioError("field 'robots' must be >= 1");

  config.stagger_s = number(j, "stagger_s", config.stagger_s);
  config.battery_budget_s = number(j, "battery_budget_s", config.battery_budget_s);
  config.seed = static_cast<uint64_t>(number(j, "seed", 1));
  config.tick_dt = number(j, "tick_dt", config.tick_dt);
  config.time_cap_s = number(j, "time_cap_s", config.time_cap_s);
  config.policy_bounds_half = number(j, "policy_bounds_half", config.policy_bounds_half);
  config.pose_noise_sigma = number(j, "pose_noise_sigma", config.pose_noise_sigma);
  config.pose_record_spacing = number(j, "pose_record_spacing", config.pose_record_spacing);
  config.merge_interval_s = number(j, "merge_interval_s", config.merge_interval_s);

  if (j.contains("strategy")) {
    const std::string s = j.at("strategy").get<std::string>();
    if (s == "relay")
      config.strategy = fleet::HomingStrategy::kRelayTree;
    else if (s == "return_to_base")
      config.strategy = fleet::HomingStrategy::kReturnToBase;
    else
      throw ScenarioError("field 'strategy' must be 'relay' or 'return_to_base'");
  }

  if (j.contains("policies")) {
    config.policies.clear();
    for (const auto& p : j.at("policies")) config.policies.push_back(parse_policy(p.get<std::string>()));
    if (config.policies.empty()) throw ScenarioError("field 'policies' must not be empty");
  }

  if (j.contains("sensor")) {
    const json& s = j.at("sensor");
    config.sensor.horizontal_rays = static_cast<int>(number(s, "horizontal_rays", config.sensor.horizontal_rays));
    config.sensor.vertical_rays = static_cast<int>(number(s, "vertical_rays", config.sensor.vertical_rays));
    config.sensor.vfov_deg = number(s, "vfov_deg", config.sensor.vfov_deg);
    config.sensor.max_range = number(s, "max_range", config.sensor.max_range);
    config.sensor.scan_rate = number(s, "scan_rate", config.sensor.scan_rate);
    config.sensor.noise_sigma = number(s, "noise_sigma", config.sensor.noise_sigma);
    config.sensor.dust_rate = number(s, "dust_rate", config.sensor.dust_rate);
    config.sensor.dust_range_max = number(s, "dust_range_max", config.sensor.dust_range_max);
  }
  if (j.contains("constraints")) {
    const json& c = j.at("constraints");
    config.constraints.v_max = number(c, "v_max", config.constraints.v_max);
    config.constraints.v_min = number(c, "v_min", config.constraints.v_min);
    config.constraints.a_max = number(c, "a_max", config.constraints.a_max);
    config.constraints.j_max = number(c, "j_max", config.constraints.j_max);
    config.constraints.t_s = number(c, "t_s", config.constraints.t_s);
    config.constraints.heading_rate_max = number(c, "heading_rate_max", config.constraints.heading_rate_max);
  }
  if (j.contains("homing")) {
    const json& h = j.at("homing");
    config.homing.d_e = number(h, "d_e", config.homing.d_e);
    config.homing.d_c = number(h, "d_c", config.homing.d_c);
    config.homing.v_nominal = number(h, "v_nominal", config.homing.v_nominal);
    config.homing.reserve_time = number(h, "reserve_time", config.homing.reserve_time);
  }
  if (j.contains("map")) {
    const json& m = j.at("map");
    config.map_params.resolution = number(m, "resolution", config.map_params.resolution);
  }
  if (j.contains("plan")) {
    const json& p = j.at("plan");
    config.plan.d_min = number(p, "d_min", config.plan.d_min);
    config.plan.goal_tolerance = number(p, "goal_tolerance", config.plan.goal_tolerance);
    config.plan.unknown_margin_cells =
        static_cast<int>(number(p, "unknown_margin_cells", config.plan.unknown_margin_cells));
  }

  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(e.what());
  }
  return config;
}

fleet::MissionConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_json(buffer.str(),
                             std::filesystem::path(path).parent_path().string());
}

std::string demo_scenario_text() {
  return R"({
  "world": {"corridor": {"length": 120.0, "width": 4.0, "height": 3.0, "resolution": 0.2}},
  "robots": 2,
  "stagger_s": 45.0,
  "policies": ["deep_lateral"],
  "battery_budget_s": 180.0,
  "seed": 7,
  "strategy": "relay",
  "sensor": {"horizontal_rays": 60, "vertical_rays": 8, "max_range": 15.0, "scan_rate": 2.5},
  "homing": {"d_c": 40.0, "v_nominal": 1.2, "reserve_time": 12.0},
  "time_cap_s": 600.0
}
)";
}

}  // namespace cavesim::scenario
