#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "cavesim/fleet.hpp"
#include "cavesim/scenario.hpp"

namespace {

using namespace cavesim;

int log_level() {
  const char* env = std::getenv("CAVESIM_LOG");
  if (!env) return 1;
  const std::string v = env;
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cout << msg << "\n";
}

int cmd_generate_world(uint64_t seed, const worldsim::CaveParams& params,
                       const std::string& out_path) {
  const auto world = worldsim::generate_cave(seed, params);
  worldsim::save_world(world, out_path);

  const double res = world.resolution();
  const size_t free_voxels = world.free_count();
  std::printf("world: %d x %d x %d voxels at %.3g m\n", world.nx(), world.ny(), world.nz(), res);
  std::printf("free volume: %.1f m^3 (%zu voxels)\n", free_voxels * res * res * res, free_voxels);

  // Corridor-width histogram: twice the clearance sampled over free voxels.
  std::map<int, size_t> hist;
  size_t sampled = 0;
  for (int32_t z = 0; z < world.nz(); ++z)
    for (int32_t y = 0; y < world.ny(); ++y)
      for (int32_t x = 0; x < world.nx(); ++x) {
        const VoxelIndex v{x, y, z};
        if (world.occupied(v)) continue;
        if (++sampled % 7 != 0) continue;  // subsample for speed
        const double width = 2.0 * std::sqrt(world.center_clearance_sq(v));
        hist[static_cast<int>(width / 0.5)]++;
      }
  std::printf("corridor width histogram (0.5 m buckets):\n");
  for (const auto& [bucket, count] : hist)
    std::printf("  %4.1f - %4.1f m: %zu\n", bucket * 0.5, (bucket + 1) * 0.5, count);
  std::printf("saved: %s\n", out_path.c_str());
  return 0;
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir) {
  const auto config = scenario::load_scenario(scenario_path);
  fleet::MissionEngine engine(config);
  info("running mission...");
  engine.run();
  engine.write_artifacts(out_dir);
  const auto metrics = engine.metrics();
  for (const auto& r : metrics.robots)
    std::printf("robot %d: %s flight=%.1fs explored=%.1fm^3 exploration=%.1fs\n", r.robot_id,
                r.final_mode.c_str(), r.flight_time_s, r.explored_volume_m3, r.exploration_time_s);
  std::printf("relay connected: %s\n", metrics.relay_connected ? "yes" : "no");
  std::printf("artifacts: %s\n", out_dir.c_str());
  return 0;
}

struct ExperimentResult {
  std::vector<double> relay_explore;     // per robot rank
  std::vector<double> baseline_explore;  // per robot rank
};

ExperimentResult run_pair(fleet::MissionConfig config, uint64_t seed) {
  config.seed = seed;
  ExperimentResult result;

  config.strategy = fleet::HomingStrategy::kRelayTree;
  const auto relay = fleet::run_mission(config);
  for (const auto& r : relay.robots) result.relay_explore.push_back(r.exploration_time_s);

  config.strategy = fleet::HomingStrategy::kReturnToBase;
  const auto base = fleet::run_mission(config);
  for (const auto& r : base.robots) result.baseline_explore.push_back(r.exploration_time_s);
  return result;
}

int cmd_homing_experiment(const std::string& scenario_path, int reps, const std::string& out_dir) {
  auto config = scenario::load_scenario(scenario_path);
  if (config.robot_count < 2) {
    std::fprintf(stderr, "error: homing-experiment needs a scenario with >= 2 robots\n");
    return 2;
  }
  if (reps < 1) {
    std::fprintf(stderr, "error: --reps must be >= 1\n");
    return 2;
  }
  if (reps == 1)
    std::fprintf(stderr, "warning: single repetition; the trend estimate will be noisy\n");

  // Repetitions run in parallel; results are keyed by seed so aggregation is
  // order-independent.
  std::vector<std::future<ExperimentResult>> futures;
  for (int rep = 0; rep < reps; ++rep) {
    const uint64_t seed = config.seed + static_cast<uint64_t>(rep);
    futures.push_back(std::async(std::launch::async, run_pair, config, seed));
  }
  std::vector<ExperimentResult> results;
  for (auto& f : futures) results.push_back(f.get());

  const int n = config.robot_count;
  std::vector<double> relay_mean(n, 0.0);
  double baseline_mean = 0.0;
  size_t baseline_count = 0;
  for (const auto& r : results) {
    for (int i = 0; i < n; ++i) relay_mean[i] += r.relay_explore[i];
    for (double t : r.baseline_explore) {
      baseline_mean += t;
      ++baseline_count;
    }
  }
  for (double& m : relay_mean) m /= reps;
  baseline_mean /= static_cast<double>(baseline_count);

  std::printf("baseline exploration time: %.2f s (averaged over %zu flights)\n", baseline_mean,
              baseline_count);
  std::printf("%-38s", "Robot");
  for (int i = 0; i < n; ++i) std::printf(" %9d", i + 1);
  std::printf("\n%-38s", "Exploration time before homing (secs)");
  for (int i = 0; i < n; ++i) std::printf(" %9.2f", relay_mean[i]);
  std::printf("\n%-38s", "Exploration time increase (%)");
  std::vector<double> increase(n);
  for (int i = 0; i < n; ++i) {
    increase[i] = 100.0 * (relay_mean[i] - baseline_mean) / baseline_mean;
    std::printf(" %9.1f", increase[i]);
  }
  std::printf("\n");

  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/homing_experiment.csv");
  csv << "rank,mean_exploration_s,increase_pct\n";
  char buf[100];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", i + 1, relay_mean[i], increase[i]);
    csv << buf;
  }
  std::snprintf(buf, sizeof buf, "baseline,%.6f,\n", baseline_mean);
  csv << buf;
  std::printf("table written: %s/homing_experiment.csv\n", out_dir.c_str());
  return 0;
}

int cmd_eval_map(const std::string& map_path, const std::string& world_path) {
  const auto world = worldsim::load_world(world_path);
  const auto points = mapping::load_map_ascii_occupied(map_path);
  const auto report = mapping::accuracy_from_points(points, world);
  std::printf("points: %zu\n", report.per_point_errors.size());
  std::printf("mean error:   %.4f m\n", report.mean);
  std::printf("stddev error: %.4f m\n", report.stddev);

  std::map<int, size_t> hist;
  for (double e : report.per_point_errors) hist[static_cast<int>(e / 0.1)]++;
  const size_t total = report.per_point_errors.size();
  std::printf("error histogram (0.1 m buckets):\n");
  for (const auto& [bucket, count] : hist) {
    const int bars = static_cast<int>(60.0 * count / total + 0.5);
    std::printf("  %4.1f-%4.1f m %6zu |%s\n", bucket * 0.1, (bucket + 1) * 0.1, count,
                std::string(bars, '#').c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cavesim: multi-robot cave exploration simulator"};
  app.require_subcommand(1);

  // generate-world
  auto* gen = app.add_subcommand("generate-world", "Generate a random cave world file");
  uint64_t seed = 1;
  worldsim::CaveParams params;
  std::string out_path = "world.scsw";
  gen->add_option("--seed", seed, "Generation seed");
  gen->add_option("--tunnels", params.tunnel_count, "Tunnel count");
  gen->add_option("--width", params.tunnel_width, "Tunnel width (m)");
  gen->add_option("--length", params.tunnel_length, "Mean tunnel length (m)");
  gen->add_option("--resolution", params.resolution, "Voxel resolution (m)");
  gen->add_option("--chambers", params.chamber_count, "Chamber count");
  gen->add_option("--out", out_path, "Output world file");

  // run
  auto* run = app.add_subcommand("run", "Run a mission scenario");
  std::string scenario_path;
  std::string out_dir = "out";
  run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--out", out_dir, "Artifact output directory");

  // homing-experiment
  auto* exp = app.add_subcommand("homing-experiment",
                                 "Relay homing vs return-to-base comparison table");
  std::string exp_scenario;
  int reps = 6;
  std::string exp_out = "out";
  exp->add_option("--scenario", exp_scenario, "Scenario JSON file")->required();
  exp->add_option("--reps", reps, "Repetitions (distinct seeds)");
  exp->add_option("--out", exp_out, "Output directory");

  // eval-map
  auto* eval = app.add_subcommand("eval-map", "Point-to-point map accuracy vs ground truth");
  std::string map_path, world_path;
  eval->add_option("--map", map_path, "SCSM1 map export")->required();
  eval->add_option("--world", world_path, "SCSW1 world file")->required();

  // init-scenario
  auto* init = app.add_subcommand("init-scenario", "Write the bundled demo scenario");
  std::string init_out = "demo_scenario.json";
  init->add_option("--out", init_out, "Scenario output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate_world(seed, params, out_path);
    if (run->parsed()) return cmd_run(scenario_path, out_dir);
    if (exp->parsed()) return cmd_homing_experiment(exp_scenario, reps, exp_out);
    if (eval->parsed()) return cmd_eval_map(map_path, world_path);
    if (init->parsed()) {
      std::ofstream out(init_out);
      if (!out) throw std::runtime_error("cannot open " + init_out);
      out << scenario::demo_scenario_text();
      std::printf("scenario written: %s\n", init_out.c_str());
      return 0;
    }
  } catch (const scenario::ScenarioError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
