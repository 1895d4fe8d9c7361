// Acceptance suite: one test case per criterion, one printed PASS/FAIL line
// each. Tolerances are pinned in code.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <queue>
#include <mutex>
#include <sstream>

#include "cavesim/fleet.hpp"
#include "cavesim/kdtree.hpp"
#include "cavesim/motion.hpp"
#include "cavesim/occupancy.hpp"
#include "cavesim/planner.hpp"
#include "cavesim/rng.hpp"
#include "cavesim/world.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace cavesim;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int criterion, const char* name, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name,
              detail.c_str());
  std::fflush(stdout);
}

pathplan::Path random_path(Rng& rng, int min_edges, int max_edges, double max_turn) {
  pathplan::Path p;
  Vec3 cur{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 3)};
  p.waypoints.push_back(cur);
  const int edges = min_edges + static_cast<int>(rng.uniform_index(max_edges - min_edges + 1));
  double heading = rng.uniform(0, 2 * M_PI);
  double pitch = 0.0;
  for (int e = 0; e < edges; ++e) {
    heading += rng.uniform(-max_turn, max_turn);
    pitch = clamp(pitch + rng.uniform(-0.5, 0.5), -0.9, 0.9);
    cur += Vec3{std::cos(pitch) * std::cos(heading), std::cos(pitch) * std::sin(heading),
                std::sin(pitch)} *
           rng.uniform(3.5, 20.0);
    p.waypoints.push_back(cur);
  }
  return p;
}

// Shared across criteria 5/6/7/9 to evaluate the safety criterion at the end.
std::vector<std::string> g_final_modes;
std::mutex g_modes_mutex;

void record_modes(const fleet::MissionMetrics& metrics) {
  std::lock_guard<std::mutex> lock(g_modes_mutex);
  for (const auto& r : metrics.robots) g_final_modes.push_back(r.final_mode);
}

fleet::MissionConfig trend_scenario(uint64_t seed, int robots) {
  fleet::MissionConfig c;
  c.world = std::make_shared<worldsim::GroundTruthWorld>(
      worldsim::make_corridor(0.2, 320.0, 5.0, 3.0, 6.0, 45.0));
  c.robot_count = robots;
  c.stagger_s = 150.0;
  c.policies = {fleet::Policy::kDeepLateral};
  c.battery_budget_s = 240.0;
  c.seed = seed;
  c.sensor.horizontal_rays = 40;
  c.sensor.vertical_rays = 15;
  c.sensor.vfov_deg = 180.0;
  c.sensor.max_range = 15.0;
  c.sensor.scan_rate = 2.0;
  c.sensor.noise_sigma = 0.01;
  c.homing.d_c = 50.0;
  c.homing.v_nominal = 1.2;
  c.homing.reserve_time = 15.0;
  c.plan.d_min = 0.5;
  c.pose_record_spacing = 3.0;
  c.merge_interval_s = 20.0;
  c.time_cap_s = 1500.0;
  return c;
}

}  // namespace

TEST_CASE("criterion 1: equation fidelity on 1000 randomized paths") {
  const auto t0 = std::chrono::steady_clock::now();
  motion::MotionConstraints c;
  Rng rng(101);
  size_t segments_checked = 0;
  bool ok = true;

  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const auto path = random_path(rng, 3, 12, 2.5);
    const auto out = motion::sample_trajectory(path, c);
    for (const auto& s : out.profile.segments) {
      // Independent symbol-by-symbol recomputation of the sampling equations.
      const double t_acc = 2.0 * s.length / (s.v_start + s.v_end);
      const double abar = s.v_end == s.v_start ? 0.0 : std::abs(s.v_end - s.v_start) / t_acc;
      const int n = std::max(
          1, abar == 0.0 ? static_cast<int>(std::ceil(s.length / (s.v_start * c.t_s)))
                         : static_cast<int>(std::ceil(t_acc / c.t_s)));
      const double accel =
          abar == 0.0 ? 0.0 : std::copysign(abar / (n * c.t_s), s.v_end - s.v_start);

      auto close = [](double a, double b) {
        return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
      };
      ok = ok && close(s.t_acc, t_acc) && close(s.abar, abar) && s.n_samples == n &&
           close(s.accel, accel) && s.distances.size() == static_cast<size_t>(n);
      for (int i = 1; i <= n && ok; ++i) {
        const double d = s.v_start * c.t_s + i * accel * c.t_s * c.t_s;
        ok = close(s.distances[i - 1], d) && s.distances[i - 1] > 0.0;
      }
      ++segments_checked;
      if (!ok) break;
    }
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 10.0;
  char detail[160];
  std::snprintf(detail, sizeof detail, "%zu segments over 1000 paths, %.2f s (< 10 s)",
                segments_checked, elapsed);
  report(1, "equation fidelity", ok, detail);
  CHECK(ok);
}

TEST_CASE("criterion 2: trajectory constraint envelopes") {
  motion::MotionConstraints c;
  Rng rng(101);  // same corpus as criterion 1
  bool ok = true;
  double worst_speed = 0.0, worst_accel = 0.0;

  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const auto path = random_path(rng, 3, 12, 2.5);
    const auto out = motion::sample_trajectory(path, c);
    const auto& samples = out.trajectory.samples;
    for (size_t i = 0; i + 1 < samples.size(); ++i) {
      const double speed = distance(samples[i + 1].position, samples[i].position) / c.t_s;
      worst_speed = std::max(worst_speed, speed);
      if (speed > c.v_max * (1.0 + 1e-6)) ok = false;
    }
    // Inter-sample acceleration on non-v_min-clamped transitions; the final
    // transition closes the residual (sampling artifact, same convention as
    // the uniform resampler's terminal sample).
    for (size_t i = 0; i + 3 < samples.size(); ++i) {
      const Vec3 v0 = (samples[i + 1].position - samples[i].position) / c.t_s;
      const Vec3 v1 = (samples[i + 2].position - samples[i + 1].position) / c.t_s;
      if (std::min(v0.norm(), v1.norm()) <= c.v_min + 1e-6) continue;
      const double accel = (v1 - v0).norm() / c.t_s;
      worst_accel = std::max(worst_accel, accel);
      if (accel > c.a_max * (1.0 + 1e-3)) ok = false;
    }
  }

  // Straight paths sample at exactly v_max * t_s.
  for (double len : {10.0, 14.8, 23.3}) {
    pathplan::Path straight;
    straight.waypoints = {Vec3{0, 0, 0}, Vec3{len, 0, 0}};
    const auto out = motion::sample_trajectory(straight, c);
    const auto& samples = out.trajectory.samples;
    for (size_t i = 0; i + 2 < samples.size(); ++i) {
      const double spacing = distance(samples[i + 1].position, samples[i].position);
      if (std::abs(spacing - c.v_max * c.t_s) > 1e-9) ok = false;
    }
  }
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "max speed %.8f (cap %.8f), max accel %.5f (cap %.5f), exact straight spacing",
                worst_speed, c.v_max * (1 + 1e-6), worst_accel, c.a_max * (1 + 1e-3));
  report(2, "trajectory constraints", ok, detail);
  CHECK(ok);
}

namespace {

mapping::OccupancyMap random_belief_map(uint64_t seed, int32_t n, double p_occ) {
  Rng rng(seed);
  mapping::OccupancyMap map;
  for (int32_t x = 0; x < n; ++x)
    for (int32_t y = 0; y < n; ++y)
      for (int32_t z = 0; z < n; ++z) {
        const double roll = rng.uniform();
        if (roll < p_occ)
          map.set_log_odds(VoxelIndex{x, y, z}, map.params().clamp_max);
        else if (roll < 0.92)
          map.set_log_odds(VoxelIndex{x, y, z}, map.params().clamp_min);
      }
  return map;
}

double dijkstra_cost(const mapping::OccupancyMap& map, const pathplan::ObstacleIndex& obstacles,
                     const VoxelIndex& start, const VoxelIndex& goal, double d_min, int32_t n) {
  auto traversable = [&](const VoxelIndex& v) {
    if (map.state(v) != mapping::CellState::kFree) return false;
    // The same start-neighborhood exemption the planner applies.
    if (std::abs(v.x - start.x) <= 1 && std::abs(v.y - start.y) <= 1 &&
        std::abs(v.z - start.z) <= 1)
      return true;
    return !obstacles.any_within(map.voxel_center(v), d_min);
  };
  const double res = map.resolution();
  std::map<std::tuple<int, int, int>, double> dist;
  using Entry = std::pair<double, std::tuple<int, int, int>>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  auto key = [](const VoxelIndex& v) { return std::make_tuple(v.x, v.y, v.z); };
  dist[key(start)] = 0.0;
  open.push({0.0, key(start)});
  while (!open.empty()) {
    const auto [d, k] = open.top();
    open.pop();
    if (d > dist.at(k) + 1e-12) continue;
    const auto [kx, ky, kz] = k;
    if (kx == goal.x && ky == goal.y && kz == goal.z) return d;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const VoxelIndex nb{kx + dx, ky + dy, kz + dz};
          if (nb.x < 0 || nb.x >= n || nb.y < 0 || nb.y >= n || nb.z < 0 || nb.z >= n) continue;
          if (!traversable(nb)) continue;
          const double nd = d + res * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          auto it = dist.find(key(nb));
          if (it == dist.end() || nd < it->second - 1e-12) {
            dist[key(nb)] = nd;
            open.push({nd, key(nb)});
          }
        }
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace

TEST_CASE("criterion 3: planner optimality against dijkstra") {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  int compared = 0;
  uint64_t seed = 1;
  while (compared < 50 && seed < 400 && ok) {
    const int32_t n = 20;
    auto map = random_belief_map(seed++, n, 0.10);
    for (int32_t dx = 0; dx < 2; ++dx)
      for (int32_t dy = 0; dy < 2; ++dy)
        for (int32_t dz = 0; dz < 2; ++dz) {
          map.set_log_odds(VoxelIndex{dx, dy, dz}, map.params().clamp_min);
          map.set_log_odds(VoxelIndex{n - 1 - dx, n - 1 - dy, n - 1 - dz},
                           map.params().clamp_min);
        }
    const auto index =
        pathplan::build_obstacle_index(map, AABB{Vec3{-1e9, -1e9, -1e9}, Vec3{1e9, 1e9, 1e9}});
    pathplan::PlanConfig config;
    config.d_min = 0.25;
    const VoxelIndex s{0, 0, 0}, g{n - 1, n - 1, n - 1};

    const double oracle = dijkstra_cost(map, index, s, g, config.d_min, n);
    if (std::isinf(oracle)) continue;  // need 50 solvable instances
    const auto path =
        pathplan::plan_path(map, index, map.voxel_center(s), map.voxel_center(g), config);
    if (!path.has_value()) {
      ok = false;
      break;
    }
    if (std::abs(path->length() - oracle) > 1e-9 * std::max(1.0, oracle)) ok = false;

    // Pessimism: no sample along the path touches unknown or occupied cells.
    for (size_t i = 0; i + 1 < path->waypoints.size() && ok; ++i) {
      const Vec3 a = path->waypoints[i], b = path->waypoints[i + 1];
      const int samples = 1 + static_cast<int>(distance(a, b) / 0.05);
      for (int k = 0; k <= samples; ++k) {
        const Vec3 p = a + (b - a) * (static_cast<double>(k) / samples);
        if (map.state(p) != mapping::CellState::kFree) ok = false;
      }
    }
    ++compared;
  }
  const double elapsed = seconds_since(t0);
  ok = ok && compared == 50 && elapsed < 60.0;
  char detail[160];
  std::snprintf(detail, sizeof detail, "%d instances, cost == oracle, %.1f s (< 60 s)", compared,
                elapsed);
  report(3, "planner optimality", ok, detail);
  CHECK(ok);
}

namespace {

// Exhaustive homing-tree reference (same as the unit-test oracle).
struct OracleTree {
  struct ONode {
    uint32_t id;
    homing::NodeKind kind;
    Vec3 position;
    int parent = -1;
  };
  std::vector<ONode> nodes;
  homing::HomingParams params;
  explicit OracleTree(const Vec3& base, const homing::HomingParams& p) : params(p) {
    nodes.push_back({0, homing::NodeKind::kBase, base, -1});
  }
  double acc_cost(int idx) const {
    double sum = 0.0;
    while (!homing::is_communication(nodes[idx].kind)) {
      const int parent = nodes[idx].parent;
      sum += distance(nodes[idx].position, nodes[parent].position) / params.v_nominal;
      idx = parent;
    }
    return sum;
  }
  bool insert(const homing::Node& n, const homing::FreeRayFn& ray) {
    if (homing::is_communication(n.kind)) {
      int best = -1;
      double best_cost = 1e300;
      for (size_t i = 0; i < nodes.size(); ++i) {
        if (!homing::is_communication(nodes[i].kind)) continue;
        const double c = distance(n.position, nodes[i].position) / params.v_nominal;
        if (c < best_cost) {
          best_cost = c;
          best = static_cast<int>(i);
        }
      }
      const int self = static_cast<int>(nodes.size());
      nodes.push_back({n.id, n.kind, n.position, best});
      for (size_t i = 0; i + 1 < nodes.size(); ++i) {
        if (nodes[i].kind != homing::NodeKind::kPose) continue;
        const double direct = distance(n.position, nodes[i].position) / params.v_nominal;
        if (direct < acc_cost(static_cast<int>(i)) && ray(n.position, nodes[i].position))
          nodes[i].parent = self;
      }
      return true;
    }
    for (const auto& v : nodes)
      if (distance(n.position, v.position) < params.d_e) return false;
    int best = -1;
    double best_total = 1e300;
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (!ray(n.position, nodes[i].position)) continue;
      const double total = distance(n.position, nodes[i].position) / params.v_nominal +
                           acc_cost(static_cast<int>(i));
      if (total < best_total) {
        best_total = total;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) return false;
    nodes.push_back({n.id, n.kind, n.position, best});
    return true;
  }
};

}  // namespace

TEST_CASE("criterion 4: homing tree equals the exhaustive oracle") {
  const auto t0 = std::chrono::steady_clock::now();
  homing::HomingParams params;
  params.d_e = 1.0;
  params.v_nominal = 1.0;
  const homing::FreeRayFn wall = [](const Vec3& a, const Vec3& b) {
    return (a.x - 10.0) * (b.x - 10.0) >= 0.0;  // opaque plane x = 10
  };
  const homing::FreeRayFn always = [](const Vec3&, const Vec3&) { return true; };

  bool ok = true;
  size_t mutations = 0;
  Rng rng(40);
  for (int trial = 0; trial < 200 && ok; ++trial) {
    homing::HomingTree tree(Vec3{0, 0, 0}, params);
    OracleTree oracle(Vec3{0, 0, 0}, params);
    const homing::FreeRayFn& ray = trial % 2 == 0 ? always : wall;
    uint32_t next_id = 1;
    const int ops = 3 + static_cast<int>(rng.uniform_index(18));  // up to 20 nodes
    for (int op = 0; op < ops && ok; ++op) {
      homing::Node n;
      n.id = next_id++;
      n.position = Vec3{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(0, 5)};
      n.kind = rng.uniform() < 0.25
                   ? (rng.uniform() < 0.5 ? homing::NodeKind::kLandedRobot
                                          : homing::NodeKind::kDeployedBeacon)
                   : homing::NodeKind::kPose;
      const bool inserted = tree.insert(n, ray);
      const bool oracle_inserted = oracle.insert(n, ray);
      ok = ok && inserted == oracle_inserted && tree.size() == oracle.nodes.size();
      ok = ok && tree.acyclic();
      for (const auto& on : oracle.nodes) {
        const homing::Node* mine = tree.find(on.id);
        if (!mine) {
          ok = false;
          break;
        }
        const uint32_t expected_parent =
            on.parent < 0 ? homing::Node::kNoParent : oracle.nodes[on.parent].id;
        if (mine->parent != expected_parent) ok = false;
        const double oracle_acc = oracle.acc_cost(static_cast<int>(&on - oracle.nodes.data()));
        if (std::abs(tree.accumulated_cost(on.id) - oracle_acc) > 1e-9) ok = false;
      }
      // Comm-chain invariant.
      for (const auto& node : tree.nodes()) {
        if (!homing::is_communication(node.kind) || node.id == 0) continue;
        const homing::Node* parent = tree.find(node.parent);
        if (!parent || !homing::is_communication(parent->kind)) ok = false;
      }
      ++mutations;
    }
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 30.0;
  char detail[160];
  std::snprintf(detail, sizeof detail, "%zu mutations over 200 sequences, %.2f s (< 30 s)",
                mutations, elapsed);
  report(4, "homing tree oracle equivalence", ok, detail);
  CHECK(ok);
}

TEST_CASE("criterion 5: homing trend over 6 seeds") {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kSeeds = 6;
  constexpr int kRobots = 5;

  auto run_pair = [&](uint64_t seed) {
    auto config = trend_scenario(seed, kRobots);
    config.strategy = fleet::HomingStrategy::kRelayTree;
    const auto relay = fleet::run_mission(config);
    config.strategy = fleet::HomingStrategy::kReturnToBase;
    const auto base = fleet::run_mission(config);
    record_modes(relay);
    record_modes(base);
    return std::make_pair(relay, base);
  };

  std::vector<std::future<std::pair<fleet::MissionMetrics, fleet::MissionMetrics>>> futures;
  for (int s = 0; s < kSeeds; ++s)
    futures.push_back(std::async(std::launch::async, run_pair, 100 + s));

  std::vector<double> relay_mean(kRobots, 0.0);
  double baseline_sum = 0.0;
  size_t baseline_count = 0;
  for (auto& f : futures) {
    const auto [relay, base] = f.get();
    for (int i = 0; i < kRobots; ++i) relay_mean[i] += relay.robots[i].exploration_time_s;
    for (const auto& r : base.robots) {
      baseline_sum += r.exploration_time_s;
      ++baseline_count;
    }
  }
  for (double& m : relay_mean) m /= kSeeds;
  const double baseline = baseline_sum / baseline_count;

  std::vector<double> increase(kRobots);
  for (int i = 0; i < kRobots; ++i)
    increase[i] = 100.0 * (relay_mean[i] - baseline) / baseline;

  // Non-decreasing ranks; a single inversion of <= 2 percentage points allowed.
  int inversions = 0;
  double worst_inversion = 0.0;
  for (int i = 0; i + 1 < kRobots; ++i) {
    if (increase[i + 1] < increase[i] - 1e-9) {
      ++inversions;
      worst_inversion = std::max(worst_inversion, increase[i] - increase[i + 1]);
    }
  }
  const double elapsed = seconds_since(t0);
  const bool ok = (inversions == 0 || (inversions == 1 && worst_inversion <= 2.0)) &&
                  increase[kRobots - 1] >= 10.0 && elapsed < 900.0;
  std::ostringstream detail;
  detail << "baseline " << baseline << " s; increase %:";
  char buf[32];
  for (int i = 0; i < kRobots; ++i) {
    std::snprintf(buf, sizeof buf, " %.1f", increase[i]);
    detail << buf;
  }
  std::snprintf(buf, sizeof buf, "; %.0f s", elapsed);
  detail << buf << " (< 900 s)";
  report(5, "homing trend reproduction", ok, detail.str());
  CHECK(ok);
}

TEST_CASE("criterion 6: two-robot relay saving in a corridor") {
  auto config = trend_scenario(7, 2);  // 320 m winding corridor (>= 150 m)
  config.strategy = fleet::HomingStrategy::kRelayTree;
  fleet::MissionEngine engine(config);
  engine.run();
  const auto metrics = engine.metrics();
  record_modes(metrics);

  const auto& r1 = metrics.robots[0];
  const auto& r2 = metrics.robots[1];
  const double flight1 = r1.homing_flight_time_s;
  const double flight2 = r2.homing_flight_time_s;
  const bool strictly_less = flight2 < flight1;

  // The relay lets robot 2 land deeper; the distance it did not have to fly
  // back, at the assumed homing speed, predicts the time saving.
  const auto views = engine.robot_views();
  const Vec3 base = config.world->base_station();
  const double depth1 = distance(views[0].position, base);
  const double depth2 = distance(views[1].position, base);
  const double saving = flight1 - flight2;
  const double predicted = (depth2 - depth1) / config.homing.v_nominal;
  const bool within_factor2 =
      saving > 0 && predicted > 0 && saving >= predicted / 2.0 && saving <= predicted * 2.0;

  const bool ok = strictly_less && within_factor2;
  char detail[220];
  std::snprintf(detail, sizeof detail,
                "homing flights %.1f s vs %.1f s; landings %.1f m vs %.1f m from base; saving "
                "%.1f s, predicted %.1f s",
                flight1, flight2, depth1, depth2, saving, predicted);
  report(6, "two-robot relay saving", ok, detail);
  CHECK(ok);
}

TEST_CASE("criterion 7: mapping fidelity in a closed room") {
  fleet::MissionConfig config;
  config.world =
      std::make_shared<worldsim::GroundTruthWorld>(worldsim::make_box_room(0.2, Vec3{7, 5, 2.4}));
  config.robot_count = 1;
  config.stagger_s = 0.0;
  config.battery_budget_s = 200.0;
  config.seed = 3;
  config.sensor.horizontal_rays = 96;
  config.sensor.vertical_rays = 21;
  config.sensor.vfov_deg = 180.0;
  config.sensor.max_range = 12.0;
  config.sensor.scan_rate = 2.5;
  config.sensor.noise_sigma = 0.0;  // noise-free run
  config.homing.d_c = 30.0;
  config.homing.reserve_time = 10.0;
  config.plan.d_min = 0.5;
  config.time_cap_s = 400.0;

  fleet::MissionEngine engine(config);
  engine.run();
  record_modes(engine.metrics());

  const auto dir = fs::temp_directory_path() / "cavesim_acceptance_eval";
  fs::create_directories(dir);
  engine.write_artifacts(dir.string());

  const auto points = mapping::load_map_ascii_occupied((dir / "map_merged.txt").string());
  bool ok = !points.empty();
  // Every map-occupied voxel within one voxel diagonal of a true surface.
  const double diag = 0.2 * std::sqrt(3.0);
  double worst = 0.0;
  for (const Vec3& p : points) {
    const double d = config.world->exact_local_clearance(p, 2.0);
    worst = std::max(worst, d);
    if (d > diag + 1e-9) ok = false;
  }
  // Metric evaluation as cmd_eval_map computes it.
  const auto reportacc = mapping::accuracy_from_points(points, *config.world);
  if (reportacc.mean > 0.2) ok = false;

  char detail[160];
  std::snprintf(detail, sizeof detail,
                "%zu occupied voxels, worst surface distance %.3f m (<= %.3f), mean error %.4f m "
                "(<= 0.2)",
                points.size(), worst, diag, reportacc.mean);
  report(7, "mapping fidelity", ok, detail);
  CHECK(ok);
}

TEST_CASE("criterion 8: intensity filter equals quantile oracle") {
  Rng rng(77);
  bool ok = true;

  // 1000 random scans against the sort-based quantile oracle.
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    worldsim::Scan scan;
    scan.max_range = 50.0;
    const int n = 1 + static_cast<int>(rng.uniform_index(80));
    for (int i = 0; i < n; ++i)
      scan.returns.push_back(
          {Vec3{1, 0, 0}, rng.uniform(0.1, 10.0), rng.uniform(0.0, 1.0)});
    const double p = rng.uniform(0.0, 0.95);
    const double neighborhood = rng.uniform(0.5, 10.0);

    std::vector<double> sorted;
    for (const auto& r : scan.returns) sorted.push_back(r.intensity);
    std::sort(sorted.begin(), sorted.end());
    const double q =
        sorted[std::min(sorted.size() - 1, static_cast<size_t>(std::floor(p * sorted.size())))];
    size_t expected = 0;
    for (const auto& r : scan.returns)
      if (!(r.range <= neighborhood && r.intensity < q)) ++expected;

    const auto out = mapping::filter_scan(scan, neighborhood, p);
    if (out.returns.size() != expected) ok = false;
  }

  // Injected dust below the surface band is fully removed at the 10th
  // percentile when dust makes up less than a tenth of the scan.
  size_t dust_checked = 0;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    worldsim::Scan scan;
    scan.max_range = 50.0;
    const int surface = 60 + static_cast<int>(rng.uniform_index(40));
    for (int i = 0; i < surface; ++i) {
      const double range = rng.uniform(4.0, 45.0);
      scan.returns.push_back(
          {Vec3{1, 0, 0}, range, worldsim::surface_intensity(range, scan.max_range)});
    }
    const int dust = 1 + static_cast<int>(rng.uniform_index(surface / 12));
    for (int i = 0; i < dust; ++i)
      scan.returns.push_back({Vec3{0, 1, 0}, rng.uniform(0.2, 2.9),
                              rng.uniform(0.0, worldsim::kDustIntensityMax)});
    const auto out = mapping::filter_scan(scan, 3.0, 0.10);
    for (const auto& r : out.returns)
      if (r.intensity <= worldsim::kDustIntensityMax && r.range <= 3.0) ok = false;
    dust_checked += dust;
  }
  char detail[120];
  std::snprintf(detail, sizeof detail, "1000 scans match oracle; %zu dust returns removed",
                dust_checked);
  report(8, "intensity filter correctness", ok, detail);
  CHECK(ok);
}

TEST_CASE("criterion 9: byte-identical metrics across runs") {
  const auto dir = fs::temp_directory_path() / "cavesim_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto scenario_path = dir / "scenario.json";
  {
    std::ofstream s(scenario_path);
    s << R"({
  "world": {"corridor": {"length": 60.0, "width": 4.0, "height": 3.0,
                          "bend_amplitude": 5.0, "bend_period": 30.0}},
  "robots": 2,
  "stagger_s": 20.0,
  "policies": ["deep_lateral"],
  "battery_budget_s": 70.0,
  "seed": 21,
  "strategy": "relay",
  "sensor": {"horizontal_rays": 40, "vertical_rays": 15, "vfov_deg": 180.0,
              "max_range": 12.0, "scan_rate": 2.0, "noise_sigma": 0.01},
  "homing": {"d_c": 40.0, "v_nominal": 1.2, "reserve_time": 10.0},
  "plan": {"d_min": 0.5},
  "time_cap_s": 400.0
}
)";
  }
  auto run_once = [&](const char* out_name) {
    const std::string cmd = std::string(CAVESIM_BIN) + " run --scenario " +
                            scenario_path.string() + " --out " + (dir / out_name).string() +
                            " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  const int rc1 = run_once("out1");
  const int rc2 = run_once("out2");

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string m1 = slurp(dir / "out1" / "metrics.json");
  const std::string m2 = slurp(dir / "out2" / "metrics.json");
  const bool ok = rc1 == 0 && rc2 == 0 && !m1.empty() && m1 == m2;

  // Track the robots' final modes for the safety criterion.
  if (ok) {
    const auto metrics = nlohmann::json::parse(m1);
    std::lock_guard<std::mutex> lock(g_modes_mutex);
    for (const auto& r : metrics["robots"]) g_final_modes.push_back(r["final_mode"]);
  }
  char detail[120];
  std::snprintf(detail, sizeof detail, "metrics files %zu bytes, identical=%s", m1.size(),
                m1 == m2 ? "yes" : "no");
  report(9, "end-to-end determinism", ok, detail);
  CHECK(ok);
}

TEST_CASE("criterion 10: no collision failures across acceptance runs") {
  std::lock_guard<std::mutex> lock(g_modes_mutex);
  size_t failed = 0;
  for (const auto& mode : g_final_modes)
    if (mode == "failed") ++failed;
  const bool ok = !g_final_modes.empty() && failed == 0;
  char detail[120];
  std::snprintf(detail, sizeof detail, "%zu robot runs, %zu failed", g_final_modes.size(),
                failed);
  report(10, "collision-free acceptance runs", ok, detail);
  CHECK(ok);
}
