#include "cavesim/fleet.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "json.hpp"

namespace cavesim::fleet {

using mapping::CellState;
using mapping::OccupancyMap;
using motion::Tracker;
using worldsim::GroundTruthWorld;

const char* to_string(Policy p) {
  switch (p) {
    case Policy::kDeepLateral: return "deep_lateral";
    case Policy::kHighestFrontier: return "highest_frontier";
    case Policy::kUnknownRatio: return "unknown_ratio";
    case Policy::kFullCoverageBounded: return "full_coverage_bounded";
  }
  return "?";
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::kIdle: return "idle";
    case Mode::kExploring: return "exploring";
    case Mode::kHoming: return "homing";
    case Mode::kLanded: return "landed";
    case Mode::kFailed: return "failed";
  }
  return "?";
}

void MissionConfig::validate() const {
  if (!world) throw std::invalid_argument("config: world missing");
  if (robot_count < 1) throw std::invalid_argument("config: robot_count must be >= 1");
  if (battery_budget_s <= 0.0) throw std::invalid_argument("config: battery_budget_s must be > 0");
  if (tick_dt <= 0.0 || tick_dt > constraints.t_s)
    throw std::invalid_argument("config: tick_dt must be in (0, t_s]");
  if (stagger_s < 0.0) throw std::invalid_argument("config: stagger_s must be >= 0");
  if (policies.empty()) throw std::invalid_argument("config: policies must not be empty");
  constraints.validate();
  homing.validate();
  sensor.validate();
}

namespace {
// Entry speed for a dispatched path: the current velocity projected onto the
// path's first edge. A reversal projects negative and enters at v_min, so the
// reference waits for the turning robot instead of racing away from it.
double entry_speed_for(const pathplan::Path& path, const Vec3& velocity,
                       const motion::MotionConstraints& c) {
  if (path.waypoints.size() < 2) return c.v_min;
  const Vec3 dir = (path.waypoints[1] - path.waypoints[0]).normalized();
  return clamp(velocity.dot(dir), c.v_min, c.v_max);
}
}  // namespace

std::vector<std::pair<int, int>> comm_graph(const std::vector<Vec3>& positions, double d_c) {
  std::vector<std::pair<int, int>> edges;
  for (size_t i = 0; i < positions.size(); ++i)
    for (size_t j = i + 1; j < positions.size(); ++j)
      if (distance(positions[i], positions[j]) <= d_c)
        edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return edges;
}

bool comm_connected(size_t count, const std::vector<std::pair<int, int>>& edges) {
  if (count <= 1) return true;
  std::vector<int> parent(count);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (const auto& [a, b] : edges) parent[find(a)] = find(b);
  for (size_t i = 1; i < count; ++i)
    if (find(static_cast<int>(i)) != find(0)) return false;
  return true;
}

// --- goal selection ----------------------------------------------------------

std::vector<Vec3> rank_goals(Policy policy, const OccupancyMap& map,
                             const std::vector<VoxelIndex>& frontiers, const GoalContext& ctx) {
  struct Candidate {
    double key1, key2;
    VoxelIndex cell;
    Vec3 center;
  };
  std::vector<Candidate> cands;
  cands.reserve(frontiers.size());

  Vec3 travel_dir = ctx.velocity;
  if (travel_dir.norm() < 1e-6)
    travel_dir = Vec3{std::cos(ctx.heading), std::sin(ctx.heading), 0.0};
  travel_dir = travel_dir.normalized();

  for (const VoxelIndex& f : frontiers) {
    const Vec3 c = map.voxel_center(f);
    // Frontier cells around already-reached goals are unobservable leftovers
    // (sensor blind spots); revisiting them would loop forever.
    bool visited = false;
    for (const Vec3& v : ctx.visited)
      if (distance(v, c) < 1.5) {
        visited = true;
        break;
      }
    if (visited) continue;
    if (policy == Policy::kFullCoverageBounded) {
      if (ctx.coverage_bounds && !ctx.coverage_bounds->contains(c)) continue;
    }
    const double dist = distance(ctx.position, c);
    Candidate cand{0.0, dist, f, c};
    switch (policy) {
      case Policy::kDeepLateral: {
        const Vec3 to = (c - ctx.position);
        const double n = to.norm();
        const double cosang = n < 1e-9 ? 1.0 : clamp(to.dot(travel_dir) / n, -1.0, 1.0);
        cand.key1 = std::acos(cosang);
        break;
      }
      case Policy::kHighestFrontier:
        cand.key1 = -c.z;
        break;
      case Policy::kUnknownRatio:
        cand.key1 = -mapping::unknown_free_ratio(map, c, ctx.bounds_half);
        break;
      case Policy::kFullCoverageBounded:
        cand.key1 = dist;
        break;
    }
    cands.push_back(cand);
  }

  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.key1 != b.key1) return a.key1 < b.key1;
    if (a.key2 != b.key2) return a.key2 < b.key2;
    return a.cell < b.cell;
  });

  // Deduplicate: skip candidates within 1.5 m of an already chosen one.
  std::vector<Vec3> goals;
  for (const Candidate& cand : cands) {
    bool close = false;
    for (const Vec3& g : goals)
      if (distance(g, cand.center) < 1.5) {
        close = true;
        break;
      }
    if (!close) goals.push_back(cand.center);
  }
  return goals;
}

std::optional<Vec3> select_goal(Policy policy, const OccupancyMap& map,
                                const std::vector<VoxelIndex>& frontiers, const GoalContext& ctx) {
  const auto goals = rank_goals(policy, map, frontiers, ctx);
  if (goals.empty()) return std::nullopt;
  return goals.front();
}

// --- engine ------------------------------------------------------------------

struct MissionEngine::Robot {
  int id{0};
  Mode mode{Mode::kIdle};
  Policy policy{Policy::kDeepLateral};
  double activation_time{0.0};
  double battery{0.0};

  OccupancyMap map;
  homing::HomingTree tree;
  Tracker tracker;
  Vec3 spawn;

  uint64_t scan_seed_base{0};
  uint64_t scan_counter{0};
  uint64_t airborne_ticks{0};
  uint32_t next_node_id{0};
  double traveled_since_pose{0.0};
  std::vector<Vec3> breadcrumbs;
  std::vector<Vec3> visited_goals;
  std::vector<std::pair<Vec3, int>> goal_attempts;
  std::optional<Vec3> goal;
  bool braking{false};
  bool homing_brake{false};
  double last_plan_attempt{-1e9};
  int consecutive_plan_failures{0};
  bool append_pending{false};

  // caches keyed by map version
  uint64_t cache_version{~0ull};
  pathplan::ObstacleIndex obstacle_index;
  std::vector<VoxelIndex> frontiers;

  // metrics
  double flight_time{0.0};
  double trajectory_length{0.0};
  double exploration_time{-1.0};
  double homing_start{-1.0};
  double homing_flight_time{0.0};

  Robot(const OccupancyMap::Params& mp, const Vec3& base, const homing::HomingParams& hp,
        const motion::MotionConstraints& c, const motion::ReferenceState& init)
      : map(mp), tree(base, hp), tracker(c, init) {}
};

MissionEngine::MissionEngine(const MissionConfig& config) : config_(config) {
  config.validate();
  const GroundTruthWorld& world = *config_.world;
  const auto& spawns = world.spawn_points();
  if (spawns.empty()) throw std::invalid_argument("config: world has no spawn points");

  for (int i = 0; i < config_.robot_count; ++i) {
    const Vec3 spawn = spawns[i % spawns.size()];
    motion::ReferenceState init;
    init.position = spawn;
    auto robot = std::make_unique<Robot>(config_.map_params, world.base_station(), config_.homing,
                                         config_.constraints, init);
    robot->id = i;
    robot->policy = config_.policies[i % config_.policies.size()];
    robot->activation_time = i * config_.stagger_s;
    robot->battery = config_.battery_budget_s;
    robot->spawn = spawn;
    robot->next_node_id = static_cast<uint32_t>(i) * 1'000'000u + 1u;
    robot->scan_seed_base = Rng(config_.seed).fork(static_cast<uint64_t>(i) + 1).next_u64();
    robot->breadcrumbs.push_back(spawn);
    robots_.push_back(std::move(robot));
  }
}

MissionEngine::~MissionEngine() = default;

homing::FreeRayFn MissionEngine::free_ray() const {
  // Slightly under the planning clearance: tree nodes get dropped along the
  // flown track, where tracking error already ate part of the margin; a full
  // d_min gate would reject most of them.
  const GroundTruthWorld* world = config_.world.get();
  const double clearance =
      std::max(config_.world->resolution(), config_.plan.d_min - 0.25 * config_.world->resolution());
  return [world, clearance](const Vec3& a, const Vec3& b) {
    return worldsim::collision_free_segment(*world, a, b, clearance);
  };
}

void MissionEngine::log(double t, int robot, const std::string& what) {
  events_.push_back({t, robot, what});
}

bool MissionEngine::finished() const {
  for (const auto& r : robots_)
    if (r->mode != Mode::kLanded && r->mode != Mode::kFailed) return false;
  return true;
}

void MissionEngine::run() {
  while (!finished() && time_ < config_.time_cap_s) tick();
}

void MissionEngine::step(double dt) {
  const int ticks = std::max(1, static_cast<int>(std::llround(dt / config_.tick_dt)));
  for (int i = 0; i < ticks; ++i) tick();
}

void MissionEngine::tick() {
  for (auto& robot : robots_) robot_tick(*robot);
  if (config_.strategy == HomingStrategy::kRelayTree &&
      (merge_requested_ || time_ >= next_merge_time_)) {
    sync_trees();
    merge_requested_ = false;
    next_merge_time_ = time_ + config_.merge_interval_s;
  }
  time_ += config_.tick_dt;
  ++tick_count_;
}

namespace {

bool any_occupied_within(const OccupancyMap& map, const Vec3& p, double radius) {
  const double res = map.resolution();
  const VoxelIndex lo = map.to_voxel(p - Vec3{radius, radius, radius});
  const VoxelIndex hi = map.to_voxel(p + Vec3{radius, radius, radius});
  const double r_sq = radius * radius;
  for (int32_t x = lo.x; x <= hi.x; ++x)
    for (int32_t y = lo.y; y <= hi.y; ++y)
      for (int32_t z = lo.z; z <= hi.z; ++z) {
        const VoxelIndex v{x, y, z};
        if (map.state(v) != CellState::kOccupied) continue;
        if ((map.voxel_center(v) - p).norm_sq() <= r_sq) return true;
      }
  return false;
}

}  // namespace



void MissionEngine::robot_tick(Robot& robot) {
  const double dt = config_.tick_dt;

  if (robot.mode == Mode::kLanded || robot.mode == Mode::kFailed) return;

  if (robot.mode == Mode::kIdle) {
    if (time_ + 1e-9 < robot.activation_time) return;
    if (robot.battery <= config_.tick_dt) {
      robot.mode = Mode::kLanded;
      log(time_, robot.id, "landed_without_takeoff");
      return;
    }
    robot.mode = Mode::kExploring;
    log(time_, robot.id, "takeoff");
  }

  // Airborne from here on.
  const Vec3 before = robot.tracker.state().position;
  if (robot.tracker.has_trajectory()) robot.tracker.step();
  const Vec3 position = robot.tracker.state().position;
  robot.trajectory_length += distance(before, position);
  robot.battery = std::max(0.0, robot.battery - dt);
  robot.flight_time += dt;
  ++robot.airborne_ticks;

  if (config_.world->occupied(position)) {
    fail(robot, "collision");
    return;
  }

  // Scan cadence.
  const auto scan_interval =
      std::max<uint64_t>(1, static_cast<uint64_t>(std::llround(1.0 / (config_.sensor.scan_rate * dt))));
  if (robot.airborne_ticks % scan_interval == 1 || scan_interval == 1) {
    auto scan = worldsim::simulate_scan(*config_.world, position, robot.tracker.state().heading,
                                        config_.sensor, robot.scan_seed_base + robot.scan_counter);
    ++robot.scan_counter;
    if (config_.pose_noise_sigma > 0.0) {
      Rng noise(robot.scan_seed_base ^ robot.scan_counter);
      scan.origin += Vec3{noise.normal(0.0, config_.pose_noise_sigma),
                          noise.normal(0.0, config_.pose_noise_sigma),
                          noise.normal(0.0, config_.pose_noise_sigma)};
    }
    const auto filtered = mapping::filter_scan(scan, 3.0, 0.10);
    mapping::integrate_scan(robot.map, filtered);

    // Re-validate the horizon of the active trajectory against new evidence.
    if (robot.mode == Mode::kExploring && robot.tracker.has_trajectory() &&
        !robot.tracker.reference_finished()) {
      const auto& samples = robot.tracker.trajectory().samples;
      const size_t from = robot.tracker.progress_index();
      const size_t to = std::min(samples.size(),
                                 from + static_cast<size_t>(10.0 / config_.constraints.t_s));
      // Real encroachment only: the planner kept d_min to occupied centers,
      // so anything within d_min - resolution means newly mapped cells moved
      // the wall into the path. A softer threshold thrashes on mapping jitter.
      const double r_invalid = std::max(0.0, config_.plan.d_min - 0.5 * robot.map.resolution());
      if (!robot.braking) {
        for (size_t k = from; k < to; ++k) {
          if (any_occupied_within(robot.map, samples[k].position, r_invalid)) {
            log(time_, robot.id, "trajectory_invalidated");
            brake_on_valid_prefix(robot, k);
            robot.goal.reset();
            break;
          }
        }
      }
    }
  }

  // Breadcrumbs and homing-tree pose candidates every pose_record_spacing.
  robot.traveled_since_pose += distance(before, position);
  if (robot.traveled_since_pose >= config_.pose_record_spacing) {
    robot.traveled_since_pose = 0.0;
    record_pose_candidate(robot);
  }

  if (robot.mode == Mode::kExploring) {
    // A goal counts as visited once the robot passes nearby, whether or not
    // the reference has finished (appends keep it from ever finishing).
    if (robot.goal && distance(position, *robot.goal) < 1.0) {
      robot.visited_goals.push_back(*robot.goal);
      robot.goal.reset();
    }

    // Homing trigger at 2 Hz.
    const auto trigger_interval = std::max<uint64_t>(1, static_cast<uint64_t>(1.0 / dt));
    if (robot.airborne_ticks % trigger_interval == 0) {
      const auto route = find_homing_route(robot);
      const double est = route ? route->flight_cost : retrace_cost(robot);
      if (robot.battery <= est + config_.homing.reserve_time) {
        begin_homing(robot);
        return;
      }
    }

    const bool finished_ref = !robot.tracker.has_trajectory() ||
                              robot.tracker.reference_finished();
    if (finished_ref) {
      robot.braking = false;
      if (robot.goal && distance(position, *robot.goal) < 1.5)
        robot.visited_goals.push_back(*robot.goal);
      robot.goal.reset();
      if (time_ - robot.last_plan_attempt >= 0.5) {
        robot.last_plan_attempt = time_;
        if (!plan_next_goal(robot, false)) {
          ++robot.consecutive_plan_failures;
          if (robot.consecutive_plan_failures >= 2) {
            log(time_, robot.id, "frontiers_exhausted");
            begin_homing(robot);
          }
        } else {
          robot.consecutive_plan_failures = 0;
        }
      }
    } else {
      // Stop-free continuation: extend the trajectory shortly before it ends.
      const double remaining =
          robot.tracker.trajectory().duration() - robot.tracker.ref_time();
      if (remaining < 3.0 && time_ - robot.last_plan_attempt >= 1.0) {
        robot.last_plan_attempt = time_;
        plan_next_goal(robot, true);
      }
    }
  } else if (robot.mode == Mode::kHoming) {
    if (robot.battery <= 0.0) {
      log(time_, robot.id, "battery_exhausted_forced_landing");
      land(robot);
      return;
    }
    if (!robot.tracker.has_trajectory() || robot.tracker.reference_finished()) {
      if (robot.homing_brake) {
        if (robot.tracker.state().velocity.norm() < 2.0 * config_.constraints.v_min)
          dispatch_homing_route(robot);
      } else {
        const double speed = robot.tracker.state().velocity.norm();
        if (speed < 0.05) land(robot);
      }
    }
  }
}

double MissionEngine::retrace_cost(const Robot& robot) const {
  // Flight time along the breadcrumb trail, walked backward only until the
  // trail is within communication range of the base.
  const Vec3 base = config_.world->base_station();
  const Vec3 current = robot.tracker.state().position;
  if (distance(current, base) <= config_.homing.d_c) return 0.0;
  double len = 0.0;
  Vec3 prev = current;
  for (auto it = robot.breadcrumbs.rbegin(); it != robot.breadcrumbs.rend(); ++it) {
    len += distance(prev, *it);
    prev = *it;
    if (distance(*it, base) <= config_.homing.d_c) break;
  }
  return len / config_.homing.v_nominal;
}

// Replaces the active trajectory with a braking run along its still-valid
// prefix; an instant hover reference would make the virtual model overshoot
// into the obstacle that triggered the invalidation.
void MissionEngine::brake_on_valid_prefix(Robot& robot, size_t first_invalid) {
  const auto& samples = robot.tracker.trajectory().samples;
  const size_t progress = robot.tracker.progress_index();
  const Vec3 position = robot.tracker.state().position;

  // Brake along everything still known to be clear, shy of the bad sample.
  const size_t last_keep = first_invalid > progress + 2 ? first_invalid - 2 : progress;
  std::vector<Vec3> wps;
  wps.push_back(position);
  for (size_t k = progress; k <= last_keep && k < samples.size(); ++k)
    wps.push_back(samples[k].position);

  pathplan::Path brake;
  brake.waypoints = std::move(wps);
  const double speed = robot.tracker.state().velocity.norm();
  if (brake.waypoints.size() < 2 || brake.length() < 0.2) {
    // Nothing left to fly along; decelerate straight ahead over the
    // jerk-limited stopping distance.
    const Vec3 dir = speed > 0.05 ? robot.tracker.state().velocity / speed
                                  : Vec3{std::cos(robot.tracker.state().heading),
                                         std::sin(robot.tracker.state().heading), 0.0};
    const double stop_dist =
        std::max(0.2, speed * speed / (2.0 * config_.constraints.a_max) + 0.1);
    brake.waypoints = {position, position + dir * stop_dist};
  }
  motion::SampleOptions opt;
  opt.entry_speed = entry_speed_for(brake, robot.tracker.state().velocity, config_.constraints);
  opt.exit_speed = config_.constraints.v_min;
  const auto sampled = motion::sample_trajectory(brake, config_.constraints, opt);
  robot.tracker.set_trajectory(sampled.trajectory, true);
  robot.braking = true;
}

void MissionEngine::record_pose_candidate(Robot& robot) {
  const Vec3 position = robot.tracker.state().position;
  robot.breadcrumbs.push_back(position);
  homing::Node node;
  node.id = robot.next_node_id++;
  node.kind = homing::NodeKind::kPose;
  node.position = position;
  robot.tree.insert(node, free_ray());
}

bool MissionEngine::plan_next_goal(Robot& robot, bool append) {
  if (robot.map.known_cell_count() == 0) return false;
  if (robot.cache_version != robot.map.version()) {
    robot.obstacle_index =
        pathplan::build_obstacle_index(robot.map, config_.world->extents().inflated(5.0));
    // Keep only approachable frontiers: voxel-scale wall roughness shadows
    // thin unknown slivers along every surface, and those can never be
    // reached at planning clearance.
    const double gate = config_.plan.d_min + robot.map.resolution();
    robot.frontiers.clear();
    for (const VoxelIndex& f : mapping::extract_frontiers(robot.map)) {
      if (!robot.obstacle_index.any_within(robot.map.voxel_center(f), gate))
        robot.frontiers.push_back(f);
    }
    robot.cache_version = robot.map.version();
  }
  if (robot.frontiers.empty()) return false;

  GoalContext ctx;
  ctx.position = robot.tracker.state().position;
  ctx.velocity = robot.tracker.state().velocity;
  ctx.heading = robot.tracker.state().heading;
  ctx.bounds_half = config_.policy_bounds_half;
  ctx.visited = robot.visited_goals;

  Vec3 from = ctx.position;
  size_t progress = 0;
  if (append && robot.tracker.has_trajectory()) {
    progress = robot.tracker.progress_index();
    const auto& samples = robot.tracker.trajectory().samples;
    const size_t j = std::min(samples.size() - 1, progress + 10);
    from = samples[j].position;
  }

  // Stay committed to the current goal while it remains live; re-ranking on
  // every horizon extension makes the greedy policy flip-flop.
  if (robot.goal) {
    bool still_frontier = false;
    for (const VoxelIndex& f : robot.frontiers)
      if (distance(robot.map.voxel_center(f), *robot.goal) < 1.0) {
        still_frontier = true;
        break;
      }
    if (still_frontier) {
      auto plan = pathplan::plan_path(robot.map, robot.obstacle_index, from, *robot.goal,
                                      config_.plan);
      if (plan && plan->length() > 1.0) {
        auto post = pathplan::postprocess_path(*plan, robot.obstacle_index, robot.map,
                                               config_.plan.d_min, 20);
        auto cut = pathplan::shortcut_path(post, robot.obstacle_index, robot.map,
                                           config_.plan.d_min);
        motion::SampleOptions opt;
        opt.exit_speed = config_.constraints.v_min;
        if (append && robot.tracker.has_trajectory() && !robot.tracker.reference_finished()) {
          auto appended = motion::append_trajectory(robot.tracker.trajectory(), progress, cut,
                                                    config_.constraints, opt);
          if (appended) {
            robot.tracker.set_trajectory(*appended, false);
            return true;
          }
        } else {
          opt.entry_speed =
              entry_speed_for(cut, robot.tracker.state().velocity, config_.constraints);
          auto sampled = motion::sample_trajectory(cut, config_.constraints, opt);
          robot.tracker.set_trajectory(sampled.trajectory, true);
          return true;
        }
      }
    }
  }

  const auto ranked = rank_goals(robot.policy, robot.map, robot.frontiers, ctx);
  // Candidate order: policy-ranked distant frontiers first (nearby ones
  // resolve on their own as the robot moves), then nearest-by-distance as a
  // reachability fallback - the policy's top picks can sit behind rock.
  std::vector<Vec3> goals;
  for (const Vec3& g : ranked) {
    if (goals.size() >= 8) break;
    if (distance(g, ctx.position) >= 3.0) goals.push_back(g);
  }
  std::vector<Vec3> by_distance = goals;
  {
    std::vector<Vec3> rest;
    for (const Vec3& g : ranked) {
      bool taken = false;
      for (const Vec3& t : goals)
        if (distance(t, g) < 1e-9) taken = true;
      if (!taken) rest.push_back(g);
    }
    std::sort(rest.begin(), rest.end(), [&](const Vec3& a, const Vec3& b) {
      const double da = distance(a, ctx.position), db = distance(b, ctx.position);
      if (da != db) return da < db;
      if (a.x != b.x) return a.x < b.x;
      if (a.y != b.y) return a.y < b.y;
      return a.z < b.z;
    });
    for (const Vec3& g : rest) goals.push_back(g);
  }
  const size_t tries = std::min<size_t>(goals.size(), 16);
  size_t fail_count = 0;
  for (size_t g = 0; g < tries; ++g) {
    auto plan = pathplan::plan_path(robot.map, robot.obstacle_index, from, goals[g], config_.plan);
    if (!plan) {
      ++fail_count;
      continue;
    }
    auto post = pathplan::postprocess_path(*plan, robot.obstacle_index, robot.map,
                                           config_.plan.d_min, 20);
    auto cut = pathplan::shortcut_path(post, robot.obstacle_index, robot.map, config_.plan.d_min);

    motion::SampleOptions opt;
    opt.exit_speed = config_.constraints.v_min;
    if (append && robot.tracker.has_trajectory() && !robot.tracker.reference_finished()) {
      auto appended = motion::append_trajectory(robot.tracker.trajectory(), progress, cut,
                                                config_.constraints, opt);
      if (!appended) continue;
      robot.tracker.set_trajectory(*appended, false);
    } else {
      opt.entry_speed = entry_speed_for(cut, robot.tracker.state().velocity, config_.constraints);
      auto sampled = motion::sample_trajectory(cut, config_.constraints, opt);
      robot.tracker.set_trajectory(sampled.trajectory, true);
    }
    robot.goal = goals[g];
    // Goals that keep getting selected but never reached (e.g. blind-spot
    // pockets behind the goal tolerance) retire after a few attempts.
    bool counted = false;
    for (auto& [pos, count] : robot.goal_attempts) {
      if (distance(pos, goals[g]) < 1.0) {
        if (++count >= 4) robot.visited_goals.push_back(pos);
        counted = true;
        break;
      }
    }
    if (!counted) robot.goal_attempts.emplace_back(goals[g], 1);
    {
      char buf[160];
      std::snprintf(buf, sizeof buf, "goal_selected %s (%.1f %.1f %.1f) frontiers=%zu",
                    to_string(robot.policy), goals[g].x, goals[g].y, goals[g].z,
                    robot.frontiers.size());
      log(time_, robot.id, buf);
    }
    return true;
  }
  {
    char buf[160];
    std::snprintf(buf, sizeof buf, "plan_round_failed tries=%zu fails=%zu frontiers=%zu",
                  tries, fail_count, robot.frontiers.size());
    log(time_, robot.id, buf);
  }
  return false;
}

// Homing route with a relaxed-clearance retry for the attach segment: the
// robot may sit closer to a wall than d_min after tracking a tight corner,
// which would otherwise make every attach ray fail.
std::optional<homing::HomingRoute> MissionEngine::find_homing_route(Robot& robot) const {
  const Vec3 position = robot.tracker.state().position;
  auto route = homing::homing_path(robot.tree, position, free_ray());
  if (route) return route;
  const GroundTruthWorld* world = config_.world.get();
  const double relaxed = std::max(config_.world->resolution(),
                                  config_.plan.d_min - config_.world->resolution());
  return homing::homing_path(robot.tree, position,
                             [world, relaxed](const Vec3& a, const Vec3& b) {
                               return worldsim::collision_free_segment(*world, a, b, relaxed);
                             });
}

void MissionEngine::begin_homing(Robot& robot) {
  if (robot.mode != Mode::kExploring) return;
  robot.mode = Mode::kHoming;
  robot.exploration_time = robot.flight_time;
  robot.homing_start = time_;
  log(time_, robot.id, "homing_triggered");
  dispatch_homing_route(robot);
}

void MissionEngine::dispatch_homing_route(Robot& robot) {
  const Vec3 position = robot.tracker.state().position;
  const auto route = find_homing_route(robot);

  // A fast robot pointed away from the route must not hard-swap onto a
  // reversing reference: its momentum would overshoot into whatever it was
  // flying toward. Brake along the already-validated trajectory first.
  const Vec3 velocity = robot.tracker.state().velocity;
  const double speed = velocity.norm();
  if (speed > 0.6 && robot.tracker.has_trajectory() && !robot.tracker.reference_finished()) {
    Vec3 dir{0, 0, 0};
    if (route && !route->waypoints.empty() && route->waypoints.size() >= 2)
      dir = (route->waypoints[1] - position).normalized();
    else if (route && route->waypoints.empty())
      dir = Vec3{0, 0, 0};  // land in place: any speed must be shed anyway
    const bool misaligned = velocity.dot(dir) < 0.5 * speed;
    if (misaligned) {
      const size_t progress = robot.tracker.progress_index();
      brake_on_valid_prefix(robot, progress + 12);
      robot.homing_brake = true;
      log(time_, robot.id, "homing_brake");
      return;
    }
  }
  robot.homing_brake = false;

  std::vector<Vec3> waypoints;
  if (route) {
    if (route->waypoints.empty()) {
      land(robot);
      return;
    }
    waypoints = route->waypoints;
  } else {
    // Retrace breadcrumbs toward the base, stop once in range of it.
    const Vec3 base = config_.world->base_station();
    waypoints.push_back(position);
    for (auto it = robot.breadcrumbs.rbegin(); it != robot.breadcrumbs.rend(); ++it) {
      waypoints.push_back(*it);
      if (distance(*it, base) <= config_.homing.d_c) break;
    }
  }

  pathplan::Path path;
  path.waypoints = std::move(waypoints);
  // Homing usually starts with a mid-flight U-turn. Cruise a little below
  // v_max so the turning robot can close the transient gap; at equal speeds
  // any lag would persist to the landing point.
  motion::MotionConstraints derated = config_.constraints;
  derated.v_max = std::max(config_.constraints.v_min, 0.9 * config_.constraints.v_max);
  motion::SampleOptions opt;
  opt.entry_speed = entry_speed_for(path, robot.tracker.state().velocity, derated);
  opt.exit_speed = derated.v_min;
  const auto sampled = motion::sample_trajectory(path, derated, opt);
  robot.tracker.set_trajectory(sampled.trajectory, true);
}

void MissionEngine::land(Robot& robot) {
  if (robot.homing_start >= 0.0) robot.homing_flight_time = time_ - robot.homing_start;
  if (robot.exploration_time < 0.0) robot.exploration_time = robot.flight_time;
  robot.mode = Mode::kLanded;
  robot.tracker.set_trajectory(motion::Trajectory{{{robot.tracker.state().position, 0.0}},
                                                  config_.constraints.t_s},
                               true);
  log(time_, robot.id, "landed");

  if (config_.strategy == HomingStrategy::kRelayTree) {
    homing::Node node;
    node.id = robot.next_node_id++;
    node.kind = homing::NodeKind::kLandedRobot;
    node.position = robot.tracker.state().position;
    robot.tree.insert(node, free_ray());
    merge_requested_ = true;
    log(time_, robot.id, "comm_node_broadcast");
  }
}

void MissionEngine::fail(Robot& robot, const std::string& why) {
  robot.mode = Mode::kFailed;
  if (robot.exploration_time < 0.0) robot.exploration_time = robot.flight_time;
  log(time_, robot.id, "failed " + why);
}

void MissionEngine::sync_trees() {
  // Pairwise merges across the disc-model links, robot id order; the base has
  // no replica of its own (it is the root of every tree).
  const auto ray = free_ray();
  for (size_t i = 0; i < robots_.size(); ++i) {
    Robot& a = *robots_[i];
    if (a.mode == Mode::kIdle || a.mode == Mode::kFailed) continue;
    for (size_t j = i + 1; j < robots_.size(); ++j) {
      Robot& b = *robots_[j];
      if (b.mode == Mode::kIdle || b.mode == Mode::kFailed) continue;
      if (distance(a.tracker.state().position, b.tracker.state().position) > config_.homing.d_c)
        continue;
      auto merged = homing::merge_trees(a.tree, b.tree, ray);
      a.tree = merged;
      b.tree = std::move(merged);
    }
  }
}

MissionMetrics MissionEngine::metrics() const {
  MissionMetrics out;
  out.mission_duration_s = time_;

  std::unordered_set<VoxelIndex, VoxelIndexHash> merged_known;
  const double res = config_.map_params.resolution;
  for (const auto& robot : robots_) {
    RobotMetrics rm;
    rm.robot_id = robot->id;
    rm.flight_time_s = robot->flight_time;
    rm.trajectory_length_m = robot->trajectory_length;
    rm.exploration_time_s = robot->exploration_time >= 0.0 ? robot->exploration_time
                                                           : robot->flight_time;
    rm.homing_flight_time_s = robot->homing_flight_time;
    rm.final_mode = to_string(robot->mode);

    size_t known = 0;
    robot->map.for_each_stored([&](const VoxelIndex& v, float) {
      if (robot->map.state(v) == CellState::kUnknown) return;
      ++known;
      merged_known.insert(v);
    });
    rm.explored_volume_m3 = known * res * res * res;
    out.robots.push_back(std::move(rm));
  }
  out.merged_explored_volume_m3 = merged_known.size() * res * res * res;

  std::vector<Vec3> endpoints{config_.world->base_station()};
  for (const auto& robot : robots_)
    if (robot->mode == Mode::kLanded) endpoints.push_back(robot->tracker.state().position);
  out.relay_connected = comm_connected(endpoints.size(), comm_graph(endpoints, config_.homing.d_c));
  return out;
}

std::vector<MissionEngine::RobotView> MissionEngine::robot_views() const {
  std::vector<RobotView> views;
  for (const auto& robot : robots_) {
    const auto& traj = robot->tracker.trajectory();
    Vec3 ref{};
    double remaining = 0.0;
    if (!traj.samples.empty()) {
      const size_t k = robot->tracker.progress_index();
      ref = traj.samples[k].position;
      remaining = traj.duration() - robot->tracker.ref_time();
    }
    views.push_back({robot->id, robot->mode, robot->tracker.state().position, robot->battery,
                     ref, remaining});
  }
  return views;
}

std::string metrics_to_json(const MissionMetrics& metrics) {
  nlohmann::json j;
  j["mission"]["duration_s"] = metrics.mission_duration_s;
  j["mission"]["merged_explored_volume_m3"] = metrics.merged_explored_volume_m3;
  j["mission"]["relay_connected"] = metrics.relay_connected;
  j["robots"] = nlohmann::json::array();
  for (const auto& r : metrics.robots) {
    nlohmann::json jr;
    jr["id"] = r.robot_id;
    jr["flight_time_s"] = r.flight_time_s;
    jr["trajectory_length_m"] = r.trajectory_length_m;
    jr["explored_volume_m3"] = r.explored_volume_m3;
    jr["exploration_time_s"] = r.exploration_time_s;
    jr["homing_flight_time_s"] = r.homing_flight_time_s;
    jr["final_mode"] = r.final_mode;
    j["robots"].push_back(jr);
  }
  return j.dump(2) + "\n";
}

void MissionEngine::write_artifacts(const std::string& out_dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::ofstream metrics_file(out_dir + "/metrics.json");
  metrics_file << metrics_to_json(metrics());

  // Per-robot flown trajectories as "t x y z heading" rows.
  for (const auto& robot : robots_) {
    motion::Trajectory flown;
    flown.t_s = config_.tick_dt;
    // The flown path is reconstructed from breadcrumbs at export resolution.
    for (const Vec3& b : robot->breadcrumbs) flown.samples.push_back({b, 0.0});
    motion::export_trajectory(flown, out_dir + "/traj_robot" + std::to_string(robot->id) + ".txt");
  }

  // Merged map: occupied wins over free.
  OccupancyMap merged(config_.map_params);
  for (const auto& robot : robots_) {
    robot->map.for_each_stored([&](const VoxelIndex& v, float) {
      const CellState s = robot->map.state(v);
      if (s == CellState::kUnknown) return;
      const CellState existing = merged.state(v);
      if (existing == CellState::kOccupied) return;
      const auto& p = config_.map_params;
      if (s == CellState::kOccupied)
        merged.set_log_odds(v, p.clamp_max);
      else if (existing == CellState::kUnknown)
        merged.set_log_odds(v, p.clamp_min);
    });
  }
  mapping::export_map_ascii(merged, out_dir + "/map_merged.txt");

  // Final homing tree: the union of every replica, canonical order.
  const auto ray = free_ray();
  homing::HomingTree tree = robots_.empty()
                                ? homing::HomingTree(config_.world->base_station(), config_.homing)
                                : robots_.front()->tree;
  for (size_t i = 1; i < robots_.size(); ++i)
    tree = homing::merge_trees(tree, robots_[i]->tree, ray);
  const auto bytes = homing::serialize_tree(tree);
  std::ofstream tree_bin(out_dir + "/homing_tree.bin", std::ios::binary);
  tree_bin.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
  std::ofstream tree_txt(out_dir + "/homing_tree.txt");
  char buf[200];
  for (const auto& n : tree.nodes()) {
    std::snprintf(buf, sizeof buf, "%u kind=%d pos=%.9g,%.9g,%.9g parent=%d cost=%.9g\n", n.id,
                  static_cast<int>(n.kind), n.position.x, n.position.y, n.position.z,
                  n.parent == homing::Node::kNoParent ? -1 : static_cast<int>(n.parent),
                  n.edge_cost);
    tree_txt << buf;
  }

  std::ofstream events_file(out_dir + "/events.log");
  for (const auto& e : events_) {
    std::snprintf(buf, sizeof buf, "t=%.3f robot=%d %s\n", e.t, e.robot, e.what.c_str());
    events_file << buf;
  }
}

MissionMetrics run_mission(const MissionConfig& config) {
  MissionEngine engine(config);
  engine.run();
  return engine.metrics();
}

}  // namespace cavesim::fleet
