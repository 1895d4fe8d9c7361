#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cavesim/homing.hpp"
#include "cavesim/motion.hpp"
#include "cavesim/occupancy.hpp"
#include "cavesim/planner.hpp"
#include "cavesim/rng.hpp"
#include "cavesim/world.hpp"

namespace cavesim::fleet {

enum class Policy : uint8_t {
  kDeepLateral,
  kHighestFrontier,
  kUnknownRatio,
  kFullCoverageBounded,
};

enum class Mode : uint8_t { kIdle, kExploring, kHoming, kLanded, kFailed };

// Relay homing (the cooperative strategy) vs. the return-to-base baseline
// used for the exploration-time comparison.
enum class HomingStrategy : uint8_t { kRelayTree, kReturnToBase };

const char* to_string(Policy p);
const char* to_string(Mode m);

struct MissionConfig {
  std::shared_ptr<const worldsim::GroundTruthWorld> world;
  int robot_count{2};
  double stagger_s{60.0};
  std::vector<Policy> policies{Policy::kDeepLateral};  // cycled per robot
  motion::MotionConstraints constraints;
  homing::HomingParams homing;
  worldsim::SensorModel sensor;
  mapping::OccupancyMap::Params map_params;
  pathplan::PlanConfig plan{0.7, 2.0, 100'000, 1};  // capped search, unknown margin on
  double battery_budget_s{300.0};
  uint64_t seed{1};
  double tick_dt{0.01};
  double time_cap_s{3600.0};
  HomingStrategy strategy{HomingStrategy::kRelayTree};
  double policy_bounds_half{10.0};
  double pose_noise_sigma{0.0};
  double pose_record_spacing{2.0};
  double merge_interval_s{10.0};

  void validate() const;
};

struct RobotMetrics {
  int robot_id{0};
  double flight_time_s{0.0};
  double trajectory_length_m{0.0};
  double explored_volume_m3{0.0};
  double exploration_time_s{0.0};
  double homing_flight_time_s{0.0};
  std::string final_mode;
};

struct MissionMetrics {
  std::vector<RobotMetrics> robots;
  double merged_explored_volume_m3{0.0};
  bool relay_connected{false};
  double mission_duration_s{0.0};
};

struct Event {
  double t{0.0};
  int robot{-1};
  std::string what;
};

// Undirected disc-model communication graph over arbitrary endpoints.
std::vector<std::pair<int, int>> comm_graph(const std::vector<Vec3>& positions, double d_c);
bool comm_connected(size_t count, const std::vector<std::pair<int, int>>& edges);

struct GoalContext {
  Vec3 position;
  Vec3 velocity;
  double heading{0.0};
  double bounds_half{10.0};
  std::optional<AABB> coverage_bounds;
  std::vector<Vec3> visited;
};

// Frontier goals ordered by the policy's preference (deduplicated within
// 1.5 m); empty means the policy is exhausted.
std::vector<Vec3> rank_goals(Policy policy, const mapping::OccupancyMap& map,
                             const std::vector<VoxelIndex>& frontiers, const GoalContext& ctx);
std::optional<Vec3> select_goal(Policy policy, const mapping::OccupancyMap& map,
                                const std::vector<VoxelIndex>& frontiers, const GoalContext& ctx);

class MissionEngine {
 public:
  explicit MissionEngine(const MissionConfig& config);
  ~MissionEngine();

  void step(double dt);
  void run();
  bool finished() const;
  double sim_time() const { return time_; }

  MissionMetrics metrics() const;
  const std::vector<Event>& events() const { return events_; }

  // Artifact exports (metrics.json, traj_robot<i>.txt, map_merged.txt,
  // homing_tree.{bin,txt}, events.log).
  void write_artifacts(const std::string& out_dir) const;

  struct RobotView {
    int id;
    Mode mode;
    Vec3 position;
    double battery_s;
    Vec3 ref_position;  // tracker's current reference point
    double ref_remaining_s;
  };
  std::vector<RobotView> robot_views() const;

 private:
  struct Robot;
  void tick();
  void robot_tick(Robot& robot);
  void start_exploring(Robot& robot);
  bool plan_next_goal(Robot& robot, bool append);
  std::optional<homing::HomingRoute> find_homing_route(Robot& robot) const;
  void begin_homing(Robot& robot);
  void dispatch_homing_route(Robot& robot);
  void land(Robot& robot);
  void fail(Robot& robot, const std::string& why);
  void brake_on_valid_prefix(Robot& robot, size_t first_invalid);
  double retrace_cost(const Robot& robot) const;
  void record_pose_candidate(Robot& robot);
  void sync_trees();
  void log(double t, int robot, const std::string& what);
  homing::FreeRayFn free_ray() const;

  MissionConfig config_;
  double time_{0.0};
  uint64_t tick_count_{0};
  std::vector<std::unique_ptr<Robot>> robots_;
  std::vector<Event> events_;
  double next_merge_time_{0.0};
  bool merge_requested_{false};
};

MissionMetrics run_mission(const MissionConfig& config);

// Metrics serialization used by the CLI and tests (sorted-key JSON).
std::string metrics_to_json(const MissionMetrics& metrics);

}  // namespace cavesim::fleet
