#pragma once

#include <optional>
#include <vector>

#include "cavesim/kdtree.hpp"
#include "cavesim/occupancy.hpp"

namespace cavesim::pathplan {

struct Path {
  std::vector<Vec3> waypoints;
  double clearance{0.0};  // min obstacle distance achieved over the path

  double length() const {
    double sum = 0.0;
    for (size_t i = 0; i + 1 < waypoints.size(); ++i)
      sum += distance(waypoints[i], waypoints[i + 1]);
    return sum;
  }
};

struct PlanConfig {
  double d_min{0.7};            // required obstacle clearance
  double goal_tolerance{2.0};   // max distance of the reached cell from the goal
  size_t max_expansions{2'000'000};
  // Extra margin from unknown space, in voxels (Chebyshev). Zero keeps the
  // base rule (free cells only); missions use 1 so sensing artifacts that
  // carve thin false-free streaks through unmapped rock stay untraversable.
  int unknown_margin_cells{0};
};

// Index over occupied map cells whose centers fall inside `region`.
ObstacleIndex build_obstacle_index(const mapping::OccupancyMap& map, const AABB& region);

// Shortest 26-connected grid path over free cells with clearance >= d_min;
// unknown and occupied cells are untraversable. A goal that is not itself
// traversable resolves to the nearest reachable cell within goal_tolerance.
// Returns nullopt when nothing reachable qualifies.
std::optional<Path> plan_path(const mapping::OccupancyMap& map, const ObstacleIndex& obstacles,
                              const Vec3& start, const Vec3& goal, const PlanConfig& config);

// Pushes waypoints below d_min clearance away from their nearest obstacle in
// half-resolution steps. Displacements that would degrade segment clearance or
// leave free space are rolled back. Best effort: reports achieved clearance.
Path postprocess_path(const Path& path, const ObstacleIndex& obstacles,
                      const mapping::OccupancyMap& map, double d_min, int max_iters);

// Drops interior waypoints whenever the direct segment keeps d_min clearance
// and stays in free space. Output waypoints are a subsequence of the input.
Path shortcut_path(const Path& path, const ObstacleIndex& obstacles,
                   const mapping::OccupancyMap& map, double d_min);

// True when every half-resolution sample of [a,b] lies in a free cell and
// keeps at least d_min from the indexed obstacles.
bool segment_feasible(const Vec3& a, const Vec3& b, const ObstacleIndex& obstacles,
                      const mapping::OccupancyMap& map, double d_min);

}  // namespace cavesim::pathplan
