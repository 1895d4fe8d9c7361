#include "cavesim/planner.hpp"

#include <algorithm>
#include <queue>
#include <unordered_map>

namespace cavesim::pathplan {

using mapping::CellState;
using mapping::OccupancyMap;

ObstacleIndex build_obstacle_index(const OccupancyMap& map, const AABB& region) {
  std::vector<Vec3> points;
  map.for_each_stored([&](const VoxelIndex& v, float) {
    if (map.state(v) != CellState::kOccupied) return;
    const Vec3 c = map.voxel_center(v);
    if (region.contains(c)) points.push_back(c);
  });
  return ObstacleIndex(std::move(points));
}

namespace {

struct OpenEntry {
  double f;
  double h;
  VoxelIndex cell;
};

struct OpenOrder {
  bool operator()(const OpenEntry& a, const OpenEntry& b) const {
    if (a.f != b.f) return a.f > b.f;
    if (a.h != b.h) return a.h > b.h;
    return b.cell < a.cell;
  }
};

}  // namespace

std::optional<Path> plan_path(const OccupancyMap& map, const ObstacleIndex& obstacles,
                              const Vec3& start, const Vec3& goal, const PlanConfig& config) {
  const double res = map.resolution();
  const VoxelIndex start_cell = map.to_voxel(start);
  const VoxelIndex goal_cell = map.to_voxel(goal);

  // Cells adjacent to the start skip the clearance test (the vehicle is
  // already there and must be able to move off a tight spot through known
  // free space).
  auto near_start = [&](const VoxelIndex& v) {
    return std::abs(v.x - start_cell.x) <= 1 && std::abs(v.y - start_cell.y) <= 1 &&
           std::abs(v.z - start_cell.z) <= 1;
  };
  // Memoized traversability: A* touches each cell as a neighbor many times
  // and every probe costs octree walks plus a KD query.
  std::unordered_map<VoxelIndex, bool, VoxelIndexHash> memo;
  auto clear_of_unknown = [&](const VoxelIndex& v) {
    const int m = config.unknown_margin_cells;
    if (m <= 0) return true;
    for (int dx = -m; dx <= m; ++dx)
      for (int dy = -m; dy <= m; ++dy)
        for (int dz = -m; dz <= m; ++dz) {
          if (map.state(VoxelIndex{v.x + dx, v.y + dy, v.z + dz}) == CellState::kUnknown)
            return false;
        }
    return true;
  };
  auto traversable_uncached = [&](const VoxelIndex& v) {
    if (map.state(v) != CellState::kFree) return false;
    if (near_start(v)) return true;
    if (!clear_of_unknown(v)) return false;
    return !obstacles.any_within(map.voxel_center(v), config.d_min);
  };
  auto traversable = [&](const VoxelIndex& v) {
    auto it = memo.find(v);
    if (it != memo.end()) return it->second;
    const bool value = traversable_uncached(v);
    memo.emplace(v, value);
    return value;
  };
  const bool goal_direct = traversable(goal_cell);

  struct CellInfo {
    double g;
    VoxelIndex parent;
    bool closed;
  };
  std::unordered_map<VoxelIndex, CellInfo, VoxelIndexHash> info;
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, OpenOrder> open;

  const Vec3 goal_center = map.voxel_center(goal_cell);
  auto heuristic = [&](const VoxelIndex& v) { return distance(map.voxel_center(v), goal_center); };

  info[start_cell] = {0.0, start_cell, false};
  open.push({heuristic(start_cell), heuristic(start_cell), start_cell});

  // Best fallback cell when the goal cell itself is not traversable.
  VoxelIndex best_cell = start_cell;
  double best_goal_dist = distance(map.voxel_center(start_cell), goal_center);
  bool found_goal = false;
  size_t expansions = 0;

  while (!open.empty()) {
    const OpenEntry top = open.top();
    open.pop();
    auto it = info.find(top.cell);
    if (it == info.end() || it->second.closed) continue;
    it->second.closed = true;
    ++expansions;

    const VoxelIndex v = top.cell;
    const double gd = heuristic(v);
    if (gd < best_goal_dist || (gd == best_goal_dist && v < best_cell)) {
      best_goal_dist = gd;
      best_cell = v;
    }
    if (goal_direct && v == goal_cell) {
      found_goal = true;
      break;
    }
    // Cheap early out when the goal is unreachable but a neighbor cell is hit.
    if (!goal_direct && best_goal_dist <= res * 1.8) break;
    if (expansions >= config.max_expansions) break;

    const double g = it->second.g;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const VoxelIndex n{v.x + dx, v.y + dy, v.z + dz};
          if (!traversable(n)) continue;
          const double cost = res * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          const double ng = g + cost;
          auto nit = info.find(n);
          if (nit != info.end() && (nit->second.closed || nit->second.g <= ng)) continue;
          info[n] = {ng, v, false};
          open.push({ng + heuristic(n), heuristic(n), n});
        }
  }

  VoxelIndex end_cell;
  if (found_goal) {
    end_cell = goal_cell;
  } else {
    if (best_goal_dist > config.goal_tolerance) return std::nullopt;
    end_cell = best_cell;
    if (end_cell == start_cell && distance(start, goal) > config.goal_tolerance)
      return std::nullopt;
  }

  std::vector<Vec3> waypoints;
  VoxelIndex cur = end_cell;
  while (true) {
    waypoints.push_back(map.voxel_center(cur));
    const auto& node = info.at(cur);
    if (cur == start_cell) break;
    cur = node.parent;
  }
  std::reverse(waypoints.begin(), waypoints.end());
  waypoints.front() = start;
  if (found_goal) waypoints.back() = goal;
  // Collapse duplicate consecutive points (e.g. start at its cell center).
  std::vector<Vec3> cleaned;
  for (const Vec3& w : waypoints) {
    if (cleaned.empty() || distance(cleaned.back(), w) > 1e-12) cleaned.push_back(w);
  }

  Path path;
  path.waypoints = std::move(cleaned);
  double min_clear = std::numeric_limits<double>::infinity();
  for (const Vec3& w : path.waypoints) min_clear = std::min(min_clear, obstacles.min_distance(w));
  path.clearance = min_clear;
  return path;
}

bool segment_feasible(const Vec3& a, const Vec3& b, const ObstacleIndex& obstacles,
                      const OccupancyMap& map, double d_min) {
  const double res = map.resolution();
  const double len = distance(a, b);
  const int samples = std::max(2, static_cast<int>(std::ceil(len / (0.5 * res))) + 1);
  for (int i = 0; i < samples; ++i) {
    const double u = static_cast<double>(i) / (samples - 1);
    const Vec3 p = a + (b - a) * u;
    if (map.state(p) != CellState::kFree) return false;
    if (obstacles.any_within(p, d_min)) return false;
  }
  return true;
}

namespace {

double segment_min_clearance(const Vec3& a, const Vec3& b, const ObstacleIndex& obstacles,
                             double res) {
  const double len = distance(a, b);
  const int samples = std::max(2, static_cast<int>(std::ceil(len / (0.5 * res))) + 1);
  double min_clear = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    const double u = static_cast<double>(i) / (samples - 1);
    min_clear = std::min(min_clear, obstacles.min_distance(a + (b - a) * u));
  }
  return min_clear;
}

bool segment_in_free(const Vec3& a, const Vec3& b, const OccupancyMap& map) {
  const double res = map.resolution();
  const double len = distance(a, b);
  const int samples = std::max(2, static_cast<int>(std::ceil(len / (0.5 * res))) + 1);
  for (int i = 0; i < samples; ++i) {
    const double u = static_cast<double>(i) / (samples - 1);
    if (map.state(a + (b - a) * u) != CellState::kFree) return false;
  }
  return true;
}

double path_min_clearance(const std::vector<Vec3>& wps, const ObstacleIndex& obstacles,
                          double res) {
  double min_clear = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < wps.size(); ++i)
    min_clear = std::min(min_clear, segment_min_clearance(wps[i], wps[i + 1], obstacles, res));
  if (wps.size() == 1) min_clear = obstacles.min_distance(wps[0]);
  return min_clear;
}

}  // namespace

Path postprocess_path(const Path& path, const ObstacleIndex& obstacles, const OccupancyMap& map,
                      double d_min, int max_iters) {
  Path out = path;
  if (out.waypoints.size() < 2 || obstacles.empty()) {
    out.clearance = path_min_clearance(out.waypoints, obstacles, map.resolution());
    return out;
  }
  const double res = map.resolution();
  const double step = 0.5 * res;
  auto& wps = out.waypoints;

  for (int iter = 0; iter < max_iters; ++iter) {
    bool moved = false;
    for (size_t i = 1; i + 1 < wps.size(); ++i) {
      const auto near = obstacles.nearest(wps[i]);
      if (near.dist >= d_min) continue;
      const Vec3 away = wps[i] - near.point;
      const double norm = away.norm();
      if (norm < 1e-12) continue;
      const Vec3 candidate = wps[i] + away * (step / norm);

      if (map.state(candidate) != CellState::kFree) continue;
      if (obstacles.min_distance(candidate) <= near.dist) continue;

      // Displacement must not degrade the adjacent segments.
      const double old_prev = segment_min_clearance(wps[i - 1], wps[i], obstacles, res);
      const double old_next = segment_min_clearance(wps[i], wps[i + 1], obstacles, res);
      const double new_prev = segment_min_clearance(wps[i - 1], candidate, obstacles, res);
      const double new_next = segment_min_clearance(candidate, wps[i + 1], obstacles, res);
      if (new_prev < std::min(old_prev, d_min) || new_next < std::min(old_next, d_min)) continue;
      if (!segment_in_free(wps[i - 1], candidate, map) ||
          !segment_in_free(candidate, wps[i + 1], map))
        continue;

      wps[i] = candidate;
      moved = true;
    }
    if (!moved) break;
  }

  out.clearance = path_min_clearance(wps, obstacles, res);
  return out;
}

Path shortcut_path(const Path& path, const ObstacleIndex& obstacles, const OccupancyMap& map,
                   double d_min) {
  if (path.waypoints.size() <= 2) return path;
  const auto& wps = path.waypoints;
  std::vector<Vec3> kept;
  kept.push_back(wps.front());
  size_t i = 0;
  while (i + 1 < wps.size()) {
    size_t j = i + 1;
    while (j + 1 < wps.size() && segment_feasible(wps[i], wps[j + 1], obstacles, map, d_min)) ++j;
    kept.push_back(wps[j]);
    i = j;
  }
  Path out;
  out.waypoints = std::move(kept);
  out.clearance = path_min_clearance(out.waypoints, obstacles, map.resolution());
  return out;
}

}  // namespace cavesim::pathplan
