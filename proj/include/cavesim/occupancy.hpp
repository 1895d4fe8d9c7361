#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cavesim/geometry.hpp"
#include "cavesim/world.hpp"

namespace cavesim::mapping {

enum class CellState : uint8_t { kFree, kOccupied, kUnknown };

struct MapParams {
  double resolution{0.2};
  float hit{0.85f};
  float miss{-0.40f};
  float clamp_min{-2.0f};
  float clamp_max{3.5f};
  float occupied_threshold{0.0f};
  float free_threshold{-0.1f};
};

// Probabilistic tri-state voxel map: an octree of 8^3 leaf blocks storing
// clamped log-odds. Absent cells are unknown; state is a pure function of the
// stored log-odds and the thresholds.
class OccupancyMap {
 public:
  using Params = MapParams;

  explicit OccupancyMap(const Params& params = Params());

  const Params& params() const { return params_; }
  double resolution() const { return params_.resolution; }
  uint64_t version() const { return version_; }

  VoxelIndex to_voxel(const Vec3& p) const {
    const double r = params_.resolution;
    return {static_cast<int32_t>(std::floor(p.x / r)), static_cast<int32_t>(std::floor(p.y / r)),
            static_cast<int32_t>(std::floor(p.z / r))};
  }
  Vec3 voxel_center(const VoxelIndex& v) const {
    const double r = params_.resolution;
    return {(v.x + 0.5) * r, (v.y + 0.5) * r, (v.z + 0.5) * r};
  }

  CellState state(const VoxelIndex& v) const;
  CellState state(const Vec3& p) const { return state(to_voxel(p)); }
  std::optional<float> log_odds(const VoxelIndex& v) const;

  // Adds delta and clamps. Creates the cell if absent.
  void update(const VoxelIndex& v, float delta);
  // Overwrites the raw value (clamped); used by snapshot restore.
  void set_log_odds(const VoxelIndex& v, float value);

  size_t known_cell_count() const { return known_cells_; }

  // Deterministic iteration over stored cells in octree order.
  void for_each_stored(const std::function<void(const VoxelIndex&, float)>& fn) const;

  struct BoxCounts {
    size_t free{0};
    size_t occupied{0};
    size_t total{0};  // all lattice cells in the box, known or not
  };
  // Counts over all voxels whose center lies in [lo, hi].
  BoxCounts count_box(const Vec3& lo, const Vec3& hi) const;

 private:
  struct Block {
    std::array<float, 512> values;
    std::array<uint64_t, 8> stored;
    std::array<uint64_t, 8> free_bits;
    std::array<uint64_t, 8> occ_bits;
  };
  struct Node {
    std::array<int32_t, 8> child;  // -1 absent; at level 0 indexes blocks_
  };

  static constexpr int kDepth = 12;  // 2^12 blocks per axis around the origin
  static constexpr int32_t kHalfSpan = 1 << (kDepth - 1);

  int32_t find_block(int32_t bx, int32_t by, int32_t bz) const;
  int32_t find_or_create_block(int32_t bx, int32_t by, int32_t bz);
  void refresh_state_bits(Block& b, int cell);

  Params params_;
  std::vector<Node> nodes_;
  std::vector<Block> blocks_;
  std::vector<VoxelIndex> block_base_;  // voxel coords of each block's corner
  size_t known_cells_{0};
  uint64_t version_{0};

  friend class MapIterator;
};

// Removes returns with range <= neighborhood whose intensity lies strictly
// below the scan-wide percentile quantile; everything else is preserved in
// order. The quantile is sorted_intensities[floor(p * n)].
worldsim::Scan filter_scan(const worldsim::Scan& scan, double neighborhood, double percentile);

// Bayesian ray integration: traversed voxels get the miss increment, each
// return's endpoint voxel the hit increment; no-return rays clear to max
// range.
void integrate_scan(OccupancyMap& map, const worldsim::Scan& scan);

// Free cells with at least one unknown 6-neighbor, sorted lexicographically
// by voxel index. `bounds` restricts by voxel center when given.
std::vector<VoxelIndex> extract_frontiers(const OccupancyMap& map,
                                          const std::optional<AABB>& bounds = std::nullopt);

// (#unknown)/(#free) in the axis-aligned cube of half-size `radius` around
// `center`; +inf when the cube holds no free cell.
double unknown_free_ratio(const OccupancyMap& map, const Vec3& center, double radius);

struct AccuracyReport {
  double mean{0.0};
  double stddev{0.0};
  std::vector<double> per_point_errors;
};

struct EmptyMapError : std::runtime_error {
  EmptyMapError() : std::runtime_error("map_accuracy: map has no occupied voxel") {}
};

// Point-to-point error of every map-occupied voxel center against the nearest
// world-occupied voxel center.
AccuracyReport map_accuracy(const OccupancyMap& map, const worldsim::GroundTruthWorld& world);
// Same metric over an explicit point set (e.g. a map export read from disk).
AccuracyReport accuracy_from_points(const std::vector<Vec3>& points,
                                    const worldsim::GroundTruthWorld& world);

// ASCII export, format "SCSM1": header line then one "x y z state" line per
// state-classified voxel center, lexicographic order.
void export_map_ascii(const OccupancyMap& map, const std::string& path);
// Occupied centers of an SCSM1 file (used by map evaluation).
std::vector<Vec3> load_map_ascii_occupied(const std::string& path);

// Binary snapshot, format "SCSM1B": params plus raw (index, log-odds) records.
void save_map_snapshot(const OccupancyMap& map, const std::string& path);
OccupancyMap load_map_snapshot(const std::string& path);

}  // namespace cavesim::mapping
