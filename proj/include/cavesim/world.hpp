#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavesim/geometry.hpp"

namespace cavesim::worldsim {

// Dense boolean voxel lattice used as the simulation's ground truth.
// Immutable after construction; everything outside the extents counts as
// occupied. A squared-distance field (voxel-center to nearest occupied
// voxel-center) is built lazily to accelerate clearance queries.
class GroundTruthWorld {
 public:
  GroundTruthWorld(double resolution, Vec3 origin, int nx, int ny, int nz);

  GroundTruthWorld(const GroundTruthWorld& o) { copy_from(o); }
  GroundTruthWorld(GroundTruthWorld&& o) noexcept { copy_from(o); }
  GroundTruthWorld& operator=(const GroundTruthWorld& o) {
    if (this != &o) copy_from(o);
    return *this;
  }
  GroundTruthWorld& operator=(GroundTruthWorld&& o) noexcept {
    if (this != &o) copy_from(o);
    return *this;
  }

  double resolution() const { return resolution_; }
  AABB extents() const { return extents_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }

  bool in_grid(const VoxelIndex& v) const {
    return v.x >= 0 && v.x < nx_ && v.y >= 0 && v.y < ny_ && v.z >= 0 && v.z < nz_;
  }
  VoxelIndex to_voxel(const Vec3& p) const {
    return {static_cast<int32_t>(std::floor((p.x - origin_.x) / resolution_)),
            static_cast<int32_t>(std::floor((p.y - origin_.y) / resolution_)),
            static_cast<int32_t>(std::floor((p.z - origin_.z) / resolution_))};
  }
  Vec3 voxel_center(const VoxelIndex& v) const {
    return {origin_.x + (v.x + 0.5) * resolution_, origin_.y + (v.y + 0.5) * resolution_,
            origin_.z + (v.z + 0.5) * resolution_};
  }

  // Out-of-grid voxels are occupied.
  bool occupied(const VoxelIndex& v) const {
    if (!in_grid(v)) return true;
    return cells_[index_of(v)] != 0;
  }
  bool occupied(const Vec3& p) const { return occupied(to_voxel(p)); }

  // Construction-time only; invalidates the cached distance field.
  void set_occupied(const VoxelIndex& v, bool value) {
    if (in_grid(v)) {
      cells_[index_of(v)] = value ? 1 : 0;
      df_ready_.store(false, std::memory_order_release);
    }
  }

  const std::vector<uint8_t>& raw_cells() const { return cells_; }
  size_t free_count() const;

  const std::vector<Vec3>& spawn_points() const { return spawn_points_; }
  Vec3 base_station() const { return base_station_; }
  void set_spawn_points(std::vector<Vec3> pts) { spawn_points_ = std::move(pts); }
  void set_base_station(const Vec3& p) { base_station_ = p; }

  // Exact min distance from a continuous point to any occupied voxel center,
  // with out-of-grid centers treated as occupied. The EDT prefilter answers
  // most queries; points inside the half-diagonal margin fall back to a local
  // scan.
  double clearance(const Vec3& p) const;

  // Squared center-to-nearest-occupied-center distance (m^2); pre: in_grid(v).
  double center_clearance_sq(const VoxelIndex& v) const {
    ensure_distance_field();
    return dist_sq_field_[index_of(v)];
  }

  // Min distance from p to occupied voxel centers within `radius`
  // (+inf when none that close). Virtual out-of-grid centers count.
  double exact_local_clearance(const Vec3& p, double radius) const;

  // Throws std::invalid_argument naming the violated invariant.
  void validate() const;

 private:
  size_t index_of(const VoxelIndex& v) const {
    return (static_cast<size_t>(v.z) * ny_ + v.y) * nx_ + v.x;
  }
  void ensure_distance_field() const;
  void copy_from(const GroundTruthWorld& o) {
    resolution_ = o.resolution_;
    origin_ = o.origin_;
    nx_ = o.nx_;
    ny_ = o.ny_;
    nz_ = o.nz_;
    extents_ = o.extents_;
    cells_ = o.cells_;
    spawn_points_ = o.spawn_points_;
    base_station_ = o.base_station_;
    dist_sq_field_ = o.dist_sq_field_;
    df_ready_.store(o.df_ready_.load());
  }

  double resolution_{0.0};
  Vec3 origin_;
  int nx_{0}, ny_{0}, nz_{0};
  AABB extents_;
  std::vector<uint8_t> cells_;
  std::vector<Vec3> spawn_points_;
  Vec3 base_station_;

  mutable std::mutex df_mutex_;
  mutable std::atomic<bool> df_ready_{false};
  mutable std::vector<float> dist_sq_field_;  // squared distances in meters^2
};

struct SensorModel {
  int horizontal_rays{180};
  int vertical_rays{16};
  double vfov_deg{45.0};
  double max_range{50.0};
  double scan_rate{10.0};
  double noise_sigma{0.0};
  double dust_rate{0.0};
  double dust_range_max{3.0};

  void validate() const;
};

struct Return {
  Vec3 direction;  // unit vector, world frame
  double range;
  double intensity;
};

struct Scan {
  Vec3 origin;
  double heading{0.0};
  double timestamp{0.0};
  double max_range{0.0};
  std::vector<Return> returns;
  // Directions of rays that saw nothing within max_range; needed so map
  // integration can clear free space along them.
  std::vector<Vec3> no_hit_dirs;
};

// Surface returns decay linearly with range; dust returns sit in a disjoint
// low band so the percentile filter has something to bite on.
inline double surface_intensity(double range, double max_range) {
  return clamp(1.0 - range / max_range, 0.05, 1.0);
}
constexpr double kDustIntensityMax = 0.04;

struct CaveParams {
  int tunnel_count{4};
  double tunnel_width{2.4};    // corridor diameter, m
  double tunnel_length{60.0};  // mean tunnel length, m
  double resolution{0.2};
  double vertical_fraction{0.15};  // fraction of steps biased vertically
  int chamber_count{2};
  double chamber_radius{3.0};

  void validate() const;
};

// Deterministic random tunnel-network generator. Guarantees a connected free
// space containing the base station, at least one junction and one dead end.
GroundTruthWorld generate_cave(uint64_t seed, const CaveParams& params = {});

// Convenience world builders used by tests and bundled scenarios.
GroundTruthWorld make_box_room(double resolution, Vec3 inner_size);
// Straight tube when bend_amplitude == 0; otherwise a winding tube whose
// sightlines are bounded by the bends (like natural cave passages).
GroundTruthWorld make_corridor(double resolution, double length, double width, double height,
                               double bend_amplitude = 0.0, double bend_period = 40.0);

// World file I/O, format "SCSW1" (see README for the byte layout).
void save_world(const GroundTruthWorld& world, const std::string& path);
GroundTruthWorld load_world(const std::string& path);

// First-hit ray cast. Returns hit distance or a negative value on miss.
double cast_ray(const GroundTruthWorld& world, const Vec3& origin, const Vec3& dir,
                double max_range);

Scan simulate_scan(const GroundTruthWorld& world, const Vec3& position, double heading,
                   const SensorModel& model, uint64_t rng_seed);

// True iff every sample along ab at half-voxel spacing keeps at least
// `clearance` meters from every occupied voxel center.
bool collision_free_segment(const GroundTruthWorld& world, const Vec3& a, const Vec3& b,
                            double clearance);

}  // namespace cavesim::worldsim
