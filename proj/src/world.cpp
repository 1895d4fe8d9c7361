#include "cavesim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cavesim/rng.hpp"

namespace cavesim::worldsim {

GroundTruthWorld::GroundTruthWorld(double resolution, Vec3 origin, int nx, int ny, int nz)
    : resolution_(resolution), origin_(origin), nx_(nx), ny_(ny), nz_(nz) {
  if (resolution <= 0.0) throw std::invalid_argument("world: resolution must be > 0");
  if (nx < 1 || ny < 1 || nz < 1) throw std::invalid_argument("world: dims must be >= 1");
  extents_ = {origin, origin + Vec3{nx * resolution, ny * resolution, nz * resolution}};
  cells_.assign(static_cast<size_t>(nx) * ny * nz, 1);
}

size_t GroundTruthWorld::free_count() const {
  return static_cast<size_t>(std::count(cells_.begin(), cells_.end(), 0));
}

void GroundTruthWorld::validate() const {
  if (free_count() == 0) throw std::invalid_argument("world: no free voxel");
  if (occupied(base_station_)) throw std::invalid_argument("world: base_station in occupied voxel");
  for (const Vec3& s : spawn_points_) {
    if (occupied(s)) throw std::invalid_argument("world: spawn_point in occupied voxel");
  }
}

namespace {

// 1D squared distance transform (Felzenszwalb & Huttenlocher), distances in
// voxel units. f holds squared distances on input, result overwrites f.
void dt_1d(std::vector<float>& f, std::vector<float>& d, std::vector<int>& v,
           std::vector<double>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = double(q) - v[k];
    d[q] = static_cast<float>(dq * dq + f[v[k]]);
  }
  std::copy(d.begin(), d.begin() + n, f.begin());
}

}  // namespace

void GroundTruthWorld::ensure_distance_field() const {
  if (df_ready_.load(std::memory_order_acquire)) return;
  std::lock_guard<std::mutex> lock(df_mutex_);
  if (df_ready_.load(std::memory_order_relaxed)) return;
  {
    const size_t total = cells_.size();
    std::vector<float> field(total);
    // Large finite sentinel: infinities break the parabola intersections.
    const float far = 1e12f;
    for (size_t i = 0; i < total; ++i) field[i] = cells_[i] ? 0.0f : far;

    const int n_max = std::max({nx_, ny_, nz_});
    std::vector<float> f(n_max), d(n_max);
    std::vector<int> v(n_max);
    std::vector<double> z(n_max + 1);

    auto at = [&](int x, int y, int z_) -> float& {
      return field[(static_cast<size_t>(z_) * ny_ + y) * nx_ + x];
    };

    // x pass
    for (int zz = 0; zz < nz_; ++zz)
      for (int yy = 0; yy < ny_; ++yy) {
        for (int xx = 0; xx < nx_; ++xx) f[xx] = at(xx, yy, zz);
        dt_1d(f, d, v, z, nx_);
        for (int xx = 0; xx < nx_; ++xx) at(xx, yy, zz) = f[xx];
      }
    // y pass
    for (int zz = 0; zz < nz_; ++zz)
      for (int xx = 0; xx < nx_; ++xx) {
        for (int yy = 0; yy < ny_; ++yy) f[yy] = at(xx, yy, zz);
        dt_1d(f, d, v, z, ny_);
        for (int yy = 0; yy < ny_; ++yy) at(xx, yy, zz) = f[yy];
      }
    // z pass
    for (int yy = 0; yy < ny_; ++yy)
      for (int xx = 0; xx < nx_; ++xx) {
        for (int zz = 0; zz < nz_; ++zz) f[zz] = at(xx, yy, zz);
        dt_1d(f, d, v, z, nz_);
        for (int zz = 0; zz < nz_; ++zz) at(xx, yy, zz) = f[zz];
      }

    // Fold in the virtual occupied shell just outside the grid.
    const double r2 = resolution_ * resolution_;
    for (int zz = 0; zz < nz_; ++zz)
      for (int yy = 0; yy < ny_; ++yy)
        for (int xx = 0; xx < nx_; ++xx) {
          const int bx = std::min(xx + 1, nx_ - xx);
          const int by = std::min(yy + 1, ny_ - yy);
          const int bz = std::min(zz + 1, nz_ - zz);
          const int b = std::min({bx, by, bz});
          const float shell = static_cast<float>(double(b) * b);
          float& cell = at(xx, yy, zz);
          cell = std::min(cell, shell) * static_cast<float>(r2);
        }

    dist_sq_field_ = std::move(field);
  }
  df_ready_.store(true, std::memory_order_release);
}

double GroundTruthWorld::exact_local_clearance(const Vec3& p, double radius) const {
  // Enumerates every voxel center (in-grid or virtual) within `radius`;
  // returns +inf if no occupied center is that close.
  const VoxelIndex lo = to_voxel(p - Vec3{radius, radius, radius});
  const VoxelIndex hi = to_voxel(p + Vec3{radius, radius, radius});
  double best_sq = std::numeric_limits<double>::infinity();
  for (int32_t x = lo.x; x <= hi.x; ++x)
    for (int32_t y = lo.y; y <= hi.y; ++y)
      for (int32_t z = lo.z; z <= hi.z; ++z) {
        const VoxelIndex v{x, y, z};
        if (!occupied(v)) continue;
        const Vec3 c = voxel_center(v);
        best_sq = std::min(best_sq, (c - p).norm_sq());
      }
  return std::sqrt(best_sq);
}

double GroundTruthWorld::clearance(const Vec3& p) const {
  const VoxelIndex v = to_voxel(p);
  if (!in_grid(v)) {
    const double d = exact_local_clearance(p, 2.0 * resolution_);
    return std::isinf(d) ? 0.0 : d;
  }
  ensure_distance_field();
  const double half_diag = 0.5 * resolution_ * std::sqrt(3.0);
  const double dc =
      std::sqrt(static_cast<double>(dist_sq_field_[(static_cast<size_t>(v.z) * ny_ + v.y) * nx_ + v.x]));
  // dc is center-to-center; the true point distance lies within +-half_diag.
  return exact_local_clearance(p, dc + half_diag + 1e-9);
}

void SensorModel::validate() const {
  if (horizontal_rays < 1 || vertical_rays < 1)
    throw std::invalid_argument("sensor: ray counts must be >= 1");
  if (vfov_deg <= 0.0 || vfov_deg > 180.0)
    throw std::invalid_argument("sensor: vfov must be in (0, 180]");
  if (max_range <= 0.0) throw std::invalid_argument("sensor: max_range must be > 0");
  if (scan_rate <= 0.0) throw std::invalid_argument("sensor: scan_rate must be > 0");
  if (dust_rate < 0.0) throw std::invalid_argument("sensor: dust_rate must be >= 0");
}

double cast_ray(const GroundTruthWorld& world, const Vec3& origin, const Vec3& dir,
                double max_range) {
  VoxelIndex v = world.to_voxel(origin);
  if (world.occupied(v)) return 0.0;

  const double res = world.resolution();
  const Vec3 rel = origin - world.extents().min;

  int32_t step[3];
  double t_max[3], t_delta[3];
  const double d[3] = {dir.x, dir.y, dir.z};
  const double r[3] = {rel.x, rel.y, rel.z};
  const int32_t vi[3] = {v.x, v.y, v.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (d[axis] > 0.0) {
      step[axis] = 1;
      t_max[axis] = ((vi[axis] + 1) * res - r[axis]) / d[axis];
      t_delta[axis] = res / d[axis];
    } else if (d[axis] < 0.0) {
      step[axis] = -1;
      t_max[axis] = (vi[axis] * res - r[axis]) / d[axis];
      t_delta[axis] = res / -d[axis];
    } else {
      step[axis] = 0;
      t_max[axis] = std::numeric_limits<double>::infinity();
      t_delta[axis] = std::numeric_limits<double>::infinity();
    }
  }

  int32_t cur[3] = {v.x, v.y, v.z};
  while (true) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    const double t = t_max[axis];
    if (t > max_range) return -1.0;
    cur[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    if (world.occupied(VoxelIndex{cur[0], cur[1], cur[2]})) return t;
  }
}

Scan simulate_scan(const GroundTruthWorld& world, const Vec3& position, double heading,
                   const SensorModel& model, uint64_t rng_seed) {
  model.validate();
  if (!world.extents().contains(position))
    throw std::domain_error("simulate_scan: pose outside world extents");

  Rng rng(rng_seed);
  Scan scan;
  scan.origin = position;
  scan.heading = heading;
  scan.max_range = model.max_range;

  const double vfov = model.vfov_deg * M_PI / 180.0;
  for (int iv = 0; iv < model.vertical_rays; ++iv) {
    const double elev =
        model.vertical_rays == 1 ? 0.0 : -vfov / 2.0 + vfov * iv / (model.vertical_rays - 1);
    for (int ih = 0; ih < model.horizontal_rays; ++ih) {
      const double az = heading + 2.0 * M_PI * ih / model.horizontal_rays;
      const Vec3 dir{std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az),
                     std::sin(elev)};
      const double t = cast_ray(world, position, dir, model.max_range);
      if (t >= 0.0) {
        double range = t;
        if (model.noise_sigma > 0.0) range += rng.normal(0.0, model.noise_sigma);
        range = clamp(range, 1e-9, model.max_range);
        scan.returns.push_back({dir, range, surface_intensity(range, model.max_range)});
      } else {
        scan.no_hit_dirs.push_back(dir);
      }
    }
  }

  const int dust = rng.poisson(model.dust_rate);
  for (int i = 0; i < dust; ++i) {
    const double az = heading + rng.uniform(0.0, 2.0 * M_PI);
    const double elev = rng.uniform(-vfov / 2.0, vfov / 2.0);
    const Vec3 dir{std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
    const double range = std::max(1e-9, rng.uniform(0.0, model.dust_range_max));
    scan.returns.push_back({dir, range, rng.uniform(0.0, kDustIntensityMax)});
  }
  return scan;
}

bool collision_free_segment(const GroundTruthWorld& world, const Vec3& a, const Vec3& b,
                            double clearance) {
  const double res = world.resolution();
  const double half_diag = 0.5 * res * std::sqrt(3.0);
  const double len = distance(a, b);
  const int samples = std::max(1, static_cast<int>(std::ceil(len / (0.5 * res))) + 1);

  for (int i = 0; i < samples; ++i) {
    const double u = samples == 1 ? 0.0 : static_cast<double>(i) / (samples - 1);
    const Vec3 p = a + (b - a) * u;
    const VoxelIndex v = world.to_voxel(p);
    if (!world.in_grid(v)) {
      // Nearest virtual occupied center is at most half a diagonal away.
      if (clearance > 0.0) {
        const double d = world.exact_local_clearance(p, clearance);
        if (d < clearance) return false;
      }
      continue;
    }
    const double dc = std::sqrt(world.center_clearance_sq(v));
    if (dc - half_diag >= clearance) continue;        // certainly clear
    if (dc + half_diag < clearance) return false;     // certainly violating
    const double d = world.exact_local_clearance(p, clearance);
    if (d < clearance) return false;
  }
  return true;
}

}  // namespace cavesim::worldsim
