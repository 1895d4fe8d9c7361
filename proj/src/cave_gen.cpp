#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "cavesim/rng.hpp"
#include "cavesim/world.hpp"

namespace cavesim::worldsim {

void CaveParams::validate() const {
  if (tunnel_count < 1 || tunnel_length <= 0.0 || tunnel_width <= 0.0 || resolution <= 0.0 ||
      chamber_count < 0 || chamber_radius <= 0.0)
    throw std::invalid_argument("cave params: all parameters must be positive");
  if (tunnel_width < 2.0 * resolution)
    throw std::invalid_argument("cave params: tunnel_width must be >= 2 * resolution");
}

namespace {

struct Sphere {
  Vec3 center;
  double radius;
};

void carve(GroundTruthWorld& w, const Sphere& s) {
  const double r = s.radius;
  const VoxelIndex lo = w.to_voxel(s.center - Vec3{r, r, r});
  const VoxelIndex hi = w.to_voxel(s.center + Vec3{r, r, r});
  for (int32_t x = lo.x; x <= hi.x; ++x)
    for (int32_t y = lo.y; y <= hi.y; ++y)
      for (int32_t z = lo.z; z <= hi.z; ++z) {
        const VoxelIndex v{x, y, z};
        if (!w.in_grid(v)) continue;
        if ((w.voxel_center(v) - s.center).norm_sq() <= r * r) w.set_occupied(v, false);
      }
}

bool free_space_connected(const GroundTruthWorld& w, const Vec3& seed) {
  const VoxelIndex s = w.to_voxel(seed);
  if (w.occupied(s)) return false;
  std::vector<uint8_t> seen(static_cast<size_t>(w.nx()) * w.ny() * w.nz(), 0);
  auto idx = [&](const VoxelIndex& v) {
    return (static_cast<size_t>(v.z) * w.ny() + v.y) * w.nx() + v.x;
  };
  std::deque<VoxelIndex> queue{s};
  seen[idx(s)] = 1;
  size_t visited = 0;
  while (!queue.empty()) {
    const VoxelIndex v = queue.front();
    queue.pop_front();
    ++visited;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const VoxelIndex n{v.x + dx, v.y + dy, v.z + dz};
          if (!w.in_grid(n) || w.occupied(n) || seen[idx(n)]) continue;
          seen[idx(n)] = 1;
          queue.push_back(n);
        }
  }
  return visited == w.free_count();
}

}  // namespace

GroundTruthWorld generate_cave(uint64_t seed, const CaveParams& params) {
  params.validate();
  Rng rng(seed ^ 0x5ca7e5u);

  const double step = params.resolution;
  const double half_w = params.tunnel_width / 2.0;

  // Skeleton: connected random walks; each tunnel branches off a prior one.
  std::vector<Sphere> carves;
  std::vector<Vec3> skeleton;
  const Vec3 start{0.0, 0.0, 0.0};
  skeleton.push_back(start);
  carves.push_back({start, std::max(half_w, 1.5 * params.resolution)});

  const int tunnels = params.tunnel_count;
  for (int t = 0; t < tunnels; ++t) {
    Vec3 p = skeleton[rng.uniform_index(skeleton.size())];
    double heading = rng.uniform(0.0, 2.0 * M_PI);
    double pitch = 0.0;
    const double length = params.tunnel_length * rng.uniform(0.7, 1.3);
    const int steps = std::max(2, static_cast<int>(length / step));
    for (int i = 0; i < steps; ++i) {
      heading += rng.normal(0.0, 0.12);
      if (rng.uniform() < params.vertical_fraction) {
        pitch = clamp(pitch + rng.normal(0.0, 0.35), -1.1, 1.1);
      } else {
        pitch *= 0.8;
      }
      const Vec3 dir{std::cos(pitch) * std::cos(heading), std::cos(pitch) * std::sin(heading),
                     std::sin(pitch)};
      p += dir * step;
      carves.push_back({p, half_w});
      skeleton.push_back(p);
    }
  }
  if (tunnels < 2) {
    // Guarantee a junction and a dead end even for single-tunnel parameters.
    Vec3 p = skeleton[skeleton.size() / 2];
    const double heading = rng.uniform(0.0, 2.0 * M_PI);
    const int steps = std::max(2, static_cast<int>(params.tunnel_length / (4.0 * step)));
    for (int i = 0; i < steps; ++i) {
      p += Vec3{std::cos(heading), std::sin(heading), 0.0} * step;
      carves.push_back({p, half_w});
      skeleton.push_back(p);
    }
  }
  for (int c = 0; c < params.chamber_count; ++c) {
    const Vec3 p = skeleton[rng.uniform_index(skeleton.size())];
    carves.push_back({p, params.chamber_radius});
  }

  // Size the lattice to contain every carve plus a rock shell.
  Vec3 lo = start, hi = start;
  for (const Sphere& s : carves) {
    lo.x = std::min(lo.x, s.center.x - s.radius);
    lo.y = std::min(lo.y, s.center.y - s.radius);
    lo.z = std::min(lo.z, s.center.z - s.radius);
    hi.x = std::max(hi.x, s.center.x + s.radius);
    hi.y = std::max(hi.y, s.center.y + s.radius);
    hi.z = std::max(hi.z, s.center.z + s.radius);
  }
  const double shell = 2.0 * params.resolution;
  lo -= Vec3{shell, shell, shell};
  hi += Vec3{shell, shell, shell};
  const int nx = static_cast<int>(std::ceil((hi.x - lo.x) / params.resolution)) + 1;
  const int ny = static_cast<int>(std::ceil((hi.y - lo.y) / params.resolution)) + 1;
  const int nz = static_cast<int>(std::ceil((hi.z - lo.z) / params.resolution)) + 1;

  GroundTruthWorld world(params.resolution, lo, nx, ny, nz);
  for (const Sphere& s : carves) carve(world, s);

  world.set_base_station(world.voxel_center(world.to_voxel(start)));

  // Spawn points: free voxels close to the base.
  std::vector<Vec3> spawns;
  const VoxelIndex b = world.to_voxel(start);
  for (int radius = 1; radius < 16 && spawns.size() < 6; ++radius) {
    for (int dx = -radius; dx <= radius && spawns.size() < 6; ++dx)
      for (int dy = -radius; dy <= radius && spawns.size() < 6; ++dy) {
        if (std::max(std::abs(dx), std::abs(dy)) != radius) continue;
        const VoxelIndex v{b.x + dx, b.y + dy, b.z};
        if (!world.occupied(v)) spawns.push_back(world.voxel_center(v));
      }
  }
  if (spawns.empty()) throw std::runtime_error("cave generation: no spawn points near base");
  world.set_spawn_points(std::move(spawns));

  world.validate();
  if (!free_space_connected(world, world.base_station()))
    throw std::runtime_error("cave generation: free space not connected from base");
  return world;
}

GroundTruthWorld make_box_room(double resolution, Vec3 inner_size) {
  const int ix = std::max(1, static_cast<int>(std::round(inner_size.x / resolution)));
  const int iy = std::max(1, static_cast<int>(std::round(inner_size.y / resolution)));
  const int iz = std::max(1, static_cast<int>(std::round(inner_size.z / resolution)));
  GroundTruthWorld w(resolution, Vec3{0, 0, 0}, ix + 2, iy + 2, iz + 2);
  for (int x = 1; x <= ix; ++x)
    for (int y = 1; y <= iy; ++y)
      for (int z = 1; z <= iz; ++z) w.set_occupied(VoxelIndex{x, y, z}, false);
  const Vec3 center = w.voxel_center(VoxelIndex{1 + ix / 2, 1 + iy / 2, 1 + iz / 2});
  w.set_base_station(center);
  w.set_spawn_points({center});
  return w;
}

GroundTruthWorld make_corridor(double resolution, double length, double width, double height,
                               double bend_amplitude, double bend_period) {
  const double half_w = width / 2.0;
  const double margin = half_w + 2.0 * resolution;
  const int ix = static_cast<int>(std::ceil((length + 2 * margin) / resolution));
  const int iy = static_cast<int>(std::ceil((width + 2 * (bend_amplitude + margin)) / resolution));
  const int iz = static_cast<int>(std::ceil((height + 2 * margin) / resolution));
  GroundTruthWorld w(resolution, Vec3{0, 0, 0}, ix, iy, iz);

  // Carve a tube along a lateral zigzag with rounded direction changes.
  const double y_mid = (iy * resolution) / 2.0;
  const double z_mid = (iz * resolution) / 2.0;
  auto center_y = [&](double x) {
    if (bend_amplitude <= 0.0) return y_mid;
    return y_mid + bend_amplitude * std::sin(2.0 * M_PI * x / bend_period);
  };
  const double x0 = margin;
  const double x1 = margin + length;
  const double step = resolution * 0.5;
  const double rr = half_w * half_w;
  for (double x = x0; x <= x1; x += step) {
    const Vec3 c{x, center_y(x - x0), z_mid};
    const VoxelIndex lo = w.to_voxel(c - Vec3{half_w, half_w, half_w});
    const VoxelIndex hi = w.to_voxel(c + Vec3{half_w, half_w, half_w});
    for (int32_t vx = lo.x; vx <= hi.x; ++vx)
      for (int32_t vy = lo.y; vy <= hi.y; ++vy)
        for (int32_t vz = lo.z; vz <= hi.z; ++vz) {
          const VoxelIndex v{vx, vy, vz};
          if (!w.in_grid(v)) continue;
          const Vec3 p = w.voxel_center(v);
          const double dy = p.y - c.y, dz = p.z - c.z, dx = p.x - c.x;
          if (dx * dx + dy * dy + dz * dz <= rr) w.set_occupied(v, false);
        }
  }

  // Base and spawns sit a couple of meters into the tube so planning and
  // homing rays keep clearance around them even at conservative d_min.
  auto tube_point = [&](double x_in) {
    return Vec3{x0 + x_in, center_y(x_in), z_mid};
  };
  const Vec3 base = w.voxel_center(w.to_voxel(tube_point(std::min(length - 0.5, 1.5))));
  w.set_base_station(base);
  std::vector<Vec3> spawns;
  for (double sx : {2.0, 2.5, 3.0, 3.5, 4.0})
    spawns.push_back(w.voxel_center(w.to_voxel(tube_point(std::min(length - 0.5, sx)))));
  w.set_spawn_points(std::move(spawns));
  return w;
}

}  // namespace cavesim::worldsim
