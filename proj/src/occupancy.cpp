#include "cavesim/occupancy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cavesim/kdtree.hpp"

namespace cavesim::mapping {

OccupancyMap::OccupancyMap(const Params& params) : params_(params) {
  if (params.resolution <= 0.0) throw std::invalid_argument("map: resolution must be > 0");
  if (params.clamp_min > params.clamp_max) throw std::invalid_argument("map: clamp range empty");
  nodes_.push_back(Node{{-1, -1, -1, -1, -1, -1, -1, -1}});
}

int32_t OccupancyMap::find_block(int32_t bx, int32_t by, int32_t bz) const {
  const uint32_t ux = static_cast<uint32_t>(bx + kHalfSpan);
  const uint32_t uy = static_cast<uint32_t>(by + kHalfSpan);
  const uint32_t uz = static_cast<uint32_t>(bz + kHalfSpan);
  if (ux >= (1u << kDepth) || uy >= (1u << kDepth) || uz >= (1u << kDepth)) return -1;
  int32_t node = 0;
  for (int level = kDepth - 1; level >= 0; --level) {
    const int octant = ((ux >> level) & 1) | (((uy >> level) & 1) << 1) | (((uz >> level) & 1) << 2);
    node = nodes_[node].child[octant];
    if (node < 0) return -1;
  }
  return node;
}

int32_t OccupancyMap::find_or_create_block(int32_t bx, int32_t by, int32_t bz) {
  const uint32_t ux = static_cast<uint32_t>(bx + kHalfSpan);
  const uint32_t uy = static_cast<uint32_t>(by + kHalfSpan);
  const uint32_t uz = static_cast<uint32_t>(bz + kHalfSpan);
  if (ux >= (1u << kDepth) || uy >= (1u << kDepth) || uz >= (1u << kDepth)) return -1;
  int32_t node = 0;
  for (int level = kDepth - 1; level >= 1; --level) {
    const int octant = ((ux >> level) & 1) | (((uy >> level) & 1) << 1) | (((uz >> level) & 1) << 2);
    int32_t next = nodes_[node].child[octant];
    if (next < 0) {
      next = static_cast<int32_t>(nodes_.size());
      nodes_[node].child[octant] = next;
      nodes_.push_back(Node{{-1, -1, -1, -1, -1, -1, -1, -1}});
    }
    node = next;
  }
  const int octant = (ux & 1) | ((uy & 1) << 1) | ((uz & 1) << 2);
  int32_t block = nodes_[node].child[octant];
  if (block < 0) {
    block = static_cast<int32_t>(blocks_.size());
    nodes_[node].child[octant] = block;
    blocks_.push_back(Block{});
    blocks_.back().values.fill(0.0f);
    blocks_.back().stored.fill(0);
    blocks_.back().free_bits.fill(0);
    blocks_.back().occ_bits.fill(0);
    block_base_.push_back(VoxelIndex{bx * 8, by * 8, bz * 8});
  }
  return block;
}

namespace {
inline int cell_index(const VoxelIndex& v) {
  const int cx = v.x & 7, cy = v.y & 7, cz = v.z & 7;
  return (cz * 8 + cy) * 8 + cx;
}
inline bool bit(const std::array<uint64_t, 8>& bits, int cell) {
  return (bits[cell >> 6] >> (cell & 63)) & 1u;
}
inline void set_bit(std::array<uint64_t, 8>& bits, int cell, bool value) {
  const uint64_t mask = 1ull << (cell & 63);
  if (value)
    bits[cell >> 6] |= mask;
  else
    bits[cell >> 6] &= ~mask;
}
}  // namespace

CellState OccupancyMap::state(const VoxelIndex& v) const {
  const int32_t b = find_block(v.x >> 3, v.y >> 3, v.z >> 3);
  if (b < 0) return CellState::kUnknown;
  const Block& block = blocks_[b];
  const int cell = cell_index(v);
  if (bit(block.occ_bits, cell)) return CellState::kOccupied;
  if (bit(block.free_bits, cell)) return CellState::kFree;
  return CellState::kUnknown;
}

std::optional<float> OccupancyMap::log_odds(const VoxelIndex& v) const {
  const int32_t b = find_block(v.x >> 3, v.y >> 3, v.z >> 3);
  if (b < 0) return std::nullopt;
  const Block& block = blocks_[b];
  const int cell = cell_index(v);
  if (!bit(block.stored, cell)) return std::nullopt;
  return block.values[cell];
}

void OccupancyMap::refresh_state_bits(Block& b, int cell) {
  const float lo = b.values[cell];
  set_bit(b.occ_bits, cell, lo >= params_.occupied_threshold);
  set_bit(b.free_bits, cell, lo <= params_.free_threshold);
}

void OccupancyMap::update(const VoxelIndex& v, float delta) {
  const int32_t bi = find_or_create_block(v.x >> 3, v.y >> 3, v.z >> 3);
  if (bi < 0) return;  // outside the octree domain
  Block& b = blocks_[bi];
  const int cell = cell_index(v);
  if (!bit(b.stored, cell)) {
    set_bit(b.stored, cell, true);
    b.values[cell] = 0.0f;
    ++known_cells_;
  }
  b.values[cell] =
      std::clamp(b.values[cell] + delta, params_.clamp_min, params_.clamp_max);
  refresh_state_bits(b, cell);
  ++version_;
}

void OccupancyMap::set_log_odds(const VoxelIndex& v, float value) {
  const int32_t bi = find_or_create_block(v.x >> 3, v.y >> 3, v.z >> 3);
  if (bi < 0) return;
  Block& b = blocks_[bi];
  const int cell = cell_index(v);
  if (!bit(b.stored, cell)) {
    set_bit(b.stored, cell, true);
    ++known_cells_;
  }
  b.values[cell] = std::clamp(value, params_.clamp_min, params_.clamp_max);
  refresh_state_bits(b, cell);
  ++version_;
}

void OccupancyMap::for_each_stored(
    const std::function<void(const VoxelIndex&, float)>& fn) const {
  for (size_t bi = 0; bi < blocks_.size(); ++bi) {
    const Block& b = blocks_[bi];
    const VoxelIndex base = block_base_[bi];
    for (int cell = 0; cell < 512; ++cell) {
      if (!bit(b.stored, cell)) continue;
      const VoxelIndex v{base.x + (cell & 7), base.y + ((cell >> 3) & 7),
                         base.z + ((cell >> 6) & 7)};
      fn(v, b.values[cell]);
    }
  }
}

OccupancyMap::BoxCounts OccupancyMap::count_box(const Vec3& lo, const Vec3& hi) const {
  BoxCounts counts;
  const double r = params_.resolution;
  // Voxels whose center falls in [lo, hi].
  const int32_t x0 = static_cast<int32_t>(std::ceil(lo.x / r - 0.5));
  const int32_t y0 = static_cast<int32_t>(std::ceil(lo.y / r - 0.5));
  const int32_t z0 = static_cast<int32_t>(std::ceil(lo.z / r - 0.5));
  const int32_t x1 = static_cast<int32_t>(std::floor(hi.x / r - 0.5));
  const int32_t y1 = static_cast<int32_t>(std::floor(hi.y / r - 0.5));
  const int32_t z1 = static_cast<int32_t>(std::floor(hi.z / r - 0.5));
  if (x1 < x0 || y1 < y0 || z1 < z0) return counts;
  counts.total = static_cast<size_t>(x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1);

  for (int32_t bz = z0 >> 3; bz <= (z1 >> 3); ++bz)
    for (int32_t by = y0 >> 3; by <= (y1 >> 3); ++by)
      for (int32_t bx = x0 >> 3; bx <= (x1 >> 3); ++bx) {
        const int32_t bi = find_block(bx, by, bz);
        if (bi < 0) continue;
        const Block& b = blocks_[bi];
        const bool full_inside = bx * 8 >= x0 && bx * 8 + 7 <= x1 && by * 8 >= y0 &&
                                 by * 8 + 7 <= y1 && bz * 8 >= z0 && bz * 8 + 7 <= z1;
        if (full_inside) {
          for (int w = 0; w < 8; ++w) {
            counts.free += std::popcount(b.free_bits[w]);
            counts.occupied += std::popcount(b.occ_bits[w]);
          }
          continue;
        }
        for (int cell = 0; cell < 512; ++cell) {
          const int32_t vx = bx * 8 + (cell & 7);
          const int32_t vy = by * 8 + ((cell >> 3) & 7);
          const int32_t vz = bz * 8 + ((cell >> 6) & 7);
          if (vx < x0 || vx > x1 || vy < y0 || vy > y1 || vz < z0 || vz > z1) continue;
          if (bit(b.occ_bits, cell))
            ++counts.occupied;
          else if (bit(b.free_bits, cell))
            ++counts.free;
        }
      }
  return counts;
}

worldsim::Scan filter_scan(const worldsim::Scan& scan, double neighborhood, double percentile) {
  if (percentile < 0.0 || percentile >= 1.0)
    throw std::invalid_argument("filter_scan: percentile must be in [0, 1)");
  if (neighborhood <= 0.0) throw std::invalid_argument("filter_scan: neighborhood must be > 0");
  if (scan.returns.empty()) return scan;

  std::vector<double> intensities;
  intensities.reserve(scan.returns.size());
  for (const auto& ret : scan.returns) intensities.push_back(ret.intensity);
  std::sort(intensities.begin(), intensities.end());
  const size_t idx = std::min(intensities.size() - 1,
                              static_cast<size_t>(std::floor(percentile * intensities.size())));
  const double quantile = intensities[idx];

  worldsim::Scan out = scan;
  out.returns.clear();
  for (const auto& ret : scan.returns) {
    const bool drop = ret.range <= neighborhood && ret.intensity < quantile;
    if (!drop) out.returns.push_back(ret);
  }
  return out;
}

namespace {

// Walks voxels pierced by [origin, origin + dir * length); calls fn for every
// voxel entered before `length`, including the origin voxel.
template <typename Fn>
void walk_ray(const OccupancyMap& map, const Vec3& origin, const Vec3& dir, double length,
              Fn&& fn) {
  const double res = map.resolution();
  VoxelIndex v = map.to_voxel(origin);

  int32_t step[3];
  double t_max[3], t_delta[3];
  const double d[3] = {dir.x, dir.y, dir.z};
  const double o[3] = {origin.x, origin.y, origin.z};
  const int32_t vi[3] = {v.x, v.y, v.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (d[axis] > 0.0) {
      step[axis] = 1;
      t_max[axis] = ((vi[axis] + 1) * res - o[axis]) / d[axis];
      t_delta[axis] = res / d[axis];
    } else if (d[axis] < 0.0) {
      step[axis] = -1;
      t_max[axis] = (vi[axis] * res - o[axis]) / d[axis];
      t_delta[axis] = res / -d[axis];
    } else {
      step[axis] = 0;
      t_max[axis] = std::numeric_limits<double>::infinity();
      t_delta[axis] = std::numeric_limits<double>::infinity();
    }
  }

  int32_t cur[3] = {v.x, v.y, v.z};
  fn(VoxelIndex{cur[0], cur[1], cur[2]});
  while (true) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    if (t_max[axis] >= length) return;
    cur[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    fn(VoxelIndex{cur[0], cur[1], cur[2]});
  }
}

}  // namespace

void integrate_scan(OccupancyMap& map, const worldsim::Scan& scan) {
  const auto& p = map.params();
  for (const auto& ret : scan.returns) {
    const Vec3 end = scan.origin + ret.direction * ret.range;
    const VoxelIndex end_v = map.to_voxel(end);
    walk_ray(map, scan.origin, ret.direction, ret.range, [&](const VoxelIndex& v) {
      if (!(v == end_v)) map.update(v, p.miss);
    });
    map.update(end_v, p.hit);
  }
  for (const Vec3& dir : scan.no_hit_dirs) {
    walk_ray(map, scan.origin, dir, scan.max_range,
             [&](const VoxelIndex& v) { map.update(v, p.miss); });
  }
}

std::vector<VoxelIndex> extract_frontiers(const OccupancyMap& map,
                                          const std::optional<AABB>& bounds) {
  std::vector<VoxelIndex> frontiers;
  map.for_each_stored([&](const VoxelIndex& v, float) {
    if (map.state(v) != CellState::kFree) return;
    if (bounds && !bounds->contains(map.voxel_center(v))) return;
    static constexpr int32_t kNeighbors[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                                 {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
    for (const auto& n : kNeighbors) {
      const VoxelIndex nb{v.x + n[0], v.y + n[1], v.z + n[2]};
      if (map.state(nb) == CellState::kUnknown) {
        frontiers.push_back(v);
        return;
      }
    }
  });
  std::sort(frontiers.begin(), frontiers.end());
  return frontiers;
}

double unknown_free_ratio(const OccupancyMap& map, const Vec3& center, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("unknown_free_ratio: radius must be > 0");
  const Vec3 r{radius, radius, radius};
  const auto counts = map.count_box(center - r, center + r);
  const size_t unknown = counts.total - counts.free - counts.occupied;
  if (counts.free == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(unknown) / static_cast<double>(counts.free);
}

AccuracyReport accuracy_from_points(const std::vector<Vec3>& points,
                                    const worldsim::GroundTruthWorld& world) {
  if (points.empty()) throw EmptyMapError{};

  std::vector<Vec3> world_occupied;
  for (int32_t z = 0; z < world.nz(); ++z)
    for (int32_t y = 0; y < world.ny(); ++y)
      for (int32_t x = 0; x < world.nx(); ++x) {
        const VoxelIndex v{x, y, z};
        if (world.occupied(v)) world_occupied.push_back(world.voxel_center(v));
      }
  const pathplan::ObstacleIndex index(std::move(world_occupied));

  AccuracyReport report;
  report.per_point_errors.reserve(points.size());
  double sum = 0.0;
  for (const Vec3& p : points) {
    const double e = index.min_distance(p);
    report.per_point_errors.push_back(e);
    sum += e;
  }
  report.mean = sum / report.per_point_errors.size();
  double sq = 0.0;
  for (double e : report.per_point_errors) sq += (e - report.mean) * (e - report.mean);
  report.stddev = std::sqrt(sq / report.per_point_errors.size());
  return report;
}

AccuracyReport map_accuracy(const OccupancyMap& map, const worldsim::GroundTruthWorld& world) {
  std::vector<Vec3> map_occupied;
  map.for_each_stored([&](const VoxelIndex& v, float) {
    if (map.state(v) == CellState::kOccupied) map_occupied.push_back(map.voxel_center(v));
  });
  return accuracy_from_points(map_occupied, world);
}

namespace {
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

void export_map_ascii(const OccupancyMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_map_ascii: cannot open " + path);
  out << "SCSM1 " << fmt_double(map.resolution()) << "\n";
  std::vector<std::pair<VoxelIndex, CellState>> cells;
  map.for_each_stored([&](const VoxelIndex& v, float) {
    const CellState s = map.state(v);
    if (s != CellState::kUnknown) cells.emplace_back(v, s);
  });
  std::sort(cells.begin(), cells.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [v, s] : cells) {
    const Vec3 c = map.voxel_center(v);
    out << fmt_double(c.x) << " " << fmt_double(c.y) << " " << fmt_double(c.z) << " "
        << (s == CellState::kOccupied ? "occupied" : "free") << "\n";
  }
}

std::vector<Vec3> load_map_ascii_occupied(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("map file: cannot open " + path);
  std::string header;
  if (!std::getline(in, header) || header.rfind("SCSM1 ", 0) != 0)
    throw std::runtime_error("map file: missing SCSM1 header");
  std::vector<Vec3> occupied;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Vec3 p;
    std::string state;
    if (!(ss >> p.x >> p.y >> p.z >> state))
      throw std::runtime_error("map file: malformed line '" + line + "'");
    if (state == "occupied") occupied.push_back(p);
  }
  return occupied;
}

void save_map_snapshot(const OccupancyMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_map_snapshot: cannot open " + path);
  const auto& p = map.params();
  out << "SCSM1B\n";
  out << fmt_double(p.resolution) << " " << fmt_double(p.hit) << " " << fmt_double(p.miss) << " "
      << fmt_double(p.clamp_min) << " " << fmt_double(p.clamp_max) << " "
      << fmt_double(p.occupied_threshold) << " " << fmt_double(p.free_threshold) << "\n";
  std::vector<std::pair<VoxelIndex, float>> cells;
  map.for_each_stored([&](const VoxelIndex& v, float lo) { cells.emplace_back(v, lo); });
  std::sort(cells.begin(), cells.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const uint64_t count = cells.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& [v, lo] : cells) {
    out.write(reinterpret_cast<const char*>(&v.x), 4);
    out.write(reinterpret_cast<const char*>(&v.y), 4);
    out.write(reinterpret_cast<const char*>(&v.z), 4);
    out.write(reinterpret_cast<const char*>(&lo), 4);
  }
}

OccupancyMap load_map_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("map snapshot: cannot open " + path);
  std::string magic;
  if (!std::getline(in, magic) || magic != "SCSM1B")
    throw std::runtime_error("map snapshot: missing SCSM1B magic");
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("map snapshot: missing params");
  std::istringstream ss(header);
  OccupancyMap::Params params;
  double res, hit, miss, cmin, cmax, occ, fre;
  if (!(ss >> res >> hit >> miss >> cmin >> cmax >> occ >> fre))
    throw std::runtime_error("map snapshot: malformed params");
  params.resolution = res;
  params.hit = static_cast<float>(hit);
  params.miss = static_cast<float>(miss);
  params.clamp_min = static_cast<float>(cmin);
  params.clamp_max = static_cast<float>(cmax);
  params.occupied_threshold = static_cast<float>(occ);
  params.free_threshold = static_cast<float>(fre);
  OccupancyMap map(params);
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in) throw std::runtime_error("map snapshot: truncated count");
  for (uint64_t i = 0; i < count; ++i) {
    VoxelIndex v;
    float lo;
    in.read(reinterpret_cast<char*>(&v.x), 4);
    in.read(reinterpret_cast<char*>(&v.y), 4);
    in.read(reinterpret_cast<char*>(&v.z), 4);
    in.read(reinterpret_cast<char*>(&lo), 4);
    if (!in) throw std::runtime_error("map snapshot: truncated records");
    map.set_log_odds(v, lo);
  }
  return map;
}

}  // namespace cavesim::mapping
