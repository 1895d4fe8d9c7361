#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cavesim/world.hpp"

// World file format "SCSW1": an ASCII header followed by a little-endian
// run-length-encoded payload.
//
//   SCSW1\n
//   resolution <r>\n
//   origin <x> <y> <z>\n
//   dims <nx> <ny> <nz>\n
//   base <x> <y> <z>\n
//   spawns <k>\n
//   <x> <y> <z>\n            (k lines)
//   runs <n>\n
//   <n records of uint32 run length + uint8 cell value, x-fastest order>
//
// Doubles are printed with %.17g so the round trip is bit-exact.

namespace cavesim::worldsim {

namespace {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error("world file: " + what) {}
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string expect_line(std::istream& in, const char* field) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(std::string(field) + ": unexpected end of file");
  return line;
}

Vec3 parse_vec3(const std::string& line, const char* key) {
  std::istringstream ss(line);
  std::string tag;
  Vec3 v;
  if (!(ss >> tag >> v.x >> v.y >> v.z) || tag != key)
    throw ParseError(std::string(key) + ": malformed line '" + line + "'");
  return v;
}

}  // namespace

void save_world(const GroundTruthWorld& world, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_world: cannot open " + path);

  out << "SCSW1\n";
  out << "resolution " << fmt_double(world.resolution()) << "\n";
  const Vec3 o = world.extents().min;
  out << "origin " << fmt_double(o.x) << " " << fmt_double(o.y) << " " << fmt_double(o.z) << "\n";
  out << "dims " << world.nx() << " " << world.ny() << " " << world.nz() << "\n";
  const Vec3 b = world.base_station();
  out << "base " << fmt_double(b.x) << " " << fmt_double(b.y) << " " << fmt_double(b.z) << "\n";
  out << "spawns " << world.spawn_points().size() << "\n";
  for (const Vec3& s : world.spawn_points())
    out << fmt_double(s.x) << " " << fmt_double(s.y) << " " << fmt_double(s.z) << "\n";

  const auto& cells = world.raw_cells();
  std::vector<std::pair<uint32_t, uint8_t>> runs;
  size_t i = 0;
  while (i < cells.size()) {
    size_t j = i;
    while (j < cells.size() && cells[j] == cells[i] && j - i < 0xffffffffull) ++j;
    runs.emplace_back(static_cast<uint32_t>(j - i), cells[i]);
    i = j;
  }
  out << "runs " << runs.size() << "\n";
  for (const auto& [len, val] : runs) {
    uint8_t rec[5];
    rec[0] = len & 0xff;
    rec[1] = (len >> 8) & 0xff;
    rec[2] = (len >> 16) & 0xff;
    rec[3] = (len >> 24) & 0xff;
    rec[4] = val;
    out.write(reinterpret_cast<const char*>(rec), 5);
  }
  if (!out) throw std::runtime_error("save_world: write failed for " + path);
}

GroundTruthWorld load_world(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);

  const std::string magic = expect_line(in, "magic");
  if (magic != "SCSW1") throw ParseError("magic: expected SCSW1");

  double resolution = 0.0;
  {
    std::istringstream ss(expect_line(in, "resolution"));
    std::string tag;
    if (!(ss >> tag >> resolution) || tag != "resolution" || resolution <= 0.0)
      throw ParseError("resolution: must be a positive number");
  }
  const Vec3 origin = parse_vec3(expect_line(in, "origin"), "origin");
  int nx = 0, ny = 0, nz = 0;
  {
    std::istringstream ss(expect_line(in, "dims"));
    std::string tag;
    if (!(ss >> tag >> nx >> ny >> nz) || tag != "dims" || nx < 1 || ny < 1 || nz < 1)
      throw ParseError("dims: must be three positive integers");
  }
  const Vec3 base = parse_vec3(expect_line(in, "base"), "base");
  size_t n_spawns = 0;
  {
    std::istringstream ss(expect_line(in, "spawns"));
    std::string tag;
    if (!(ss >> tag >> n_spawns) || tag != "spawns")
      throw ParseError("spawns: malformed count line");
  }
  std::vector<Vec3> spawns(n_spawns);
  for (size_t i = 0; i < n_spawns; ++i) {
    std::istringstream ss(expect_line(in, "spawn point"));
    if (!(ss >> spawns[i].x >> spawns[i].y >> spawns[i].z))
      throw ParseError("spawn point: malformed coordinates");
  }
  size_t n_runs = 0;
  {
    std::istringstream ss(expect_line(in, "runs"));
    std::string tag;
    if (!(ss >> tag >> n_runs) || tag != "runs") throw ParseError("runs: malformed count line");
  }

  GroundTruthWorld world(resolution, origin, nx, ny, nz);
  const size_t total = static_cast<size_t>(nx) * ny * nz;
  size_t filled = 0;
  for (size_t r = 0; r < n_runs; ++r) {
    uint8_t rec[5];
    in.read(reinterpret_cast<char*>(rec), 5);
    if (!in) throw ParseError("runs: truncated payload");
    const uint32_t len = static_cast<uint32_t>(rec[0]) | (static_cast<uint32_t>(rec[1]) << 8) |
                         (static_cast<uint32_t>(rec[2]) << 16) |
                         (static_cast<uint32_t>(rec[3]) << 24);
    if (filled + len > total) throw ParseError("runs: payload exceeds voxel count");
    for (uint32_t k = 0; k < len; ++k) {
      const size_t idx = filled + k;
      const int32_t x = static_cast<int32_t>(idx % nx);
      const int32_t y = static_cast<int32_t>((idx / nx) % ny);
      const int32_t z = static_cast<int32_t>(idx / (static_cast<size_t>(nx) * ny));
      world.set_occupied(VoxelIndex{x, y, z}, rec[4] != 0);
    }
    filled += len;
  }
  if (filled != total) throw ParseError("runs: payload does not cover voxel count");

  world.set_base_station(base);
  world.set_spawn_points(std::move(spawns));
  try {
    world.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return world;
}

}  // namespace cavesim::worldsim
