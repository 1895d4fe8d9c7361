#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>

namespace cavesim {

struct Vec3 {
  double x{0.0};
  double y{0.0};
  double z{0.0};

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm_sq() const { return dot(*this); }
  double norm() const { return std::sqrt(norm_sq()); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? (*this) / n : Vec3{};
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// Integer voxel coordinate. Lexicographic order is the project-wide
// deterministic tie-break for anything keyed by cells.
struct VoxelIndex {
  int32_t x{0};
  int32_t y{0};
  int32_t z{0};

  bool operator==(const VoxelIndex& o) const { return x == o.x && y == o.y && z == o.z; }
  bool operator<(const VoxelIndex& o) const {
    if (x != o.x) return x < o.x;
    if (y != o.y) return y < o.y;
    return z < o.z;
  }
};

struct VoxelIndexHash {
  size_t operator()(const VoxelIndex& v) const {
    uint64_t h = 1469598103934665603ull;
    for (int64_t c : {int64_t(v.x), int64_t(v.y), int64_t(v.z)}) {
      h ^= static_cast<uint64_t>(c);
      h *= 1099511628211ull;
    }
    return static_cast<size_t>(h);
  }
};

struct AABB {
  Vec3 min;
  Vec3 max;

  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
  Vec3 size() const { return max - min; }
  AABB inflated(double m) const { return {min - Vec3{m, m, m}, max + Vec3{m, m, m}}; }
};

inline double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Shortest signed angular difference b - a, in (-pi, pi].
inline double angle_diff(double a, double b) {
  double d = std::fmod(b - a, 2.0 * M_PI);
  if (d > M_PI) d -= 2.0 * M_PI;
  if (d <= -M_PI) d += 2.0 * M_PI;
  return d;
}

}  // namespace cavesim
