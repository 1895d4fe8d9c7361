#pragma once

#include <limits>
#include <vector>

#include "cavesim/geometry.hpp"

namespace cavesim::pathplan {

// KD-tree over obstacle points (occupied voxel centers). Leaves keep their
// points in structure-of-arrays form so the scan runs through the SIMD
// kernels. Queries are exact; an empty index reports +inf distances.
class ObstacleIndex {
 public:
  ObstacleIndex() = default;
  explicit ObstacleIndex(std::vector<Vec3> points);

  struct Nearest {
    double dist{std::numeric_limits<double>::infinity()};
    Vec3 point;
  };

  Nearest nearest(const Vec3& q) const;
  double min_distance(const Vec3& q) const { return nearest(q).dist; }
  // Early-exit range query: any obstacle within r of q?
  bool any_within(const Vec3& q, double r) const;

  size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

 private:
  struct Node {
    AABB box;
    int axis{-1};          // -1 for leaves
    double split{0.0};
    int32_t left{-1}, right{-1};
    uint32_t begin{0}, end{0};  // leaf range into the SoA arrays
  };

  int32_t build(std::vector<Vec3>& pts, uint32_t begin, uint32_t end);
  void search(int32_t node, const Vec3& q, Nearest& best) const;
  bool search_within(int32_t node, const Vec3& q, double r_sq) const;

  static constexpr uint32_t kLeafSize = 24;

  std::vector<Node> nodes_;
  std::vector<double> xs_, ys_, zs_;
  size_t count_{0};
  int32_t root_{-1};
};

}  // namespace cavesim::pathplan
