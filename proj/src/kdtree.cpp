#include "cavesim/kdtree.hpp"

#include <algorithm>

#include "cavesim/kernels.hpp"

namespace cavesim::pathplan {

namespace {

double dist_sq_to_box(const Vec3& q, const AABB& box) {
  const double dx = std::max({box.min.x - q.x, 0.0, q.x - box.max.x});
  const double dy = std::max({box.min.y - q.y, 0.0, q.y - box.max.y});
  const double dz = std::max({box.min.z - q.z, 0.0, q.z - box.max.z});
  return dx * dx + dy * dy + dz * dz;
}

AABB bounds_of(const std::vector<Vec3>& pts, uint32_t begin, uint32_t end) {
  AABB box{pts[begin], pts[begin]};
  for (uint32_t i = begin + 1; i < end; ++i) {
    box.min.x = std::min(box.min.x, pts[i].x);
    box.min.y = std::min(box.min.y, pts[i].y);
    box.min.z = std::min(box.min.z, pts[i].z);
    box.max.x = std::max(box.max.x, pts[i].x);
    box.max.y = std::max(box.max.y, pts[i].y);
    box.max.z = std::max(box.max.z, pts[i].z);
  }
  return box;
}

double coord(const Vec3& p, int axis) { return axis == 0 ? p.x : axis == 1 ? p.y : p.z; }

}  // namespace

ObstacleIndex::ObstacleIndex(std::vector<Vec3> points) : count_(points.size()) {
  if (points.empty()) return;
  xs_.reserve(points.size());
  ys_.reserve(points.size());
  zs_.reserve(points.size());
  root_ = build(points, 0, static_cast<uint32_t>(points.size()));
}

int32_t ObstacleIndex::build(std::vector<Vec3>& pts, uint32_t begin, uint32_t end) {
  Node node;
  node.box = bounds_of(pts, begin, end);
  const int32_t id = static_cast<int32_t>(nodes_.size());
  nodes_.push_back(node);

  if (end - begin <= kLeafSize) {
    nodes_[id].begin = static_cast<uint32_t>(xs_.size());
    for (uint32_t i = begin; i < end; ++i) {
      xs_.push_back(pts[i].x);
      ys_.push_back(pts[i].y);
      zs_.push_back(pts[i].z);
    }
    nodes_[id].end = static_cast<uint32_t>(xs_.size());
    return id;
  }

  const Vec3 extent = nodes_[id].box.size();
  int axis = 0;
  if (extent.y > extent.x) axis = 1;
  if (extent.z > coord(extent, axis)) axis = 2;

  const uint32_t mid = (begin + end) / 2;
  std::nth_element(pts.begin() + begin, pts.begin() + mid, pts.begin() + end,
                   [axis](const Vec3& a, const Vec3& b) {
                     if (coord(a, axis) != coord(b, axis)) return coord(a, axis) < coord(b, axis);
                     if (a.x != b.x) return a.x < b.x;
                     if (a.y != b.y) return a.y < b.y;
                     return a.z < b.z;
                   });
  nodes_[id].axis = axis;
  nodes_[id].split = coord(pts[mid], axis);
  const int32_t left = build(pts, begin, mid);
  const int32_t right = build(pts, mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void ObstacleIndex::search(int32_t ni, const Vec3& q, Nearest& best) const {
  const Node& node = nodes_[ni];
  if (dist_sq_to_box(q, node.box) >= best.dist * best.dist) return;
  if (node.axis < 0) {
    const size_t n = node.end - node.begin;
    const auto r = kernels::min_dist_sq(q.x, q.y, q.z, xs_.data() + node.begin,
                                        ys_.data() + node.begin, zs_.data() + node.begin, n);
    if (r.index != SIZE_MAX && r.dist_sq < best.dist * best.dist) {
      best.dist = std::sqrt(r.dist_sq);
      const size_t i = node.begin + r.index;
      best.point = Vec3{xs_[i], ys_[i], zs_[i]};
    }
    return;
  }
  const bool left_first = coord(q, node.axis) < node.split;
  search(left_first ? node.left : node.right, q, best);
  search(left_first ? node.right : node.left, q, best);
}

ObstacleIndex::Nearest ObstacleIndex::nearest(const Vec3& q) const {
  Nearest best;
  if (root_ < 0) return best;
  search(root_, q, best);
  return best;
}

bool ObstacleIndex::search_within(int32_t ni, const Vec3& q, double r_sq) const {
  const Node& node = nodes_[ni];
  if (dist_sq_to_box(q, node.box) > r_sq) return false;
  if (node.axis < 0) {
    const size_t n = node.end - node.begin;
    return kernels::any_within_sq(q.x, q.y, q.z, xs_.data() + node.begin, ys_.data() + node.begin,
                                  zs_.data() + node.begin, n, r_sq);
  }
  const bool left_first = coord(q, node.axis) < node.split;
  if (search_within(left_first ? node.left : node.right, q, r_sq)) return true;
  return search_within(left_first ? node.right : node.left, q, r_sq);
}

bool ObstacleIndex::any_within(const Vec3& q, double r) const {
  if (root_ < 0 || r < 0.0) return false;
  return search_within(root_, q, r * r);
}

}  // namespace cavesim::pathplan
