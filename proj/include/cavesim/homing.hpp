#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cavesim/geometry.hpp"

namespace cavesim::homing {

enum class NodeKind : uint8_t {
  kBase = 0,
  kLandedRobot = 1,
  kDeployedBeacon = 2,
  kPose = 3,
};

inline bool is_communication(NodeKind k) { return k != NodeKind::kPose; }

struct Node {
  uint32_t id{0};
  NodeKind kind{NodeKind::kPose};
  Vec3 position;
  uint32_t parent{kNoParent};
  double edge_cost{0.0};  // flight-time cost to parent

  static constexpr uint32_t kNoParent = 0xffffffffu;
};

struct HomingParams {
  double d_e{1.0};          // minimum edge length between tree nodes
  double d_c{50.0};         // communication radius
  double v_nominal{1.2};    // assumed homing speed
  double reserve_time{15.0};

  void validate() const;
};

// Straight-line flight-time estimate between two positions.
double cost(const Vec3& a, const Vec3& b, const HomingParams& params);

// freeRay oracle: true when the straight segment is flyable.
using FreeRayFn = std::function<bool(const Vec3&, const Vec3&)>;

// Per-robot replica of the shared homing tree. The base station is the root;
// communication nodes chain to other communication nodes only, pose nodes
// parent to minimize accumulated flight time to a communication node.
class HomingTree {
 public:
  HomingTree(const Vec3& base_position, const HomingParams& params);

  const HomingParams& params() const { return params_; }
  const std::vector<Node>& nodes() const { return order_; }
  const Node* find(uint32_t id) const;
  size_t size() const { return order_.size(); }

  // Flight time from the node along parent links to the first communication
  // node (zero for communication nodes). Throws on unknown id.
  double accumulated_cost(uint32_t id) const;

  // Alg. 1 insertion. Returns true when the node was added. Pose nodes are
  // rejected when closer than d_e to an existing node or when no node is
  // visible; communication nodes always insert and may reparent pose nodes.
  bool insert(Node node, const FreeRayFn& free_ray);

  // True when no parent chain contains a cycle (checked in tests after every
  // mutation recipe).
  bool acyclic() const;

  // Appends a node verbatim, trusting its links; deserialization only.
  void restore_node(const Node& node) {
    by_id_[node.id] = order_.size();
    order_.push_back(node);
  }

 private:
  friend HomingTree merge_trees(const HomingTree&, const HomingTree&, const FreeRayFn&);

  HomingParams params_;
  std::vector<Node> order_;                         // insertion order
  std::unordered_map<uint32_t, size_t> by_id_;
};

struct HomingRoute {
  std::vector<Vec3> waypoints;  // current position first; empty => land in place
  Vec3 landing;
  double flight_cost{0.0};      // seconds
};

// Route from `current` along tree links to the first node within d_c of the
// chain's communication node. Returns nullopt when the position cannot attach.
std::optional<HomingRoute> homing_path(const HomingTree& tree, const Vec3& current,
                                       const FreeRayFn& free_ray);

// Union of both replicas rebuilt by reinserting every node in canonical order
// (communication nodes by id first, then pose nodes by id). Identical ids must
// agree. A remote that is a subset of local leaves local untouched.
HomingTree merge_trees(const HomingTree& local, const HomingTree& remote,
                       const FreeRayFn& free_ray);

struct IncompatibleTrees : std::runtime_error {
  explicit IncompatibleTrees(const std::string& why)
      : std::runtime_error("merge_trees: " + why) {}
};

// True when the battery no longer covers the homing flight plus reserve.
// `fallback_cost` stands in when the position cannot attach to the tree
// (e.g. retracing the robot's own trajectory).
bool homing_trigger(double battery_remaining_s, const HomingTree& tree, const Vec3& current,
                    const FreeRayFn& free_ray, double fallback_cost);

// Radio serialization, format "SCHT1", little-endian records.
std::vector<uint8_t> serialize_tree(const HomingTree& tree);
HomingTree deserialize_tree(const std::vector<uint8_t>& bytes);

}  // namespace cavesim::homing
