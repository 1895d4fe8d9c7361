#include "cavesim/homing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cavesim::homing {

void HomingParams::validate() const {
  if (d_e <= 0.0 || d_c <= 0.0 || v_nominal <= 0.0 || reserve_time < 0.0)
    throw std::invalid_argument("homing params: all parameters must be positive");
  if (d_e >= d_c) throw std::invalid_argument("homing params: d_e must be < d_c");
}

double cost(const Vec3& a, const Vec3& b, const HomingParams& params) {
  return distance(a, b) / params.v_nominal;
}

HomingTree::HomingTree(const Vec3& base_position, const HomingParams& params) : params_(params) {
  params.validate();
  Node base;
  base.id = 0;
  base.kind = NodeKind::kBase;
  base.position = base_position;
  base.parent = Node::kNoParent;
  by_id_[0] = 0;
  order_.push_back(base);
}

const Node* HomingTree::find(uint32_t id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &order_[it->second];
}

double HomingTree::accumulated_cost(uint32_t id) const {
  const Node* n = find(id);
  if (!n) throw std::out_of_range("accumulated_cost: unknown node id");
  double sum = 0.0;
  while (!is_communication(n->kind)) {
    sum += n->edge_cost;
    if (n->parent == Node::kNoParent) break;
    n = find(n->parent);
    if (!n) throw std::logic_error("accumulated_cost: dangling parent link");
  }
  return sum;
}

bool HomingTree::insert(Node node, const FreeRayFn& free_ray) {
  if (by_id_.count(node.id)) return false;

  if (is_communication(node.kind)) {
    // Link exclusively into the communication chain.
    const Node* best = nullptr;
    double best_cost = std::numeric_limits<double>::infinity();
    for (const Node& c : order_) {
      if (!is_communication(c.kind)) continue;
      const double cc = cost(node.position, c.position, params_);
      if (cc < best_cost || (cc == best_cost && best && c.id < best->id)) {
        best_cost = cc;
        best = &c;
      }
    }
    node.parent = best ? best->id : Node::kNoParent;
    node.edge_cost = best ? best_cost : 0.0;
    const Vec3 node_pos = node.position;
    const uint32_t node_id = node.id;
    by_id_[node.id] = order_.size();
    order_.push_back(node);

    // Reparent pose nodes that become cheaper through the new node. Runs in
    // insertion order; accumulated costs see earlier reparents in this sweep.
    for (Node& p : order_) {
      if (p.kind != NodeKind::kPose) continue;
      const double direct = cost(node_pos, p.position, params_);
      if (direct < accumulated_cost(p.id) && free_ray(node_pos, p.position)) {
        p.parent = node_id;
        p.edge_cost = direct;
      }
    }
    return true;
  }

  // Pose node: enforce the minimum edge length against every existing node.
  for (const Node& v : order_) {
    if (distance(node.position, v.position) < params_.d_e) return false;
  }
  const Node* best = nullptr;
  double best_total = std::numeric_limits<double>::infinity();
  double best_edge = 0.0;
  for (const Node& v : order_) {
    if (!free_ray(node.position, v.position)) continue;
    const double edge = cost(node.position, v.position, params_);
    const double total = edge + accumulated_cost(v.id);
    if (total < best_total || (total == best_total && best && v.id < best->id)) {
      best_total = total;
      best_edge = edge;
      best = &v;
    }
  }
  if (!best) return false;
  node.parent = best->id;
  node.edge_cost = best_edge;
  by_id_[node.id] = order_.size();
  order_.push_back(node);
  return true;
}

bool HomingTree::acyclic() const {
  for (const Node& n : order_) {
    uint32_t slow = n.id;
    size_t steps = 0;
    const Node* cur = &n;
    while (cur->parent != Node::kNoParent) {
      cur = find(cur->parent);
      if (!cur) return false;
      if (cur->id == slow && steps > 0) return false;
      if (++steps > order_.size()) return false;
    }
  }
  return true;
}

std::optional<HomingRoute> homing_path(const HomingTree& tree, const Vec3& current,
                                       const FreeRayFn& free_ray) {
  // Attach the current position like a pose-node query (without the d_e gate).
  const Node* attach = nullptr;
  double attach_total = std::numeric_limits<double>::infinity();
  double attach_edge = 0.0;
  for (const Node& v : tree.nodes()) {
    if (!free_ray(current, v.position)) continue;
    const double edge = cost(current, v.position, tree.params());
    const double total = edge + tree.accumulated_cost(v.id);
    if (total < attach_total || (total == attach_total && attach && v.id < attach->id)) {
      attach_total = total;
      attach_edge = edge;
      attach = &v;
    }
  }
  if (!attach) return std::nullopt;

  // Chain of positions from current to the first communication node.
  std::vector<const Node*> chain;
  chain.push_back(attach);
  while (!is_communication(chain.back()->kind)) {
    const Node* p = tree.find(chain.back()->parent);
    if (!p) return std::nullopt;
    chain.push_back(p);
  }
  const Node* comm = chain.back();

  HomingRoute route;
  route.landing = current;
  route.flight_cost = 0.0;

  // Walk toward the communication node, stopping at the first point already
  // within communication range of it.
  if (distance(current, comm->position) <= tree.params().d_c) {
    return route;  // land in place
  }
  route.waypoints.push_back(current);
  double acc = attach_edge;
  for (const Node* n : chain) {
    route.waypoints.push_back(n->position);
    route.flight_cost = acc;
    route.landing = n->position;
    if (distance(n->position, comm->position) <= tree.params().d_c) break;
    acc += n->edge_cost;  // flight time on to this node's parent
  }
  return route;
}

HomingTree merge_trees(const HomingTree& local, const HomingTree& remote,
                       const FreeRayFn& free_ray) {
  if (distance(local.nodes().front().position, remote.nodes().front().position) > 1e-9)
    throw IncompatibleTrees("base stations differ");
  if (std::abs(local.params().d_e - remote.params().d_e) > 1e-12)
    throw IncompatibleTrees("d_e differs");

  // Subset remotes leave the local replica untouched.
  bool subset = true;
  for (const Node& n : remote.nodes()) {
    const Node* mine = local.find(n.id);
    if (!mine || distance(mine->position, n.position) > 1e-9) {
      subset = false;
      break;
    }
  }
  if (subset) return local;

  // Union of nodes, deduplicated by id; identical ids must agree on position.
  std::vector<Node> all;
  for (const Node& n : local.nodes()) all.push_back(n);
  for (const Node& n : remote.nodes()) {
    const Node* mine = local.find(n.id);
    if (mine) {
      if (distance(mine->position, n.position) > 1e-9)
        throw IncompatibleTrees("node id reused with a different position");
      continue;
    }
    all.push_back(n);
  }

  // Canonical replay: communication nodes by id, then pose nodes by id.
  std::sort(all.begin(), all.end(), [](const Node& a, const Node& b) {
    const bool ac = is_communication(a.kind), bc = is_communication(b.kind);
    if (ac != bc) return ac;
    return a.id < b.id;
  });

  HomingTree merged(local.nodes().front().position, local.params());
  for (const Node& n : all) {
    if (n.id == 0) continue;  // base already present
    Node fresh;
    fresh.id = n.id;
    fresh.kind = n.kind;
    fresh.position = n.position;
    merged.insert(fresh, free_ray);
  }
  return merged;
}

bool homing_trigger(double battery_remaining_s, const HomingTree& tree, const Vec3& current,
                    const FreeRayFn& free_ray, double fallback_cost) {
  const auto route = homing_path(tree, current, free_ray);
  const double cost_estimate = route ? route->flight_cost : fallback_cost;
  return battery_remaining_s <= cost_estimate + tree.params().reserve_time;
}

namespace {
template <typename T>
void put(std::vector<uint8_t>& out, const T& value) {
  const auto* p = reinterpret_cast<const uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}
template <typename T>
T get(const std::vector<uint8_t>& in, size_t& off) {
  if (off + sizeof(T) > in.size()) throw std::runtime_error("homing tree: truncated buffer");
  T value;
  std::memcpy(&value, in.data() + off, sizeof(T));
  off += sizeof(T);
  return value;
}
}  // namespace

std::vector<uint8_t> serialize_tree(const HomingTree& tree) {
  std::vector<uint8_t> out;
  const char magic[6] = {'S', 'C', 'H', 'T', '1', '\0'};
  out.insert(out.end(), magic, magic + 6);
  put(out, tree.params().d_e);
  put(out, tree.params().d_c);
  put(out, tree.params().v_nominal);
  put(out, tree.params().reserve_time);
  put(out, static_cast<uint32_t>(tree.size()));
  for (const Node& n : tree.nodes()) {
    put(out, n.id);
    put(out, static_cast<uint8_t>(n.kind));
    put(out, n.position.x);
    put(out, n.position.y);
    put(out, n.position.z);
    put(out, n.parent);
    put(out, n.edge_cost);
  }
  return out;
}

HomingTree deserialize_tree(const std::vector<uint8_t>& bytes) {
  size_t off = 0;
  char magic[6];
  if (bytes.size() < 6) throw std::runtime_error("homing tree: missing magic");
  std::memcpy(magic, bytes.data(), 6);
  off = 6;
  if (std::string(magic, 5) != "SCHT1") throw std::runtime_error("homing tree: bad magic");
  HomingParams params;
  params.d_e = get<double>(bytes, off);
  params.d_c = get<double>(bytes, off);
  params.v_nominal = get<double>(bytes, off);
  params.reserve_time = get<double>(bytes, off);
  const uint32_t count = get<uint32_t>(bytes, off);
  if (count == 0) throw std::runtime_error("homing tree: empty node list");

  std::vector<Node> nodes(count);
  for (uint32_t i = 0; i < count; ++i) {
    Node& n = nodes[i];
    n.id = get<uint32_t>(bytes, off);
    n.kind = static_cast<NodeKind>(get<uint8_t>(bytes, off));
    n.position.x = get<double>(bytes, off);
    n.position.y = get<double>(bytes, off);
    n.position.z = get<double>(bytes, off);
    n.parent = get<uint32_t>(bytes, off);
    n.edge_cost = get<double>(bytes, off);
  }
  if (nodes.front().kind != NodeKind::kBase)
    throw std::runtime_error("homing tree: first record must be the base");

  HomingTree tree(nodes.front().position, params);
  // Restore the replica verbatim (links were already validated on insertion).
  for (uint32_t i = 1; i < count; ++i) tree.restore_node(nodes[i]);
  return tree;
}

}  // namespace cavesim::homing
