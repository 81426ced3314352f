#pragma once

// Rooted weighted tree networks of Gaussian sources and the structural
// quantities every bound, allocator and simulator consumes: subtree
// variances, directed trees toward an arbitrary root, oriented subtrees and
// directed-edge multiplicities.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "distacc/errors.hpp"

namespace distacc {

using NodeId = std::size_t;

inline constexpr std::size_t kDefaultMaxNodes = 10000;

struct DirectedEdge {
  NodeId from = 0;
  NodeId to = 0;

  friend auto operator<=>(const DirectedEdge&, const DirectedEdge&) = default;
};

inline std::string to_string(const DirectedEdge& e) {
  return std::to_string(e.from) + "->" + std::to_string(e.to);
}

// Parses "i->j".
inline DirectedEdge parse_directed_edge(std::string_view text) {
  const auto arrow = text.find("->");
  if (arrow == std::string_view::npos) {
    throw InputError("directed edge '" + std::string(text) + "': expected 'from->to'");
  }
  auto parse_id = [&](std::string_view part) -> NodeId {
    if (part.empty() || !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw InputError("directed edge '" + std::string(text) + "': bad node id");
    }
    return static_cast<NodeId>(std::stoull(std::string(part)));
  };
  return {parse_id(text.substr(0, arrow)), parse_id(text.substr(arrow + 2))};
}

struct SubtreeStats {
  std::vector<NodeId> members;  // ascending
  double variance = 0.0;        // sum of squared member weights
};

// One entry of a tree description. The root carries a weight only in
// consensus networks; every other node must have both a weight and a parent.
struct NodeSpec {
  NodeId id = 0;
  std::optional<double> weight;
  std::optional<NodeId> parent;
};

class TreeNetwork {
 public:
  TreeNetwork() = default;

  // Validates and builds. Ids must be dense in [0, #nodes). An unweighted
  // root is the aggregation sink and must be node 0.
  static TreeNetwork build(NodeId root, const std::vector<NodeSpec>& nodes,
                           std::size_t max_nodes = kDefaultMaxNodes) {
    std::size_t count = nodes.size();
    const bool root_listed = std::any_of(nodes.begin(), nodes.end(), [&](const NodeSpec& s) { return s.id == root; });
    if (!root_listed) ++count;
    if (count < 2) throw InputError("tree needs at least one link");
    if (count > max_nodes) {
      throw InputError("tree has " + std::to_string(count) + " nodes, limit is " + std::to_string(max_nodes));
    }
    if (root >= count) throw InputError("root " + std::to_string(root) + ": ids must be dense in [0, " + std::to_string(count) + ")");

    TreeNetwork net;
    net.root_ = root;
    net.weight_.assign(count, 0.0);
    net.weighted_.assign(count, false);
    net.parent_.assign(count, kNone);
    std::vector<bool> seen(count, false);

    for (const auto& s : nodes) {
      const std::string where = "node " + std::to_string(s.id);
      if (s.id >= count) throw InputError(where + ": ids must be dense in [0, " + std::to_string(count) + ")");
      if (seen[s.id]) throw InputError(where + ": duplicate id");
      seen[s.id] = true;
      if (s.weight) {
        if (!std::isfinite(*s.weight)) throw InputError(where + ": weight must be finite");
        if (*s.weight == 0.0) throw InputError(where + ": zero weight");
        net.weight_[s.id] = *s.weight;
        net.weighted_[s.id] = true;
      }
      if (s.id == root) {
        if (s.parent) throw InputError(where + ": root must not have a parent");
        continue;
      }
      if (!s.weight) throw InputError(where + ": missing weight");
      if (!s.parent) throw InputError(where + ": missing parent");
      if (*s.parent >= count) throw InputError(where + ": parent " + std::to_string(*s.parent) + " is not a node");
      if (*s.parent == s.id) throw InputError(where + ": cycle detected (node is its own parent)");
      net.parent_[s.id] = *s.parent;
    }
    seen[root] = true;
    for (NodeId v = 0; v < count; ++v) {
      if (!seen[v]) throw InputError("node " + std::to_string(v) + ": disconnected (ids must be dense)");
    }
    if (!net.weighted_[root] && root != 0) {
      throw InputError("node " + std::to_string(root) + ": an unweighted sink must be node 0");
    }

    // Every node must reach the root; 0 = unvisited, 1 = on current walk, 2 = reaches root.
    std::vector<unsigned char> state(count, 0);
    state[root] = 2;
    std::vector<NodeId> walk;
    for (NodeId start = 0; start < count; ++start) {
      walk.clear();
      NodeId v = start;
      while (state[v] == 0) {
        state[v] = 1;
        walk.push_back(v);
        v = net.parent_[v];
      }
      if (state[v] == 1) throw InputError("node " + std::to_string(v) + ": cycle detected");
      for (NodeId u : walk) state[u] = 2;
    }

    net.finish();
    return net;
  }

  std::size_t size() const { return weight_.size(); }
  NodeId root() const { return root_; }

  bool contains(NodeId v) const { return v < size(); }
  bool has_weight(NodeId v) const { return weighted_.at(v); }
  bool all_weighted() const { return std::all_of(weighted_.begin(), weighted_.end(), [](bool b) { return b; }); }

  // Zero for the unweighted sink.
  double weight(NodeId v) const { return weight_.at(v); }

  std::optional<NodeId> parent(NodeId v) const {
    if (parent_.at(v) == kNone) return std::nullopt;
    return parent_[v];
  }
  std::span<const NodeId> children(NodeId v) const { return children_.at(v); }
  std::span<const NodeId> neighbors(NodeId v) const { return neighbors_.at(v); }
  bool adjacent(NodeId a, NodeId b) const {
    if (!contains(a) || !contains(b)) return false;
    return std::binary_search(neighbors_[a].begin(), neighbors_[a].end(), b);
  }

  // Non-root nodes in ascending order; node i owns the link i -> parent(i).
  const std::vector<NodeId>& links() const { return links_; }
  std::size_t link_count() const { return links_.size(); }

  // Children before parents; siblings in ascending id order.
  const std::vector<NodeId>& postorder() const { return postorder_; }

  double subtree_variance(NodeId v) const { return subtree_variance_.at(v); }
  std::size_t subtree_size(NodeId v) const { return subtree_size_.at(v); }

  std::vector<NodeSpec> specs() const {
    std::vector<NodeSpec> out;
    for (NodeId v = 0; v < size(); ++v) {
      if (v == root_ && !weighted_[v]) continue;
      NodeSpec s{v, std::nullopt, parent(v)};
      if (weighted_[v]) s.weight = weight_[v];
      out.push_back(s);
    }
    return out;
  }

  friend bool operator==(const TreeNetwork&, const TreeNetwork&) = default;

 private:
  static constexpr NodeId kNone = static_cast<NodeId>(-1);

  void finish() {
    const std::size_t n = size();
    children_.assign(n, {});
    neighbors_.assign(n, {});
    links_.clear();
    for (NodeId v = 0; v < n; ++v) {
      if (parent_[v] == kNone) continue;
      children_[parent_[v]].push_back(v);
      links_.push_back(v);
    }
    for (NodeId v = 0; v < n; ++v) {
      neighbors_[v] = children_[v];
      if (parent_[v] != kNone) neighbors_[v].push_back(parent_[v]);
      std::sort(neighbors_[v].begin(), neighbors_[v].end());
    }

    postorder_.clear();
    postorder_.reserve(n);
    std::vector<std::pair<NodeId, std::size_t>> stack{{root_, 0}};
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < children_[v].size()) {
        NodeId c = children_[v][next++];
        stack.emplace_back(c, 0);
      } else {
        postorder_.push_back(v);
        stack.pop_back();
      }
    }

    subtree_variance_.assign(n, 0.0);
    subtree_size_.assign(n, 1);
    for (NodeId v : postorder_) {
      double var = weight_[v] * weight_[v];
      for (NodeId c : children_[v]) {
        var += subtree_variance_[c];
        subtree_size_[v] += subtree_size_[c];
      }
      subtree_variance_[v] = var;
    }
  }

  NodeId root_ = 0;
  std::vector<double> weight_;
  std::vector<bool> weighted_;
  std::vector<NodeId> parent_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::vector<NodeId>> neighbors_;
  std::vector<NodeId> links_;
  std::vector<NodeId> postorder_;
  std::vector<double> subtree_variance_;
  std::vector<std::size_t> subtree_size_;
};

// Tree-spec JSON: {"root": 0, "nodes": [{"id": 1, "weight": 1.0, "parent": 0}, ...]}
inline TreeNetwork parse_tree(std::string_view document, std::size_t max_nodes = kDefaultMaxNodes) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed tree document: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("malformed tree document: top level must be an object");
  if (!doc.contains("root") || !doc["root"].is_number_unsigned()) {
    throw InputError("malformed tree document: 'root' must be a non-negative integer");
  }
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw InputError("malformed tree document: 'nodes' must be an array");
  }
  const NodeId root = doc["root"].get<NodeId>();
  std::vector<NodeSpec> specs;
  for (const auto& entry : doc["nodes"]) {
    if (!entry.is_object() || !entry.contains("id") || !entry["id"].is_number_unsigned()) {
      throw InputError("malformed tree document: every node needs a non-negative integer 'id'");
    }
    NodeSpec s;
    s.id = entry["id"].get<NodeId>();
    const std::string where = "node " + std::to_string(s.id);
    if (entry.contains("weight")) {
      if (!entry["weight"].is_number()) throw InputError(where + ": weight must be a number");
      s.weight = entry["weight"].get<double>();
    }
    if (entry.contains("parent") && !entry["parent"].is_null()) {
      if (!entry["parent"].is_number_unsigned()) throw InputError(where + ": parent must be a non-negative integer");
      s.parent = entry["parent"].get<NodeId>();
    }
    specs.push_back(s);
  }
  return TreeNetwork::build(root, specs, max_nodes);
}

inline std::string serialize_tree(const TreeNetwork& net) {
  nlohmann::ordered_json doc;
  doc["root"] = net.root();
  doc["nodes"] = nlohmann::ordered_json::array();
  for (const auto& s : net.specs()) {
    nlohmann::ordered_json node;
    node["id"] = s.id;
    if (s.weight) node["weight"] = *s.weight;
    if (s.parent) node["parent"] = *s.parent;
    doc["nodes"].push_back(node);
  }
  return doc.dump();
}

// v0 <- v1 <- ... <- vn with an unweighted sink v0.
inline TreeNetwork make_line(std::size_t n, std::span<const double> weights) {
  if (n < 1) throw InputError("line network needs n >= 1");
  if (weights.size() != n) throw InputError("line network needs exactly n weights");
  std::vector<NodeSpec> specs;
  for (std::size_t i = 1; i <= n; ++i) specs.push_back({i, weights[i - 1], i - 1});
  return TreeNetwork::build(0, specs);
}

inline TreeNetwork make_line(std::size_t n, std::initializer_list<double> weights) {
  std::vector<double> w(weights);
  return make_line(n, std::span<const double>(w));
}

// Fully weighted path 0 - 1 - ... - (n-1) rooted at 0, for consensus.
inline TreeNetwork make_path(std::span<const double> weights) {
  if (weights.size() < 2) throw InputError("path needs at least two nodes");
  std::vector<NodeSpec> specs{{0, weights[0], std::nullopt}};
  for (std::size_t i = 1; i < weights.size(); ++i) specs.push_back({i, weights[i], i - 1});
  return TreeNetwork::build(0, specs);
}

// Center 0 with leaves 1..k. The center is weighted iff center_weight is set.
inline TreeNetwork make_star(std::span<const double> leaf_weights, std::optional<double> center_weight = std::nullopt) {
  std::vector<NodeSpec> specs;
  if (center_weight) specs.push_back({0, *center_weight, std::nullopt});
  for (std::size_t i = 0; i < leaf_weights.size(); ++i) specs.push_back({i + 1, leaf_weights[i], 0});
  return TreeNetwork::build(0, specs);
}

inline void require_node(const TreeNetwork& net, NodeId v) {
  if (!net.contains(v)) throw InputError("unknown node id " + std::to_string(v));
}

inline void require_edge(const TreeNetwork& net, const DirectedEdge& e) {
  if (!net.adjacent(e.from, e.to)) throw InputError("non-adjacent pair " + to_string(e));
}

inline SubtreeStats subtree_stats(const TreeNetwork& net, NodeId v) {
  require_node(net, v);
  SubtreeStats out;
  std::vector<NodeId> stack{v};
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    out.members.push_back(u);
    for (NodeId c : net.children(u)) stack.push_back(c);
  }
  std::sort(out.members.begin(), out.members.end());
  out.variance = net.subtree_variance(v);
  return out;
}

// Edges of the tree oriented toward k, one per non-k node, sorted by source.
inline std::vector<DirectedEdge> directed_tree(const TreeNetwork& net, NodeId k) {
  require_node(net, k);
  std::vector<NodeId> toward(net.size(), k);
  std::vector<bool> visited(net.size(), false);
  std::vector<NodeId> queue{k};
  visited[k] = true;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    NodeId u = queue[head];
    for (NodeId v : net.neighbors(u)) {
      if (visited[v]) continue;
      visited[v] = true;
      toward[v] = u;
      queue.push_back(v);
    }
  }
  std::vector<DirectedEdge> edges;
  edges.reserve(net.size() - 1);
  for (NodeId v = 0; v < net.size(); ++v) {
    if (v != k) edges.push_back({v, toward[v]});
  }
  return edges;
}

// All 2(#nodes - 1) directed edges in lexicographic order.
inline std::vector<DirectedEdge> all_directed_edges(const TreeNetwork& net) {
  std::vector<DirectedEdge> out;
  for (NodeId v = 0; v < net.size(); ++v) {
    for (NodeId u : net.neighbors(v)) out.push_back({v, u});
  }
  return out;
}

inline std::size_t oriented_subtree_size(const TreeNetwork& net, const DirectedEdge& e) {
  require_edge(net, e);
  if (net.parent(e.from) == e.to) return net.subtree_size(e.from);
  return net.size() - net.subtree_size(e.to);
}

// Component of e.from once the edge {from, to} is removed.
inline SubtreeStats oriented_subtree_stats(const TreeNetwork& net, const DirectedEdge& e) {
  require_edge(net, e);
  SubtreeStats out;
  std::vector<NodeId> stack{e.from};
  std::vector<bool> visited(net.size(), false);
  visited[e.from] = visited[e.to] = true;
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    out.members.push_back(u);
    for (NodeId v : net.neighbors(u)) {
      if (!visited[v]) {
        visited[v] = true;
        stack.push_back(v);
      }
    }
  }
  std::sort(out.members.begin(), out.members.end());
  if (net.parent(e.from) == e.to) {
    out.variance = net.subtree_variance(e.from);
  } else {
    for (NodeId m : out.members) out.variance += net.weight(m) * net.weight(m);
  }
  return out;
}

// Number of roots k whose directed tree uses e: the node count on e.to's side.
inline std::size_t edge_multiplicity(const TreeNetwork& net, const DirectedEdge& e) {
  return net.size() - oriented_subtree_size(net, e);
}

}  // namespace distacc
