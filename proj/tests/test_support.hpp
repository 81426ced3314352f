#pragma once

// Shared helpers for the test suite: random trees and oracles that recompute
// derived quantities from first principles (parent walks, enumeration) rather
// than through the library's own recursions.

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "distacc/network.hpp"

namespace distacc::testing {

// Aggregation tree: unweighted sink 0, node i > 0 hangs off a uniformly
// chosen earlier node.
inline TreeNetwork random_aggregation_tree(std::mt19937_64& rng, std::size_t links, double wmin = 0.2,
                                           double wmax = 3.0) {
  std::uniform_real_distribution<double> w(wmin, wmax);
  std::vector<NodeSpec> specs;
  for (NodeId i = 1; i <= links; ++i) {
    std::uniform_int_distribution<NodeId> p(0, i - 1);
    specs.push_back({i, w(rng), p(rng)});
  }
  return TreeNetwork::build(0, specs);
}

// Consensus tree: every node weighted, root 0.
inline TreeNetwork random_consensus_tree(std::mt19937_64& rng, std::size_t nodes, double wmin = 0.2,
                                         double wmax = 3.0) {
  std::uniform_real_distribution<double> w(wmin, wmax);
  std::vector<NodeSpec> specs{{0, w(rng), std::nullopt}};
  for (NodeId i = 1; i < nodes; ++i) {
    std::uniform_int_distribution<NodeId> p(0, i - 1);
    specs.push_back({i, w(rng), p(rng)});
  }
  return TreeNetwork::build(0, specs);
}

// Is `a` equal to `v` or an ancestor of it? Walks stored parents.
inline bool is_ancestor_or_self(const TreeNetwork& net, NodeId a, NodeId v) {
  for (std::optional<NodeId> cur = v; cur; cur = net.parent(*cur)) {
    if (*cur == a) return true;
  }
  return false;
}

inline std::set<NodeId> members_by_ancestry(const TreeNetwork& net, NodeId i) {
  std::set<NodeId> out;
  for (NodeId v = 0; v < net.size(); ++v) {
    if (is_ancestor_or_self(net, i, v)) out.insert(v);
  }
  return out;
}

inline double sum_sq_weights(const TreeNetwork& net, const std::set<NodeId>& members) {
  double s = 0.0;
  for (NodeId v : members) s += net.weight(v) * net.weight(v);
  return s;
}

// Path between two nodes as the sequence of nodes, via ancestor lists.
inline std::vector<NodeId> path_nodes(const TreeNetwork& net, NodeId a, NodeId b) {
  std::vector<NodeId> up_a, up_b;
  for (std::optional<NodeId> c = a; c; c = net.parent(*c)) up_a.push_back(*c);
  for (std::optional<NodeId> c = b; c; c = net.parent(*c)) up_b.push_back(*c);
  while (up_a.size() > 1 && up_b.size() > 1 && up_a[up_a.size() - 2] == up_b[up_b.size() - 2]) {
    up_a.pop_back();
    up_b.pop_back();
  }
  // up_a.back() == up_b.back() is the lowest common ancestor.
  std::vector<NodeId> out(up_a.begin(), up_a.end());
  for (auto it = up_b.rbegin() + 1; it != up_b.rend(); ++it) out.push_back(*it);
  return out;
}

// Members on i's side of the cut {i, j}: nodes whose path to i avoids j.
inline std::set<NodeId> cut_component(const TreeNetwork& net, NodeId i, NodeId j) {
  std::set<NodeId> out;
  for (NodeId v = 0; v < net.size(); ++v) {
    bool hits_j = false;
    for (NodeId u : path_nodes(net, v, i)) hits_j = hits_j || u == j;
    if (!hits_j) out.insert(v);
  }
  return out;
}

// Edge i->j lies on the directed tree toward k iff the path i..k starts with j.
inline bool edge_in_tree_toward(const TreeNetwork& net, const DirectedEdge& e, NodeId k) {
  if (e.from == k) return false;
  const auto p = path_nodes(net, e.from, k);
  return p.size() >= 2 && p[1] == e.to;
}

// psi written out independently of the library.
inline double psi_oracle(double w, double var, double x) {
  return x / (2.0 * w * w) + std::numbers::log2e / (2.0 * var) * std::sqrt(2.0 * x * (4.0 * var + x));
}

inline double log2_factorial_half(std::size_t n) { return 0.5 * std::lgamma(static_cast<double>(n) + 1.0) / std::numbers::ln2; }

}  // namespace distacc::testing
