#pragma once

// Distortion accumulation, outer bounds (incremental-distortion and cut-set),
// test-channel inner bounds and their gaps, for data aggregation toward the
// sink and for network consensus over all directed trees.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "distacc/errors.hpp"
#include "distacc/infomeasures.hpp"
#include "distacc/network.hpp"

namespace distacc {

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

// Aggregation: link i is i -> parent(i). tx/rx are the MMSE distortions of
// the partial sum over S_i at the transmitter and at the receiver.
struct DistortionProfile {
  std::map<NodeId, double> inc;
  std::map<NodeId, double> tx;
  std::map<NodeId, double> rx;
  double total = 0.0;
};

struct ConsensusProfile {
  std::map<DirectedEdge, double> inc;
  std::map<DirectedEdge, double> tx;
  std::map<DirectedEdge, double> rx;
  std::map<NodeId, double> per_root;
  double total = 0.0;
};

inline void require_positive_entry(double value, const std::string& where) {
  if (!std::isfinite(value) || !(value > 0.0)) {
    throw InputError(where + ": incremental distortion must be positive and finite");
  }
}

inline DistortionProfile derive_distortions(const TreeNetwork& net, const std::map<NodeId, double>& inc) {
  for (const auto& [id, value] : inc) {
    if (!net.contains(id) || id == net.root()) throw InputError("node " + std::to_string(id) + ": not a link source");
  }
  DistortionProfile p;
  for (NodeId v : net.links()) {
    auto it = inc.find(v);
    if (it == inc.end()) throw InputError("node " + std::to_string(v) + ": missing incremental distortion");
    require_positive_entry(it->second, "node " + std::to_string(v));
    p.inc[v] = it->second;
  }
  for (NodeId v : net.postorder()) {
    if (v == net.root()) continue;
    double tx = 0.0;
    for (NodeId c : net.children(v)) tx += p.rx.at(c);
    p.tx[v] = tx;
    p.rx[v] = tx + p.inc[v];
  }
  for (const auto& [v, value] : p.inc) p.total += value;
  return p;
}

inline std::map<NodeId, double> equal_split(const TreeNetwork& net, double total) {
  std::map<NodeId, double> out;
  const double share = total / static_cast<double>(net.link_count());
  for (NodeId v : net.links()) out[v] = share;
  return out;
}

inline std::vector<DirectedEdge> edges_by_dependency(const TreeNetwork& net) {
  // Inputs of i->j are the edges k->i (k != j); their oriented subtrees are
  // strictly smaller, so ascending size is a valid evaluation order.
  auto edges = all_directed_edges(net);
  std::vector<std::pair<std::size_t, DirectedEdge>> keyed;
  keyed.reserve(edges.size());
  for (const auto& e : edges) keyed.emplace_back(oriented_subtree_size(net, e), e);
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t i = 0; i < keyed.size(); ++i) edges[i] = keyed[i].second;
  return edges;
}

inline void require_consensus_network(const TreeNetwork& net) {
  if (!net.all_weighted()) throw InputError("consensus requires a weight on every node, including the root");
}

inline ConsensusProfile consensus_derive(const TreeNetwork& net, const std::map<DirectedEdge, double>& inc) {
  require_consensus_network(net);
  for (const auto& [e, value] : inc) require_edge(net, e);
  ConsensusProfile p;
  for (const auto& e : all_directed_edges(net)) {
    auto it = inc.find(e);
    if (it == inc.end()) throw InputError("edge " + to_string(e) + ": missing incremental distortion");
    require_positive_entry(it->second, "edge " + to_string(e));
    p.inc[e] = it->second;
  }
  for (const auto& e : edges_by_dependency(net)) {
    double tx = 0.0;
    for (NodeId k : net.neighbors(e.from)) {
      if (k != e.to) tx += p.rx.at({k, e.from});
    }
    p.tx[e] = tx;
    p.rx[e] = tx + p.inc[e];
  }
  for (NodeId k = 0; k < net.size(); ++k) {
    double sum = 0.0;
    for (const auto& e : directed_tree(net, k)) sum += p.inc[e];
    p.per_root[k] = sum;
    p.total += sum;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Penalty term
// ---------------------------------------------------------------------------

// x/(2w^2) + log2(e)/(2 var) * sqrt(2x(4 var + x)); O(sqrt(x)) as x -> 0.
inline double psi_value(double weight, double variance, double x) {
  if (!(x >= 0.0)) throw InputError("psi: argument must be non-negative");
  return x / (2.0 * weight * weight) + kLog2e / (2.0 * variance) * std::sqrt(2.0 * x * (4.0 * variance + x));
}

inline double psi(const TreeNetwork& net, NodeId i, double x) {
  require_node(net, i);
  if (i == net.root()) throw InputError("psi: the sink owns no link");
  return psi_value(net.weight(i), net.subtree_variance(i), x);
}

// Transmitting node's weight with the oriented-subtree variance.
inline double psi_directed(const TreeNetwork& net, const DirectedEdge& e, double x) {
  return psi_value(net.weight(e.from), oriented_subtree_stats(net, e).variance, x);
}

// ---------------------------------------------------------------------------
// Aggregation bounds
// ---------------------------------------------------------------------------

template <class Link>
struct LinkSum {
  double total_bits = 0.0;
  std::map<Link, double> per_link_bits;
};

template <class Link>
LinkSum<Link> sum_links(std::map<Link, double> per_link) {
  LinkSum<Link> out;
  for (const auto& [link, bits] : per_link) out.total_bits += bits;
  out.per_link_bits = std::move(per_link);
  return out;
}

// 0.5 * sum_i [log2(var_i / inc_i) - psi_i(tx_i)], unclipped.
inline LinkSum<NodeId> outer_bound_incremental(const TreeNetwork& net, const DistortionProfile& profile) {
  std::map<NodeId, double> per;
  for (NodeId v : net.links()) {
    per[v] = 0.5 * (std::log2(net.subtree_variance(v) / profile.inc.at(v)) - psi(net, v, profile.tx.at(v)));
  }
  return sum_links(std::move(per));
}

inline double sum_log2_subtree_variances(const TreeNetwork& net) {
  double s = 0.0;
  for (NodeId v : net.links()) s += std::log2(net.subtree_variance(v));
  return s;
}

// Scheme-independent bound: 0.5*log2(prod var_i / (D/n)^n) - 0.5*sum psi_i(D).
inline double outer_bound_closed_form(const TreeNetwork& net, double total_distortion) {
  if (!(total_distortion > 0.0)) throw InfeasibleError("outer bound: distortion must be positive");
  const auto n = static_cast<double>(net.link_count());
  double penalty = 0.0;
  for (NodeId v : net.links()) penalty += psi(net, v, total_distortion);
  return 0.5 * (sum_log2_subtree_variances(net) - n * std::log2(total_distortion / n)) - 0.5 * penalty;
}

inline LinkSum<NodeId> cutset_bound_links(const TreeNetwork& net, const DistortionProfile& profile) {
  std::map<NodeId, double> per;
  for (NodeId v : net.links()) per[v] = 0.5 * std::log2(net.subtree_variance(v) / profile.rx.at(v));
  return sum_links(std::move(per));
}

inline double cutset_bound(const TreeNetwork& net, const DistortionProfile& profile) {
  return cutset_bound_links(net, profile).total_bits;
}

struct InnerBound {
  double rate_bits = 0.0;
  double distortion = 0.0;
  std::map<NodeId, double> estimate_variance;  // sigma-hat^2 per node
  std::map<NodeId, double> per_link_bits;
};

inline constexpr double kFeasibilitySlack = 1e-12;

// sigma-hat_b^2 = sum_children (sigma-hat_k^2 - d_k) + w_b^2, checked against d_b.
inline std::map<NodeId, double> estimate_variances(const TreeNetwork& net, const std::map<NodeId, double>& d) {
  std::map<NodeId, double> var;
  for (NodeId v : net.postorder()) {
    if (v == net.root()) continue;
    double s = net.weight(v) * net.weight(v);
    for (NodeId c : net.children(v)) s += var.at(c) - d.at(c);
    var[v] = s;
    auto it = d.find(v);
    if (it == d.end()) throw InputError("node " + std::to_string(v) + ": missing distortion parameter");
    require_positive_entry(it->second, "node " + std::to_string(v));
    if (it->second > s * (1.0 + kFeasibilitySlack)) {
      throw InfeasibleError("node " + std::to_string(v) + ": test channel infeasible, d = " + std::to_string(it->second) +
                            " exceeds estimate variance " + std::to_string(s));
    }
    if (s > net.subtree_variance(v) * (1.0 + kFeasibilitySlack)) {
      throw ConsistencyError("node " + std::to_string(v) + ": estimate variance exceeds partial-sum variance");
    }
  }
  return var;
}

// N -> infinity limit: rate 0.5*sum log2(var_i/d_i), distortion sum d_i.
inline InnerBound inner_bound(const TreeNetwork& net, const std::map<NodeId, double>& d) {
  for (const auto& [id, value] : d) {
    if (!net.contains(id) || id == net.root()) throw InputError("node " + std::to_string(id) + ": not a link source");
  }
  InnerBound out;
  out.estimate_variance = estimate_variances(net, d);
  for (NodeId v : net.links()) {
    const double bits = 0.5 * std::log2(net.subtree_variance(v) / d.at(v));
    out.per_link_bits[v] = bits;
    out.rate_bits += bits;
    out.distortion += d.at(v);
  }
  return out;
}

inline double inner_bound_minimized(const TreeNetwork& net, double total_distortion) {
  if (!(total_distortion > 0.0)) throw InfeasibleError("inner bound: distortion must be positive");
  estimate_variances(net, equal_split(net, total_distortion));
  const auto n = static_cast<double>(net.link_count());
  return 0.5 * (sum_log2_subtree_variances(net) - n * std::log2(total_distortion / n));
}

struct GapReport {
  double delta_r_bits = 0.0;
  std::map<NodeId, double> per_link_bits;
};

// Incremental outer bound minus cut-set bound, per link
// 0.5*log2(rx/inc) - 0.5*psi(tx).
inline GapReport gap_report(const TreeNetwork& net, const DistortionProfile& profile) {
  GapReport out;
  for (NodeId v : net.links()) {
    const double bits =
        0.5 * std::log2(profile.rx.at(v) / profile.inc.at(v)) - 0.5 * psi(net, v, profile.tx.at(v));
    out.per_link_bits[v] = bits;
    out.delta_r_bits += bits;
  }
  return out;
}

// 0.5*log2(n!) as a sum of logs.
inline double line_gap_asymptote(std::size_t n) {
  if (n < 1) throw InputError("line gap: n must be positive");
  double s = 0.0;
  for (std::size_t k = 2; k <= n; ++k) s += std::log2(static_cast<double>(k));
  return 0.5 * s;
}

// ---------------------------------------------------------------------------
// Consensus bounds
// ---------------------------------------------------------------------------

inline std::map<DirectedEdge, double> oriented_variances(const TreeNetwork& net) {
  std::map<DirectedEdge, double> out;
  for (const auto& e : all_directed_edges(net)) out[e] = oriented_subtree_stats(net, e).variance;
  return out;
}

inline LinkSum<DirectedEdge> consensus_outer(const TreeNetwork& net, const ConsensusProfile& profile) {
  const auto var = oriented_variances(net);
  std::map<DirectedEdge, double> per;
  for (const auto& [e, inc] : profile.inc) {
    const double tx = profile.tx.at(e);
    per[e] = 0.5 * (std::log2(var.at(e) / inc) - psi_value(net.weight(e.from), var.at(e), tx));
  }
  return sum_links(std::move(per));
}

inline LinkSum<DirectedEdge> consensus_cutset(const TreeNetwork& net, const ConsensusProfile& profile) {
  const auto var = oriented_variances(net);
  std::map<DirectedEdge, double> per;
  for (const auto& [e, rx] : profile.rx) per[e] = 0.5 * std::log2(var.at(e) / rx);
  return sum_links(std::move(per));
}

struct ConsensusInnerBound {
  double rate_bits = 0.0;
  double distortion = 0.0;
  std::map<DirectedEdge, double> estimate_variance;
  std::map<DirectedEdge, double> per_link_bits;
};

inline std::map<DirectedEdge, double> consensus_estimate_variances(const TreeNetwork& net,
                                                                   const std::map<DirectedEdge, double>& d) {
  std::map<DirectedEdge, double> var;
  for (const auto& e : edges_by_dependency(net)) {
    double s = net.weight(e.from) * net.weight(e.from);
    for (NodeId k : net.neighbors(e.from)) {
      if (k != e.to) s += var.at({k, e.from}) - d.at({k, e.from});
    }
    var[e] = s;
    auto it = d.find(e);
    if (it == d.end()) throw InputError("edge " + to_string(e) + ": missing distortion parameter");
    require_positive_entry(it->second, "edge " + to_string(e));
    if (it->second > s * (1.0 + kFeasibilitySlack)) {
      throw InfeasibleError("edge " + to_string(e) + ": test channel infeasible, d = " + std::to_string(it->second) +
                            " exceeds estimate variance " + std::to_string(s));
    }
  }
  return var;
}

inline ConsensusInnerBound consensus_inner(const TreeNetwork& net, const std::map<DirectedEdge, double>& d) {
  require_consensus_network(net);
  for (const auto& [e, value] : d) require_edge(net, e);
  ConsensusInnerBound out;
  out.estimate_variance = consensus_estimate_variances(net, d);
  const auto var = oriented_variances(net);
  for (const auto& [e, sigma] : var) {
    if (out.estimate_variance.at(e) > sigma * (1.0 + kFeasibilitySlack)) {
      throw ConsistencyError("edge " + to_string(e) + ": estimate variance exceeds partial-sum variance");
    }
    const double bits = 0.5 * std::log2(sigma / d.at(e));
    out.per_link_bits[e] = bits;
    out.rate_bits += bits;
  }
  for (NodeId k = 0; k < net.size(); ++k) {
    for (const auto& e : directed_tree(net, k)) out.distortion += d.at(e);
  }
  return out;
}

// Order-level comparator n/2 * log2(1/(n^{3/2} D)), clipped at 0. Constants
// are not those of any proven bound; display only.
inline double classical_consensus_comparator(std::size_t n, double total_distortion) {
  if (!(total_distortion > 0.0)) throw InfeasibleError("comparator: distortion must be positive");
  const double nn = static_cast<double>(n);
  return std::max(0.0, 0.5 * nn * std::log2(1.0 / (std::pow(nn, 1.5) * total_distortion)));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

template <class Link>
struct LinkRow {
  Link link{};
  double inc = 0.0;
  double tx = 0.0;
  double rx = 0.0;
  double rate_bits = 0.0;  // achievable (inner) rate on this link
  double outer_bits = 0.0;
  double cutset_bits = 0.0;
  double delta_r_bits = 0.0;
};

struct BoundsReport {
  double outer_incremental_bits = 0.0;
  double outer_closed_form_bits = 0.0;
  double cutset_bits = 0.0;
  std::optional<double> inner_bits;
  std::optional<double> inner_minimized_bits;
  std::optional<double> gap_inner_outer_bits;
  double delta_r_bits = 0.0;
  double total_distortion = 0.0;
  std::vector<LinkRow<NodeId>> links;
  std::vector<std::string> warnings;

  // Bounds clipped at zero.
  double effective_outer_bits() const { return std::max(0.0, outer_incremental_bits); }
  double effective_cutset_bits() const { return std::max(0.0, cutset_bits); }
};

inline BoundsReport evaluate_bounds(const TreeNetwork& net, const DistortionProfile& profile) {
  BoundsReport r;
  const auto outer = outer_bound_incremental(net, profile);
  const auto cut = cutset_bound_links(net, profile);
  const auto gap = gap_report(net, profile);
  r.outer_incremental_bits = outer.total_bits;
  r.cutset_bits = cut.total_bits;
  r.delta_r_bits = gap.delta_r_bits;
  r.total_distortion = profile.total;
  r.outer_closed_form_bits = outer_bound_closed_form(net, profile.total);

  std::optional<InnerBound> inner;
  try {
    inner = inner_bound(net, profile.inc);
    r.inner_bits = inner->rate_bits;
    r.gap_inner_outer_bits = inner->rate_bits - outer.total_bits;
  } catch (const InfeasibleError& e) {
    r.warnings.push_back(std::string("inner bound unavailable: ") + e.what());
  }
  try {
    r.inner_minimized_bits = inner_bound_minimized(net, profile.total);
  } catch (const InfeasibleError& e) {
    r.warnings.push_back(std::string("equal-split inner bound unavailable: ") + e.what());
  }

  for (NodeId v : net.links()) {
    LinkRow<NodeId> row;
    row.link = v;
    row.inc = profile.inc.at(v);
    row.tx = profile.tx.at(v);
    row.rx = profile.rx.at(v);
    row.rate_bits = inner ? inner->per_link_bits.at(v) : 0.5 * std::log2(net.subtree_variance(v) / row.inc);
    row.outer_bits = outer.per_link_bits.at(v);
    row.cutset_bits = cut.per_link_bits.at(v);
    row.delta_r_bits = gap.per_link_bits.at(v);
    if (row.inc >= net.subtree_variance(v)) {
      r.warnings.push_back("link " + std::to_string(v) + ": incremental distortion >= partial-sum variance");
    }
    r.links.push_back(row);
  }
  return r;
}

struct ConsensusBoundsReport {
  double outer_incremental_bits = 0.0;
  double cutset_bits = 0.0;
  std::optional<double> inner_bits;
  std::optional<double> gap_inner_outer_bits;
  double delta_r_bits = 0.0;
  double total_distortion = 0.0;
  double classical_comparator_bits = 0.0;
  std::map<NodeId, double> per_root;
  std::vector<LinkRow<DirectedEdge>> links;
  std::vector<std::string> warnings;
};

inline ConsensusBoundsReport evaluate_consensus_bounds(const TreeNetwork& net, const ConsensusProfile& profile) {
  ConsensusBoundsReport r;
  const auto outer = consensus_outer(net, profile);
  const auto cut = consensus_cutset(net, profile);
  const auto var = oriented_variances(net);
  r.outer_incremental_bits = outer.total_bits;
  r.cutset_bits = cut.total_bits;
  r.delta_r_bits = outer.total_bits - cut.total_bits;
  r.total_distortion = profile.total;
  r.per_root = profile.per_root;
  r.classical_comparator_bits = classical_consensus_comparator(net.size(), profile.total);

  std::optional<ConsensusInnerBound> inner;
  try {
    inner = consensus_inner(net, profile.inc);
    r.inner_bits = inner->rate_bits;
    r.gap_inner_outer_bits = inner->rate_bits - outer.total_bits;
  } catch (const InfeasibleError& e) {
    r.warnings.push_back(std::string("inner bound unavailable: ") + e.what());
  }
  for (const auto& [e, inc] : profile.inc) {
    LinkRow<DirectedEdge> row;
    row.link = e;
    row.inc = inc;
    row.tx = profile.tx.at(e);
    row.rx = profile.rx.at(e);
    row.rate_bits = inner ? inner->per_link_bits.at(e) : 0.5 * std::log2(var.at(e) / inc);
    row.outer_bits = outer.per_link_bits.at(e);
    row.cutset_bits = cut.per_link_bits.at(e);
    row.delta_r_bits = row.outer_bits - row.cutset_bits;
    if (inc >= var.at(e)) {
      r.warnings.push_back("edge " + to_string(e) + ": incremental distortion >= partial-sum variance");
    }
    r.links.push_back(row);
  }
  return r;
}

}  // namespace distacc
