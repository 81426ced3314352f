#pragma once

// Rate allocation: pick incremental distortions for a total distortion
// budget and report the per-link rates they imply.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "distacc/bounds.hpp"
#include "distacc/errors.hpp"
#include "distacc/network.hpp"

namespace distacc {

enum class AllocationMethod { EqualSplit, NumericPenalized, ConsensusKkt, ConsensusNumeric, GivenProfile };

inline std::string_view to_string(AllocationMethod m) {
  switch (m) {
    case AllocationMethod::EqualSplit: return "equal-split";
    case AllocationMethod::NumericPenalized: return "numeric-penalized";
    case AllocationMethod::ConsensusKkt: return "consensus-kkt";
    case AllocationMethod::ConsensusNumeric: return "consensus-numeric";
    case AllocationMethod::GivenProfile: return "given-profile";
  }
  return "unknown";
}

struct AllocatedLink {
  DirectedEdge link;
  double inc = 0.0;
  double rate_bits = 0.0;
};

struct RateAllocation {
  AllocationMethod method = AllocationMethod::EqualSplit;
  std::vector<AllocatedLink> links;
  double sum_rate_bits = 0.0;
  std::variant<DistortionProfile, ConsensusProfile> profile;
  // Penalized objective for the numeric aggregation allocator.
  std::optional<double> objective_bits;
  // Sum rate of the independent numeric solve that cross-checks a closed form.
  std::optional<double> reference_sum_rate_bits;
  std::size_t iterations = 0;
  bool converged = true;
  std::vector<std::string> warnings;

  std::map<NodeId, double> aggregation_inc() const {
    std::map<NodeId, double> out;
    for (const auto& l : links) out[l.link.from] = l.inc;
    return out;
  }
  std::map<DirectedEdge, double> consensus_inc() const {
    std::map<DirectedEdge, double> out;
    for (const auto& l : links) out[l.link] = l.inc;
    return out;
  }
};

inline void require_budget(double total_distortion) {
  if (!std::isfinite(total_distortion) || !(total_distortion > 0.0)) {
    throw InfeasibleError("infeasible distortion " + std::to_string(total_distortion) + ": must be positive");
  }
}

namespace detail {

inline RateAllocation aggregation_allocation(const TreeNetwork& net, AllocationMethod method,
                                             const std::map<NodeId, double>& inc) {
  RateAllocation out;
  out.method = method;
  auto profile = derive_distortions(net, inc);
  for (NodeId v : net.links()) {
    const double bits = 0.5 * std::log2(net.subtree_variance(v) / profile.inc.at(v));
    out.links.push_back({{v, *net.parent(v)}, profile.inc.at(v), bits});
    out.sum_rate_bits += bits;
  }
  out.profile = std::move(profile);
  return out;
}

inline RateAllocation consensus_allocation(const TreeNetwork& net, AllocationMethod method,
                                           const std::map<DirectedEdge, double>& inc) {
  RateAllocation out;
  out.method = method;
  auto profile = consensus_derive(net, inc);
  const auto var = oriented_variances(net);
  for (const auto& [e, value] : profile.inc) {
    const double bits = 0.5 * std::log2(var.at(e) / value);
    out.links.push_back({e, value, bits});
    out.sum_rate_bits += bits;
  }
  out.profile = std::move(profile);
  return out;
}

}  // namespace detail

// Every link gets D/n; rate 0.5*log2(var_i/(D/n)).
inline RateAllocation allocate_equal_incremental(const TreeNetwork& net, double total_distortion) {
  require_budget(total_distortion);
  const auto inc = equal_split(net, total_distortion);
  estimate_variances(net, inc);
  return detail::aggregation_allocation(net, AllocationMethod::EqualSplit, inc);
}

// 0.5 * sum_i [log2(var_i/inc_i) - psi_i(tx_i)] with tx from distortion accumulation.
inline double penalized_objective(const TreeNetwork& net, const std::map<NodeId, double>& inc) {
  return outer_bound_incremental(net, derive_distortions(net, inc)).total_bits;
}

inline constexpr std::size_t kPenalizedIterationCap = 100000;

// Best-effort minimizer of the penalized objective over inc > 0 with
// sum(inc) = D. Log-domain coordinate descent: each coordinate is scaled by
// exp(t), the vector renormalized to the budget, and t picked by golden
// section. Only strict improvements are accepted.
inline RateAllocation allocate_numeric_penalized(const TreeNetwork& net, double total_distortion,
                                                 double tol = 1e-10) {
  require_budget(total_distortion);
  if (!(tol > 0.0)) throw InputError("tolerance must be positive");
  const auto& links = net.links();
  std::vector<double> x(links.size(), total_distortion / static_cast<double>(links.size()));

  auto as_map = [&](const std::vector<double>& v) {
    std::map<NodeId, double> m;
    for (std::size_t i = 0; i < links.size(); ++i) m[links[i]] = v[i];
    return m;
  };
  auto moved = [&](std::size_t i, double t) {
    std::vector<double> y = x;
    y[i] *= std::exp(t);
    double s = 0.0;
    for (double v : y) s += v;
    for (double& v : y) v *= total_distortion / s;
    return y;
  };

  double best = penalized_objective(net, as_map(x));
  std::size_t passes = 0;
  bool converged = links.size() == 1;
  double step = 1.0;
  constexpr double kGolden = 0.6180339887498949;

  while (!converged && passes < kPenalizedIterationCap) {
    ++passes;
    const double pass_start = best;
    for (std::size_t i = 0; i < links.size(); ++i) {
      auto f = [&](double t) { return penalized_objective(net, as_map(moved(i, t))); };
      double lo = -step, hi = step;
      double a = hi - kGolden * (hi - lo), b = lo + kGolden * (hi - lo);
      double fa = f(a), fb = f(b);
      for (int it = 0; it < 80 && hi - lo > 1e-14; ++it) {
        if (fa < fb) {
          hi = b;
          b = a;
          fb = fa;
          a = hi - kGolden * (hi - lo);
          fa = f(a);
        } else {
          lo = a;
          a = b;
          fa = fb;
          b = lo + kGolden * (hi - lo);
          fb = f(b);
        }
      }
      const double t = 0.5 * (lo + hi);
      const double ft = f(t);
      if (ft < best) {
        best = ft;
        x = moved(i, t);
      }
    }
    const double gain = pass_start - best;
    if (gain < tol) {
      if (step <= 1e-6) converged = true;
      step *= 0.1;
    } else {
      step = std::min(1.0, step * 2.0);
    }
  }

  auto out = detail::aggregation_allocation(net, AllocationMethod::NumericPenalized, as_map(x));
  out.objective_bits = best;
  out.iterations = passes;
  out.converged = converged;
  if (!converged) out.warnings.push_back("numeric allocator hit the iteration cap; returning best iterate");
  return out;
}

// Minimizer of 0.5*sum log2(var_e/inc_e) s.t. sum_e m_e inc_e <= D: the
// stationarity condition makes m_e inc_e constant, so inc_e = D/(E m_e).
inline std::map<DirectedEdge, double> consensus_kkt_split(const TreeNetwork& net, double total_distortion) {
  require_budget(total_distortion);
  require_consensus_network(net);
  const auto edges = all_directed_edges(net);
  const double share = total_distortion / static_cast<double>(edges.size());
  std::map<DirectedEdge, double> inc;
  for (const auto& e : edges) inc[e] = share / static_cast<double>(edge_multiplicity(net, e));
  return inc;
}

// Log-barrier interior-point solve of the same convex program, with the
// constraint coefficients counted directly from the n directed trees.
inline std::map<DirectedEdge, double> consensus_barrier_solve(const TreeNetwork& net, double total_distortion,
                                                             std::size_t* newton_steps = nullptr) {
  require_budget(total_distortion);
  require_consensus_network(net);
  const auto edges = all_directed_edges(net);
  const std::size_t m = edges.size();
  std::map<DirectedEdge, double> count;
  for (NodeId k = 0; k < net.size(); ++k) {
    for (const auto& e : directed_tree(net, k)) count[e] += 1.0;
  }
  std::vector<double> coef(m), x(m);
  for (std::size_t i = 0; i < m; ++i) {
    coef[i] = count.at(edges[i]);
    x[i] = total_distortion / (2.0 * static_cast<double>(m) * coef[i]);
  }

  // The objective is const - a * sum ln x with a = 1/(2 ln 2).
  const double a = 0.5 / std::numbers::ln2;
  auto slack = [&](const std::vector<double>& v) {
    double s = total_distortion;
    for (std::size_t i = 0; i < m; ++i) s -= coef[i] * v[i];
    return s;
  };
  auto barrier = [&](const std::vector<double>& v, double t) {
    double f = -std::log(slack(v));
    for (double xi : v) f -= t * a * std::log(xi);
    return f;
  };

  std::size_t steps = 0;
  for (double t = 1.0; t <= 1e11; t *= 10.0) {
    for (int it = 0; it < 200; ++it) {
      const double s = slack(x);
      std::vector<double> g(m), inv_diag(m);
      for (std::size_t i = 0; i < m; ++i) {
        g[i] = -t * a / x[i] + coef[i] / s;
        inv_diag[i] = x[i] * x[i] / (t * a);
      }
      // Hessian = diag + u u^T with u = coef / s; Sherman-Morrison.
      double ug = 0.0, uu = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double u = coef[i] / s;
        ug += u * inv_diag[i] * g[i];
        uu += u * inv_diag[i] * u;
      }
      std::vector<double> dx(m);
      double decrement = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double u = coef[i] / s;
        dx[i] = -(inv_diag[i] * g[i] - inv_diag[i] * u * ug / (1.0 + uu));
        decrement -= g[i] * dx[i];
      }
      ++steps;
      if (decrement / 2.0 < 1e-18) break;

      double step = 1.0;
      const double f0 = barrier(x, t);
      std::vector<double> trial(m);
      while (true) {
        bool inside = true;
        for (std::size_t i = 0; i < m; ++i) {
          trial[i] = x[i] + step * dx[i];
          if (!(trial[i] > 0.0)) inside = false;
        }
        if (inside && slack(trial) > 0.0 && barrier(trial, t) <= f0 - 0.25 * step * decrement) break;
        step *= 0.5;
        if (step < 1e-20) break;
      }
      if (step < 1e-20) break;
      x = trial;
    }
  }
  if (newton_steps) *newton_steps = steps;

  std::map<DirectedEdge, double> inc;
  for (std::size_t i = 0; i < m; ++i) inc[edges[i]] = x[i];
  return inc;
}

inline RateAllocation allocate_consensus_numeric(const TreeNetwork& net, double total_distortion) {
  std::size_t steps = 0;
  auto inc = consensus_barrier_solve(net, total_distortion, &steps);
  auto out = detail::consensus_allocation(net, AllocationMethod::ConsensusNumeric, inc);
  out.iterations = steps;
  return out;
}

inline constexpr double kConsensusCrossCheckBits = 1e-6;

inline RateAllocation allocate_consensus(const TreeNetwork& net, double total_distortion) {
  auto out = detail::consensus_allocation(net, AllocationMethod::ConsensusKkt, consensus_kkt_split(net, total_distortion));
  const auto numeric = allocate_consensus_numeric(net, total_distortion);
  out.reference_sum_rate_bits = numeric.sum_rate_bits;
  if (std::abs(numeric.sum_rate_bits - out.sum_rate_bits) > kConsensusCrossCheckBits) {
    throw ConsistencyError("consensus allocation: closed form and interior solver disagree by " +
                           std::to_string(numeric.sum_rate_bits - out.sum_rate_bits) + " bits");
  }
  return out;
}

// D/(2(n-1)) on every directed edge, the equal split that ignores
// multiplicities. Reported next to the KKT solution for comparison.
inline RateAllocation consensus_uniform_split(const TreeNetwork& net, double total_distortion) {
  require_budget(total_distortion);
  require_consensus_network(net);
  const auto edges = all_directed_edges(net);
  std::map<DirectedEdge, double> inc;
  for (const auto& e : edges) inc[e] = total_distortion / static_cast<double>(edges.size());
  auto out = detail::consensus_allocation(net, AllocationMethod::GivenProfile, inc);
  return out;
}

// Achievable rate per link at the N -> infinity limit. Links whose
// incremental distortion reaches the partial-sum variance get rate 0.
inline RateAllocation rates_for_profile(const TreeNetwork& net, const DistortionProfile& profile) {
  RateAllocation out;
  out.method = AllocationMethod::GivenProfile;
  for (NodeId v : net.links()) {
    const double inc = profile.inc.at(v);
    double bits = 0.5 * std::log2(net.subtree_variance(v) / inc);
    if (inc >= net.subtree_variance(v)) {
      out.warnings.push_back("link " + std::to_string(v) + ": incremental distortion >= partial-sum variance, rate 0");
      bits = 0.0;
    }
    out.links.push_back({{v, *net.parent(v)}, inc, bits});
    out.sum_rate_bits += bits;
  }
  out.profile = profile;
  return out;
}

inline RateAllocation rates_for_profile(const TreeNetwork& net, const ConsensusProfile& profile) {
  RateAllocation out;
  out.method = AllocationMethod::GivenProfile;
  const auto var = oriented_variances(net);
  for (const auto& [e, inc] : profile.inc) {
    double bits = 0.5 * std::log2(var.at(e) / inc);
    if (inc >= var.at(e)) {
      out.warnings.push_back("edge " + to_string(e) + ": incremental distortion >= partial-sum variance, rate 0");
      bits = 0.0;
    }
    out.links.push_back({e, inc, bits});
    out.sum_rate_bits += bits;
  }
  out.profile = profile;
  return out;
}

}  // namespace distacc
