#pragma once

// Numerical validation of distortion accumulation.
//
// The analytic model builds the exact joint law of the scalar test-channel
// variables (estimates U, descriptions V and the sources) as linear
// combinations of independent Gaussians and computes every MMSE distortion by
// Gaussian conditioning. The Monte-Carlo simulator runs the block scheme with
// the description drawn from the test-channel conditional law V | U, which is
// the infinite-blocklength stand-in for random-codebook encoding. A
// subtractive-dither scalar quantizer provides a finite-rate baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "distacc/allocation.hpp"
#include "distacc/bounds.hpp"
#include "distacc/errors.hpp"
#include "distacc/infomeasures.hpp"
#include "distacc/network.hpp"
#include "distacc/random.hpp"

namespace distacc {

enum class Scheme { TestChannel, DitheredQuantizer };
enum class Mode { Aggregation, Consensus };

inline std::string_view to_string(Scheme s) { return s == Scheme::TestChannel ? "testchannel" : "dither"; }
inline std::string_view to_string(Mode m) { return m == Mode::Aggregation ? "agg" : "consensus"; }

struct SimulationConfig {
  std::size_t blocklength = 1000;
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  Scheme scheme = Scheme::TestChannel;
  Mode mode = Mode::Aggregation;

  void validate() const {
    if (blocklength < 1) throw InputError("blocklength must be >= 1");
    if (trials < 1) throw InputError("trials must be >= 1");
  }
};

inline constexpr std::size_t kMinCiSamples = 1000;
inline constexpr double kCiMultiplier = 3.0;
inline constexpr double kVerdictRelativeHalfwidth = 0.1;
inline constexpr double kDitherRangeSigmas = 4.0;

// Across-trial mean with a 3-standard-error half-width (infinite for one trial).
struct MeanEstimate {
  double mean = 0.0;
  double ci_halfwidth = std::numeric_limits<double>::infinity();
};

inline MeanEstimate summarize(const std::vector<double>& per_trial) {
  MeanEstimate out;
  const auto n = static_cast<double>(per_trial.size());
  for (double v : per_trial) out.mean += v;
  out.mean /= n;
  if (per_trial.size() > 1) {
    double ss = 0.0;
    for (double v : per_trial) ss += (v - out.mean) * (v - out.mean);
    out.ci_halfwidth = kCiMultiplier * std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

// Pass/fail against a reference, reported only when the interval is tight
// (half-width below 10% of the reference).
inline std::optional<bool> matches_reference(const MeanEstimate& m, double reference) {
  if (!(m.ci_halfwidth < kVerdictRelativeHalfwidth * std::abs(reference))) return std::nullopt;
  return std::abs(m.mean - reference) <= m.ci_halfwidth;
}

struct SimulatedLink {
  DirectedEdge link;
  MeanEstimate incremental;
  MeanEstimate estimate_variance;
  double reference_inc = 0.0;
  double reference_estimate_variance = 0.0;
  double rate_bits = 0.0;
  std::uint64_t saturations = 0;
};

struct SimulationResult {
  Mode mode = Mode::Aggregation;
  Scheme scheme = Scheme::TestChannel;
  std::size_t blocklength = 0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  // Aggregation: distortion at the sink. Consensus: sum over all nodes.
  MeanEstimate total;
  double reference_total = 0.0;
  std::map<NodeId, MeanEstimate> per_node;  // consensus only
  std::map<NodeId, double> reference_per_node;
  std::vector<SimulatedLink> links;
  double sum_rate_bits = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

struct ChannelPlan {
  DirectedEdge link;
  bool dither = false;
  double gain = 0.0;      // test channel
  double noise_sd = 0.0;  // test channel
  std::uint64_t levels = 0;  // dither
  double range = 0.0;        // dither clipping half-range
  double step = 0.0;         // dither cell width
  double reference_inc = 0.0;
  double reference_estimate_variance = 0.0;
  double rate_bits = 0.0;
  double error_variance = 0.0;  // var(r - y_S), dither reference
};

inline std::vector<DirectedEdge> aggregation_edges(const TreeNetwork& net) {
  std::vector<DirectedEdge> out;
  for (NodeId v : net.postorder()) {
    if (v != net.root()) out.push_back({v, *net.parent(v)});
  }
  return out;
}

inline SimulationResult run_scheme(const TreeNetwork& net, Mode mode, const std::vector<ChannelPlan>& plans,
                                   const SimulationConfig& cfg) {
  cfg.validate();
  const std::size_t N = cfg.blocklength;
  const std::size_t E = plans.size();
  std::map<DirectedEdge, std::size_t> index;
  for (std::size_t i = 0; i < E; ++i) index[plans[i].link] = i;

  std::vector<std::vector<double>> inc_trials(E), var_trials(E);
  std::vector<std::uint64_t> saturations(E, 0);
  std::vector<double> total_trials;
  std::map<NodeId, std::vector<double>> node_trials;

  std::vector<std::vector<double>> x(net.size()), r(E);
  std::vector<double> s(N), y(N), est(N);

  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    std::fill(y.begin(), y.end(), 0.0);
    for (NodeId v = 0; v < net.size(); ++v) {
      if (!net.has_weight(v)) {
        x[v].clear();
        continue;
      }
      CounterStream stream(cfg.seed, v, trial, 0);
      x[v].resize(N);
      for (std::size_t t = 0; t < N; ++t) {
        x[v][t] = stream.normal();
        y[t] += net.weight(v) * x[v][t];
      }
    }

    for (std::size_t i = 0; i < E; ++i) {
      const auto& p = plans[i];
      const NodeId from = p.link.from;
      if (net.has_weight(from)) {
        for (std::size_t t = 0; t < N; ++t) s[t] = net.weight(from) * x[from][t];
      } else {
        std::fill(s.begin(), s.end(), 0.0);
      }
      for (NodeId k : net.neighbors(from)) {
        if (k == p.link.to) continue;
        auto it = index.find({k, from});
        if (it == index.end()) continue;
        const auto& incoming = r[it->second];
        for (std::size_t t = 0; t < N; ++t) s[t] += incoming[t];
      }

      CounterStream stream(cfg.seed, from, trial, 1 + p.link.to);
      auto& out = r[i];
      out.resize(N);
      if (!p.dither) {
        for (std::size_t t = 0; t < N; ++t) out[t] = p.gain * s[t] + p.noise_sd * stream.normal();
      } else if (p.levels <= 1) {
        std::fill(out.begin(), out.end(), 0.0);
      } else {
        const double top = static_cast<double>(p.levels - 1);
        for (std::size_t t = 0; t < N; ++t) {
          const double u = (stream.uniform() - 0.5) * p.step;
          double cell = std::floor((s[t] + u + p.range) / p.step);
          if (cell < 0.0 || cell > top) {
            ++saturations[i];
            cell = std::clamp(cell, 0.0, top);
          }
          out[t] = -p.range + (cell + 0.5) * p.step - u;
        }
      }

      double sq_err = 0.0, sq = 0.0;
      for (std::size_t t = 0; t < N; ++t) {
        sq_err += (s[t] - out[t]) * (s[t] - out[t]);
        sq += s[t] * s[t];
      }
      inc_trials[i].push_back(sq_err / static_cast<double>(N));
      var_trials[i].push_back(sq / static_cast<double>(N));
    }

    auto estimate_error = [&](NodeId b) {
      if (net.has_weight(b)) {
        for (std::size_t t = 0; t < N; ++t) est[t] = net.weight(b) * x[b][t];
      } else {
        std::fill(est.begin(), est.end(), 0.0);
      }
      for (NodeId k : net.neighbors(b)) {
        auto it = index.find({k, b});
        if (it == index.end()) continue;
        for (std::size_t t = 0; t < N; ++t) est[t] += r[it->second][t];
      }
      double sq = 0.0;
      for (std::size_t t = 0; t < N; ++t) sq += (est[t] - y[t]) * (est[t] - y[t]);
      return sq / static_cast<double>(N);
    };

    if (mode == Mode::Aggregation) {
      total_trials.push_back(estimate_error(net.root()));
    } else {
      double sum = 0.0;
      for (NodeId b = 0; b < net.size(); ++b) {
        const double err = estimate_error(b);
        node_trials[b].push_back(err);
        sum += err;
      }
      total_trials.push_back(sum);
    }
  }

  SimulationResult res;
  res.mode = mode;
  res.scheme = cfg.scheme;
  res.blocklength = N;
  res.trials = cfg.trials;
  res.seed = cfg.seed;
  res.total = summarize(total_trials);
  for (const auto& [b, values] : node_trials) res.per_node[b] = summarize(values);
  std::uint64_t total_saturations = 0;
  for (std::size_t i = 0; i < E; ++i) {
    SimulatedLink l;
    l.link = plans[i].link;
    l.incremental = summarize(inc_trials[i]);
    l.estimate_variance = summarize(var_trials[i]);
    l.reference_inc = plans[i].reference_inc;
    l.reference_estimate_variance = plans[i].reference_estimate_variance;
    l.rate_bits = plans[i].rate_bits;
    l.saturations = saturations[i];
    total_saturations += saturations[i];
    res.sum_rate_bits += l.rate_bits;
    res.links.push_back(l);
  }
  std::sort(res.links.begin(), res.links.end(),
            [](const SimulatedLink& a, const SimulatedLink& b) { return a.link < b.link; });
  if (N * cfg.trials < kMinCiSamples) {
    res.warnings.push_back("fewer than " + std::to_string(kMinCiSamples) + " samples; confidence intervals are unreliable");
  }
  if (total_saturations > 0) {
    res.warnings.push_back("quantizer overload in " + std::to_string(total_saturations) +
                           " samples; references assume no overload");
  }
  return res;
}

inline ChannelPlan test_channel_plan(const DirectedEdge& e, double estimate_variance, double d) {
  const auto law = test_channel_law(estimate_variance, d);
  ChannelPlan p;
  p.link = e;
  p.gain = law.gain;
  p.noise_sd = std::sqrt(law.conditional_variance);
  p.reference_inc = d;
  p.reference_estimate_variance = estimate_variance;
  p.rate_bits = test_channel_rate_bits(estimate_variance, d);
  return p;
}

}  // namespace detail

// Test-channel scheme toward the sink; d is the per-link distortion parameter.
inline SimulationResult simulate_aggregation(const TreeNetwork& net, const std::map<NodeId, double>& d,
                                             const SimulationConfig& cfg) {
  for (const auto& [id, value] : d) {
    if (!net.contains(id) || id == net.root()) throw InputError("node " + std::to_string(id) + ": not a link source");
  }
  const auto sigma_hat = estimate_variances(net, d);
  std::vector<detail::ChannelPlan> plans;
  for (const auto& e : detail::aggregation_edges(net)) {
    plans.push_back(detail::test_channel_plan(e, sigma_hat.at(e.from), d.at(e.from)));
  }
  SimulationConfig c = cfg;
  c.scheme = Scheme::TestChannel;
  auto res = detail::run_scheme(net, Mode::Aggregation, plans, c);
  for (const auto& [v, value] : d) res.reference_total += value;
  return res;
}

// Test-channel scheme on every directed edge; every node estimates y.
inline SimulationResult simulate_consensus(const TreeNetwork& net, const std::map<DirectedEdge, double>& d,
                                           const SimulationConfig& cfg) {
  require_consensus_network(net);
  for (const auto& [e, value] : d) require_edge(net, e);
  const auto sigma_hat = consensus_estimate_variances(net, d);
  const auto profile = consensus_derive(net, d);
  std::vector<detail::ChannelPlan> plans;
  for (const auto& e : edges_by_dependency(net)) {
    plans.push_back(detail::test_channel_plan(e, sigma_hat.at(e), d.at(e)));
  }
  SimulationConfig c = cfg;
  c.scheme = Scheme::TestChannel;
  auto res = detail::run_scheme(net, Mode::Consensus, plans, c);
  res.reference_per_node = profile.per_root;
  res.reference_total = profile.total;
  return res;
}

// Test-channel distortions that spend exactly the given per-link rates:
// d = sigma-hat^2 * 2^{-2R}, propagated through the estimate-variance recursion.
inline std::map<DirectedEdge, double> matched_test_channel_distortions(const TreeNetwork& net,
                                                                       const RateAllocation& rates) {
  const bool consensus = std::holds_alternative<ConsensusProfile>(rates.profile);
  std::map<DirectedEdge, double> rate;
  for (const auto& l : rates.links) rate[l.link] = l.rate_bits;
  const auto order = consensus ? edges_by_dependency(net) : detail::aggregation_edges(net);
  std::map<DirectedEdge, double> var, d;
  for (const auto& e : order) {
    double s = net.weight(e.from) * net.weight(e.from);
    for (NodeId k : net.neighbors(e.from)) {
      if (k != e.to && var.count({k, e.from})) s += var.at({k, e.from}) - d.at({k, e.from});
    }
    var[e] = s;
    d[e] = s * std::exp2(-2.0 * rate.at(e));
  }
  return d;
}

// Subtractive-dither uniform quantizer on each link, floor(2^R) cells over
// +-4 sigma-hat. A link with a single cell sends nothing (description 0).
inline SimulationResult simulate_dithered_baseline(const TreeNetwork& net, const RateAllocation& rates,
                                                   const SimulationConfig& cfg) {
  const bool consensus = std::holds_alternative<ConsensusProfile>(rates.profile);
  if (consensus) require_consensus_network(net);
  std::map<DirectedEdge, double> rate;
  for (const auto& l : rates.links) {
    require_edge(net, l.link);
    if (!std::isfinite(l.rate_bits) || l.rate_bits < 0.0) {
      throw InputError("link " + to_string(l.link) + ": rate must be non-negative");
    }
    rate[l.link] = l.rate_bits;
  }
  const auto order = consensus ? edges_by_dependency(net) : detail::aggregation_edges(net);

  std::map<DirectedEdge, std::size_t> index;
  std::vector<detail::ChannelPlan> plans;
  std::map<DirectedEdge, double> description_var;
  for (const auto& e : order) {
    auto it = rate.find(e);
    if (it == rate.end()) throw InputError("link " + to_string(e) + ": missing rate");
    double var_s = net.weight(e.from) * net.weight(e.from);
    double err_in = 0.0;
    for (NodeId k : net.neighbors(e.from)) {
      if (k == e.to || !index.count({k, e.from})) continue;
      var_s += description_var.at({k, e.from});
      err_in += plans[index.at({k, e.from})].error_variance;
    }
    detail::ChannelPlan p;
    p.link = e;
    p.dither = true;
    p.rate_bits = it->second;
    p.levels = static_cast<std::uint64_t>(std::floor(std::exp2(std::min(it->second, 52.0))));
    p.range = kDitherRangeSigmas * std::sqrt(var_s);
    p.step = p.levels > 0 ? 2.0 * p.range / static_cast<double>(p.levels) : 0.0;
    p.reference_estimate_variance = var_s;
    if (p.levels <= 1) {
      p.reference_inc = var_s;
      p.error_variance = oriented_subtree_stats(net, e).variance;
      description_var[e] = 0.0;
    } else {
      const double cell_noise = p.step * p.step / 12.0;
      p.reference_inc = cell_noise;
      p.error_variance = err_in + cell_noise;
      description_var[e] = var_s + cell_noise;
    }
    index[e] = plans.size();
    plans.push_back(p);
  }

  SimulationConfig c = cfg;
  c.scheme = Scheme::DitheredQuantizer;
  auto res = detail::run_scheme(net, consensus ? Mode::Consensus : Mode::Aggregation, plans, c);
  auto sink_error = [&](NodeId b) {
    double v = 0.0;
    for (NodeId k : net.neighbors(b)) {
      if (index.count({k, b})) v += plans[index.at({k, b})].error_variance;
    }
    return v;
  };
  if (consensus) {
    for (NodeId b = 0; b < net.size(); ++b) {
      res.reference_per_node[b] = sink_error(b);
      res.reference_total += res.reference_per_node[b];
    }
  } else {
    res.reference_total = sink_error(net.root());
  }
  return res;
}

// ---------------------------------------------------------------------------
// Analytic linear-Gaussian model
// ---------------------------------------------------------------------------

inline constexpr std::size_t kAnalyticMaxNodes = 500;
inline constexpr double kAnalyticTolerance = 1e-10;

struct LinkDistortions {
  double tx = 0.0;
  double rx = 0.0;
  double inc = 0.0;
  double d = 0.0;
};

struct AnalyticModel {
  Mode mode = Mode::Aggregation;
  // Stacked sources X, descriptions V and estimates U.
  Eigen::MatrixXd joint_covariance;
  std::vector<std::string> variables;
  std::map<DirectedEdge, LinkDistortions> links;
  // Aggregation: the sink only. Consensus: every node.
  std::map<NodeId, double> per_root;
  double total = 0.0;
  double max_accumulation_residual = 0.0;  // max |rx - tx - inc| / rx
  double max_orthogonality = 0.0;          // max |cov| between incremental errors
  double max_gain_deviation = 0.0;         // receiver gain row vs description indicator
  double min_eigenvalue = 0.0;
};

namespace detail {

// Scalars as coefficient vectors over independent zero-mean base variables.
class LinearGaussian {
 public:
  std::size_t add_base(double variance) {
    variances_.push_back(variance);
    return variances_.size() - 1;
  }
  std::size_t base_count() const { return variances_.size(); }

  Eigen::VectorXd zero() const { return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(variances_.size())); }
  Eigen::VectorXd unit(std::size_t i) const {
    Eigen::VectorXd v = zero();
    v[static_cast<Eigen::Index>(i)] = 1.0;
    return v;
  }

  double cov(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    double s = 0.0;
    for (std::size_t i = 0; i < variances_.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      s += a[k] * variances_[i] * b[k];
    }
    return s;
  }

  struct Conditioned {
    Eigen::VectorXd estimate;  // coefficients of E[target | obs]
    Eigen::VectorXd gain;      // weights on the observations
    double error_variance = 0.0;
    bool regular = true;       // observation covariance nonsingular
  };

  Conditioned condition(const Eigen::VectorXd& target, const std::vector<Eigen::VectorXd>& obs) const {
    const auto k = static_cast<Eigen::Index>(obs.size());
    Eigen::MatrixXd soo(k, k);
    Eigen::VectorXd soy(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      soy[i] = cov(obs[static_cast<std::size_t>(i)], target);
      for (Eigen::Index j = 0; j < k; ++j) soo(i, j) = cov(obs[static_cast<std::size_t>(i)], obs[static_cast<std::size_t>(j)]);
    }
    Conditioned c;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(soo);
    cod.setThreshold(1e-13);
    c.regular = cod.rank() == k;
    c.gain = k > 0 ? Eigen::VectorXd(cod.solve(soy)) : Eigen::VectorXd();
    c.estimate = zero();
    for (Eigen::Index i = 0; i < k; ++i) c.estimate += c.gain[i] * obs[static_cast<std::size_t>(i)];
    const Eigen::VectorXd err = target - c.estimate;
    c.error_variance = cov(err, err);
    return c;
  }

 private:
  std::vector<double> variances_;
};

inline bool close_rel(double value, double expected, double scale) {
  return std::abs(value - expected) <= kAnalyticTolerance * std::max(std::abs(expected), scale);
}

inline void require_close(double value, double expected, double scale, const std::string& what) {
  if (!close_rel(value, expected, scale)) {
    throw ConsistencyError(what + ": got " + std::to_string(value) + ", expected " + std::to_string(expected));
  }
}

struct EdgeVariables {
  Eigen::VectorXd u, v;
};

inline void finish_model(AnalyticModel& m, const LinearGaussian& lg, const std::vector<std::pair<std::string, Eigen::VectorXd>>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  m.joint_covariance.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.variables.push_back(rows[static_cast<std::size_t>(i)].first);
    for (Eigen::Index j = 0; j < n; ++j) {
      m.joint_covariance(i, j) = lg.cov(rows[static_cast<std::size_t>(i)].second, rows[static_cast<std::size_t>(j)].second);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.joint_covariance, Eigen::EigenvaluesOnly);
  m.min_eigenvalue = eig.eigenvalues().minCoeff();
  const double scale = std::max(1.0, m.joint_covariance.cwiseAbs().maxCoeff());
  if (m.min_eigenvalue < -kAnalyticTolerance * scale) {
    throw ConsistencyError("analytic model: joint covariance is not PSD (min eigenvalue " + std::to_string(m.min_eigenvalue) + ")");
  }
}

inline void require_analytic_size(const TreeNetwork& net) {
  if (net.size() > kAnalyticMaxNodes) {
    throw InputError("analytic model supports at most " + std::to_string(kAnalyticMaxNodes) + " nodes");
  }
}

}  // namespace detail

// Aggregation: builds the exact test-channel model for per-link parameters d
// and checks distortion accumulation, orthogonality of incremental errors and
// that the receiver's MMSE estimate of each partial sum is the description.
inline AnalyticModel analytic_mmse_check(const TreeNetwork& net, const std::map<NodeId, double>& d) {
  detail::require_analytic_size(net);
  for (const auto& [id, value] : d) {
    if (!net.contains(id) || id == net.root()) throw InputError("node " + std::to_string(id) + ": not a link source");
  }
  const auto sigma_hat = estimate_variances(net, d);
  const auto expected = derive_distortions(net, d);

  detail::LinearGaussian lg;
  std::vector<std::optional<std::size_t>> x_index(net.size());
  for (NodeId v = 0; v < net.size(); ++v) {
    if (net.has_weight(v)) x_index[v] = lg.add_base(1.0);
  }
  std::map<NodeId, TestChannelLaw> law;
  std::map<NodeId, std::size_t> noise_index;
  for (NodeId v : net.links()) {
    law[v] = test_channel_law(sigma_hat.at(v), d.at(v));
    noise_index[v] = lg.add_base(law[v].conditional_variance);
  }

  auto source_term = [&](NodeId v) {
    return x_index[v] ? Eigen::VectorXd(net.weight(v) * lg.unit(*x_index[v])) : lg.zero();
  };
  std::map<NodeId, detail::EdgeVariables> var;
  for (NodeId v : net.postorder()) {
    if (v == net.root()) continue;
    Eigen::VectorXd u = source_term(v);
    for (NodeId c : net.children(v)) u += var.at(c).v;
    Eigen::VectorXd desc = law[v].gain * u + lg.unit(noise_index[v]);
    var[v] = {u, desc};
  }
  auto observations = [&](NodeId b, std::size_t* description_slot = nullptr, NodeId of = 0) {
    std::vector<Eigen::VectorXd> obs;
    if (x_index[b]) obs.push_back(lg.unit(*x_index[b]));
    for (NodeId c : net.children(b)) {
      if (description_slot && c == of) *description_slot = obs.size();
      obs.push_back(var.at(c).v);
    }
    return obs;
  };
  auto partial_sum = [&](const std::vector<NodeId>& members) {
    Eigen::VectorXd y = lg.zero();
    for (NodeId m : members) y += source_term(m);
    return y;
  };

  AnalyticModel m;
  m.mode = Mode::Aggregation;
  std::vector<Eigen::VectorXd> increments;
  for (NodeId v : net.links()) {
    const NodeId p = *net.parent(v);
    const Eigen::VectorXd y = partial_sum(subtree_stats(net, v).members);
    const auto at_tx = lg.condition(y, observations(v));
    std::size_t slot = 0;
    const auto at_rx = lg.condition(y, observations(p, &slot, v));
    const Eigen::VectorXd incr = at_tx.estimate - at_rx.estimate;
    LinkDistortions ld{at_tx.error_variance, at_rx.error_variance, lg.cov(incr, incr), d.at(v)};
    m.links[{v, p}] = ld;
    increments.push_back(incr);

    m.max_accumulation_residual = std::max(m.max_accumulation_residual, std::abs(ld.rx - ld.tx - ld.inc) / ld.rx);
    if (at_rx.regular) {
      for (Eigen::Index i = 0; i < at_rx.gain.size(); ++i) {
        const double indicator = static_cast<std::size_t>(i) == slot ? 1.0 : 0.0;
        m.max_gain_deviation = std::max(m.max_gain_deviation, std::abs(at_rx.gain[i] - indicator));
      }
    }
    const std::string where = "link " + std::to_string(v);
    detail::require_close(ld.inc, ld.d, 0.0, where + " incremental distortion vs d");
    detail::require_close(ld.tx, expected.tx.at(v), ld.rx, where + " transmitter distortion vs downstream sum");
    detail::require_close(ld.rx, expected.rx.at(v), 0.0, where + " receiver distortion");
  }
  for (std::size_t i = 0; i < increments.size(); ++i) {
    for (std::size_t j = i + 1; j < increments.size(); ++j) {
      m.max_orthogonality = std::max(m.max_orthogonality, std::abs(lg.cov(increments[i], increments[j])));
    }
  }

  std::vector<NodeId> everyone(net.size());
  for (NodeId v = 0; v < net.size(); ++v) everyone[v] = v;
  m.total = lg.condition(partial_sum(everyone), observations(net.root())).error_variance;
  m.per_root[net.root()] = m.total;
  detail::require_close(m.total, expected.total, 0.0, "sink distortion vs sum of incremental distortions");
  if (m.max_accumulation_residual > kAnalyticTolerance) throw ConsistencyError("Pythagoras identity violated");
  if (m.max_orthogonality > kAnalyticTolerance) throw ConsistencyError("incremental errors are correlated");
  if (m.max_gain_deviation > kAnalyticTolerance) throw ConsistencyError("receiver estimate differs from the description");

  std::vector<std::pair<std::string, Eigen::VectorXd>> rows;
  for (NodeId v = 0; v < net.size(); ++v) {
    if (x_index[v]) rows.emplace_back("X" + std::to_string(v), lg.unit(*x_index[v]));
  }
  for (NodeId v : net.links()) rows.emplace_back("V" + std::to_string(v), var.at(v).v);
  for (NodeId v : net.links()) rows.emplace_back("U" + std::to_string(v), var.at(v).u);
  detail::finish_model(m, lg, rows);
  return m;
}

// Consensus: the same checks on every directed edge, with each node's final
// estimate compared against the sum over its directed tree. Orthogonality is
// checked among the edges of each directed tree.
inline AnalyticModel analytic_mmse_check(const TreeNetwork& net, const std::map<DirectedEdge, double>& d) {
  detail::require_analytic_size(net);
  require_consensus_network(net);
  for (const auto& [e, value] : d) require_edge(net, e);
  const auto sigma_hat = consensus_estimate_variances(net, d);
  const auto expected = consensus_derive(net, d);

  detail::LinearGaussian lg;
  std::vector<std::size_t> x_index(net.size());
  for (NodeId v = 0; v < net.size(); ++v) x_index[v] = lg.add_base(1.0);
  std::map<DirectedEdge, TestChannelLaw> law;
  std::map<DirectedEdge, std::size_t> noise_index;
  for (const auto& e : all_directed_edges(net)) {
    law[e] = test_channel_law(sigma_hat.at(e), d.at(e));
    noise_index[e] = lg.add_base(law[e].conditional_variance);
  }
  auto source_term = [&](NodeId v) { return Eigen::VectorXd(net.weight(v) * lg.unit(x_index[v])); };

  std::map<DirectedEdge, detail::EdgeVariables> var;
  for (const auto& e : edges_by_dependency(net)) {
    Eigen::VectorXd u = source_term(e.from);
    for (NodeId k : net.neighbors(e.from)) {
      if (k != e.to) u += var.at({k, e.from}).v;
    }
    Eigen::VectorXd desc = law[e].gain * u + lg.unit(noise_index[e]);
    var[e] = {u, desc};
  }
  auto observations = [&](NodeId b, std::size_t* description_slot = nullptr, NodeId of = 0) {
    std::vector<Eigen::VectorXd> obs{lg.unit(x_index[b])};
    for (NodeId k : net.neighbors(b)) {
      if (description_slot && k == of) *description_slot = obs.size();
      obs.push_back(var.at({k, b}).v);
    }
    return obs;
  };
  auto partial_sum = [&](const std::vector<NodeId>& members) {
    Eigen::VectorXd y = lg.zero();
    for (NodeId m : members) y += source_term(m);
    return y;
  };

  AnalyticModel m;
  m.mode = Mode::Consensus;
  std::map<DirectedEdge, Eigen::VectorXd> increments;
  for (const auto& e : all_directed_edges(net)) {
    const Eigen::VectorXd y = partial_sum(oriented_subtree_stats(net, e).members);
    const auto at_tx = lg.condition(y, observations(e.from));
    std::size_t slot = 0;
    const auto at_rx = lg.condition(y, observations(e.to, &slot, e.from));
    const Eigen::VectorXd incr = at_tx.estimate - at_rx.estimate;
    LinkDistortions ld{at_tx.error_variance, at_rx.error_variance, lg.cov(incr, incr), d.at(e)};
    m.links[e] = ld;
    increments[e] = incr;

    m.max_accumulation_residual = std::max(m.max_accumulation_residual, std::abs(ld.rx - ld.tx - ld.inc) / ld.rx);
    if (at_rx.regular) {
      for (Eigen::Index i = 0; i < at_rx.gain.size(); ++i) {
        const double indicator = static_cast<std::size_t>(i) == slot ? 1.0 : 0.0;
        m.max_gain_deviation = std::max(m.max_gain_deviation, std::abs(at_rx.gain[i] - indicator));
      }
    }
    const std::string where = "edge " + to_string(e);
    detail::require_close(ld.inc, ld.d, 0.0, where + " incremental distortion vs d");
    detail::require_close(ld.tx, expected.tx.at(e), ld.rx, where + " transmitter distortion vs upstream sum");
    detail::require_close(ld.rx, expected.rx.at(e), 0.0, where + " receiver distortion");
  }

  std::vector<NodeId> everyone(net.size());
  for (NodeId v = 0; v < net.size(); ++v) everyone[v] = v;
  const Eigen::VectorXd y = partial_sum(everyone);
  for (NodeId k = 0; k < net.size(); ++k) {
    const double dk = lg.condition(y, observations(k)).error_variance;
    m.per_root[k] = dk;
    m.total += dk;
    detail::require_close(dk, expected.per_root.at(k), 0.0, "node " + std::to_string(k) + " distortion vs directed-tree sum");
    const auto tree = directed_tree(net, k);
    for (std::size_t i = 0; i < tree.size(); ++i) {
      for (std::size_t j = i + 1; j < tree.size(); ++j) {
        m.max_orthogonality =
            std::max(m.max_orthogonality, std::abs(lg.cov(increments.at(tree[i]), increments.at(tree[j]))));
      }
    }
  }
  if (m.max_accumulation_residual > kAnalyticTolerance) throw ConsistencyError("Pythagoras identity violated");
  if (m.max_orthogonality > kAnalyticTolerance) throw ConsistencyError("incremental errors are correlated");
  if (m.max_gain_deviation > kAnalyticTolerance) throw ConsistencyError("receiver estimate differs from the description");

  std::vector<std::pair<std::string, Eigen::VectorXd>> rows;
  for (NodeId v = 0; v < net.size(); ++v) rows.emplace_back("X" + std::to_string(v), lg.unit(x_index[v]));
  for (const auto& [e, vars] : var) rows.emplace_back("V" + to_string(e), vars.v);
  for (const auto& [e, vars] : var) rows.emplace_back("U" + to_string(e), vars.u);
  detail::finish_model(m, lg, rows);
  return m;
}

}  // namespace distacc
