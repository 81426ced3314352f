// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "distacc/allocation.hpp"
#include "distacc/bounds.hpp"
#include "distacc/infomeasures.hpp"
#include "distacc/simulator.hpp"
#include "test_support.hpp"

#ifndef DISTACC_CLI_PATH
#error "DISTACC_CLI_PATH must point at the command-line binary"
#endif

using namespace distacc;
using namespace distacc::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// Postorder fill so each d stays strictly inside its test-channel range.
std::map<NodeId, double> random_feasible_d(const TreeNetwork& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> frac(0.001, 0.9);
  std::map<NodeId, double> d, sigma_hat;
  for (NodeId v : net.postorder()) {
    if (v == net.root()) continue;
    double s = net.weight(v) * net.weight(v);
    for (NodeId c : net.children(v)) s += sigma_hat.at(c) - d.at(c);
    sigma_hat[v] = s;
    d[v] = frac(rng) * s;
  }
  return d;
}

double min_subtree_variance(const TreeNetwork& net) {
  double m = std::numeric_limits<double>::infinity();
  for (NodeId v : net.links()) m = std::min(m, net.subtree_variance(v));
  return m;
}

Outcome ac1() {
  std::mt19937_64 rng(1001);
  double worst_link = 0.0, worst_total = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto net = random_aggregation_tree(rng, 1 + rep % 12);
    const auto d = random_feasible_d(net, rng);
    const auto m = analytic_mmse_check(net, d);
    double sum_inc = 0.0;
    for (const auto& [e, l] : m.links) {
      worst_link = std::max(worst_link, std::abs(l.rx - l.tx - l.inc) / l.rx);
      sum_inc += l.inc;
    }
    worst_total = std::max(worst_total, std::abs(m.total - sum_inc) / m.total);
  }
  return {worst_link <= 1e-10 && worst_total <= 1e-10,
          "max |rx-tx-inc|/rx = " + fmt(worst_link) + ", max |D0-sum inc|/D0 = " + fmt(worst_total)};
}

Outcome ac2() {
  std::mt19937_64 rng(1002);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto net = random_aggregation_tree(rng, 1 + rep % 12);
    const double n = static_cast<double>(net.link_count());
    const double D = 0.5 * n * min_subtree_variance(net) * std::pow(10.0, -(rep % 6));
    const auto a = allocate_equal_incremental(net, D);
    double log_prod = 0.0;
    for (NodeId v : net.links()) log_prod += std::log2(net.subtree_variance(v));
    const double closed = 0.5 * (log_prod - n * std::log2(D / n));
    worst = std::max({worst, std::abs(a.sum_rate_bits - closed), std::abs(a.sum_rate_bits - inner_bound_minimized(net, D))});
  }
  return {worst <= 1e-9, "max |sum rate - closed form| = " + fmt(worst) + " bits"};
}

double line_gap_error(std::size_t n, double D) {
  const std::vector<double> w(n, 1.0);
  const auto net = make_line(n, std::span<const double>(w));
  const auto p = derive_distortions(net, equal_split(net, D));
  return std::abs(gap_report(net, p).delta_r_bits - log2_factorial_half(n));
}

Outcome ac3() {
  bool ok = true;
  double worst = 0.0;
  for (std::size_t n = 2; n <= 8; ++n) {
    const double e2 = line_gap_error(n, 1e-2), e4 = line_gap_error(n, 1e-4), e6 = line_gap_error(n, 1e-6);
    worst = std::max(worst, e6);
    ok = ok && e6 <= 0.05 && e2 > e4 && e4 > e6;
  }
  return {ok, "max |delta_r - 0.5 log2 n!| at D=1e-6: " + fmt(worst) + " bits; error decreasing in D for all n"};
}

Outcome ac4() {
  // Sink plus five weighted nodes.
  const auto net = TreeNetwork::build(0, {{1, 1.0, 0}, {2, 0.7, 1}, {3, 1.4, 1}, {4, 2.0, 0}, {5, 0.5, 4}});
  auto half_psi_sum = [&](double D) {
    double s = 0.0;
    for (NodeId v : net.links()) s += psi_oracle(net.weight(v), net.subtree_variance(v), D);
    return 0.5 * s;
  };
  const double cap = half_psi_sum(1e-2) / std::sqrt(1e-2);
  double limit = 0.0;
  for (NodeId v : net.links()) {
    const double var = net.subtree_variance(v);
    limit += 0.5 * std::numbers::log2e / var * std::sqrt(2.0 * var);
  }
  bool ok = true;
  double prev = std::numeric_limits<double>::infinity(), last = 0.0;
  for (int k = 0; k <= 24; ++k) {
    const double D = std::pow(10.0, -2.0 - 0.25 * k);
    const double ratio = (inner_bound_minimized(net, D) - outer_bound_closed_form(net, D)) / std::sqrt(D);
    ok = ok && ratio <= cap * (1 + 1e-12) && ratio <= prev * (1 + 1e-12);
    prev = ratio;
    last = ratio;
  }
  ok = ok && std::abs(last - limit) <= 1e-3 * limit;
  return {ok, "gap/sqrt(D) <= " + fmt(cap) + " on [1e-8,1e-2], non-increasing, -> " + fmt(last) + " (limit " + fmt(limit) + ")"};
}

Outcome ac5() {
  std::mt19937_64 rng(1005);
  double worst = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 100; ++rep) {
    const auto net = random_aggregation_tree(rng, 1 + rep % 12);
    const auto p = derive_distortions(net, equal_split(net, 1e-3 * min_subtree_variance(net)));
    worst = std::min(worst, gap_report(net, p).delta_r_bits);
  }
  return {worst >= 0.0, "min delta_r = " + fmt(worst) + " bits"};
}

TreeNetwork seven_node_tree() {
  return TreeNetwork::build(0, {{1, 1.0, 0}, {2, 0.8, 0}, {3, 1.5, 1}, {4, 0.6, 1}, {5, 1.2, 2}, {6, 2.0, 3}});
}

Outcome ac6() {
  const auto net = seven_node_tree();
  SimulationConfig cfg;
  cfg.blocklength = 1000;
  cfg.trials = 1000;
  cfg.seed = 2024;
  const auto r = simulate_aggregation(net, equal_split(net, 0.07), cfg);
  const bool inside = std::abs(r.total.mean - 0.07) <= r.total.ci_halfwidth;
  const double rel = r.total.ci_halfwidth / 0.07;
  return {inside && rel < 0.01, "empirical " + fmt(r.total.mean) + " +- " + fmt(r.total.ci_halfwidth) + " (" +
                                    fmt(100 * rel) + "% of 0.07), N*trials = 1e6"};
}

Outcome ac7() {
  std::mt19937_64 rng(1007);
  bool ok = true;
  std::size_t checked = 0;
  const auto net = random_consensus_tree(rng, 6);
  SimulationConfig cfg;
  cfg.blocklength = 1000;
  cfg.trials = 500;
  cfg.seed = 7;
  const auto d = consensus_kkt_split(net, 0.06);
  const auto profile = consensus_derive(net, d);
  const auto r = simulate_consensus(net, d, cfg);
  for (NodeId k = 0; k < net.size(); ++k) {
    const auto& m = r.per_node.at(k);
    ok = ok && std::abs(m.mean - profile.per_root.at(k)) <= m.ci_halfwidth;
    ++checked;
  }
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto t = random_consensus_tree(rng, 2 + rep % 11);
    const double D = std::pow(10.0, -1.0 - rep % 4);
    const auto kkt = allocate_consensus(t, D);
    const auto num = allocate_consensus_numeric(t, D);
    worst = std::max(worst, std::abs(kkt.sum_rate_bits - num.sum_rate_bits));
  }
  ok = ok && worst <= 1e-6;
  return {ok, std::to_string(checked) + " per-node distortions within 3-sigma CI; max |KKT - interior| = " + fmt(worst) + " bits"};
}

Outcome ac8() {
  std::mt19937_64 rng(1008);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> log_t(-3.0, 3.0);
  double worst = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 1 + rep % 3;
    // Rank-deficient factors included: x = y and near-singular joints.
    const int rank = 1 + rep % (2 * n);
    Eigen::MatrixXd a(2 * n, rank);
    for (int i = 0; i < 2 * n; ++i)
      for (int j = 0; j < rank; ++j) a(i, j) = g(rng);
    JointGaussian joint{Eigen::VectorXd(2 * n), a * a.transpose()};
    for (int i = 0; i < 2 * n; ++i) joint.mean(i) = g(rng);
    if (rep % 10 == 0) {
      joint.covariance.bottomRightCorner(n, n) = joint.covariance.topLeftCorner(n, n);
      joint.covariance.topRightCorner(n, n) = joint.covariance.topLeftCorner(n, n);
      joint.covariance.bottomLeftCorner(n, n) = joint.covariance.topLeftCorner(n, n);
      joint.mean.tail(n) = joint.mean.head(n);
    }
    joint.covariance = 0.5 * (joint.covariance + joint.covariance.transpose()).eval();
    worst = std::min(worst, verify_smoothing_inequality(joint, std::pow(10.0, log_t(rng))));
  }
  return {worst >= -1e-9, "min margin over 1000 joints = " + fmt(worst) + " nats"};
}

Outcome ac9() {
  std::mt19937_64 rng(1009);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto net = random_aggregation_tree(rng, 2 + rep % 11);
    worst = std::max(worst, analytic_mmse_check(net, random_feasible_d(net, rng)).max_orthogonality);
  }
  for (int rep = 0; rep < 30; ++rep) {
    const auto net = random_consensus_tree(rng, 3 + rep % 8);
    worst = std::max(worst, analytic_mmse_check(net, consensus_kkt_split(net, 0.01 * (1 + rep % 5))).max_orthogonality);
  }
  return {worst <= 1e-10, "max |cov| between incremental errors = " + fmt(worst)};
}

Outcome ac10() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "distacc_acceptance";
  fs::create_directories(dir);
  std::ofstream(dir / "tree.json") << serialize_tree(seven_node_tree());
  auto run_once = [&](const std::string& name) {
    const auto out = (dir / name).string();
    const std::string cmd = std::string("\"") + DISTACC_CLI_PATH + "\" simulate --tree \"" + (dir / "tree.json").string() +
                            "\" --D 0.07 --N 1000 --trials 200 --seed 99 --out \"" + out + "\"";
    const int status = std::system(cmd.c_str());
    std::ifstream f(out, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return std::pair{status, text};
  };
  const auto [s1, a] = run_once("a.json");
  const auto [s2, b] = run_once("b.json");
  fs::remove_all(dir);
  const bool ok = s1 == 0 && s2 == 0 && !a.empty() && a == b;
  return {ok, "exit codes " + std::to_string(s1) + "/" + std::to_string(s2) + ", " + std::to_string(a.size()) +
                  " bytes, identical = " + (a == b ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 distortion accumulation exact on 200 random trees", ac1},
      {"AC2 equal-split sum rate equals closed form", ac2},
      {"AC3 line-network gap approaches 0.5*log2(n!)", ac3},
      {"AC4 inner-outer gap is O(sqrt(D))", ac4},
      {"AC5 incremental bound dominates cut-set at small D", ac5},
      {"AC6 Monte-Carlo total distortion on 7-node tree", ac6},
      {"AC7 consensus accumulation and KKT vs interior solver", ac7},
      {"AC8 smoothing inequality on 1000 Gaussian pairs", ac8},
      {"AC9 orthogonality of incremental errors", ac9},
      {"AC10 byte-identical simulate output", ac10},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s (%.0f ms): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), ms, o.detail.c_str());
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
