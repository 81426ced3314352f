#pragma once

// Command-line front end. Exit codes: 0 success, 2 input error,
// 3 infeasible parameters, 4 internal-consistency failure.

#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <set>
#include <type_traits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distacc/allocation.hpp"
#include "distacc/bounds.hpp"
#include "distacc/errors.hpp"
#include "distacc/io.hpp"
#include "distacc/network.hpp"
#include "distacc/simulator.hpp"

namespace distacc::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kInfeasible = 3, kInternal = 4 };

struct GapSweepRow {
  std::size_t n = 0;
  double distortion = 0.0;
  double delta_r_bits = 0.0;
  double asymptote_bits = 0.0;
  double difference_bits = 0.0;
};

// Equal-weight line networks with the equal-split profile: the gap between
// the incremental and cut-set bounds next to 0.5*log2(n!). Rows ordered by n,
// then by D in the order given.
inline std::vector<GapSweepRow> gap_sweep(const std::vector<std::size_t>& sizes, const std::vector<double>& distortions) {
  std::vector<GapSweepRow> rows;
  for (std::size_t n : sizes) {
    const std::vector<double> ones(n, 1.0);
    const auto net = make_line(n, std::span<const double>(ones));
    for (double D : distortions) {
      if (!(D > 0.0)) throw InfeasibleError("infeasible distortion " + std::to_string(D));
      const auto profile = derive_distortions(net, equal_split(net, D));
      GapSweepRow row{n, D, gap_report(net, profile).delta_r_bits, line_gap_asymptote(n), 0.0};
      row.difference_bits = row.delta_r_bits - row.asymptote_bits;
      rows.push_back(row);
    }
  }
  return rows;
}

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline double parse_double(const std::string& text, const std::string& flag) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InputError(flag + ": '" + text + "' is not a number");
  }
  if (used != text.size()) throw InputError(flag + ": '" + text + "' is not a number");
  return v;
}

inline std::vector<double> parse_double_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, flag));
  if (out.empty()) throw InputError(flag + ": empty list");
  return out;
}

// "2..8" or "2,3,5".
inline std::vector<std::size_t> parse_size_range(const std::string& text, const std::string& flag) {
  auto to_size = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw InputError(flag + ": '" + text + "' is not a range of positive integers");
    }
    const auto v = static_cast<std::size_t>(std::stoull(s));
    if (v < 1) throw InputError(flag + ": sizes must be >= 1");
    return v;
  };
  std::vector<std::size_t> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto lo = to_size(text.substr(0, dots));
    const auto hi = to_size(text.substr(dots + 2));
    if (hi < lo) throw InputError(flag + ": empty range");
    for (std::size_t n = lo; n <= hi; ++n) out.push_back(n);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(item));
  if (out.empty()) throw InputError(flag + ": empty list");
  return out;
}

struct Options {
  std::string tree;
  std::string D;
  std::string d_per_link;
  std::string mode = "agg";
  std::string scheme = "testchannel";
  std::size_t N = 1000;
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "json";
  std::string method = "equal";
  double tol = 1e-10;
  std::string line_n;
  std::string config;
};

// Simulation settings from a JSON file; flags given on the command line win.
inline void apply_config(Options& o, const CLI::App& sub) {
  if (o.config.empty()) return;
  io::Json doc;
  try {
    doc = io::Json::parse(read_file(o.config));
  } catch (const io::Json::exception& e) {
    throw InputError("malformed config '" + o.config + "': " + e.what());
  }
  if (!doc.is_object()) throw InputError("config must be a JSON object");
  auto given = [&](const char* flag) {
    const auto* opt = sub.get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  };
  auto take = [&](const char* key, const char* flag, auto& target) {
    if (!doc.contains(key) || given(flag)) return;
    try {
      target = doc[key].get<std::decay_t<decltype(target)>>();
    } catch (const io::Json::exception&) {
      throw InputError(std::string("config: bad value for '") + key + "'");
    }
  };
  for (const auto& [key, value] : doc.items()) {
    static const std::set<std::string> known{"blocklength", "trials", "seed", "scheme", "mode", "D"};
    if (!known.count(key)) throw InputError("config: unknown key '" + key + "'");
  }
  if (doc.contains("D") && !given("--D") && !given("--d-per-link")) {
    if (!doc["D"].is_number()) throw InputError("config: bad value for 'D'");
    std::ostringstream ss;
    ss.precision(17);
    ss << doc["D"].get<double>();
    o.D = ss.str();
  }
  take("blocklength", "--N", o.N);
  take("trials", "--trials", o.trials);
  take("seed", "--seed", o.seed);
  take("scheme", "--scheme", o.scheme);
  take("mode", "--mode", o.mode);
}

inline std::optional<double> budget(const Options& o) {
  if (o.D.empty()) return std::nullopt;
  return parse_double(o.D, "--D");
}

inline void require_profile_source(const Options& o) {
  if (o.D.empty() == o.d_per_link.empty()) throw InputError("give exactly one of --D or --d-per-link");
}

inline Mode parse_mode(const std::string& m) {
  if (m == "agg") return Mode::Aggregation;
  if (m == "consensus") return Mode::Consensus;
  throw InputError("--mode must be agg or consensus");
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "testchannel") return Scheme::TestChannel;
  if (s == "dither") return Scheme::DitheredQuantizer;
  throw InputError("--scheme must be testchannel or dither");
}

inline bool want_csv(const Options& o) {
  if (o.format == "csv") return true;
  if (o.format == "json") return false;
  throw InputError("--format must be json or csv");
}

inline std::string bounds_command(const Options& o, const TreeNetwork& net) {
  require_profile_source(o);
  const auto inc = o.d_per_link.empty() ? [&] {
    const double D = *budget(o);
    if (!(D > 0.0)) throw InfeasibleError("infeasible distortion " + o.D);
    return equal_split(net, D);
  }()
                                        : io::parse_link_map(read_file(o.d_per_link));
  const auto report = evaluate_bounds(net, derive_distortions(net, inc));
  return want_csv(o) ? io::to_csv(net, report) : io::dump(io::to_json(net, report));
}

inline std::map<DirectedEdge, double> consensus_profile_input(const Options& o, const TreeNetwork& net) {
  require_profile_source(o);
  if (!o.d_per_link.empty()) return io::parse_edge_map(read_file(o.d_per_link));
  return consensus_kkt_split(net, *budget(o));
}

inline std::string consensus_bounds_command(const Options& o, const TreeNetwork& net) {
  const auto report = evaluate_consensus_bounds(net, consensus_derive(net, consensus_profile_input(o, net)));
  return want_csv(o) ? io::to_csv(report) : io::dump(io::to_json(report));
}

inline std::string allocate_command(const Options& o, const TreeNetwork& net) {
  if (o.D.empty()) throw InputError("--D is required");
  const double D = *budget(o);
  RateAllocation a;
  if (o.method == "equal") {
    a = allocate_equal_incremental(net, D);
  } else if (o.method == "numeric") {
    a = allocate_numeric_penalized(net, D, o.tol);
  } else {
    throw InputError("--method must be equal or numeric");
  }
  if (want_csv(o)) return io::to_csv(a);
  auto j = io::to_json(a);
  j["total_distortion"] = io::number(D);
  return io::dump(j);
}

inline std::string consensus_allocate_command(const Options& o, const TreeNetwork& net) {
  if (o.D.empty()) throw InputError("--D is required");
  const double D = *budget(o);
  const auto kkt = allocate_consensus(net, D);
  if (want_csv(o)) return io::to_csv(kkt);
  const auto numeric = allocate_consensus_numeric(net, D);
  const auto uniform = consensus_uniform_split(net, D);
  auto j = io::to_json(kkt);
  j["total_distortion"] = io::number(D);
  j["comparisons"] = io::Json::array();
  j["comparisons"].push_back(io::to_json(numeric));
  auto u = io::to_json(uniform);
  u["method"] = "uniform-split";
  u["sum_distortion"] = io::number(std::get<ConsensusProfile>(uniform.profile).total);
  j["comparisons"].push_back(u);
  return io::dump(j);
}

inline std::string simulate_command(const Options& o, const TreeNetwork& net, Mode mode) {
  require_profile_source(o);
  SimulationConfig cfg;
  cfg.blocklength = o.N;
  cfg.trials = o.trials;
  cfg.seed = o.seed;
  cfg.mode = mode;
  cfg.scheme = parse_scheme(o.scheme);
  cfg.validate();

  SimulationResult res;
  if (mode == Mode::Aggregation) {
    std::map<NodeId, double> d;
    if (!o.d_per_link.empty()) {
      d = io::parse_link_map(read_file(o.d_per_link));
    } else {
      const double D = *budget(o);
      require_budget(D);
      d = equal_split(net, D);
    }
    if (cfg.scheme == Scheme::TestChannel) {
      res = simulate_aggregation(net, d, cfg);
    } else {
      res = simulate_dithered_baseline(net, rates_for_profile(net, derive_distortions(net, d)), cfg);
    }
  } else {
    const auto d = consensus_profile_input(o, net);
    if (cfg.scheme == Scheme::TestChannel) {
      res = simulate_consensus(net, d, cfg);
    } else {
      res = simulate_dithered_baseline(net, rates_for_profile(net, consensus_derive(net, d)), cfg);
    }
  }
  return want_csv(o) ? io::to_csv(res) : io::dump(io::to_json(res));
}

inline std::string gap_sweep_command(const Options& o) {
  if (o.line_n.empty()) throw InputError("--line-n is required");
  if (o.D.empty()) throw InputError("--D is required");
  const auto rows = gap_sweep(parse_size_range(o.line_n, "--line-n"), parse_double_list(o.D, "--D"));
  const bool csv = o.format != "json";
  if (o.format != "json" && o.format != "csv") throw InputError("--format must be json or csv");
  if (csv) {
    std::string out = "n,D,delta_r,asymptote,delta_minus_asymptote\n";
    for (const auto& r : rows) {
      out += std::to_string(r.n) + "," + io::csv_number(r.distortion) + "," + io::csv_number(r.delta_r_bits) + "," +
             io::csv_number(r.asymptote_bits) + "," + io::csv_number(r.difference_bits) + "\n";
    }
    return out;
  }
  io::Json j = io::Json::array();
  for (const auto& r : rows) {
    j.push_back({{"n", r.n},
                 {"D", io::number(r.distortion)},
                 {"delta_r", io::number(r.delta_r_bits)},
                 {"asymptote", io::number(r.asymptote_bits)},
                 {"delta_minus_asymptote", io::number(r.difference_bits)}});
  }
  return io::dump(j);
}

inline double min_link_variance(const TreeNetwork& net) {
  double m = std::numeric_limits<double>::infinity();
  for (NodeId v : net.links()) m = std::min(m, net.subtree_variance(v));
  return m;
}

// Runs the analytic oracle; any violated identity surfaces as a ConsistencyError.
inline std::string validate_command(const Options& o, const TreeNetwork& net, bool mode_given) {
  io::Json j;
  j["nodes"] = net.size();
  const bool agg = !mode_given || o.mode == "agg";
  const bool consensus = mode_given ? o.mode == "consensus" : net.all_weighted();
  if (mode_given) parse_mode(o.mode);
  if (!o.D.empty() && !o.d_per_link.empty()) throw InputError("give at most one of --D or --d-per-link");
  if (agg) {
    std::map<NodeId, double> d;
    if (!o.d_per_link.empty()) {
      d = io::parse_link_map(read_file(o.d_per_link));
    } else if (!o.D.empty()) {
      const double D = *budget(o);
      require_budget(D);
      d = equal_split(net, D);
    } else {
      d = equal_split(net, 0.01 * min_link_variance(net) * static_cast<double>(net.link_count()));
    }
    j["aggregation"] = io::to_json(analytic_mmse_check(net, d));
  }
  if (consensus) {
    std::map<DirectedEdge, double> d;
    if (!o.d_per_link.empty()) {
      d = io::parse_edge_map(read_file(o.d_per_link));
    } else {
      double D = 0.0;
      if (!o.D.empty()) {
        D = *budget(o);
      } else {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& [e, v] : oriented_variances(net)) m = std::min(m, v);
        D = 0.01 * m;
      }
      d = consensus_kkt_split(net, D);
    }
    j["consensus"] = io::to_json(analytic_mmse_check(net, d));
  }
  j["status"] = "ok";
  return io::dump(j);
}

inline void write_output(const Options& o, const std::string& text, std::ostream& out) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw InputError("cannot write '" + o.out + "'");
  f << text;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  detail::Options o;
  CLI::App app{"Rate/distortion bounds, allocation and simulation for in-network linear computation on trees"};
  app.require_subcommand(1);

  auto add_tree = [&](CLI::App* sub) { sub->add_option("--tree", o.tree, "tree-spec JSON file")->required(); };
  auto add_profile = [&](CLI::App* sub) {
    sub->add_option("--D", o.D, "total distortion budget");
    sub->add_option("--d-per-link", o.d_per_link, "JSON map of per-link distortions");
  };
  auto add_output = [&](CLI::App* sub, const std::string& default_format) {
    o.format = default_format;
    sub->add_option("--out", o.out, "output path (default stdout)");
    sub->add_option("--format", o.format, "json or csv");
  };
  auto add_sim = [&](CLI::App* sub) {
    sub->add_option("--scheme", o.scheme, "testchannel or dither");
    sub->add_option("--N", o.N, "blocklength");
    sub->add_option("--trials", o.trials, "independent trials");
    sub->add_option("--seed", o.seed, "root seed");
    sub->add_option("--config", o.config, "JSON file with blocklength, trials, seed, scheme, mode, D");
  };

  auto* bounds = app.add_subcommand("bounds", "aggregation bounds for a distortion profile");
  add_tree(bounds);
  add_profile(bounds);
  auto* allocate = app.add_subcommand("allocate", "aggregation rate allocation");
  add_tree(allocate);
  add_profile(allocate);
  allocate->add_option("--method", o.method, "equal or numeric");
  allocate->add_option("--tol", o.tol, "numeric allocator tolerance (bits)");
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo simulation");
  add_tree(simulate);
  add_profile(simulate);
  add_sim(simulate);
  auto* mode_opt = simulate->add_option("--mode", o.mode, "agg or consensus");
  auto* sweep = app.add_subcommand("gap-sweep", "incremental vs cut-set gap on line networks");
  sweep->add_option("--line-n", o.line_n, "range a..b or list of line sizes")->required();
  sweep->add_option("--D", o.D, "comma-separated distortions")->required();
  auto* cbounds = app.add_subcommand("consensus-bounds", "consensus bounds");
  add_tree(cbounds);
  add_profile(cbounds);
  auto* callocate = app.add_subcommand("consensus-allocate", "consensus rate allocation");
  add_tree(callocate);
  add_profile(callocate);
  auto* csimulate = app.add_subcommand("consensus-simulate", "consensus Monte-Carlo simulation");
  add_tree(csimulate);
  add_profile(csimulate);
  add_sim(csimulate);
  auto* validate = app.add_subcommand("validate", "run the analytic oracle on a tree");
  add_tree(validate);
  add_profile(validate);
  auto* validate_mode = validate->add_option("--mode", o.mode, "agg or consensus (default: every applicable)");

  for (auto* sub : {bounds, allocate, simulate, cbounds, callocate, csimulate, validate}) add_output(sub, "json");
  add_output(sweep, "csv");
  o.format = "json";

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  if (sweep->parsed() && sweep->count("--format") == 0) o.format = "csv";

  try {
    std::string text;
    if (sweep->parsed()) {
      text = detail::gap_sweep_command(o);
    } else {
      const auto net = parse_tree(detail::read_file(o.tree));
      if (bounds->parsed()) text = detail::bounds_command(o, net);
      else if (allocate->parsed()) text = detail::allocate_command(o, net);
      else if (simulate->parsed()) {
        detail::apply_config(o, *simulate);
        text = detail::simulate_command(o, net, detail::parse_mode(o.mode));
      } else if (cbounds->parsed()) text = detail::consensus_bounds_command(o, net);
      else if (callocate->parsed()) text = detail::consensus_allocate_command(o, net);
      else if (csimulate->parsed()) {
        detail::apply_config(o, *csimulate);
        text = detail::simulate_command(o, net, Mode::Consensus);
      }
      else if (validate->parsed()) text = detail::validate_command(o, net, validate_mode->count() > 0);
    }
    (void)mode_opt;
    detail::write_output(o, text, out);
    return kOk;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return kInfeasible;
  } catch (const ConsistencyError& e) {
    err << "error: internal consistency: " << e.what() << "\n";
    return kInternal;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kInternal;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace distacc::cli
