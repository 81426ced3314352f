#pragma once

// JSON and CSV serialization of reports, allocations and simulation results.
// JSON numbers carry 12 significant digits, CSV numbers 6.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "distacc/allocation.hpp"
#include "distacc/bounds.hpp"
#include "distacc/errors.hpp"
#include "distacc/network.hpp"
#include "distacc/simulator.hpp"

namespace distacc::io {

using Json = nlohmann::ordered_json;

inline constexpr int kJsonDigits = 12;
inline constexpr int kCsvDigits = 6;

inline Json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", kJsonDigits, v);
  return std::stod(buf);
}

inline Json number(const std::optional<double>& v) { return v ? number(*v) : Json(nullptr); }

inline std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", kCsvDigits, v);
  return buf;
}

inline std::string csv_number(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json strings(const std::vector<std::string>& v) {
  Json a = Json::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

// {"1": 0.01, "2": 0.01} keyed by the node owning the link to its parent.
inline std::map<NodeId, double> parse_link_map(std::string_view document) {
  Json doc;
  try {
    doc = Json::parse(document);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("malformed distortion map: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("malformed distortion map: expected an object");
  std::map<NodeId, double> out;
  for (const auto& [key, value] : doc.items()) {
    if (key.empty() || key.find_first_not_of("0123456789") != std::string::npos) {
      throw InputError("distortion map key '" + key + "': expected a node id");
    }
    if (!value.is_number()) throw InputError("distortion map key '" + key + "': value must be a number");
    out[static_cast<NodeId>(std::stoull(key))] = value.get<double>();
  }
  return out;
}

// {"0->1": 0.01, "1->0": 0.01, ...}
inline std::map<DirectedEdge, double> parse_edge_map(std::string_view document) {
  Json doc;
  try {
    doc = Json::parse(document);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("malformed distortion map: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("malformed distortion map: expected an object");
  std::map<DirectedEdge, double> out;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_number()) throw InputError("distortion map key '" + key + "': value must be a number");
    out[parse_directed_edge(key)] = value.get<double>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bounds
// ---------------------------------------------------------------------------

template <class Link>
Json link_row_json(const LinkRow<Link>& row, const DirectedEdge& e) {
  Json j;
  j["link"] = to_string(e);
  j["from"] = e.from;
  j["to"] = e.to;
  j["inc"] = number(row.inc);
  j["tx"] = number(row.tx);
  j["rx"] = number(row.rx);
  j["rate_bits"] = number(row.rate_bits);
  j["outer_incremental_bits"] = number(row.outer_bits);
  j["cutset_bits"] = number(row.cutset_bits);
  j["delta_r_bits"] = number(row.delta_r_bits);
  return j;
}

inline Json to_json(const TreeNetwork& net, const BoundsReport& r) {
  Json j;
  j["mode"] = "agg";
  j["outer_incremental_bits"] = number(r.outer_incremental_bits);
  j["outer_closed_form_bits"] = number(r.outer_closed_form_bits);
  j["cutset_bits"] = number(r.cutset_bits);
  j["inner_bits"] = number(r.inner_bits);
  j["inner_minimized_bits"] = number(r.inner_minimized_bits);
  j["gap_inner_outer_bits"] = number(r.gap_inner_outer_bits);
  j["delta_r_bits"] = number(r.delta_r_bits);
  j["total_distortion"] = number(r.total_distortion);
  j["effective"] = {{"outer_incremental_bits", number(r.effective_outer_bits())},
                    {"cutset_bits", number(r.effective_cutset_bits())}};
  j["links"] = Json::array();
  for (const auto& row : r.links) j["links"].push_back(link_row_json(row, {row.link, *net.parent(row.link)}));
  j["warnings"] = strings(r.warnings);
  return j;
}

inline constexpr std::string_view kBoundsCsvHeader =
    "link,inc,tx,rx,rate_bits,outer_incremental_bits,cutset_bits,inner_bits,delta_r_bits\n";

template <class Link>
std::string link_row_csv(const LinkRow<Link>& row, const DirectedEdge& e) {
  return to_string(e) + "," + csv_number(row.inc) + "," + csv_number(row.tx) + "," + csv_number(row.rx) + "," +
         csv_number(row.rate_bits) + "," + csv_number(row.outer_bits) + "," + csv_number(row.cutset_bits) + "," +
         csv_number(row.rate_bits) + "," + csv_number(row.delta_r_bits) + "\n";
}

inline std::string to_csv(const TreeNetwork& net, const BoundsReport& r) {
  std::string out(kBoundsCsvHeader);
  for (const auto& row : r.links) out += link_row_csv(row, {row.link, *net.parent(row.link)});
  out += "total," + csv_number(r.total_distortion) + ",,," + csv_number(r.inner_bits) + "," +
         csv_number(r.outer_incremental_bits) + "," + csv_number(r.cutset_bits) + "," + csv_number(r.inner_bits) +
         "," + csv_number(r.delta_r_bits) + "\n";
  return out;
}

inline Json to_json(const ConsensusBoundsReport& r) {
  Json j;
  j["mode"] = "consensus";
  j["outer_incremental_bits"] = number(r.outer_incremental_bits);
  j["cutset_bits"] = number(r.cutset_bits);
  j["inner_bits"] = number(r.inner_bits);
  j["gap_inner_outer_bits"] = number(r.gap_inner_outer_bits);
  j["delta_r_bits"] = number(r.delta_r_bits);
  j["total_distortion"] = number(r.total_distortion);
  j["classical_comparator"] = {{"bits", number(r.classical_comparator_bits)},
                               {"label", "order-level comparator, constants not from this library's bounds"}};
  j["per_root"] = Json::array();
  for (const auto& [k, v] : r.per_root) j["per_root"].push_back({{"node", k}, {"distortion", number(v)}});
  j["links"] = Json::array();
  for (const auto& row : r.links) j["links"].push_back(link_row_json(row, row.link));
  j["warnings"] = strings(r.warnings);
  return j;
}

inline std::string to_csv(const ConsensusBoundsReport& r) {
  std::string out(kBoundsCsvHeader);
  for (const auto& row : r.links) out += link_row_csv(row, row.link);
  out += "total," + csv_number(r.total_distortion) + ",,," + csv_number(r.inner_bits) + "," +
         csv_number(r.outer_incremental_bits) + "," + csv_number(r.cutset_bits) + "," + csv_number(r.inner_bits) +
         "," + csv_number(r.delta_r_bits) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Allocations
// ---------------------------------------------------------------------------

inline Json to_json(const RateAllocation& a) {
  Json j;
  j["method"] = std::string(to_string(a.method));
  j["sum_rate_bits"] = number(a.sum_rate_bits);
  j["links"] = Json::array();
  for (const auto& l : a.links) {
    j["links"].push_back({{"from", l.link.from}, {"to", l.link.to}, {"inc", number(l.inc)}, {"rate_bits", number(l.rate_bits)}});
  }
  if (a.objective_bits) j["objective_bits"] = number(a.objective_bits);
  if (a.reference_sum_rate_bits) j["reference_sum_rate_bits"] = number(a.reference_sum_rate_bits);
  if (a.method == AllocationMethod::NumericPenalized || a.method == AllocationMethod::ConsensusNumeric) {
    j["iterations"] = a.iterations;
    j["converged"] = a.converged;
  }
  j["warnings"] = strings(a.warnings);
  return j;
}

inline std::string to_csv(const RateAllocation& a) {
  std::string out = "from,to,inc,rate_bits\n";
  double inc_sum = 0.0;
  for (const auto& l : a.links) {
    out += std::to_string(l.link.from) + "," + std::to_string(l.link.to) + "," + csv_number(l.inc) + "," +
           csv_number(l.rate_bits) + "\n";
    inc_sum += l.inc;
  }
  out += "total,," + csv_number(inc_sum) + "," + csv_number(a.sum_rate_bits) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

inline Json estimate_json(const MeanEstimate& m, double reference) {
  Json j;
  j["empirical"] = number(m.mean);
  j["ci"] = number(m.ci_halfwidth);
  j["reference"] = number(reference);
  const auto verdict = matches_reference(m, reference);
  j["within_ci"] = verdict ? Json(*verdict) : Json(nullptr);
  return j;
}

inline Json to_json(const SimulationResult& r) {
  Json j;
  j["mode"] = std::string(to_string(r.mode));
  j["scheme"] = std::string(to_string(r.scheme));
  j["blocklength"] = r.blocklength;
  j["trials"] = r.trials;
  j["seed"] = r.seed;
  j["sum_rate_bits"] = number(r.sum_rate_bits);
  j["total"] = estimate_json(r.total, r.reference_total);
  if (r.mode == Mode::Consensus) {
    j["per_node"] = Json::array();
    for (const auto& [b, m] : r.per_node) {
      Json row = estimate_json(m, r.reference_per_node.at(b));
      row["node"] = b;
      j["per_node"].push_back(row);
    }
  }
  j["links"] = Json::array();
  for (const auto& l : r.links) {
    Json row;
    row["from"] = l.link.from;
    row["to"] = l.link.to;
    row["rate_bits"] = number(l.rate_bits);
    row["incremental"] = estimate_json(l.incremental, l.reference_inc);
    row["estimate_variance"] = estimate_json(l.estimate_variance, l.reference_estimate_variance);
    if (r.scheme == Scheme::DitheredQuantizer) row["saturations"] = l.saturations;
    j["links"].push_back(row);
  }
  j["warnings"] = strings(r.warnings);
  return j;
}

inline std::string to_csv(const SimulationResult& r) {
  std::string out = "link_from,link_to,empirical_inc,ci,reference_inc\n";
  for (const auto& l : r.links) {
    out += std::to_string(l.link.from) + "," + std::to_string(l.link.to) + "," + csv_number(l.incremental.mean) + "," +
           csv_number(l.incremental.ci_halfwidth) + "," + csv_number(l.reference_inc) + "\n";
  }
  for (const auto& [b, m] : r.per_node) {
    out += "node," + std::to_string(b) + "," + csv_number(m.mean) + "," + csv_number(m.ci_halfwidth) + "," +
           csv_number(r.reference_per_node.at(b)) + "\n";
  }
  out += "total,," + csv_number(r.total.mean) + "," + csv_number(r.total.ci_halfwidth) + "," +
         csv_number(r.reference_total) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Analytic model
// ---------------------------------------------------------------------------

inline Json to_json(const AnalyticModel& m) {
  Json j;
  j["mode"] = std::string(to_string(m.mode));
  j["total"] = number(m.total);
  j["max_accumulation_residual"] = number(m.max_accumulation_residual);
  j["max_orthogonality"] = number(m.max_orthogonality);
  j["max_gain_deviation"] = number(m.max_gain_deviation);
  j["min_eigenvalue"] = number(m.min_eigenvalue);
  j["per_root"] = Json::array();
  for (const auto& [k, v] : m.per_root) j["per_root"].push_back({{"node", k}, {"distortion", number(v)}});
  j["links"] = Json::array();
  for (const auto& [e, l] : m.links) {
    j["links"].push_back({{"link", to_string(e)},
                          {"d", number(l.d)},
                          {"tx", number(l.tx)},
                          {"rx", number(l.rx)},
                          {"inc", number(l.inc)}});
  }
  return j;
}

}  // namespace distacc::io
