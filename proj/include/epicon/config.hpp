#pragma once

#include "epicon/allocator.hpp"
#include "epicon/bound_dynamics.hpp"
#include "epicon/common.hpp"
#include "epicon/cost_model.hpp"
#include "epicon/objectives.hpp"
#include "epicon/stochastic.hpp"
#include "epicon/temporal_network.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace epicon {

using Json = nlohmann::json;

namespace cfg {

/// Loads a config file; a manifest (object with a "config" key written by a
/// previous run) is unwrapped so manifests can be re-run directly.
inline Json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("config is not valid JSON (" + path + "): " + e.what());
  }
  if (j.is_object() && j.contains("config") && j.contains("tool")) return j["config"];
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  return j;
}

/// Resolves a per-node quantity given as a number, an n-array, or
/// {"default": x, "ranges": [{"first": a, "last": b, "value": v}]} with
/// 1-based inclusive node numbers.
inline Vec resolve_node_vec(const Json& j, int n, const std::string& name) {
  if (j.is_number()) return Vec::Constant(n, j.get<double>());
  if (j.is_array()) {
    if (static_cast<int>(j.size()) != n)
      throw ConfigError(name + ": array must have exactly n = " + std::to_string(n) + " entries");
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = j[i].get<double>();
    return v;
  }
  if (j.is_object()) {
    Vec v = Vec::Constant(n, j.value("default", 0.0));
    for (const auto& range : j.value("ranges", Json::array())) {
      int first = range.at("first").get<int>();
      int last = range.at("last").get<int>();
      double value = range.at("value").get<double>();
      if (first < 1 || last > n || first > last)
        throw ConfigError(name + ": range [" + std::to_string(first) + ", " +
                          std::to_string(last) + "] is outside 1.." + std::to_string(n));
      for (int i = first; i <= last; ++i) v[i - 1] = value;
    }
    return v;
  }
  throw ConfigError(name + ": expected number, array, or {default, ranges} object");
}

inline SchoolSynthConfig parse_burst(const Json& j) {
  SchoolSynthConfig cfg;
  cfg.resolution = j.value("resolution", cfg.resolution);
  cfg.classes = j.value("classes", cfg.classes);
  cfg.within_fraction = j.value("within_fraction", cfg.within_fraction);
  cfg.cross_fraction = j.value("cross_fraction", cfg.cross_fraction);
  cfg.persistence = j.value("persistence", cfg.persistence);
  cfg.activity_scale = j.value("activity_scale", cfg.activity_scale);
  if (j.contains("period_profile"))
    cfg.period_profile = j["period_profile"].get<std::vector<double>>();
  cfg.validate();
  return cfg;
}

/// Builds the temporal network from either a dataset block or a synthesis
/// block. Exactly one of the two must be present.
inline TemporalNetwork build_network(const Json& j) {
  const bool has_dataset = j.contains("dataset");
  const bool has_synth = j.contains("synthesis");
  if (has_dataset == has_synth)
    throw ConfigError("config needs exactly one of: dataset, synthesis");

  if (has_synth) {
    const Json& s = j["synthesis"];
    int n = s.at("n").get<int>();
    double T = s.at("T").get<double>();
    std::uint64_t seed = s.value("seed", std::uint64_t{1});
    SchoolSynthConfig burst = parse_burst(s.value("burst", Json::object()));
    return synthesize_school_like(n, T, burst, seed);
  }

  const Json& d = j["dataset"];
  std::string path = d.at("path").get<std::string>();
  double resolution = d.value("resolution", 20.0);
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  ContactEventLog log = parse_contacts(in, resolution);

  if (d.contains("time_range")) {
    auto range = d["time_range"];
    log = filter_time_range(log, range.at(0).get<long long>(), range.at(1).get<long long>());
  }
  std::optional<std::set<std::string>> filter;
  if (d.contains("classes")) {
    auto classes = d["classes"].get<std::vector<std::string>>();
    filter = labels_with_meta(log, {classes.begin(), classes.end()});
  }
  if (d.contains("labels")) {
    auto labels = d["labels"].get<std::vector<std::string>>();
    if (!filter) filter.emplace();
    filter->insert(labels.begin(), labels.end());
  }
  return build_temporal_network(log, filter);
}

inline RateBounds resolve_bounds(const Json& j, int n) {
  if (!j.contains("bounds")) throw ConfigError("config needs a bounds block");
  const Json& b = j["bounds"];
  RateBounds bounds;
  bounds.beta_lo = resolve_node_vec(b.at("beta_lo"), n, "beta_lo");
  bounds.beta_hi = resolve_node_vec(b.at("beta_hi"), n, "beta_hi");
  bounds.delta_lo = resolve_node_vec(b.at("delta_lo"), n, "delta_lo");
  bounds.delta_hi = resolve_node_vec(b.at("delta_hi"), n, "delta_hi");
  bounds.delta_hat = b.at("delta_hat").get<double>();
  bounds.validate();
  return bounds;
}

inline CostModel resolve_cost_model(const Json& j, const RateBounds& bounds) {
  if (j.contains("cost_terms")) {
    // Generic family: per-node posynomial term lists with explicit constants.
    CostModel model;
    model.delta_hat = bounds.delta_hat;
    model.lambda = j.value("lambda", 1.0);
    const Json& terms = j["cost_terms"];
    if (static_cast<int>(terms.size()) != bounds.n())
      throw ConfigError("cost_terms must list one entry per node");
    for (const auto& node : terms) {
      CostModel::NodeCost nc;
      for (const auto& t : node.value("phi_plus", Json::array()))
        nc.phi_plus.push_back({t.at("c").get<double>(), t.at("exp").get<double>()});
      for (const auto& t : node.value("psi_plus_tilde", Json::array()))
        nc.psi_plus_tilde.push_back({t.at("c").get<double>(), t.at("exp").get<double>()});
      nc.phi_minus = node.value("phi_minus", 0.0);
      nc.psi_minus = node.value("psi_minus", 0.0);
      model.nodes.push_back(std::move(nc));
    }
    model.validate();
    return model;
  }
  return normalize_costs(bounds, j.value("lambda", 0.01));
}

inline double resolve_time(const Json& j, double horizon) {
  if (j.is_string() && j.get<std::string>() == "T") return horizon;
  return j.get<double>();
}

inline ObjectiveSpec build_objective(const Json& j, const TemporalNetwork& net) {
  if (!j.contains("objective")) throw ConfigError("config needs an objective block");
  const Json& o = j["objective"];
  std::string kind = o.value("kind", "terminal_lq");
  if (kind == "terminal_lq") {
    Vec weights = resolve_node_vec(o.value("weights", Json(1.0)), net.n, "objective.weights");
    double q = o.value("q", 1.0);
    double t = o.contains("t") ? resolve_time(o["t"], net.horizon) : net.horizon;
    return make_terminal_lq(weights, q, t);
  }
  if (kind == "integral") {
    int cells = o.value("cells", 50);
    Vec weights = resolve_node_vec(o.value("weights", Json(1.0)), net.n, "objective.weights");
    return make_integral(QuadratureSpec::uniform(net.horizon, cells, weights));
  }
  if (kind == "custom_posynomial") {
    std::vector<MonomialTerm> terms;
    for (const auto& t : o.at("terms")) {
      MonomialTerm term;
      term.coefficient = t.at("c").get<double>();
      for (const auto& f : t.at("factors")) {
        int node = f.at("node").get<int>();  // 1-based
        if (node < 1 || node > net.n)
          throw ConfigError("custom_posynomial: node index out of range");
        term.factors.push_back(
            {node - 1, resolve_time(f.at("t"), net.horizon), f.value("exp", 1.0)});
      }
      terms.push_back(std::move(term));
    }
    return ObjectiveSpec::posynomial(std::move(terms));
  }
  throw ConfigError("unknown objective kind: " + kind);
}

inline Vec resolve_p0(const Json& j, int n) {
  if (!j.contains("p0")) throw ConfigError("config needs a p0 block");
  Vec p0 = resolve_node_vec(j["p0"], n, "p0");
  if ((p0.array() < 0.0).any() || (p0.array() > 1.0).any())
    throw ConfigError("p0 entries must lie in [0, 1]");
  return p0;
}

inline SolveOptions resolve_solver(const Json& j) {
  SolveOptions opts;
  if (!j.contains("solver")) return opts;
  const Json& s = j["solver"];
  opts.tol_stationarity = s.value("tol_stationarity", opts.tol_stationarity);
  opts.tol_residual = s.value("tol_residual", opts.tol_residual);
  opts.max_iter = s.value("max_iter", opts.max_iter);
  opts.expm_tol = s.value("expm_tol", opts.expm_tol);
  return opts;
}

// ---------------------------------------------------------------------------
// serialization

inline Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec vec_from_json(const Json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline Json allocation_to_json(const Allocation& alloc) {
  return Json{{"beta", to_json(alloc.beta)}, {"delta", to_json(alloc.delta)}};
}

inline Allocation allocation_from_json(const Json& j) {
  const Json& a = j.contains("allocation") ? j["allocation"] : j;
  if (!a.contains("beta") || !a.contains("delta"))
    throw ConfigError("allocation file needs beta and delta arrays");
  Allocation alloc;
  alloc.beta = vec_from_json(a["beta"]);
  alloc.delta = vec_from_json(a["delta"]);
  if (alloc.beta.size() != alloc.delta.size())
    throw ConfigError("allocation beta/delta lengths differ");
  return alloc;
}

inline Json report_to_json(const SolveReport& rep) {
  Json j;
  j["allocation"] = allocation_to_json(rep.allocation);
  j["logspace_point"] = to_json(rep.logspace_point);
  j["guaranteed_J"] = rep.guaranteed_J;
  j["cost_used"] = rep.cost_used;
  j["status"] = to_string(rep.status);
  j["stationarity"] = rep.stationarity;
  j["constraint_residuals"] = rep.constraint_residuals;
  j["iterations"] = rep.iterations;
  if (std::isfinite(rep.spectral_abscissa)) j["spectral_abscissa"] = rep.spectral_abscissa;
  if (!rep.message.empty()) j["message"] = rep.message;
  return j;
}

inline Json estimate_to_json(const McEstimate& est) {
  return Json{{"mean", est.mean},
              {"std_error", est.std_error},
              {"trials", est.trials},
              {"seed", est.seed}};
}

inline Json network_summary(const TemporalNetwork& net) {
  Json labels = Json::object();
  for (int i = 0; i < net.n; ++i) labels[std::to_string(i)] = net.node_labels[i];
  return Json{{"n", net.n},
              {"horizon", net.horizon},
              {"snapshots", net.snapshots.size()},
              {"node_labels", labels}};
}

// ---------------------------------------------------------------------------
// file output

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline void write_snapshots_csv(const std::filesystem::path& path, const TemporalNetwork& net) {
  std::ostringstream out;
  out << "t_start,t_end,i,j\n" << std::setprecision(17);
  for (const Snapshot& s : net.snapshots)
    for (auto [i, j] : s.edges) out << s.t_start << ',' << s.t_end << ',' << i << ',' << j << '\n';
  write_text(path, out.str());
}

inline void write_trajectory_csv(const std::filesystem::path& path, const BoundTrajectory& traj) {
  std::ostringstream out;
  out << "t,node,value\n" << std::setprecision(17);
  for (std::size_t k = 0; k < traj.sample_times.size(); ++k)
    for (Eigen::Index i = 0; i < traj.values[k].size(); ++i)
      out << traj.sample_times[k] << ',' << i << ',' << traj.values[k][i] << '\n';
  write_text(path, out.str());
}

inline void write_investments_csv(const std::filesystem::path& path, const TemporalNetwork& net,
                                  const CostModel& cost, const Allocation& alloc) {
  std::ostringstream out;
  out << "node,label,beta,delta,phi_cost,psi_cost\n" << std::setprecision(17);
  for (int i = 0; i < net.n; ++i) {
    out << (i + 1) << ',' << net.node_labels[i] << ',' << alloc.beta[i] << ',' << alloc.delta[i]
        << ',' << cost.phi(i, alloc.beta[i]) << ',' << cost.psi(i, alloc.delta[i]) << '\n';
  }
  write_text(path, out.str());
}

inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const Json& resolved_config) {
  Json manifest{{"tool", "epicon"},
                {"version", kVersion},
                {"command", command},
                {"config", resolved_config}};
  write_json(dir / "manifest.json", manifest);
}

}  // namespace cfg

}  // namespace epicon
