// epicon: allocate epidemic-containment resources on temporal contact
// networks and validate the resulting guarantees by exact and Monte Carlo
// simulation. See README.md for the config schema.

#include "epicon/allocator.hpp"
#include "epicon/config.hpp"
#include "epicon/stochastic.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

namespace {

using namespace epicon;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitMaxIter = 4;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;  // --out flag; empty means env/config/default
};

fs::path resolve_out_dir(const CommonArgs& args, const Json& config,
                         const std::string& command) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (const char* env = std::getenv("EPICON_OUT_DIR")) return env;
  if (config.contains("output_dir")) return config["output_dir"].get<std::string>();
  return fs::path("runs") / command;
}

struct Problem {
  TemporalNetwork net;
  RateBounds bounds;
  CostModel cost;
  ObjectiveSpec objective;
  Vec p0;
  SolveOptions solver;

  static Problem from_config(const Json& config) {
    TemporalNetwork net = cfg::build_network(config);
    RateBounds bounds = cfg::resolve_bounds(config, net.n);
    CostModel cost = cfg::resolve_cost_model(config, bounds);
    ObjectiveSpec objective = cfg::build_objective(config, net);
    Vec p0 = cfg::resolve_p0(config, net.n);
    SolveOptions solver = cfg::resolve_solver(config);
    return Problem{std::move(net), std::move(bounds), std::move(cost), std::move(objective),
                   std::move(p0), solver};
  }
};

Json resolved_section(const Problem& prob, const Json& config) {
  Json r;
  r["n"] = prob.net.n;
  r["horizon"] = prob.net.horizon;
  r["snapshots"] = prob.net.snapshots.size();
  r["p0"] = cfg::to_json(prob.p0);
  r["bounds"] = Json{{"beta_lo", cfg::to_json(prob.bounds.beta_lo)},
                     {"beta_hi", cfg::to_json(prob.bounds.beta_hi)},
                     {"delta_lo", cfg::to_json(prob.bounds.delta_lo)},
                     {"delta_hi", cfg::to_json(prob.bounds.delta_hi)},
                     {"delta_hat", prob.bounds.delta_hat}};
  r["R_minus"] = prob.cost.r_minus();
  if (config.contains("seed")) r["seed"] = config["seed"];
  return r;
}

void write_manifest_for(const fs::path& out, const std::string& command, const Json& config,
                        const Json& resolved) {
  Json full = config;
  full["resolved"] = resolved;
  cfg::write_manifest(out, command, full);
}

int cmd_ingest(const CommonArgs& args, bool dump_snapshots) {
  Json config = cfg::load_config(args.config_path);
  fs::path out = resolve_out_dir(args, config, "ingest");
  TemporalNetwork net = cfg::build_network(config);
  Json summary = cfg::network_summary(net);
  cfg::write_json(out / "summary.json", summary);
  if (dump_snapshots || config.value("dump_snapshots", false))
    cfg::write_snapshots_csv(out / "snapshots.csv", net);
  write_manifest_for(out, "ingest", config, summary);
  std::cout << "n=" << net.n << " T=" << net.horizon
            << " snapshots=" << net.snapshots.size() << "\n"
            << "wrote " << (out / "summary.json").string() << "\n";
  return kExitOk;
}

int cmd_solve(const CommonArgs& args, const std::string& mode, double budget_override,
              double target_override, bool dump_trajectory) {
  Json config = cfg::load_config(args.config_path);
  fs::path out = resolve_out_dir(args, config, "solve-" + mode);
  Problem prob = Problem::from_config(config);

  auto need = [&](const char* key, double override_value) {
    if (override_value == override_value) return override_value;  // not NaN
    if (!config.contains(key))
      throw ConfigError(std::string("mode ") + mode + " needs config key: " + key);
    return config[key].get<double>();
  };

  SolveReport report;
  if (mode == "budget") {
    double R_bar = need("budget", budget_override);
    report = solve_budget_constrained(prob.net, prob.p0, prob.objective, prob.cost, prob.bounds,
                                      R_bar, prob.solver);
  } else if (mode == "performance") {
    double J_bar = need("target_J", target_override);
    report = solve_performance_constrained(prob.net, prob.p0, prob.objective, prob.cost,
                                           prob.bounds, J_bar, prob.solver);
  } else if (mode == "feasibility") {
    double J_bar = need("target_J", target_override);
    double R_bar = need("budget", budget_override);
    report = solve_feasibility(prob.net, prob.p0, prob.objective, prob.cost, prob.bounds, J_bar,
                               R_bar, prob.solver);
  } else if (mode == "static-baseline") {
    double R_bar = need("budget", budget_override);
    WeightedStaticGraph agg = aggregate_static(prob.net);
    report = solve_static_baseline(agg, prob.cost, prob.bounds, R_bar, prob.solver);
    attach_temporal_certificate(report, prob.net, prob.p0, prob.objective, prob.cost, prob.bounds,
                                prob.solver.expm_tol);
  } else {
    throw ConfigError("unknown solve mode: " + mode);
  }

  cfg::write_json(out / "report.json", cfg::report_to_json(report));
  cfg::write_investments_csv(out / "investments.csv", prob.net, prob.cost, report.allocation);
  if (dump_trajectory) {
    BoundTrajectory traj = propagate_bound(prob.net, report.allocation, prob.p0,
                                           prob.objective.sample_times(), prob.solver.expm_tol);
    cfg::write_trajectory_csv(out / "trajectory.csv", traj);
  }
  Json resolved = resolved_section(prob, config);
  resolved["mode"] = mode;
  write_manifest_for(out, "solve", config, resolved);

  std::cout << "guaranteed_J=" << report.guaranteed_J << " cost_used=" << report.cost_used
            << " status=" << to_string(report.status) << "\n"
            << "wrote " << (out / "report.json").string() << "\n";
  switch (report.status) {
    case SolveStatus::feasible: return kExitOk;
    case SolveStatus::infeasible: return kExitInfeasible;
    case SolveStatus::max_iter: return kExitMaxIter;
  }
  return kExitOk;
}

int cmd_simulate(const CommonArgs& args, const std::string& allocation_path, long trials_flag) {
  Json config = cfg::load_config(args.config_path);
  fs::path out = resolve_out_dir(args, config, "simulate");
  Problem prob = Problem::from_config(config);

  if (allocation_path.empty()) throw ConfigError("simulate needs --allocation <file>");
  Json alloc_json = cfg::load_config(allocation_path);
  Allocation alloc = cfg::allocation_from_json(alloc_json);
  if (alloc.n() != prob.net.n)
    throw DimensionError("allocation has " + std::to_string(alloc.n()) + " nodes, network has " +
                         std::to_string(prob.net.n));

  long trials = trials_flag > 0 ? trials_flag : config.value("trials", 10000L);
  std::uint64_t seed = config.value("seed", std::uint64_t{1});

  InitialDistribution init{prob.p0};
  McEstimate est = mc_estimate_objective(prob.net, alloc, init, prob.objective, trials, seed);
  VerifyResult cert = verify_allocation(prob.net, prob.p0, prob.objective, prob.cost, prob.bounds,
                                        alloc, prob.solver.expm_tol);

  Json j = cfg::estimate_to_json(est);
  j["certified_bound"] = cert.J_bound;
  j["bound_minus_estimate"] = cert.J_bound - est.mean;
  j["within_bound_3sigma"] = est.mean <= cert.J_bound + 3.0 * est.std_error;
  cfg::write_json(out / "estimate.json", j);

  Json resolved = resolved_section(prob, config);
  resolved["trials"] = trials;
  resolved["allocation_file"] = allocation_path;
  write_manifest_for(out, "simulate", config, resolved);

  std::cout << "estimate=" << est.mean << " std_error=" << est.std_error
            << " certified_bound=" << cert.J_bound << "\n"
            << "wrote " << (out / "estimate.json").string() << "\n";
  return kExitOk;
}

int cmd_oracle(const CommonArgs& args) {
  Json config = cfg::load_config(args.config_path);
  fs::path out = resolve_out_dir(args, config, "oracle");
  Problem prob = Problem::from_config(config);

  Allocation alloc{prob.bounds.beta_hi, prob.bounds.delta_lo};  // nominal rates
  if (config.contains("allocation")) alloc = cfg::allocation_from_json(config["allocation"]);

  std::vector<double> times = prob.objective.sample_times();
  if (times.empty() || times.back() < prob.net.horizon) times.push_back(prob.net.horizon);

  InitialDistribution init{prob.p0};
  BoundTrajectory exact = master_equation_marginals(prob.net, alloc, init, times);
  BoundTrajectory bound = propagate_bound(prob.net, alloc, prob.p0, times, prob.solver.expm_tol);

  cfg::write_trajectory_csv(out / "marginals.csv", exact);
  cfg::write_trajectory_csv(out / "bound.csv", bound);

  double worst_violation = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k)
    worst_violation =
        std::max(worst_violation, (exact.values[k] - bound.values[k]).maxCoeff());
  Json j{{"sample_times", times},
         {"max_marginal_minus_bound", worst_violation},
         {"dominance_holds", worst_violation <= 1e-9}};
  cfg::write_json(out / "oracle.json", j);
  write_manifest_for(out, "oracle", config, resolved_section(prob, config));

  std::cout << "max(marginal - bound)=" << worst_violation << "\n"
            << "wrote " << (out / "marginals.csv").string() << "\n";
  return kExitOk;
}

int cmd_verify(const CommonArgs& args, const std::string& allocation_path, bool dump_trajectory) {
  Json config = cfg::load_config(args.config_path);
  fs::path out = resolve_out_dir(args, config, "verify");
  Problem prob = Problem::from_config(config);

  if (allocation_path.empty()) throw ConfigError("verify needs --allocation <file>");
  Allocation alloc = cfg::allocation_from_json(cfg::load_config(allocation_path));
  if (alloc.n() != prob.net.n) throw DimensionError("allocation/network dimension mismatch");

  VerifyResult v = verify_allocation(prob.net, prob.p0, prob.objective, prob.cost, prob.bounds,
                                     alloc, prob.solver.expm_tol);
  Json j{{"guaranteed_J", v.J_bound}, {"cost", v.cost}, {"in_box", v.in_box}};
  cfg::write_json(out / "verify.json", j);
  if (dump_trajectory) {
    BoundTrajectory traj = propagate_bound(prob.net, alloc, prob.p0,
                                           prob.objective.sample_times(), prob.solver.expm_tol);
    cfg::write_trajectory_csv(out / "trajectory.csv", traj);
  }
  Json resolved = resolved_section(prob, config);
  resolved["allocation_file"] = allocation_path;
  write_manifest_for(out, "verify", config, resolved);

  std::cout << "guaranteed_J=" << v.J_bound << " cost=" << v.cost
            << " in_box=" << (v.in_box ? "true" : "false") << "\n"
            << "wrote " << (out / "verify.json").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"epicon: containment resource allocation on temporal contact networks"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string mode = "budget";
  std::string allocation_path;
  double budget_override = std::numeric_limits<double>::quiet_NaN();
  double target_override = std::numeric_limits<double>::quiet_NaN();
  long trials_flag = 0;
  bool dump_snapshots = false;
  bool dump_trajectory = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "JSON config file")->required();
    sub->add_option("--out", args.out_dir, "output directory (overrides EPICON_OUT_DIR)");
  };

  CLI::App* ingest = app.add_subcommand("ingest", "parse contacts into a temporal network");
  add_common(ingest);
  ingest->add_flag("--dump-snapshots", dump_snapshots, "write snapshots.csv");

  CLI::App* solve = app.add_subcommand("solve", "solve an allocation problem");
  add_common(solve);
  solve->add_option("--mode", mode, "budget | performance | feasibility | static-baseline");
  solve->add_option("--budget", budget_override, "override config budget R_bar");
  solve->add_option("--target-J", target_override, "override config target_J");
  solve->add_flag("--dump-trajectory", dump_trajectory, "write the certified bound trajectory");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo estimate of J(p)");
  add_common(simulate);
  simulate->add_option("--allocation", allocation_path, "allocation or report JSON")->required();
  simulate->add_option("--trials", trials_flag, "number of trials");

  CLI::App* oracle = app.add_subcommand("oracle", "exact master-equation marginals (n <= 14)");
  add_common(oracle);

  CLI::App* verify = app.add_subcommand("verify", "recompute certificate for an allocation");
  add_common(verify);
  verify->add_option("--allocation", allocation_path, "allocation or report JSON")->required();
  verify->add_flag("--dump-trajectory", dump_trajectory, "write the certified bound trajectory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(args, dump_snapshots);
    if (solve->parsed())
      return cmd_solve(args, mode, budget_override, target_override, dump_trajectory);
    if (simulate->parsed()) return cmd_simulate(args, allocation_path, trials_flag);
    if (oracle->parsed()) return cmd_oracle(args);
    if (verify->parsed()) return cmd_verify(args, allocation_path, dump_trajectory);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
