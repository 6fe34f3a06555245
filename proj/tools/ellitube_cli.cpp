/*
 * Copyright 2026 The ellitube Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// ellitube command-line front end.
//
// Exit codes: 0 success, 1 configuration / usage / I/O error, 2 the tube
// leaves the Hessian domain, 3 the optimizer did not converge (or the
// terminal set could not be certified).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ellitube/closed_loop.hpp"
#include "ellitube/config.hpp"
#include "ellitube/csv_io.hpp"
#include "ellitube/kernels.hpp"
#include "ellitube/ocp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ellitube;

namespace {

enum Exit { kOk = 0, kConfig = 1, kDomain = 2, kNotConverged = 3 };

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<int> scenarios;
};

struct Run {
  ExperimentConfig cfg;
  fs::path config_dir;
  fs::path out;
  std::string command;
};

Run prepare(const std::string& command, const Flags& f) {
  Run run;
  run.command = command;
  run.cfg = load_config(f.config);
  run.config_dir = fs::path(f.config).parent_path();
  if (f.seed) {
    run.cfg.seed = *f.seed;
    run.cfg.solver.seed = *f.seed;
  }
  if (f.jobs) run.cfg.jobs = *f.jobs;
  if (f.scenarios) run.cfg.simulation.n_scenarios = *f.scenarios;
  std::string out = run.cfg.output_dir;
  if (const char* env = std::getenv("ELLITUBE_OUT"); env && *env) out = env;
  if (!f.out.empty()) out = f.out;
  run.out = out;
  return run;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

void write_json(const fs::path& p, const json& j) {
  auto os = open_output(p.string());
  os << j.dump(2) << "\n";
}

void write_manifest(const Run& run) {
  json m = {
      {"command", run.command},
      {"version", version_string()},
      {"config_hash", config_hash(run.cfg)},
      {"seed", run.cfg.seed},
      {"isa", kernels::to_string(kernels::active_isa())},
  };
  write_json(run.out / "manifest.json", m);
  auto os = open_output((run.out / "config.json").string());
  os << serialize_config(run.cfg);
}

template <class F>
void write_file(const fs::path& p, F&& f) {
  auto os = open_output(p.string());
  f(os);
  if (!os) throw Error(Errc::io, "write failed: " + p.string());
}

void write_tube(const Run& run, const TubeTrajectory& tube) {
  write_file(run.out / "tube.csv", [&](std::ostream& os) { write_tube_csv(os, tube); });
  write_file(run.out / "boundary.csv", [&](std::ostream& os) { write_boundary_csv(os, tube); });
  write_file(run.out / "params.csv", [&](std::ostream& os) { write_params_csv(os, tube); });
}

PolicyParams load_policy(const Run& run, const ControlAffineModel& model) {
  const std::string& file = run.cfg.policy.params_file;
  if (file.empty()) return constant_policy(run.cfg, model);
  fs::path p(file);
  if (p.is_relative()) p = run.config_dir / p;
  std::ifstream in(p);
  if (!in) throw ConfigError(p.string(), 0, "cannot open params file");
  PolicyParams params = read_params_csv(in, model);
  if (params.size() != run.cfg.problem.N)
    throw ConfigError(p.string(), 0, "params file has " + std::to_string(params.size()) +
                                         " intervals, problem.N is " +
                                         std::to_string(run.cfg.problem.N));
  return params;
}

TubeTrajectory integrate_policy(const Run& run, const ControlAffineModel& model,
                                const FrobeniusBoundData& bounds, const TubeOCP& ocp) {
  const PolicyParams p = load_policy(run, model);
  p.validate(model);
  const Mat Q0 = Mat::Zero(model.n_x(), model.n_x());
  if (run.cfg.policy.openloop)
    return propagate_openloop(model, Ellipsoid(ocp.x_hat, Q0), p.u_x, ocp.T, ocp.N,
                              run.cfg.policy.lambda, run.cfg.policy.kappa, bounds, ocp.n_sub);
  TubeOptions opts;
  opts.n_sub = ocp.n_sub;
  opts.method = ocp.method;
  return integrate_tube(model, ocp.x_hat, Q0, p, ocp.T, ocp.N, bounds, opts);
}

json tube_summary(const ControlAffineModel& model, const TubeTrajectory& tube,
                  const FrobeniusBoundData& bounds, const LinearStateConstraints& constraints) {
  json j = {{"valid", tube.valid}, {"nodes", tube.fine.size()},
            {"final_center", vec_json(tube.nodes.back().q)},
            {"final_shape", mat_json(tube.nodes.back().Q)},
            {"final_trace", tube.nodes.back().Q.trace()}};
  if (!constraints.empty()) j["max_state_residual"] = max_state_residual(tube, constraints);
  if (!tube.openloop) j["min_di_residual"] = di_residual_sweep(model, tube, bounds, 64).min_residual;
  return j;
}

int cmd_propagate(const Flags& f) {
  Run run = prepare("propagate", f);
  ModelPtr model = build_model(run.cfg);
  const FrobeniusBoundData bounds = compute_frobenius_constants(*model);
  const TubeOCP ocp = build_tube_ocp(run.cfg, model);
  const TubeTrajectory tube = integrate_policy(run, *model, bounds, ocp);
  write_manifest(run);
  write_tube(run, tube);
  write_json(run.out / "report.json", tube_summary(*model, tube, bounds, ocp.constraints));
  if (!tube.valid) {
    std::cerr << "propagate: the tube leaves the Hessian domain\n";
    return kDomain;
  }
  std::cout << "propagate: " << tube.fine.size() << " nodes written to " << run.out.string() << "\n";
  return kOk;
}

TerminalSet terminal_set(const ExperimentConfig& cfg, const ModelPtr& model,
                         const FrobeniusBoundData& bounds, const Vec& x_ref) {
  TerminalSetOptions opts;
  opts.solver = cfg.solver;
  opts.target = cfg.problem.terminal_target;
  return solve_terminal_set(*model, x_ref, bounds, opts);
}

json terminal_json(const TerminalSet& t) {
  return {{"center", vec_json(t.Y_ref.center())}, {"shape", mat_json(t.Y_ref.shape())},
          {"lambda", t.lambda}, {"kappa", t.kappa}, {"S", mat_json(t.S)},
          {"max_eig_phi", t.max_eig_phi}, {"certified", t.certified}, {"message", t.message}};
}

int cmd_terminal_set(const Flags& f) {
  Run run = prepare("terminal-set", f);
  ModelPtr model = build_model(run.cfg);
  const FrobeniusBoundData bounds = compute_frobenius_constants(*model);
  const TubeOCP ocp = build_tube_ocp(run.cfg, model);
  const TerminalSet t = terminal_set(run.cfg, model, bounds, ocp.objective.x_ref);
  write_manifest(run);
  write_json(run.out / "terminal.json", terminal_json(t));
  std::cout << "terminal-set: max eig = " << t.max_eig_phi << ", trace = " << t.Y_ref.shape().trace()
            << (t.certified ? " (certified)\n" : " (NOT certified)\n");
  return t.certified ? kOk : kNotConverged;
}

int cmd_solve(const Flags& f) {
  Run run = prepare("solve", f);
  ModelPtr model = build_model(run.cfg);
  const FrobeniusBoundData bounds = compute_frobenius_constants(*model);
  TubeOCP ocp = build_tube_ocp(run.cfg, model);
  write_manifest(run);
  json report;
  if (run.cfg.problem.terminal_set) {
    const TerminalSet t = terminal_set(run.cfg, model, bounds, ocp.objective.x_ref);
    report["terminal"] = terminal_json(t);
    if (!t.certified) {
      write_json(run.out / "report.json", report);
      std::cerr << "solve: terminal set not certified: " << t.message << "\n";
      return kNotConverged;
    }
    ocp.terminal = t.Y_ref;
  }
  const SolveReport rep = solve_tube_ocp(ocp, bounds);
  report["objective"] = rep.objective_value;
  report["max_constraint_violation"] = rep.max_constraint_violation;
  report["iterations"] = rep.iterations;
  report["evaluations"] = rep.evaluations;
  report["converged"] = rep.converged;
  report["wall_time"] = rep.wall_time;
  report["message"] = rep.message;
  report["tube"] = tube_summary(*model, rep.tube, bounds, ocp.constraints);
  write_tube(run, rep.tube);
  write_json(run.out / "report.json", report);
  std::cout << "solve: objective " << rep.objective_value << ", max violation "
            << rep.max_constraint_violation << ", " << rep.message << "\n";
  if (!rep.tube.valid) return kDomain;
  return rep.converged ? kOk : kNotConverged;
}

json summary_json(const std::vector<ControllerSummary>& rows) {
  json out = json::array();
  for (const auto& s : rows)
    out.push_back({{"controller", s.label}, {"scenarios", s.scenarios}, {"violating", s.violating},
                   {"containment_violating", s.containment_violating}, {"failed", s.failed},
                   {"violation_rate", s.violation_rate}, {"worst_residual", s.worst_residual},
                   {"mean_cost", s.mean_cost}});
  return out;
}

int simulate_or_compare(const Flags& f, bool with_ce) {
  Run run = prepare(with_ce ? "compare" : "simulate", f);
  ModelPtr model = build_model(run.cfg);
  const FrobeniusBoundData bounds = compute_frobenius_constants(*model);
  const TubeOCP ocp = build_tube_ocp(run.cfg, model);
  const NominalOCP nominal = build_nominal_ocp(run.cfg, model);
  CompareOptions co = build_compare(run.cfg);
  co.run_ce = with_ce;
  co.keep_traces = run.cfg.simulation.traces > 0;
  write_manifest(run);

  std::optional<SolveReport> solved;
  if (co.robust_mode == RobustMode::single_tube) {
    SolveReport rep;
    if (run.cfg.simulation.use_policy) {
      rep.tube = integrate_policy(run, *model, bounds, ocp);
      rep.converged = true;
    } else {
      rep = solve_tube_ocp(ocp, bounds);
    }
    write_tube(run, rep.tube);
    if (!rep.tube.valid) {
      std::cerr << "the tube leaves the Hessian domain\n";
      return kDomain;
    }
    if (!rep.converged) {
      std::cerr << "tube OCP did not converge: " << rep.message << "\n";
      return kNotConverged;
    }
    solved = std::move(rep);
  }
  const Comparison cmp =
      compare_controllers(ocp, nominal, bounds, co, solved ? &*solved : nullptr);

  write_file(run.out / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, cmp.rows); });
  write_file(run.out / "scenarios.csv", [&](std::ostream& os) {
    write_scenarios_csv(os, cmp.robust, run.cfg.seed);
    if (with_ce) {
      std::stringstream ss;
      write_scenarios_csv(ss, cmp.ce, run.cfg.seed);
      std::string header;
      std::getline(ss, header);
      os << ss.rdbuf();
    }
  });
  const int traces = std::min(run.cfg.simulation.traces, run.cfg.simulation.n_scenarios);
  for (int s = 0; s < traces; ++s) {
    const auto su = static_cast<std::size_t>(s);
    write_file(run.out / "traces" / ("robust_" + std::to_string(s) + ".csv"),
               [&](std::ostream& os) { write_trace_csv(os, cmp.robust[su]); });
    if (with_ce)
      write_file(run.out / "traces" / ("ce_" + std::to_string(s) + ".csv"),
                 [&](std::ostream& os) { write_trace_csv(os, cmp.ce[su]); });
  }
  write_json(run.out / "summary.json", summary_json(cmp.rows));
  for (const auto& s : cmp.rows)
    std::cout << std::left << std::setw(22) << s.label << " violation rate " << s.violation_rate
              << " (" << s.violating << "/" << s.scenarios << "), containment violations "
              << s.containment_violating << ", failed " << s.failed << "\n";
  return kOk;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::io, "cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::io, p.string() + ": " + e.what());
  }
}

int cmd_report(const Flags& f) {
  fs::path out = f.out;
  if (out.empty()) {
    if (const char* env = std::getenv("ELLITUBE_OUT"); env && *env) out = env;
  }
  if (out.empty() && !f.config.empty()) out = load_config(f.config).output_dir;
  if (out.empty()) throw Error(Errc::configuration, "report: pass --out DIR or --config PATH");
  const json m = read_json(out / "manifest.json");
  std::cout << "command     " << m.value("command", "?") << "\n"
            << "version     " << m.value("version", "?") << "\n"
            << "config hash " << m.value("config_hash", "?") << "\n"
            << "seed        " << m.value("seed", 0ULL) << "\n";
  if (fs::exists(out / "report.json")) std::cout << "report\n" << read_json(out / "report.json").dump(2) << "\n";
  if (fs::exists(out / "terminal.json"))
    std::cout << "terminal set\n" << read_json(out / "terminal.json").dump(2) << "\n";
  if (fs::exists(out / "summary.json")) {
    std::cout << "controllers\n";
    for (const auto& s : read_json(out / "summary.json"))
      std::cout << "  " << std::left << std::setw(22) << s.value("controller", "?") << " rate "
                << s.value("violation_rate", 0.0) << ", containment "
                << s.value("containment_violating", 0) << ", mean cost "
                << s.value("mean_cost", 0.0) << "\n";
  }
  return kOk;
}

int exit_code(const Error& e) {
  switch (e.code()) {
    case Errc::integration_blowup:
      return kDomain;
    case Errc::not_converged:
      return kNotConverged;
    default:
      return kConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ellitube: robust tube MPC with ellipsoidal tubes"};
  app.require_subcommand(1);
  Flags flags;
  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", flags.config, "JSON experiment config");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory (overrides config and ELLITUBE_OUT)");
    sub->add_option("--seed", flags.seed, "top-level seed");
    sub->add_option("--jobs", flags.jobs, "worker threads (0 = available cores)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--scenarios", flags.scenarios, "number of disturbance scenarios")
        ->check(CLI::NonNegativeNumber);
  };
  auto* propagate = app.add_subcommand("propagate", "integrate the tube of a fixed policy");
  auto* solve = app.add_subcommand("solve", "solve the tube OCP");
  auto* terminal = app.add_subcommand("terminal-set", "solve for a terminal invariant set");
  auto* simulate = app.add_subcommand("simulate", "closed-loop runs of the robust controller");
  auto* compare = app.add_subcommand("compare", "robust vs certainty-equivalent controller");
  auto* report = app.add_subcommand("report", "print the artifacts of an output directory");
  for (auto* s : {propagate, solve, terminal, simulate, compare}) common(s, true);
  common(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*propagate) return cmd_propagate(flags);
    if (*solve) return cmd_solve(flags);
    if (*terminal) return cmd_terminal_set(flags);
    if (*simulate) return simulate_or_compare(flags, false);
    if (*compare) return simulate_or_compare(flags, true);
    if (*report) return cmd_report(flags);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
  return kConfig;
}
