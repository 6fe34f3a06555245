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

#ifndef ELLITUBE_CONFIG_HPP_
#define ELLITUBE_CONFIG_HPP_

/**
 * @file
 * @brief Experiment configuration (JSON) and the builders that turn it into
 * problem objects.
 *
 * Parsing is strict: unknown keys, wrong types and out-of-range values are
 * rejected with a ConfigError that names the JSON path and the line of the
 * offending key. Every field has a default; serialize_config() writes all of
 * them, so parse -> serialize -> parse is the identity.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "ellitube/closed_loop.hpp"
#include "ellitube/ocp.hpp"

namespace ellitube {

class ConfigError : public Error {
 public:
  /// @p line is 1-based; 0 when unknown.
  ConfigError(const std::string& source, int line, const std::string& what);
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct ModelConfig {
  std::string name = "spring_mass_damper";
  ParamMap overrides;
};

struct ConstraintRow {
  std::vector<double> h;
  double eta = 0.0;
};

struct ProblemConfig {
  double T = 10.0;
  int N = 40;
  std::vector<double> x_hat;
  std::vector<ConstraintRow> constraints;
  /// Row-major n_x x n_x; empty = identity.
  std::vector<double> D;
  /// Empty = origin.
  std::vector<double> x_ref;
  double rho = 1.0;
  int n_sub = 4;
  std::string method = "radau5";
  bool domain_constraints = true;
  /// Solve the terminal set first and impose it as a terminal constraint.
  bool terminal_set = false;
  double terminal_target = -1e-8;
};

/// Policy for `propagate` and for simulations that skip the solve.
struct PolicyConfig {
  /// Parameter CSV written by `solve`; when empty the constant policy below
  /// is used.
  std::string params_file;
  /// Empty = q_u.
  std::vector<double> u_x;
  double gamma = 0.5;
  double lambda = 1.0;
  double kappa = 1.0;
  bool openloop = false;
};

struct SimulationConfig {
  int n_scenarios = 200;
  /// MPC re-solve period; 0 = the grid spacing T / N.
  double sampling_period = 0.0;
  /// 0 = the problem horizon T.
  double duration = 0.0;
  int n_sub = 512;
  int w_sub = 8;
  std::string disturbance = "uniform-ball";
  std::string robust_mode = "single-tube";
  double tolerance = 1e-6;
  /// Per-scenario trace CSVs written for the first this-many scenarios.
  int traces = 5;
  /// Simulate with the policy block instead of solving the tube OCP.
  bool use_policy = false;
};

struct ExperimentConfig {
  ModelConfig model;
  ProblemConfig problem;
  SolverSettings solver;
  SimulationConfig simulation;
  PolicyConfig policy;
  std::uint64_t seed = 1;
  int jobs = 0;
  std::string output_dir = "out";
};

/// Throws ConfigError.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON with every field spelled out (2-space indent).
std::string serialize_config(const ExperimentConfig& cfg);
/// SHA-256 (hex) of the canonical serialization.
std::string config_hash(const ExperimentConfig& cfg);

/// Builds the registered model and checks the problem dimensions against it.
ModelPtr build_model(const ExperimentConfig& cfg);
TubeOCP build_tube_ocp(const ExperimentConfig& cfg, const ModelPtr& model);
NominalOCP build_nominal_ocp(const ExperimentConfig& cfg, const ModelPtr& model);
RecedingOptions build_receding(const ExperimentConfig& cfg);
CompareOptions build_compare(const ExperimentConfig& cfg);
/// Constant policy from the policy block (params_file is not read here).
PolicyParams constant_policy(const ExperimentConfig& cfg, const ControlAffineModel& model);
TubeMethod tube_method_from_string(const std::string& s);

/// Version string recorded in manifests.
const char* version_string();

}  // namespace ellitube

#endif  // ELLITUBE_CONFIG_HPP_
