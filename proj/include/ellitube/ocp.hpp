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

#ifndef ELLITUBE_OCP_HPP_
#define ELLITUBE_OCP_HPP_

/**
 * @file
 * @brief Single-shooting transcription of the ellipsoidal tube OCP, the
 * terminal-set problem and the nominal (certainty-equivalent) OCP.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ellitube/optim.hpp"
#include "ellitube/tube.hpp"

namespace ellitube {

/// Running cost (q - x_ref)' D (q - x_ref) + Tr(D Q) / (n_x + 2) + rho |u_x|^2.
struct InertiaObjective {
  Mat D;
  Vec x_ref;
  double rho = 1.0;
};

struct SolverSettings {
  int max_outer = 15;
  int max_inner = 150;
  double feas_tol = 1e-6;
  double grad_tol = 1e-6;
  double fd_step = 1e-6;
  /// Inner stop: relative merit decrease over five iterations.
  double stall_tol = 1e-10;
  /// Outer stop: relative objective change between outer iterations.
  double settle_tol = 1e-8;
  int lbfgs_memory = 30;
  /// Tube OCP: gamma, lambda, kappa and S are piecewise constant on this many
  /// equal blocks of control intervals (0 = one block per interval).
  int param_blocks = 0;
  /// Tube OCP: when smaller than the final block count, a first solve with
  /// this many blocks warm-starts the final one. 0 = single stage.
  int coarse_blocks = 1;
  /// Constraints are enforced internally as g + tighten <= 0 so that the
  /// returned iterate satisfies g <= 0 even at the feasibility tolerance.
  double tighten = 1e-6;
  long max_evaluations = 0;
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct TubeOCP {
  ModelPtr model;
  double T = 10.0;
  int N = 40;
  double t0 = 0.0;
  Vec x_hat;
  LinearStateConstraints constraints;
  InertiaObjective objective;
  std::optional<Ellipsoid> terminal;
  int n_sub = 4;
  TubeMethod method = TubeMethod::radau5;
  /// Keep every fine node inside the Hessian domain box.
  bool domain_constraints = true;
  SolverSettings solver;
  /// Starting policy; a certainty-equivalent control sequence plus a small
  /// search over constant (S, lambda, kappa) is used when empty.
  std::optional<PolicyParams> initial_guess;
  /// Reference controls used when initial_guess is empty (e.g. from the
  /// nominal OCP); zero controls when empty too.
  std::vector<Vec> initial_controls;

  void validate() const;
};

struct SolveReport {
  TubeTrajectory tube;
  double objective_value = 0.0;
  double max_constraint_violation = 0.0;
  int iterations = 0;
  long evaluations = 0;
  bool converged = false;
  double wall_time = 0.0;
  std::string message;
};

/// Trapezoidal quadrature of the running cost over the fine grid; the
/// control term uses the per-interval constant u_x.
double objective_inertia(const TubeTrajectory& tube, const Mat& D, const Vec& x_ref, double rho);

/// h_i' q + sqrt(h_i' Q h_i) - eta_i, ordered node-major over the fine nodes
/// (node 0 included), row index fastest.
Eigen::VectorXd state_constraint_residuals(const TubeTrajectory& tube,
                                           const LinearStateConstraints& constraints);

/// Largest residual over fine nodes 1..end (node 0 is the given state).
double max_state_residual(const TubeTrajectory& tube, const LinearStateConstraints& constraints);

SolveReport solve_tube_ocp(const TubeOCP& problem, const FrobeniusBoundData& bounds);

struct TerminalSetOptions {
  SolverSettings solver;
  /// Certificate: lambda_max(Phi_g) <= target after the solve.
  double target = -1e-8;
};

struct TerminalSet {
  Ellipsoid Y_ref{Vec::Zero(1), Mat::Zero(1, 1)};
  double lambda = 1.0;
  double kappa = 1.0;
  Mat S;
  /// lambda_max(Phi_g(x_ref, Q_ref, S, Q_u, lambda, kappa)) re-evaluated.
  double max_eig_phi = 0.0;
  bool certified = false;
  std::string message;
};

/// Minimizes Tr(Q_ref) subject to Phi_g(x_ref, Q_ref, S, Q_u, lambda, kappa) <= 0
/// with u_x = q_u (so R_u = Q_u). Searched over a gain K with
/// S = Q^{1/2} K' Q_u^{-1/2}, where Q_ref solves the closed-loop Lyapunov
/// equation for (K, lambda, kappa); starts come from LQR gains. Returns
/// certified = false (not an exception) when no stabilizing gain is found.
TerminalSet solve_terminal_set(const ControlAffineModel& model, const Vec& x_ref,
                               const FrobeniusBoundData& bounds,
                               const TerminalSetOptions& opts = {});

/// Nominal OCP: w = q_w, piecewise-constant u in E(q_u, Q_u), pointwise
/// state constraints at every fine node after the first, cost
/// integral of (x - x_ref)' D (x - x_ref) + rho |u|^2.
struct NominalOCP {
  ModelPtr model;
  double T = 10.0;
  int N = 40;
  Vec x_hat;
  LinearStateConstraints constraints;
  Mat D;
  Vec x_ref;
  double rho = 1.0;
  int n_sub = 4;
  SolverSettings solver;
  std::vector<Vec> initial_controls;
};

struct NominalSolution {
  std::vector<Vec> u;
  std::vector<double> t;   // fine grid
  std::vector<Vec> x;      // fine-grid states
  double objective = 0.0;
  double max_violation = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
};

/// RK4 simulation of the nominal dynamics with piecewise-constant controls.
std::vector<Vec> simulate_nominal(const ControlAffineModel& model, const Vec& x0,
                                  const std::vector<Vec>& u, double T, int n_sub);

NominalSolution solve_nominal_ocp(const NominalOCP& problem);

/// f + w'g of the nominal OCP at the unconstrained decision vector @p x
/// (u_k = q_u + Q_u^{1/2} squash(x_k)) and, when @p grad is set, its adjoint
/// gradient. g holds one entry per constraint row and fine node after the
/// first, node-major. Exposed for tests.
double nominal_merit(const NominalOCP& problem, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& w, Eigen::VectorXd* grad);

}  // namespace ellitube

#endif  // ELLITUBE_OCP_HPP_
