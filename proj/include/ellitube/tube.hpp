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

#ifndef ELLITUBE_TUBE_HPP_
#define ELLITUBE_TUBE_HPP_

/**
 * @file
 * @brief Ellipsoidal tube dynamics
 *
 *   q' = f(q, q_w) + G(q) u_x
 *   Q' = Phi_g = A Q + Q A' + Q^{1/2} S R_u^{1/2} G' + G R_u^{1/2} S' Q^{1/2}
 *              + (1/lambda + 1/kappa) Q + Omega_G + lambda B Q_w B' + kappa Omega_n
 *
 * integrated with fixed steps under piecewise-constant policy parameters.
 */

#include <limits>
#include <optional>
#include <vector>

#include "ellitube/bounders.hpp"
#include "ellitube/model.hpp"

namespace ellitube {

inline constexpr double kGammaMin = 1e-4;
inline constexpr double kMultiplierMin = 1e-3;
inline constexpr double kMultiplierMax = 1e6;
/// kappa = kInfinity drops the kappa terms; only valid when Omega_n == 0.
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct IntervalParams {
  Vec u_x;
  double gamma = 0.5;
  double lambda = 1.0;
  double kappa = 1.0;
  Mat S;
};

/// Per-interval policy arrays, all of length N.
struct PolicyParams {
  std::vector<Vec> u_x;
  std::vector<double> gamma;
  std::vector<double> lambda;
  std::vector<double> kappa;
  std::vector<Mat> S;

  int size() const { return static_cast<int>(u_x.size()); }
  IntervalParams at(int k) const;
  void set(int k, const IntervalParams& p);

  /// N copies of @p p.
  static PolicyParams constant(int N, const IntervalParams& p);

  /// Checks array lengths, shapes and the documented parameter ranges
  /// (gamma in [kGammaMin, 1], multipliers positive, S S' <= I, u_x in U).
  void validate(const ControlAffineModel& model) const;
};

/// S with singular values clamped to <= 1.
Mat clamp_spectral(const Mat& S);

struct TubeNode {
  double t = 0.0;
  Vec q;
  Mat Q;
  /// E(q, Q) lies inside the Hessian domain box.
  bool in_domain = true;
};

struct TubeTrajectory {
  /// N + 1 interval boundaries.
  std::vector<double> grid;
  /// State at the interval boundaries (N + 1 entries).
  std::vector<TubeNode> nodes;
  /// State at every RK4 substep (N * n_sub + 1 entries, nodes included).
  std::vector<TubeNode> fine;
  int n_sub = 4;
  PolicyParams params;
  /// Inner control shapes per interval.
  std::vector<Mat> R_u;
  /// Center velocity at the start and end of each fine segment (one-sided
  /// at interval boundaries). at() interpolates the center with cubic
  /// Hermite polynomials when these are set, linearly otherwise.
  std::vector<Vec> dq_start;
  std::vector<Vec> dq_end;
  /// Every fine node lies inside the Hessian domain.
  bool valid = true;
  /// Feedback terms were disabled (R_u = 0) when integrating.
  bool openloop = false;

  int N() const { return static_cast<int>(nodes.size()) - 1; }
  double t0() const { return grid.front(); }
  double horizon() const { return grid.back() - grid.front(); }
  /// Interval containing @p t (the last interval owns the end point).
  int interval_of(double t) const;
  /// Interval owning fine node @p j.
  int interval_of_fine(int j) const;
  /// Linear interpolation between fine nodes.
  Ellipsoid at(double t) const;
};

enum class TubeMethod {
  /// 3-stage Radau IIA (order 5, L-stable) with simplified Newton.
  radau5,
  /// Classical explicit RK4.
  rk4,
};

struct TubeOptions {
  int n_sub = 4;
  /// The Q^{1/2} feedback term is stiff when the tube is thin in a direction
  /// the input acts on (rate ~ |R_u^{1/2} G'| / sqrt(lambda_min(Q))); RK4 is
  /// only safe for weak feedback.
  TubeMethod method = TubeMethod::radau5;
  /// Strict: an infeasible R_u throws and PSD repair beyond dust throws.
  /// Relaxed (optimizer iterates): R_u and Q are projected onto the PSD cone.
  bool strict = true;
  /// Force R_u = 0 (no feedback).
  bool openloop = false;
  /// Micro-steps for the first substep when Q(t0) is singular, on a mesh
  /// graded as (j/M)^4: Q^{1/2} is not Lipschitz at a singular Q and a
  /// uniform mesh loses the method's order there. 1 disables the refinement.
  int startup_refinement = 24;
};

/// Phi_g evaluated at (q_x, Q_x) with the given interval data.
Mat phi_g(const ControlAffineModel& model, const Vec& q_x, const Mat& Q_x, const Mat& S,
          const Mat& R_u, double lambda, double kappa, const Vec& u_x,
          const FrobeniusBoundData& bounds);

struct TubeRate {
  Vec q_dot;
  Mat Q_dot;
};

/// (q', Q') with R_u from the inner control ellipsoid of @p p. Throws
/// InfeasiblePolicyError(interval) when R_u is not PSD.
TubeRate tube_rhs(const ControlAffineModel& model, const Vec& q_x, const Mat& Q_x,
                  const IntervalParams& p, const FrobeniusBoundData& bounds, int interval = -1);

TubeTrajectory integrate_tube(const ControlAffineModel& model, const Vec& x0, const Mat& Q0,
                              const PolicyParams& params, double T, int N,
                              const FrobeniusBoundData& bounds, const TubeOptions& opts = {},
                              double t0 = 0.0);

/// Re-integrates intervals k..N-1 of @p tube in place from its node k, after
/// the caller changed tube.params for those intervals. Earlier nodes are kept.
void reintegrate_from(const ControlAffineModel& model, TubeTrajectory& tube, int k,
                      const FrobeniusBoundData& bounds, const TubeOptions& opts);

/// Enclosure of the reachable tube without feedback:
/// Q' = A Q + Q A' + (1/lambda + 1/kappa) Q + lambda B Q_w B' + kappa Omega_n.
TubeTrajectory propagate_openloop(const ControlAffineModel& model, const Ellipsoid& X0,
                                  const std::vector<Vec>& u_fixed, double T, int N,
                                  double lambda, double kappa, const FrobeniusBoundData& bounds,
                                  int n_sub = 4);

/// LHS - RHS of the support-function inequality
///   1/2 c'Q'c >= c'AQc - |R_u^{1/2} G(xi*)' c| |Q^{1/2} c|
///                + |Q^{1/2} c| |Omega_n^{1/2} c| + |Q^{1/2} c| |Q_w^{1/2} B' c|
/// at fine node @p j, with xi* the support point of c and Q' from tube_rhs.
/// Returns nullopt when c'Qc = 0 (degenerate direction, skipped).
std::optional<double> di_residual(const ControlAffineModel& model, const TubeTrajectory& tube,
                                  const Vec& c, int j, const FrobeniusBoundData& bounds);

/// Same check with a caller-supplied Q' (e.g. a finite difference of the
/// integrated trajectory).
std::optional<double> di_residual_with_rate(const ControlAffineModel& model,
                                            const TubeTrajectory& tube, const Vec& c, int j,
                                            const Mat& Q_dot, const FrobeniusBoundData& bounds);

struct ResidualSweep {
  double min_residual = kInfinity;
  int worst_node = -1;
  int checked = 0;
  int skipped = 0;
};

/// di_residual over @p n_dirs sampled directions at every fine node.
ResidualSweep di_residual_sweep(const ControlAffineModel& model, const TubeTrajectory& tube,
                                const FrobeniusBoundData& bounds, int n_dirs = 64);

}  // namespace ellitube

#endif  // ELLITUBE_TUBE_HPP_
