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

#ifndef ELLITUBE_CLOSED_LOOP_HPP_
#define ELLITUBE_CLOSED_LOOP_HPP_

/**
 * @file
 * @brief Boundary feedback law of an ellipsoidal tube, disturbance sampling,
 * closed-loop simulation and the robust / certainty-equivalent MPC drivers.
 */

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "ellitube/ocp.hpp"

namespace ellitube {

/// mu(t, xi) = u_x - R_u G(xi*)' c / |R_u^{1/2} G(xi*)' c| with c the outward
/// normal of the tube cross-section through xi (extended to the whole
/// interior) and xi* the support point of c.
class FeedbackLaw {
 public:
  /// Throws Errc::precondition when the tube is not valid.
  FeedbackLaw(ModelPtr model, std::shared_ptr<const TubeTrajectory> tube,
              double eps_interior = 1e-9);

  Vec operator()(double t, const Vec& xi) const;

  const TubeTrajectory& tube() const { return *tube_; }
  const ControlAffineModel& model() const { return *model_; }

 private:
  ModelPtr model_;
  std::shared_ptr<const TubeTrajectory> tube_;
  double eps_;
};

Vec feedback(const FeedbackLaw& law, double t, const Vec& xi);

enum class DisturbanceMode { uniform_ball, boundary };

const char* to_string(DisturbanceMode m);
DisturbanceMode disturbance_mode_from_string(const std::string& s);

/// w_k = q_w + Q_w^{1/2} v_k, v_k uniform in the unit ball (uniform_ball) or
/// on the unit sphere (boundary). Deterministic per seed.
std::vector<Vec> sample_disturbance(const Vec& q_w, const Mat& Q_w, DisturbanceMode mode,
                                    std::uint64_t seed, int n_steps);

struct ConstraintViolation {
  int node = 0;
  int row = 0;
  double residual = 0.0;
};

struct ScenarioResult {
  std::string label;
  std::vector<double> t;
  std::vector<Vec> x;
  /// u and w applied on [t_j, t_{j+1}); the last entry repeats the previous one.
  std::vector<Vec> u;
  std::vector<Vec> w;
  /// 1 - (x - q)' Q^+ (x - q) at nodes that coincide with tube nodes; NaN
  /// elsewhere and for controllers without a tube.
  std::vector<double> margin;
  /// max_i h_i' x - eta_i per node (-inf without constraints).
  std::vector<double> residual;
  std::vector<ConstraintViolation> violations;
  int containment_violations = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  double max_residual = -std::numeric_limits<double>::infinity();
  /// Rectangle-rule integral of (x - x_ref)' D (x - x_ref) + |u|^2.
  double tracking_cost = 0.0;
  bool failed = false;
  double failed_at = std::numeric_limits<double>::quiet_NaN();
  std::string failure;
};

struct SimulationOptions {
  /// RK4 steps per tube interval; the feedback is re-evaluated and held on
  /// every step. The law switches at full authority, so the step must be
  /// small against the tube width for the sampled loop to track the
  /// continuous one.
  int n_sub = 512;
  /// Disturbance samples per tube interval, each held constant; must divide
  /// n_sub. Kept separate from n_sub so refining the integrator does not
  /// change the disturbance process.
  int w_sub = 8;
  LinearStateConstraints constraints;
  /// Inflation allowed before a node counts as a violation.
  double tolerance = 1e-6;
  /// Tracking-cost weights; D empty = identity, x_ref empty = 0.
  Mat D;
  Vec x_ref;
};

/// Simulates x' = f(x, w) + G(x) mu(t, x) over the tube horizon.
/// @p disturbance holds N * w_sub values.
ScenarioResult simulate_closed_loop(const ControlAffineModel& model, const FeedbackLaw& law,
                                    const Vec& x0, const std::vector<Vec>& disturbance,
                                    const SimulationOptions& opts);

struct RecedingOptions {
  double sampling_period = 0.25;
  double duration = 10.0;
  /// RK4 steps and disturbance samples per control interval of the OCP
  /// grid, as in SimulationOptions.
  int n_sub = 512;
  int w_sub = 8;
  double tolerance = 1e-6;
  /// Reuse the previous solution, shifted by one period, as the next guess.
  bool warm_start = true;
};

/// Number of disturbance samples run_receding_horizon / run_ce_baseline
/// consume; throws Errc::configuration when the sampling period or duration
/// does not fit the grid.
int receding_steps(double T, int N, const RecedingOptions& opts);

/// Robust tube MPC: at every sampling instant re-solve the tube OCP from the
/// measured state (Q = 0) and apply its feedback law until the next instant.
ScenarioResult run_receding_horizon(const TubeOCP& problem, const FrobeniusBoundData& bounds,
                                    const Vec& x0, const std::vector<Vec>& disturbance,
                                    const RecedingOptions& opts);

/// Certainty-equivalent MPC: nominal OCP re-solved at every sampling instant,
/// first control applied open loop until the next instant.
ScenarioResult run_ce_baseline(const NominalOCP& problem, const Vec& x0,
                               const std::vector<Vec>& disturbance, const RecedingOptions& opts);

enum class RobustMode {
  /// One tube solved from x0; its feedback law runs over the whole horizon.
  single_tube,
  /// Tube OCP re-solved at every sampling instant.
  receding,
};

struct CompareOptions {
  int n_scenarios = 200;
  std::uint64_t seed = 1;
  DisturbanceMode mode = DisturbanceMode::uniform_ball;
  RobustMode robust_mode = RobustMode::single_tube;
  RecedingOptions receding;
  /// Worker threads; 0 = hardware concurrency.
  int jobs = 0;
  bool run_robust = true;
  bool run_ce = true;
  /// Keep per-scenario traces (needed for CSV export).
  bool keep_traces = false;
};

struct ControllerSummary {
  std::string label;
  int scenarios = 0;
  int violating = 0;
  int containment_violating = 0;
  int failed = 0;
  double violation_rate = 0.0;
  double worst_residual = -std::numeric_limits<double>::infinity();
  double mean_cost = 0.0;
};

struct Comparison {
  std::vector<ControllerSummary> rows;
  /// Solved tube used by the single-tube robust controller.
  std::shared_ptr<const TubeTrajectory> tube;
  std::vector<ScenarioResult> robust;
  std::vector<ScenarioResult> ce;
};

/// Runs both controllers on the same seeded disturbance realizations
/// (scenario s uses seed + s). Scenarios run on a worker pool; results do
/// not depend on the number of workers.
Comparison compare_controllers(const TubeOCP& robust, const NominalOCP& ce,
                               const FrobeniusBoundData& bounds, const CompareOptions& opts,
                               const SolveReport* solved = nullptr);

/// Runs fn(i) for i in [0, n) on @p jobs threads (0 = hardware concurrency).
/// The first exception is rethrown after all workers stop.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace ellitube

#endif  // ELLITUBE_CLOSED_LOOP_HPP_
