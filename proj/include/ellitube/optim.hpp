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

#ifndef ELLITUBE_OPTIM_HPP_
#define ELLITUBE_OPTIM_HPP_

/**
 * @file
 * @brief Augmented-Lagrangian solver with L-BFGS inner iterations and
 * central finite-difference gradients, for
 *
 *   minimize f(x)  subject to  g(x) <= 0.
 */

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace ellitube::optim {

struct Evaluation {
  double f = 0.0;
  Eigen::VectorXd g;
  /// False when the model could not be evaluated (treated as +inf).
  bool ok = true;
};

class Problem {
 public:
  virtual ~Problem() = default;
  virtual int n() const = 0;
  virtual int m() const = 0;
  virtual Evaluation evaluate(const Eigen::VectorXd& x) = 0;
  /// Called before a batch of evaluate_perturbed() calls around @p x.
  virtual void set_base(const Eigen::VectorXd& x) { base_ = x; }
  /// Evaluation at base + h e_j. Override to reuse work shared with the base
  /// point.
  virtual Evaluation evaluate_perturbed(int j, double h) {
    Eigen::VectorXd y = base_;
    y(j) += h;
    return evaluate(y);
  }
  /// Gradient of f + sum_i w_i g_i at @p x. Returns false when the problem
  /// has no analytic gradient (finite differences are used instead).
  virtual bool weighted_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                                 Eigen::VectorXd& grad) {
    (void)x;
    (void)w;
    (void)grad;
    return false;
  }

 protected:
  Eigen::VectorXd base_;
};

struct Options {
  int max_outer = 15;
  int max_inner = 150;
  /// Absolute feasibility tolerance on max(g).
  double feas_tol = 1e-6;
  /// Inner stop on the infinity norm of the merit gradient.
  double grad_tol = 1e-6;
  /// Inner stop when the merit decreases by less than this (relative) over
  /// five consecutive iterations.
  double stall_tol = 1e-10;
  /// Outer stop once feasible and |f_k - f_{k-1}| <= settle_tol (1 + |f_k|).
  double settle_tol = 1e-8;
  double rho_init = 10.0;
  /// Starting multipliers (size m); empty = zero.
  Eigen::VectorXd mu_init;
  double rho_growth = 10.0;
  double rho_max = 1e9;
  double fd_step = 1e-6;
  int lbfgs_memory = 10;
  /// Evaluations budget across the whole solve; 0 = unlimited.
  long max_evaluations = 0;
  std::function<void(const std::string&)> log;
};

struct Result {
  Eigen::VectorXd x;
  double f = 0.0;
  double max_violation = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  long evaluations = 0;
  bool feasible = false;
  bool converged = false;
  std::string message;
  /// Multipliers and penalty at exit, for warm starts.
  Eigen::VectorXd mu;
  double rho = 0.0;
};

/// Returns the best feasible iterate seen, or the last iterate when none was
/// feasible. Throws when x0 itself cannot be evaluated.
Result minimize(Problem& problem, const Eigen::VectorXd& x0, const Options& opts = {});

/// Unconstrained L-BFGS with user gradient; exposed for tests.
struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};
LbfgsResult lbfgs(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fg,
                  const Eigen::VectorXd& x0, int max_iter = 200, double grad_tol = 1e-8,
                  int memory = 10);

}  // namespace ellitube::optim

#endif  // ELLITUBE_OPTIM_HPP_
