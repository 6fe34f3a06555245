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

#include "ellitube/optim.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace ellitube::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BudgetExhausted {};

struct LbfgsState {
  std::deque<Eigen::VectorXd> s, y;
  std::deque<double> rho;
  int memory;

  Eigen::VectorXd direction(const Eigen::VectorXd& g) const {
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s.size());
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
      alpha[static_cast<std::size_t>(i)] = rho[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)].dot(q);
      q -= alpha[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
    }
    if (!s.empty()) q *= s.back().dot(y.back()) / y.back().squaredNorm();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double beta = rho[i] * y[i].dot(q);
      q += (alpha[i] - beta) * s[i];
    }
    return -q;
  }

  void push(const Eigen::VectorXd& ds, const Eigen::VectorXd& dy) {
    const double sy = ds.dot(dy);
    if (!(sy > 1e-12 * ds.norm() * dy.norm())) return;  // keeps H positive definite
    s.push_back(ds);
    y.push_back(dy);
    rho.push_back(1.0 / sy);
    if (static_cast<int>(s.size()) > memory) {
      s.pop_front();
      y.pop_front();
      rho.pop_front();
    }
  }

  void reset() {
    s.clear();
    y.clear();
    rho.clear();
  }
};

LbfgsResult run_lbfgs(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fg,
                      const Eigen::VectorXd& x0, int max_iter, double grad_tol, int memory,
                      double stall_tol) {
  LbfgsResult r;
  r.x = x0;
  Eigen::VectorXd g(x0.size());
  r.f = fg(r.x, &g);
  if (!std::isfinite(r.f)) return r;
  LbfgsState st{{}, {}, {}, memory};
  std::deque<double> history{r.f};
  for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
    r.grad_norm = g.cwiseAbs().maxCoeff();
    if (r.grad_norm <= grad_tol) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd d = st.direction(g);
    if (!(d.dot(g) < 0.0)) {
      st.reset();
      d = -g;
    }
    double step = st.s.empty() ? std::min(1.0, 1.0 / std::max(g.norm(), 1e-300)) : 1.0;
    const double slope = d.dot(g);
    bool accepted = false;
    Eigen::VectorXd x_new, g_new(g.size());
    double f_new = kInf;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = r.x + step * d;
      f_new = fg(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= r.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= (std::isfinite(f_new) ? 0.5 : 0.1);
    }
    if (!accepted) {
      if (st.s.empty()) break;  // steepest descent failed too
      st.reset();
      continue;
    }
    fg(x_new, &g_new);
    st.push(x_new - r.x, g_new - g);
    r.x = x_new;
    r.f = f_new;
    g = g_new;
    history.push_back(r.f);
    if (history.size() > 6) history.pop_front();
    if (history.size() == 6 &&
        history.front() - history.back() <= stall_tol * (1.0 + std::abs(history.back()))) {
      r.converged = true;
      ++r.iterations;
      break;
    }
  }
  r.grad_norm = g.cwiseAbs().maxCoeff();
  return r;
}

double max_violation(const Eigen::VectorXd& g) {
  return g.size() == 0 ? 0.0 : std::max(0.0, g.maxCoeff());
}

}  // namespace

LbfgsResult lbfgs(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fg,
                  const Eigen::VectorXd& x0, int max_iter, double grad_tol, int memory) {
  return run_lbfgs(fg, x0, max_iter, grad_tol, memory, 0.0);
}

Result minimize(Problem& problem, const Eigen::VectorXd& x0, const Options& opts) {
  const int n = problem.n();
  const int m = problem.m();
  if (x0.size() != n) throw std::invalid_argument("minimize: x0 has the wrong size");

  Result best;
  best.f = kInf;
  long evals = 0;
  auto count = [&]() {
    if (opts.max_evaluations > 0 && ++evals > opts.max_evaluations) throw BudgetExhausted{};
    if (opts.max_evaluations <= 0) ++evals;
  };

  Evaluation e0 = problem.evaluate(x0);
  ++evals;
  if (!e0.ok || !std::isfinite(e0.f)) {
    throw std::runtime_error("minimize: initial point cannot be evaluated");
  }
  auto consider = [&](const Eigen::VectorXd& x, const Evaluation& e) {
    const double v = max_violation(e.g);
    if (v <= opts.feas_tol && e.f < best.f) {
      best.x = x;
      best.f = e.f;
      best.max_violation = v;
      best.feasible = true;
    }
  };
  consider(x0, e0);

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
  const bool warm = opts.mu_init.size() == m && m > 0;
  if (warm) mu = opts.mu_init.cwiseMax(0.0);
  double rho = opts.rho_init;
  auto merit = [&](const Evaluation& e) {
    if (!e.ok || !std::isfinite(e.f) || !e.g.allFinite()) return kInf;
    double v = e.f;
    for (int i = 0; i < m; ++i) {
      const double t = std::max(0.0, mu(i) + rho * e.g(i));
      v += (t * t - mu(i) * mu(i)) / (2.0 * rho);
    }
    return v;
  };

  Eigen::VectorXd x = x0;
  Evaluation ex = e0;
  double prev_violation = max_violation(e0.g);
  double prev_f = e0.f;
  bool budget_hit = false;
  int inner_total = 0;
  int outer = 0;
  bool inner_converged = false;
  bool stopped = false;

  auto fg = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) -> double {
    count();
    Evaluation e = problem.evaluate(z);
    const double v = merit(e);
    if (std::isfinite(v)) consider(z, e);
    if (grad && std::isfinite(v)) {
      Eigen::VectorXd w(m);
      for (int i = 0; i < m; ++i) w(i) = std::max(0.0, mu(i) + rho * e.g(i));
      if (problem.weighted_gradient(z, w, *grad)) return v;
    }
    if (grad) {
      problem.set_base(z);
      for (int j = 0; j < n; ++j) {
        const double h = opts.fd_step * (1.0 + std::abs(z(j)));
        count();
        const double vp = merit(problem.evaluate_perturbed(j, h));
        count();
        const double vm = merit(problem.evaluate_perturbed(j, -h));
        if (std::isfinite(vp) && std::isfinite(vm)) {
          (*grad)(j) = (vp - vm) / (2.0 * h);
        } else if (std::isfinite(vp) && std::isfinite(v)) {
          (*grad)(j) = (vp - v) / h;
        } else if (std::isfinite(vm) && std::isfinite(v)) {
          (*grad)(j) = (v - vm) / h;
        } else {
          (*grad)(j) = 0.0;
        }
      }
    }
    return v;
  };

  try {
    for (outer = 0; outer < opts.max_outer; ++outer) {
      const LbfgsResult in =
          run_lbfgs(fg, x, opts.max_inner, opts.grad_tol, opts.lbfgs_memory, opts.stall_tol);
      inner_total += in.iterations;
      inner_converged = in.converged;
      x = in.x;
      count();
      ex = problem.evaluate(x);
      if (!ex.ok) break;
      consider(x, ex);
      const double viol = max_violation(ex.g);
      if (opts.log) {
        std::ostringstream os;
        os << "outer " << outer << ": f = " << ex.f << ", violation = " << viol
           << ", rho = " << rho << ", inner = " << in.iterations
           << ", |grad| = " << in.grad_norm;
        opts.log(os.str());
      }
      for (int i = 0; i < m; ++i) mu(i) = std::max(0.0, mu(i) + rho * ex.g(i));
      const bool feasible = viol <= opts.feas_tol;
      const bool settled = std::abs(prev_f - ex.f) <= opts.settle_tol * (1.0 + std::abs(ex.f));
      if (feasible && (settled || in.grad_norm <= opts.grad_tol) && (outer > 0 || warm)) {
        stopped = true;
        ++outer;
        break;
      }
      if (viol > 0.25 * prev_violation && !feasible) rho = std::min(rho * opts.rho_growth, opts.rho_max);
      prev_violation = viol;
      prev_f = ex.f;
    }
  } catch (const BudgetExhausted&) {
    budget_hit = true;
  }

  Result out = best;
  if (!best.feasible) {
    out.x = x;
    out.f = ex.f;
    out.max_violation = max_violation(ex.g);
    out.feasible = false;
  }
  out.outer_iterations = outer;
  out.inner_iterations = inner_total;
  out.evaluations = evals;
  out.converged = best.feasible && stopped && !budget_hit;
  out.mu = mu;
  out.rho = rho;
  if (budget_hit) {
    out.message = "evaluation budget exhausted";
  } else if (!best.feasible) {
    out.message = "no feasible iterate found";
  } else if (!out.converged) {
    out.message = "iteration cap reached; returning best feasible iterate";
  } else {
    out.message = inner_converged ? "converged" : "converged (inner iteration cap reached)";
  }
  return out;
}

}  // namespace ellitube::optim
