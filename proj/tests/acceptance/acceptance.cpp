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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ellitube/closed_loop.hpp"
#include "ellitube/config.hpp"
#include "ellitube/ocp.hpp"

using namespace ellitube;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what) {
  std::printf("%s [%d] %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec uniform_in_ball(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v / v.norm() * std::pow(ud(rng), 1.0 / n);
}

Vec rk4_step(const ControlAffineModel& m, const Vec& x, const Vec& u, const Vec& w, double h) {
  const Vec k1 = m.dynamics(x, u, w);
  const Vec k2 = m.dynamics(x + 0.5 * h * k1, u, w);
  const Vec k3 = m.dynamics(x + 0.5 * h * k2, u, w);
  const Vec k4 = m.dynamics(x + h * k3, u, w);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Open-loop enclosure over the first n intervals, for the (lambda, kappa)
// pair that stays finite and inside the Hessian domain the longest.
struct OpenLoopScan {
  TubeTrajectory tube;
  double lambda = 0.0;
  double kappa = 0.0;
  int intervals = 0;
};

OpenLoopScan scan_openloop(const ControlAffineModel& m, const TubeOCP& ocp,
                           const std::vector<Vec>& u, const FrobeniusBoundData& bounds) {
  OpenLoopScan best;
  const double dt = ocp.T / ocp.N;
  for (double lambda : {0.1, 0.3, 1.0, 3.0, 10.0}) {
    for (double kappa : {0.3, 1.0, 3.0, 10.0, 30.0, 100.0}) {
      for (int n = std::max(best.intervals, 1); n <= ocp.N; ++n) {
        try {
          TubeTrajectory t = propagate_openloop(
              m, Ellipsoid::point(ocp.x_hat), std::vector<Vec>(u.begin(), u.begin() + n),
              n * dt, n, lambda, kappa, bounds, ocp.n_sub);
          if (!t.valid) break;
          if (n > best.intervals || t.nodes.back().Q.trace() < best.tube.nodes.back().Q.trace())
            best = {std::move(t), lambda, kappa, n};
        } catch (const Error&) {
          break;
        }
      }
    }
  }
  return best;
}

}  // namespace

int main() {
  const ExperimentConfig cfg = load_config(ELLITUBE_SOURCE_DIR "/configs/case_study.json");
  const ModelPtr model = build_model(cfg);
  const FrobeniusBoundData bounds = compute_frobenius_constants(*model);
  const TubeOCP ocp = build_tube_ocp(cfg, model);
  const NominalOCP nominal = build_nominal_ocp(cfg, model);

  // 1. Case-study feasibility.
  auto t0 = std::chrono::steady_clock::now();
  const SolveReport rep = solve_tube_ocp(ocp, bounds);
  const double solve_time = seconds_since(t0);
  const TubeTrajectory& tube = rep.tube;
  const double residual = max_state_residual(tube, ocp.constraints);
  const double end_norm = tube.nodes.back().q.norm();
  report(1, residual <= 1e-6 && tube.valid && end_norm <= 0.15 && solve_time <= 300.0,
         "case-study tube: max residual " + fmt("%.3g", residual) + ", valid " +
             (tube.valid ? "yes" : "no") + ", |q(T)| " + fmt("%.4f", end_norm) + ", " +
             fmt("%.1f s", solve_time) + " (" + rep.message + ")");

  // 2 and 3. Robust feedback and certainty-equivalent MPC on the same scenarios.
  {
    CompareOptions co = build_compare(cfg);
    co.n_scenarios = 200;
    co.robust_mode = RobustMode::single_tube;
    co.run_ce = false;
    t0 = std::chrono::steady_clock::now();
    const Comparison robust = compare_controllers(ocp, nominal, bounds, co, &rep);
    const double robust_time = seconds_since(t0);
    const ControllerSummary& r = robust.rows.front();
    double min_margin = std::numeric_limits<double>::infinity();
    for (const auto& s : robust.robust) min_margin = std::min(min_margin, s.min_margin);
    report(2, r.violating == 0 && r.containment_violating == 0 && r.failed == 0 && robust_time <= 120.0,
           "robust feedback, 200 scenarios: " + std::to_string(r.violating) +
               " constraint and " + std::to_string(r.containment_violating) +
               " containment violations, min margin " + fmt("%.3g", min_margin) + ", " +
               fmt("%.1f s", robust_time));

    co.run_robust = false;
    co.run_ce = true;
    const Comparison ce = compare_controllers(ocp, nominal, bounds, co);
    const ControllerSummary& c = ce.rows.front();
    const std::vector<Vec> calm(static_cast<std::size_t>(receding_steps(ocp.T, ocp.N, co.receding)),
                                model->disturbance_set().center());
    const ScenarioResult undisturbed = run_ce_baseline(nominal, nominal.x_hat, calm, co.receding);
    report(3, c.violation_rate >= 0.2 && c.violation_rate <= 0.8 && undisturbed.max_residual <= 1e-3,
           "certainty-equivalent MPC: violation rate " + fmt("%.3f", c.violation_rate) +
               ", undisturbed max residual " + fmt("%.3g", undisturbed.max_residual));
  }

  // 4. Differential-inequality certificate on every tube computed here.
  const OpenLoopScan scan = scan_openloop(*model, ocp, tube.params.u_x, bounds);
  {
    double worst = di_residual_sweep(*model, tube, bounds, 64).min_residual;
    if (scan.intervals > 0)
      worst = std::min(worst, di_residual_sweep(*model, scan.tube, bounds, 64).min_residual);
    report(4, worst >= -1e-6,
           "min support-function residual over the solved and open-loop tubes " +
               fmt("%.3g", worst));
  }

  // 5. Nonlinearity bounder soundness.
  {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ud;
    const Box& box = model->hessian_domain();
    int configs = 0, violations = 0;
    double worst = 0.0;
    while (configs < 20) {
      Vec q(2);
      for (int i = 0; i < 2; ++i) q(i) = box.lower(i) + ud(rng) * (box.upper(i) - box.lower(i));
      Mat L = Mat::Random(2, 2);
      Mat Q = 0.05 * ud(rng) * L * L.transpose();
      if (!box.contains(Ellipsoid(q, Q))) continue;
      ++configs;
      const Ellipsoid On(Vec::Zero(2), omega_n(bounds, Q));
      const Mat root = sqrt_psd(Q);
      for (int s = 0; s < 10000; ++s) {
        const Vec d = root * uniform_in_ball(rng, 2);
        const double m = ellipsoid_metric(On, eval_nonlinearity_remainder(*model, q, d));
        worst = std::max(worst, m);
        if (m > 1.0 + 1e-12) ++violations;
      }
    }
    report(5, violations == 0,
           "remainder bound: " + std::to_string(violations) +
               " of 200000 samples outside Omega_n, worst metric " + fmt("%.3f", worst));
  }

  // 6. Inner control ellipsoid containment.
  {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> ud;
    const Ellipsoid& U = model->control_set();
    const Mat root = sqrt_psd(U.shape());
    double worst = std::numeric_limits<double>::infinity();
    int bad = 0;
    for (int s = 0; s < 1000; ++s) {
      const Vec z = uniform_in_ball(rng, 1);
      const double lo = std::max(z.squaredNorm(), 1e-6);
      const double gamma = lo + ud(rng) * (1.0 - lo);
      const Vec u = U.center() + root * z;
      const InnerControl ic = inner_control_ellipsoid(U.center(), U.shape(), u, gamma);
      const Containment c = contains(U, Ellipsoid(u, ic.R_u), 256);
      worst = std::min(worst, c.margin);
      if (!c.contained || c.margin < -1e-9) ++bad;
    }
    report(6, bad == 0, "inner control ellipsoids: " + std::to_string(bad) +
                            " of 1000 not contained, worst margin " + fmt("%.3g", worst));
  }

  // 7. Open- vs closed-loop tubes; the open-loop tube must contain sampled
  // open-loop trajectories. Checked over the longest horizon on which an
  // open-loop enclosure exists; the criterion needs the full horizon.
  {
    const TubeTrajectory& open = scan.tube;
    const int n = scan.intervals;
    const double horizon = n * ocp.T / ocp.N;
    bool closed_smaller = false;
    int escaped = 0;
    if (n > 0) {
      closed_smaller = tube.nodes[static_cast<std::size_t>(n)].Q.trace() <
                       open.nodes.back().Q.trace();
      std::mt19937_64 rng(7);
      const Ellipsoid& W = model->disturbance_set();
      const Mat wroot = sqrt_psd(W.shape());
      const int sub = 8;  // integration steps per tube substep
      const int M = n * open.n_sub;
      const double h = horizon / (M * sub);
      for (int s = 0; s < 500; ++s) {
        Vec x = ocp.x_hat;
        bool out = false;
        for (int j = 0; j < M && !out; ++j) {
          const Vec w = W.center() + wroot * uniform_in_ball(rng, 2);
          const Vec& u = open.params.u_x[static_cast<std::size_t>(open.interval_of_fine(j))];
          for (int k = 0; k < sub; ++k) x = rk4_step(*model, x, u, w, h);
          const TubeNode& nd = open.fine[static_cast<std::size_t>(j + 1)];
          out = ellipsoid_metric(Ellipsoid(nd.q, nd.Q), x) > 1.0 + 1e-6;
        }
        escaped += out ? 1 : 0;
      }
    }
    report(7, n == ocp.N && closed_smaller && escaped == 0,
           "open-loop enclosure exists on [0, " + fmt("%.2f", horizon) + "] of [0, " +
               fmt("%.0f", ocp.T) + "] (lambda " + fmt("%g", scan.lambda) + ", kappa " +
               fmt("%g", scan.kappa) + "); there Tr Q closed " +
               fmt("%.4g", n > 0 ? tube.nodes[static_cast<std::size_t>(n)].Q.trace() : 0.0) +
               " vs open " + fmt("%.4g", n > 0 ? open.nodes.back().Q.trace() : 0.0) + ", " +
               std::to_string(escaped) + " of 500 open-loop trajectories escaped");
  }

  // 8. Scalar oracle: x' = a x + u + w with no feedback and no kappa terms has
  // Q' = (2a + 1/lambda) Q + lambda Q_w.
  {
    const double a = -1.0, lambda = 1.0, qw = 1.0;
    const ModelPtr scalar = scalar_linear(a, 1.0, qw, 4.0);
    const FrobeniusBoundData sb = compute_frobenius_constants(*scalar);
    IntervalParams p{Vec::Zero(1), 1.0, lambda, kInfinity, Mat::Zero(1, 1)};
    TubeOptions opts;
    opts.method = TubeMethod::rk4;
    opts.n_sub = 4;
    const TubeTrajectory st = integrate_tube(*scalar, Vec::Zero(1), Mat::Zero(1, 1),
                                             PolicyParams::constant(20, p), 1.0, 20, sb, opts);
    const double ae = 2.0 * a + 1.0 / lambda, b = lambda * qw;
    double err = 0.0;
    for (const TubeNode& nd : st.fine)
      err = std::max(err, std::abs(nd.Q(0, 0) - b / ae * (std::exp(ae * nd.t) - 1.0)));
    // Feedback in the scalar case: u_x - sqrt(R_u) sign(G c).
    IntervalParams fp{Vec::Constant(1, 0.5), 0.6, 1.0, 1.0, Mat::Constant(1, 1, -1.0)};
    auto ft = std::make_shared<const TubeTrajectory>(integrate_tube(
        *scalar, Vec::Zero(1), Mat::Constant(1, 1, 0.25), PolicyParams::constant(4, fp), 1.0, 4, sb));
    const FeedbackLaw law(scalar, ft);
    double ferr = 0.0;
    for (double t : {0.1, 0.4, 0.9}) {
      const int k = ft->interval_of(t);
      const double r = std::sqrt(ft->R_u[static_cast<std::size_t>(k)](0, 0));
      const double q = ft->at(t).center()(0);
      const double ux = ft->params.u_x[static_cast<std::size_t>(k)](0);
      ferr = std::max(ferr, std::abs(law(t, Vec::Constant(1, q + 0.1))(0) - (ux - r)));
      ferr = std::max(ferr, std::abs(law(t, Vec::Constant(1, q - 0.1))(0) - (ux + r)));
    }
    report(8, err <= 1e-8 && ferr <= 1e-12,
           "scalar tube vs closed form: max error " + fmt("%.3g", err) +
               "; feedback vs u_x -/+ sqrt(R_u): max error " + fmt("%.3g", ferr));
  }

  // 9. Terminal-set certificate, re-evaluated here.
  {
    TerminalSetOptions to;
    to.solver = cfg.solver;
    const TerminalSet ts = solve_terminal_set(*model, Vec::Zero(2), bounds, to);
    const double check = max_eigenvalue(phi_g(*model, Vec::Zero(2), ts.Y_ref.shape(), ts.S,
                                              model->control_set().shape(), ts.lambda, ts.kappa,
                                              model->control_set().center(), bounds));
    report(9, ts.certified && check <= 0.0 && min_eigenvalue(ts.Y_ref.shape()) > 0.0,
           "terminal set: lambda_max(Phi_g) " + fmt("%.3g", check) + ", Tr Q_ref " +
               fmt("%.4g", ts.Y_ref.shape().trace()));
  }

  // 10. Halving the integration step.
  {
    TubeOptions o4, o8;
    o4.n_sub = ocp.n_sub;
    o4.method = ocp.method;
    o8 = o4;
    o8.n_sub = 2 * ocp.n_sub;
    const TubeTrajectory a = integrate_tube(*model, ocp.x_hat, Mat::Zero(2, 2), tube.params,
                                            ocp.T, ocp.N, bounds, o4);
    const TubeTrajectory b = integrate_tube(*model, ocp.x_hat, Mat::Zero(2, 2), tube.params,
                                            ocp.T, ocp.N, bounds, o8);
    double diff = 0.0;
    for (std::size_t k = 0; k < a.nodes.size(); ++k)
      diff = std::max(diff, std::max((a.nodes[k].Q - b.nodes[k].Q).norm(),
                                     (a.nodes[k].q - b.nodes[k].q).norm()));
    report(10, diff <= 1e-6,
           "node change when halving the step: " + fmt("%.3g", diff));
  }

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
