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

#include "ellitube/closed_loop.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include "linalg_detail.hpp"

namespace ellitube {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vec rk4(const ControlAffineModel& model, const Vec& x, const Vec& u, const Vec& w, double h) {
  const Vec k1 = model.dynamics(x, u, w);
  const Vec k2 = model.dynamics(x + 0.5 * h * k1, u, w);
  const Vec k3 = model.dynamics(x + 0.5 * h * k2, u, w);
  const Vec k4 = model.dynamics(x + h * k3, u, w);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Appends node j of a trace and updates the violation record.
struct Recorder {
  ScenarioResult& r;
  const LinearStateConstraints& constraints;
  Mat D;
  Vec x_ref;
  double tol;

  void node(double t, const Vec& x, double margin) {
    const int j = static_cast<int>(r.t.size());
    r.t.push_back(t);
    r.x.push_back(x);
    r.margin.push_back(margin);
    if (!std::isnan(margin)) {
      r.min_margin = std::min(r.min_margin, margin);
      if (margin < -tol) ++r.containment_violations;
    }
    double worst = -std::numeric_limits<double>::infinity();
    const auto& rows = constraints.rows();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = rows[i].h.dot(x) - rows[i].eta;
      worst = std::max(worst, v);
      if (v > tol) r.violations.push_back({j, static_cast<int>(i), v});
    }
    r.residual.push_back(worst);
    r.max_residual = std::max(r.max_residual, worst);
  }

  void step(const Vec& x, const Vec& u, const Vec& w, double h) {
    r.u.push_back(u);
    r.w.push_back(w);
    const Vec e = x - x_ref;
    r.tracking_cost += h * (e.dot(D * e) + u.squaredNorm());
  }

  void close() {
    if (!r.u.empty()) {
      r.u.push_back(r.u.back());
      r.w.push_back(r.w.back());
    }
  }
};

Mat weight_or_identity(const Mat& D, int n) { return D.size() == 0 ? Mat(Mat::Identity(n, n)) : D; }
Vec ref_or_zero(const Vec& x, int n) { return x.size() == 0 ? Vec(Vec::Zero(n)) : x; }

// Simulation steps per disturbance sample.
int hold_steps(int n_sub, int w_sub) {
  if (n_sub < 1 || w_sub < 1 || n_sub % w_sub != 0)
    throw Error(Errc::parameter, "simulation: w_sub must be >= 1 and divide n_sub");
  return n_sub / w_sub;
}

double containment_margin(const TubeTrajectory& tube, double t, const Vec& x) {
  return 1.0 - ellipsoid_metric(tube.at(t), x);
}

}  // namespace

FeedbackLaw::FeedbackLaw(ModelPtr model, std::shared_ptr<const TubeTrajectory> tube,
                         double eps_interior)
    : model_(std::move(model)), tube_(std::move(tube)), eps_(eps_interior) {
  if (!model_ || !tube_) throw Error(Errc::precondition, "FeedbackLaw: null model or tube");
  if (!tube_->valid) throw Error(Errc::precondition, "FeedbackLaw: tube is not valid");
  require_dims(tube_->nodes.front().q.size() == model_->n_x(), "FeedbackLaw");
}

Vec FeedbackLaw::operator()(double t, const Vec& xi) const {
  const TubeTrajectory& tube = *tube_;
  require_dims(xi.size() == model_->n_x(), "feedback");
  const double slack = 1e-9 * (1.0 + std::abs(tube.grid.back()));
  if (t < tube.t0() - slack || t > tube.grid.back() + slack)
    throw Error(Errc::precondition, "feedback: t outside the tube horizon");
  t = std::clamp(t, tube.t0(), tube.grid.back());
  const int k = tube.interval_of(t);
  const Vec& u_x = tube.params.u_x[static_cast<std::size_t>(k)];
  const Mat& R = tube.R_u[static_cast<std::size_t>(k)];
  const Ellipsoid E = tube.at(t);
  const Mat& Q = E.shape();
  const Vec d = xi - E.center();
  if (detail::is_zero(Q)) return u_x;
  const double top = std::max(max_eigenvalue(Q), 0.0);
  if (d.norm() <= eps_ * (1.0 + std::sqrt(top))) return u_x;
  Vec c = pinv_psd(Q) * d;
  const double cn = c.norm();
  if (!(cn > 0.0)) return u_x;
  c /= cn;
  const double cQc = c.dot(Q * c);
  if (!(cQc > 0.0)) return u_x;
  const Vec xi_star = E.center() + Q * c / std::sqrt(cQc);
  const Vec g = model_->input_matrix(xi_star).transpose() * c;
  const Vec Rg = R * g;
  const double den = std::sqrt(std::max(g.dot(Rg), 0.0));
  if (den < 1e-12) return u_x;
  return u_x - Rg / den;
}

Vec feedback(const FeedbackLaw& law, double t, const Vec& xi) { return law(t, xi); }

const char* to_string(DisturbanceMode m) {
  return m == DisturbanceMode::boundary ? "boundary" : "uniform-ball";
}

DisturbanceMode disturbance_mode_from_string(const std::string& s) {
  if (s == "uniform-ball" || s == "uniform_ball") return DisturbanceMode::uniform_ball;
  if (s == "boundary") return DisturbanceMode::boundary;
  throw Error(Errc::configuration, "unknown disturbance mode '" + s + "'");
}

std::vector<Vec> sample_disturbance(const Vec& q_w, const Mat& Q_w, DisturbanceMode mode,
                                    std::uint64_t seed, int n_steps) {
  if (n_steps < 1) throw Error(Errc::parameter, "sample_disturbance: n_steps must be >= 1");
  const int n = static_cast<int>(q_w.size());
  require_dims(Q_w.rows() == n && Q_w.cols() == n, "sample_disturbance");
  const Mat L = sqrt_psd(Q_w);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(n_steps));
  for (int k = 0; k < n_steps; ++k) {
    Vec v(n);
    double nrm = 0.0;
    do {
      for (int i = 0; i < n; ++i) v(i) = normal(rng);
      nrm = v.norm();
    } while (nrm < 1e-12);
    v /= nrm;
    if (mode == DisturbanceMode::uniform_ball) v *= std::pow(unif(rng), 1.0 / n);
    out.push_back(q_w + L * v);
  }
  return out;
}

ScenarioResult simulate_closed_loop(const ControlAffineModel& model, const FeedbackLaw& law,
                                    const Vec& x0, const std::vector<Vec>& disturbance,
                                    const SimulationOptions& opts) {
  const TubeTrajectory& tube = law.tube();
  const int n = model.n_x();
  require_dims(x0.size() == n, "simulate_closed_loop");
  const int hold = hold_steps(opts.n_sub, opts.w_sub);
  const int M = tube.N() * opts.n_sub;
  if (static_cast<int>(disturbance.size()) < tube.N() * opts.w_sub)
    throw Error(Errc::parameter, "simulate_closed_loop: need N * w_sub disturbance values");
  const Ellipsoid X0(tube.nodes.front().q, tube.nodes.front().Q);
  if (ellipsoid_metric(X0, x0) > 1.0 + 1e-9)
    throw Error(Errc::precondition, "simulate_closed_loop: x0 is outside the initial tube set");

  ScenarioResult r;
  r.label = "robust";
  Recorder rec{r, opts.constraints, weight_or_identity(opts.D, n), ref_or_zero(opts.x_ref, n),
               opts.tolerance};
  const double h = tube.horizon() / M;
  Vec x = x0;
  for (int j = 0; j <= M; ++j) {
    const double t = tube.t0() + j * h;
    const bool aligned = (static_cast<long>(j) * tube.n_sub) % opts.n_sub == 0;
    rec.node(t, x, aligned ? containment_margin(tube, t, x) : kNaN);
    if (j == M) break;
    const Vec u = law(t, x);
    const Vec& w = disturbance[static_cast<std::size_t>(j / hold)];
    rec.step(x, u, w, h);
    x = rk4(model, x, u, w, h);
    if (!x.allFinite()) throw IntegrationBlowUp(t + h);
  }
  rec.close();
  return r;
}

int receding_steps(double T, int N, const RecedingOptions& opts) {
  if (!(opts.sampling_period > 0.0) || !(opts.duration > 0.0))
    throw Error(Errc::configuration, "receding horizon: period and duration must be positive");
  if (opts.n_sub < 1 || opts.w_sub < 1 || opts.n_sub % opts.w_sub != 0)
    throw Error(Errc::configuration, "receding horizon: w_sub must be >= 1 and divide n_sub");
  const double hold = T / (static_cast<double>(N) * opts.w_sub);
  auto whole = [&](double v, const char* what) {
    const double r = std::round(v / hold);
    if (r < 1.0 || std::abs(v / hold - r) > 1e-9 * std::max(1.0, r))
      throw Error(Errc::configuration, std::string("receding horizon: ") + what +
                                           " is not a multiple of the disturbance sample length");
    return static_cast<int>(r);
  };
  whole(opts.sampling_period, "sampling period");
  const int total = whole(opts.duration, "duration");
  const double dt = T / N;
  const double a = opts.sampling_period / dt;
  const double b = dt / opts.sampling_period;
  if (std::abs(a - std::round(a)) > 1e-9 * std::max(1.0, a) &&
      std::abs(b - std::round(b)) > 1e-9 * std::max(1.0, b))
    throw Error(Errc::configuration,
                "receding horizon: sampling period and grid spacing must divide one another");
  if (opts.sampling_period > T + 1e-12)
    throw Error(Errc::configuration, "receding horizon: sampling period exceeds the horizon");
  return total;
}

namespace {

int steps_per_period(double T, int N, const RecedingOptions& opts) {
  const double h = T / (static_cast<double>(N) * opts.n_sub);
  return static_cast<int>(std::round(opts.sampling_period / h));
}

int shift_intervals(double T, int N, double period) {
  const double s = period / (T / N);
  const double r = std::round(s);
  return (r >= 1.0 && std::abs(s - r) <= 1e-9 * r) ? static_cast<int>(r) : 0;
}

template <class V>
void shift_left(std::vector<V>& v, int s) {
  if (s <= 0 || v.empty()) return;
  const int n = static_cast<int>(v.size());
  for (int k = 0; k < n; ++k) v[static_cast<std::size_t>(k)] = v[static_cast<std::size_t>(std::min(k + s, n - 1))];
}

void mark_failed(ScenarioResult& r, double t, const std::string& why) {
  if (r.failed) return;
  r.failed = true;
  r.failed_at = t;
  r.failure = why;
}

}  // namespace

ScenarioResult run_receding_horizon(const TubeOCP& problem, const FrobeniusBoundData& bounds,
                                    const Vec& x0, const std::vector<Vec>& disturbance,
                                    const RecedingOptions& opts) {
  problem.validate();
  const ControlAffineModel& model = *problem.model;
  const int samples = receding_steps(problem.T, problem.N, opts);
  const int hold = hold_steps(opts.n_sub, opts.w_sub);
  const int total = samples * hold;
  const int per = steps_per_period(problem.T, problem.N, opts);
  if (static_cast<int>(disturbance.size()) < samples)
    throw Error(Errc::parameter, "run_receding_horizon: disturbance sequence too short");
  const double h = problem.T / (static_cast<double>(problem.N) * opts.n_sub);
  const int shift = shift_intervals(problem.T, problem.N, opts.sampling_period);

  ScenarioResult r;
  r.label = "robust";
  Recorder rec{r, problem.constraints, problem.objective.D, problem.objective.x_ref,
               opts.tolerance};
  TubeOCP ocp = problem;
  std::optional<PolicyParams> guess = problem.initial_guess;
  Vec x = x0;
  int j = 0;
  while (j < total) {
    const double t_i = problem.t0 + j * h;
    ocp.x_hat = x;
    ocp.t0 = t_i;
    ocp.initial_guess = guess;
    std::shared_ptr<const TubeTrajectory> tube;
    try {
      SolveReport rep = solve_tube_ocp(ocp, bounds);
      if (!rep.converged) mark_failed(r, t_i, "tube OCP did not converge: " + rep.message);
      tube = std::make_shared<const TubeTrajectory>(std::move(rep.tube));
    } catch (const Error& e) {
      mark_failed(r, t_i, e.what());
      break;
    }
    if (!tube->valid) {
      mark_failed(r, t_i, "tube leaves the Hessian domain");
      break;
    }
    const FeedbackLaw law(problem.model, tube);
    for (int s = 0; s < per && j < total; ++s, ++j) {
      const double t = problem.t0 + j * h;
      const bool aligned = (static_cast<long>(s) * tube->n_sub) % opts.n_sub == 0;
      rec.node(t, x, aligned ? containment_margin(*tube, t, x) : kNaN);
      const Vec u = law(t, x);
      const Vec& w = disturbance[static_cast<std::size_t>(j / hold)];
      rec.step(x, u, w, h);
      x = rk4(model, x, u, w, h);
      if (!x.allFinite()) throw IntegrationBlowUp(t + h);
    }
    if (opts.warm_start) {
      PolicyParams next = tube->params;
      shift_left(next.u_x, shift);
      shift_left(next.gamma, shift);
      shift_left(next.lambda, shift);
      shift_left(next.kappa, shift);
      shift_left(next.S, shift);
      guess = next;
    }
  }
  if (!r.failed || j >= total) rec.node(problem.t0 + j * h, x, kNaN);
  rec.close();
  return r;
}

ScenarioResult run_ce_baseline(const NominalOCP& problem, const Vec& x0,
                               const std::vector<Vec>& disturbance, const RecedingOptions& opts) {
  if (!problem.model) throw Error(Errc::configuration, "run_ce_baseline: model is not set");
  const ControlAffineModel& model = *problem.model;
  const int samples = receding_steps(problem.T, problem.N, opts);
  const int hold = hold_steps(opts.n_sub, opts.w_sub);
  const int total = samples * hold;
  const int per = steps_per_period(problem.T, problem.N, opts);
  if (static_cast<int>(disturbance.size()) < samples)
    throw Error(Errc::parameter, "run_ce_baseline: disturbance sequence too short");
  const double h = problem.T / (static_cast<double>(problem.N) * opts.n_sub);
  const int shift = shift_intervals(problem.T, problem.N, opts.sampling_period);

  ScenarioResult r;
  r.label = "certainty-equivalent";
  Recorder rec{r, problem.constraints, problem.D, problem.x_ref, opts.tolerance};
  NominalOCP ocp = problem;
  Vec x = x0;
  int j = 0;
  while (j < total) {
    const double t_i = j * h;
    ocp.x_hat = x;
    NominalSolution sol;
    try {
      sol = solve_nominal_ocp(ocp);
    } catch (const Error& e) {
      mark_failed(r, t_i, e.what());
      break;
    }
    if (!sol.converged) mark_failed(r, t_i, "nominal OCP did not converge: " + sol.message);
    for (int s = 0; s < per && j < total; ++s, ++j) {
      const double t = j * h;
      rec.node(t, x, kNaN);
      const int k = std::min(s / opts.n_sub, problem.N - 1);
      const Vec& u = sol.u[static_cast<std::size_t>(k)];
      const Vec& w = disturbance[static_cast<std::size_t>(j / hold)];
      rec.step(x, u, w, h);
      x = rk4(model, x, u, w, h);
      if (!x.allFinite()) throw IntegrationBlowUp(t + h);
    }
    if (opts.warm_start) {
      shift_left(sol.u, shift);
      ocp.initial_controls = sol.u;
    }
  }
  rec.node(j * h, x, kNaN);
  rec.close();
  return r;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = std::min(jobs, n);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (error) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

namespace {

ControllerSummary summarize(const std::string& label, const std::vector<ScenarioResult>& runs) {
  ControllerSummary s;
  s.label = label;
  s.scenarios = static_cast<int>(runs.size());
  double cost = 0.0;
  for (const auto& r : runs) {
    if (!r.violations.empty()) ++s.violating;
    if (r.containment_violations > 0) ++s.containment_violating;
    if (r.failed) ++s.failed;
    s.worst_residual = std::max(s.worst_residual, r.max_residual);
    cost += r.tracking_cost;
  }
  if (s.scenarios > 0) {
    s.violation_rate = static_cast<double>(s.violating) / s.scenarios;
    s.mean_cost = cost / s.scenarios;
  }
  return s;
}

// Keeps the summary fields only.
ScenarioResult strip(ScenarioResult r) {
  r.t.clear();
  r.x.clear();
  r.u.clear();
  r.w.clear();
  r.margin.clear();
  r.residual.clear();
  return r;
}

}  // namespace

Comparison compare_controllers(const TubeOCP& robust, const NominalOCP& ce,
                               const FrobeniusBoundData& bounds, const CompareOptions& opts,
                               const SolveReport* solved) {
  Comparison out;
  if (opts.n_scenarios <= 0) return out;
  const ControlAffineModel& model = *robust.model;
  const RecedingOptions& ro = opts.receding;
  int steps = robust.N * ro.w_sub;
  if (opts.run_ce || opts.robust_mode == RobustMode::receding)
    steps = std::max(steps, receding_steps(robust.T, robust.N, ro));

  FeedbackLaw* law_ptr = nullptr;
  std::unique_ptr<FeedbackLaw> law;
  if (opts.run_robust && opts.robust_mode == RobustMode::single_tube) {
    if (solved) {
      out.tube = std::make_shared<const TubeTrajectory>(solved->tube);
    } else {
      SolveReport rep = solve_tube_ocp(robust, bounds);
      if (!rep.tube.valid)
        throw Error(Errc::not_converged, "compare: solved tube leaves the Hessian domain");
      out.tube = std::make_shared<const TubeTrajectory>(std::move(rep.tube));
    }
    law = std::make_unique<FeedbackLaw>(robust.model, out.tube);
    law_ptr = law.get();
  }

  const int n = opts.n_scenarios;
  if (opts.run_robust) out.robust.resize(static_cast<std::size_t>(n));
  if (opts.run_ce) out.ce.resize(static_cast<std::size_t>(n));
  SimulationOptions so;
  so.n_sub = ro.n_sub;
  so.w_sub = ro.w_sub;
  so.constraints = robust.constraints;
  so.tolerance = ro.tolerance;
  so.D = robust.objective.D;
  so.x_ref = robust.objective.x_ref;
  const Ellipsoid& W = model.disturbance_set();
  parallel_for(n, opts.jobs, [&](int s) {
    const auto su = static_cast<std::size_t>(s);
    const std::vector<Vec> w =
        sample_disturbance(W.center(), W.shape(), opts.mode, opts.seed + static_cast<std::uint64_t>(s), steps);
    if (opts.run_robust) {
      ScenarioResult r = law_ptr ? simulate_closed_loop(model, *law_ptr, robust.x_hat, w, so)
                                 : run_receding_horizon(robust, bounds, robust.x_hat, w, ro);
      out.robust[su] = opts.keep_traces ? std::move(r) : strip(std::move(r));
    }
    if (opts.run_ce) {
      ScenarioResult r = run_ce_baseline(ce, ce.x_hat, w, ro);
      out.ce[su] = opts.keep_traces ? std::move(r) : strip(std::move(r));
    }
  });
  if (opts.run_robust) out.rows.push_back(summarize("robust", out.robust));
  if (opts.run_ce) out.rows.push_back(summarize("certainty-equivalent", out.ce));
  return out;
}

}  // namespace ellitube
