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

#include "ellitube/tube.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <cstdio>
#include <cstdlib>

#include "linalg_detail.hpp"

namespace ellitube {

IntervalParams PolicyParams::at(int k) const {
  const auto i = static_cast<std::size_t>(k);
  return {u_x.at(i), gamma.at(i), lambda.at(i), kappa.at(i), S.at(i)};
}

void PolicyParams::set(int k, const IntervalParams& p) {
  const auto i = static_cast<std::size_t>(k);
  u_x.at(i) = p.u_x;
  gamma.at(i) = p.gamma;
  lambda.at(i) = p.lambda;
  kappa.at(i) = p.kappa;
  S.at(i) = p.S;
}

PolicyParams PolicyParams::constant(int N, const IntervalParams& p) {
  PolicyParams out;
  const auto n = static_cast<std::size_t>(std::max(N, 0));
  out.u_x.assign(n, p.u_x);
  out.gamma.assign(n, p.gamma);
  out.lambda.assign(n, p.lambda);
  out.kappa.assign(n, p.kappa);
  out.S.assign(n, p.S);
  return out;
}

void PolicyParams::validate(const ControlAffineModel& model) const {
  const std::size_t N = u_x.size();
  require_dims(gamma.size() == N && lambda.size() == N && kappa.size() == N && S.size() == N,
               "PolicyParams");
  for (std::size_t k = 0; k < N; ++k) {
    const std::string at = " on interval " + std::to_string(k);
    require_dims(u_x[k].size() == model.n_u() && S[k].rows() == model.n_x() &&
                     S[k].cols() == model.n_u(),
                 "PolicyParams");
    if (!(gamma[k] >= kGammaMin && gamma[k] <= 1.0))
      throw Error(Errc::parameter, "gamma outside [1e-4, 1]" + at);
    if (!(lambda[k] >= kMultiplierMin && lambda[k] <= kMultiplierMax))
      throw Error(Errc::parameter, "lambda outside [1e-3, 1e6]" + at);
    if (!((kappa[k] >= kMultiplierMin && kappa[k] <= kMultiplierMax) || kappa[k] == kInfinity))
      throw Error(Errc::parameter, "kappa outside [1e-3, 1e6]" + at);
    const Mat SS = S[k] * S[k].transpose();
    if (max_eigenvalue(SS) > 1.0 + 1e-9)
      throw Error(Errc::parameter, "S S' exceeds the identity" + at);
    if (!(ellipsoid_metric(model.control_set(), u_x[k], 1e-9) <= 1.0 + 1e-9))
      throw Error(Errc::precondition, "u_x outside the control set" + at);
  }
}

Mat clamp_spectral(const Mat& S) {
  if (S.size() == 0) return S;
  Eigen::JacobiSVD<Mat> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 1.0) return S;
  Vec clipped = sv.cwiseMin(1.0);
  return svd.matrixU() * clipped.asDiagonal() * svd.matrixV().transpose();
}

int TubeTrajectory::interval_of(double t) const {
  const int n = N();
  if (n <= 0) return 0;
  const double h = horizon() / n;
  const int k = static_cast<int>(std::floor((t - t0()) / h));
  return std::clamp(k, 0, n - 1);
}

int TubeTrajectory::interval_of_fine(int j) const {
  return std::clamp(j / std::max(n_sub, 1), 0, std::max(N() - 1, 0));
}

Ellipsoid TubeTrajectory::at(double t) const {
  if (fine.empty()) throw Error(Errc::precondition, "TubeTrajectory::at: empty tube");
  const double span = horizon();
  const double tol = 1e-12 * (1.0 + std::abs(span));
  if (t < t0() - tol || t > grid.back() + tol) {
    throw Error(Errc::precondition, "TubeTrajectory::at: t = " + std::to_string(t) +
                                        " outside the tube horizon");
  }
  const int M = static_cast<int>(fine.size()) - 1;
  if (M == 0) return Ellipsoid(fine[0].q, fine[0].Q);
  const double s = std::clamp((t - t0()) / span * M, 0.0, static_cast<double>(M));
  const int j = std::min(static_cast<int>(std::floor(s)), M - 1);
  const double a = s - j;
  const TubeNode& l = fine[static_cast<std::size_t>(j)];
  const TubeNode& r = fine[static_cast<std::size_t>(j + 1)];
  if (a == 0.0) return Ellipsoid(l.q, l.Q);
  Mat Q = (1.0 - a) * l.Q + a * r.Q;
  Vec q = (1.0 - a) * l.q + a * r.q;
  const auto seg = static_cast<std::size_t>(j);
  if (seg < dq_start.size() && seg < dq_end.size()) {
    const double h = r.t - l.t;
    const double a2 = a * a;
    const double a3 = a2 * a;
    q = (2 * a3 - 3 * a2 + 1) * l.q + (a3 - 2 * a2 + a) * h * dq_start[seg] +
        (-2 * a3 + 3 * a2) * r.q + (a3 - a2) * h * dq_end[seg];
  }
  return Ellipsoid(q, 0.5 * (Q + Q.transpose()));
}

namespace {

void check_multipliers(double lambda, double kappa, const FrobeniusBoundData& bounds) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(Errc::parameter, "phi_g: lambda must be positive and finite");
  if (!(kappa > 0.0)) throw Error(Errc::parameter, "phi_g: kappa must be positive");
  if (kappa == kInfinity && !bounds.is_zero())
    throw Error(Errc::parameter, "phi_g: kappa = inf requires a zero nonlinearity bound");
}

// Phi_g with precomputed R_u^{1/2}; S is used as given.
Mat phi_impl(const ControlAffineModel& model, const Vec& q, const Mat& Q, const Mat& S,
             const Mat& R, const Mat& sqrtR, double lambda, double kappa, const Vec& u_x,
             const FrobeniusBoundData& bounds) {
  const Mat A = model.linearization_A(q, u_x);
  const Mat B = model.linearization_B(q);
  const Mat& Qw = model.disturbance_set().shape();
  Mat P = A * Q;
  P += P.transpose().eval();
  if (!detail::is_zero(sqrtR) && !detail::is_zero(S) && !detail::is_zero(Q)) {
    const Mat G = model.input_matrix(q);
    const Mat M = detail::sqrt_sym_clipped(Q) * S * sqrtR * G.transpose();
    P += M + M.transpose();
  }
  const double inv = 1.0 / lambda + (kappa == kInfinity ? 0.0 : 1.0 / kappa);
  P += inv * Q;
  if (!model.input_matrix_constant()) P += omega_G(model, Q, R);
  P += lambda * (B * Qw * B.transpose());
  if (kappa != kInfinity && !bounds.is_zero()) P += kappa * omega_n(bounds, Q);
  return 0.5 * (P + P.transpose());
}

bool in_box(const Box& box, const Vec& q, const Mat& Q) {
  for (int i = 0; i < box.dim(); ++i) {
    const double half = std::sqrt(std::max(Q(i, i), 0.0));
    if (!(q(i) + half <= box.upper(i) && q(i) - half >= box.lower(i))) return false;
  }
  return true;
}

struct IntervalData {
  Vec u;
  Mat S;
  Mat R;
  Mat sqrtR;
  double lambda;
  double kappa;
};

IntervalData prepare_interval(const ControlAffineModel& model, const IntervalParams& p, int k,
                              const TubeOptions& opts, Mat* R_out) {
  IntervalData d;
  d.u = p.u_x;
  d.S = clamp_spectral(p.S);
  d.lambda = std::clamp(p.lambda, kMultiplierMin, kMultiplierMax);
  d.kappa = p.kappa == kInfinity ? kInfinity : std::clamp(p.kappa, kMultiplierMin, kMultiplierMax);
  if (opts.openloop) {
    d.R = Mat::Zero(model.n_u(), model.n_u());
  } else {
    const Ellipsoid& U = model.control_set();
    d.R = inner_control_shape(U.center(), U.shape(), p.u_x, p.gamma);
    const double lo = repair_psd(d.R);
    const double scale = 1.0 + std::max(max_eigenvalue(d.R), 0.0);
    if (opts.strict && lo < -kPsdDustTol * scale) throw InfeasiblePolicyError(k, lo);
  }
  d.sqrtR = detail::sqrt_sym_clipped(d.R);
  if (R_out) *R_out = d.R;
  return d;
}

struct State {
  Vec q;
  Mat Q;
};

State rate(const ControlAffineModel& model, const State& s, const IntervalData& d,
           const FrobeniusBoundData& bounds) {
  const Vec w = model.disturbance_set().center();
  return {model.drift(s.q, w) + model.input_matrix(s.q) * d.u,
          phi_impl(model, s.q, s.Q, d.S, d.R, d.sqrtR, d.lambda, d.kappa, d.u, bounds)};
}

State rk4_step(const ControlAffineModel& model, const State& s, double h, const IntervalData& d,
               const FrobeniusBoundData& bounds) {
  const State k1 = rate(model, s, d, bounds);
  const State k2 = rate(model, {s.q + 0.5 * h * k1.q, s.Q + 0.5 * h * k1.Q}, d, bounds);
  const State k3 = rate(model, {s.q + 0.5 * h * k2.q, s.Q + 0.5 * h * k2.Q}, d, bounds);
  const State k4 = rate(model, {s.q + h * k3.q, s.Q + h * k3.Q}, d, bounds);
  return {s.q + (h / 6.0) * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
          s.Q + (h / 6.0) * (k1.Q + 2.0 * k2.Q + 2.0 * k3.Q + k4.Q)};
}

// Radau IIA works on y = [q; upper triangle of Q].
Eigen::VectorXd pack(const State& s) {
  const auto n = s.q.size();
  Eigen::VectorXd y(n + n * (n + 1) / 2);
  y.head(n) = s.q;
  Eigen::Index k = n;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) y(k++) = s.Q(i, j);
  return y;
}

State unpack(const Eigen::VectorXd& y, Eigen::Index n) {
  State s{y.head(n), Mat(n, n)};
  Eigen::Index k = n;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) s.Q(i, j) = s.Q(j, i) = y(k++);
  return s;
}

Eigen::VectorXd rate_packed(const ControlAffineModel& model, const Eigen::VectorXd& y,
                            const IntervalData& d, const FrobeniusBoundData& bounds) {
  return pack(rate(model, unpack(y, model.n_x()), d, bounds));
}

struct RadauTableau {
  double c[3];
  double a[3][3];
};

const RadauTableau& radau_tableau() {
  static const RadauTableau tab = [] {
    const double r6 = std::sqrt(6.0);
    RadauTableau t{};
    t.c[0] = (4.0 - r6) / 10.0;
    t.c[1] = (4.0 + r6) / 10.0;
    t.c[2] = 1.0;
    t.a[0][0] = (88.0 - 7.0 * r6) / 360.0;
    t.a[0][1] = (296.0 - 169.0 * r6) / 1800.0;
    t.a[0][2] = (-2.0 + 3.0 * r6) / 225.0;
    t.a[1][0] = (296.0 + 169.0 * r6) / 1800.0;
    t.a[1][1] = (88.0 + 7.0 * r6) / 360.0;
    t.a[1][2] = (-2.0 - 3.0 * r6) / 225.0;
    t.a[2][0] = (16.0 - r6) / 36.0;
    t.a[2][1] = (16.0 + r6) / 36.0;
    t.a[2][2] = 1.0 / 9.0;
    return t;
  }();
  return tab;
}

// Newton data reused across the steps of one interval (the parameters are
// constant there, so the Jacobian drifts slowly).
struct RadauCache {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  double h = 0.0;
  bool fresh = false;
  bool have_lu = false;
  Eigen::VectorXd Z;  // last converged stage increments
};

void radau_factor(const ControlAffineModel& model, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& f0, double h, const IntervalData& d,
                  const FrobeniusBoundData& bounds, RadauCache& cache) {
  const RadauTableau& tab = radau_tableau();
  const Eigen::Index m = y.size();
  Eigen::MatrixXd J(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double e = 1e-7 * (1.0 + std::abs(y(j)));
    Eigen::VectorXd yp = y;
    yp(j) += e;
    J.col(j) = (rate_packed(model, yp, d, bounds) - f0) / e;
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(3 * m, 3 * m);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) M.block(i * m, j * m, m, m) -= h * tab.a[i][j] * J;
  cache.lu.compute(M);
  cache.h = h;
  cache.fresh = true;
  cache.have_lu = true;
}

bool radau_newton(const ControlAffineModel& model, const Eigen::VectorXd& y, double h,
                  const IntervalData& d, const FrobeniusBoundData& bounds, RadauCache& cache,
                  Eigen::VectorXd& Z) {
  const RadauTableau& tab = radau_tableau();
  const Eigen::Index m = y.size();
  const double tol = 1e-13 * (1.0 + y.cwiseAbs().maxCoeff());
  double prev = kInfinity;
  double theta = 0.5;
  for (int it = 0; it < 10; ++it) {
    Eigen::VectorXd F(3 * m);
    for (int i = 0; i < 3; ++i)
      F.segment(i * m, m) = rate_packed(model, y + Z.segment(i * m, m), d, bounds);
    Eigen::VectorXd G = -Z;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) G.segment(i * m, m) += h * tab.a[i][j] * F.segment(j * m, m);
    const Eigen::VectorXd dZ = cache.lu.solve(G);
    if (!dZ.allFinite()) return false;
    Z += dZ;
    const double nrm = dZ.cwiseAbs().maxCoeff();
    if (it > 0) {
      theta = nrm / prev;
      if (theta >= 0.9) return false;
    }
    if (nrm <= tol || (it > 0 && theta / (1.0 - theta) * nrm <= tol)) return true;
    prev = nrm;
  }
  return false;
}

// One Radau IIA step; returns false when Newton does not converge.
bool radau_try(const ControlAffineModel& model, const State& s, double h, const IntervalData& d,
               const FrobeniusBoundData& bounds, RadauCache& cache, State& out) {
  const Eigen::VectorXd y = pack(s);
  const Eigen::Index m = y.size();
  Eigen::VectorXd f0;
  auto initial_guess = [&]() {
    if (f0.size() == 0) f0 = rate_packed(model, y, d, bounds);
    Eigen::VectorXd Z(3 * m);
    const RadauTableau& tab = radau_tableau();
    for (int i = 0; i < 3; ++i) Z.segment(i * m, m) = tab.c[i] * h * f0;
    return Z;
  };
  if (!cache.have_lu || cache.h != h) {
    f0 = rate_packed(model, y, d, bounds);
    radau_factor(model, y, f0, h, d, bounds, cache);
  } else {
    cache.fresh = false;
  }
  Eigen::VectorXd Z =
      (cache.Z.size() == 3 * m && cache.h == h) ? cache.Z : initial_guess();
  if (!radau_newton(model, y, h, d, bounds, cache, Z)) {
    if (cache.fresh) return false;
    if (f0.size() == 0) f0 = rate_packed(model, y, d, bounds);
    radau_factor(model, y, f0, h, d, bounds, cache);
    Z = initial_guess();
    if (!radau_newton(model, y, h, d, bounds, cache, Z)) return false;
  }
  cache.Z = Z;
  out = unpack(y + Z.segment(2 * m, m), model.n_x());
  return true;
}

State radau_step(const ControlAffineModel& model, const State& s, double t, double h,
                 const IntervalData& d, const FrobeniusBoundData& bounds, RadauCache& cache,
                 int depth = 0) {
  State out;
  if (radau_try(model, s, h, d, bounds, cache, out)) return out;
  if (depth >= 6) {
    throw Error(Errc::integration_blowup,
                "integrate_tube: Newton failed to converge at t = " + std::to_string(t));
  }
  const State mid = radau_step(model, s, t, 0.5 * h, d, bounds, cache, depth + 1);
  return radau_step(model, mid, t + 0.5 * h, 0.5 * h, d, bounds, cache, depth + 1);
}

State step(const ControlAffineModel& model, const State& s, double t, double h,
           const IntervalData& d, const FrobeniusBoundData& bounds, TubeMethod method,
           RadauCache& cache) {
  return method == TubeMethod::rk4 ? rk4_step(model, s, h, d, bounds)
                                   : radau_step(model, s, t, h, d, bounds, cache);
}

void finish_step(State& s, double t, bool strict) {
  if (!s.q.allFinite() || !s.Q.allFinite()) throw IntegrationBlowUp(t);
  const double lo = repair_psd(s.Q);
  if (strict && lo < 0.0) {
    const double scale = 1.0 + std::max(max_eigenvalue(s.Q), 0.0);
    if (lo < -kPsdDustTol * scale) {
      throw Error(Errc::invariant_violation,
                  "integrate_tube: shape lost positive semidefiniteness at t = " +
                      std::to_string(t) + " (min eig " + std::to_string(lo) + ")");
    }
  }
}

bool singular(const Mat& Q) {
  const double top = std::max(max_eigenvalue(Q), 0.0);
  return min_eigenvalue(Q) <= 1e-12 * (1.0 + top);
}

}  // namespace

Mat phi_g(const ControlAffineModel& model, const Vec& q_x, const Mat& Q_x, const Mat& S,
          const Mat& R_u, double lambda, double kappa, const Vec& u_x,
          const FrobeniusBoundData& bounds) {
  const int n = model.n_x();
  require_dims(q_x.size() == n && Q_x.rows() == n && Q_x.cols() == n && S.rows() == n &&
                   S.cols() == model.n_u() && R_u.rows() == model.n_u() &&
                   R_u.cols() == model.n_u() && u_x.size() == model.n_u() &&
                   bounds.n_x() == n,
               "phi_g");
  check_multipliers(lambda, kappa, bounds);
  return phi_impl(model, q_x, Q_x, S, R_u, detail::sqrt_sym_clipped(R_u), lambda, kappa, u_x,
                  bounds);
}

TubeRate tube_rhs(const ControlAffineModel& model, const Vec& q_x, const Mat& Q_x,
                  const IntervalParams& p, const FrobeniusBoundData& bounds, int interval) {
  require_dims(p.u_x.size() == model.n_u() && q_x.size() == model.n_x(), "tube_rhs");
  check_multipliers(p.lambda, p.kappa, bounds);
  TubeOptions opts;
  opts.strict = true;
  const IntervalData d = prepare_interval(model, p, interval, opts, nullptr);
  const State r = rate(model, {q_x, Q_x}, d, bounds);
  return {r.q, r.Q};
}

namespace {

void integrate_from(const ControlAffineModel& model, TubeTrajectory& tube, int k_start,
                    const FrobeniusBoundData& bounds, const TubeOptions& opts) {
  const int N = tube.N();
  const int ns = tube.n_sub;
  const double h = tube.horizon() / (static_cast<double>(N) * ns);
  const Box& box = model.hessian_domain();
  for (int k = k_start; k < N; ++k) {
    const IntervalParams p = tube.params.at(k);
    if (opts.strict) check_multipliers(p.lambda, p.kappa, bounds);
    const IntervalData d =
        prepare_interval(model, p, k, opts, &tube.R_u[static_cast<std::size_t>(k)]);
    const TubeNode& start = tube.fine[static_cast<std::size_t>(k * ns)];
    State s{start.q, start.Q};
    RadauCache cache;
    // From a singular start the first interval runs on a graded mesh merged
    // with the substep nodes.
    std::vector<double> mesh;
    if (k == 0 && opts.startup_refinement > 1 && singular(s.Q)) {
      const int M = opts.startup_refinement;
      for (int m = 1; m <= M; ++m) {
        const double r = static_cast<double>(m) / M;
        mesh.push_back(ns * h * r * r * r * r);
      }
      for (int j = 1; j <= ns; ++j) mesh.push_back(j * h);
      std::sort(mesh.begin(), mesh.end());
    }
    const Vec& w0 = model.disturbance_set().center();
    std::size_t pos = 0;
    double local = 0.0;
    for (int j = 0; j < ns; ++j) {
      const int idx = k * ns + j;
      tube.dq_start[static_cast<std::size_t>(idx)] = model.dynamics(s.q, p.u_x, w0);
      const double t = tube.t0() + idx * h;
      if (!mesh.empty()) {
        const double target = (j + 1) * h;
        while (pos < mesh.size() && mesh[pos] <= target * (1.0 + 1e-12)) {
          const double dt = mesh[pos] - local;
          if (dt > 1e-14 * h) {
            s = step(model, s, tube.t0() + local, dt, d, bounds, opts.method, cache);
            finish_step(s, tube.t0() + mesh[pos], opts.strict);
          }
          local = mesh[pos++];
        }
      } else {
        s = step(model, s, t, h, d, bounds, opts.method, cache);
        finish_step(s, t + h, opts.strict);
      }
      TubeNode& out = tube.fine[static_cast<std::size_t>(idx + 1)];
      out.t = tube.t0() + (idx + 1) * h;
      if (idx + 1 == N * ns) out.t = tube.grid.back();
      out.q = s.q;
      out.Q = s.Q;
      out.in_domain = in_box(box, s.q, s.Q);
      tube.dq_end[static_cast<std::size_t>(idx)] = model.dynamics(s.q, p.u_x, w0);
    }
    tube.nodes[static_cast<std::size_t>(k + 1)] = tube.fine[static_cast<std::size_t>((k + 1) * ns)];
  }
  tube.valid = std::all_of(tube.fine.begin(), tube.fine.end(),
                           [](const TubeNode& n) { return n.in_domain; });
}

}  // namespace

TubeTrajectory integrate_tube(const ControlAffineModel& model, const Vec& x0, const Mat& Q0,
                              const PolicyParams& params, double T, int N,
                              const FrobeniusBoundData& bounds, const TubeOptions& opts,
                              double t0) {
  const int n = model.n_x();
  require_dims(x0.size() == n && Q0.rows() == n && Q0.cols() == n && bounds.n_x() == n,
               "integrate_tube");
  if (!(T > 0.0) || !std::isfinite(T)) throw Error(Errc::parameter, "integrate_tube: T must be > 0");
  if (N < 1) throw Error(Errc::parameter, "integrate_tube: N must be >= 1");
  if (opts.n_sub < 1) throw Error(Errc::parameter, "integrate_tube: n_sub must be >= 1");
  if (params.size() != N) {
    throw Error(Errc::dimension_mismatch, "integrate_tube: params have " +
                                              std::to_string(params.size()) +
                                              " intervals, expected " + std::to_string(N));
  }
  if (opts.strict) params.validate(model);
  const Ellipsoid X0(x0, Q0);  // validates the initial shape

  TubeTrajectory tube;
  tube.n_sub = opts.n_sub;
  tube.params = params;
  tube.openloop = opts.openloop;
  tube.grid.resize(static_cast<std::size_t>(N + 1));
  for (int k = 0; k <= N; ++k) tube.grid[static_cast<std::size_t>(k)] = t0 + T * k / N;
  tube.nodes.resize(static_cast<std::size_t>(N + 1));
  tube.fine.resize(static_cast<std::size_t>(N * opts.n_sub + 1));
  tube.R_u.assign(static_cast<std::size_t>(N), Mat::Zero(model.n_u(), model.n_u()));
  tube.dq_start.assign(static_cast<std::size_t>(N * opts.n_sub), Vec::Zero(n));
  tube.dq_end.assign(static_cast<std::size_t>(N * opts.n_sub), Vec::Zero(n));
  TubeNode first{t0, x0, Q0, in_box(model.hessian_domain(), x0, Q0)};
  tube.fine[0] = first;
  tube.nodes[0] = first;
  integrate_from(model, tube, 0, bounds, opts);
  return tube;
}

void reintegrate_from(const ControlAffineModel& model, TubeTrajectory& tube, int k,
                      const FrobeniusBoundData& bounds, const TubeOptions& opts) {
  if (k < 0 || k >= tube.N()) throw Error(Errc::parameter, "reintegrate_from: bad interval");
  integrate_from(model, tube, k, bounds, opts);
}

TubeTrajectory propagate_openloop(const ControlAffineModel& model, const Ellipsoid& X0,
                                  const std::vector<Vec>& u_fixed, double T, int N,
                                  double lambda, double kappa, const FrobeniusBoundData& bounds,
                                  int n_sub) {
  if (static_cast<int>(u_fixed.size()) != N) {
    throw Error(Errc::dimension_mismatch, "propagate_openloop: need one control per interval");
  }
  PolicyParams p = PolicyParams::constant(
      N, {Vec::Zero(model.n_u()), 1.0, lambda, kappa, Mat::Zero(model.n_x(), model.n_u())});
  p.u_x = u_fixed;
  TubeOptions opts;
  opts.n_sub = n_sub;
  opts.openloop = true;
  return integrate_tube(model, X0.center(), X0.shape(), p, T, N, bounds, opts);
}

std::optional<double> di_residual_with_rate(const ControlAffineModel& model,
                                            const TubeTrajectory& tube, const Vec& c, int j,
                                            const Mat& Q_dot, const FrobeniusBoundData& bounds) {
  require_dims(c.size() == model.n_x() && Q_dot.rows() == model.n_x(), "di_residual");
  if (j < 0 || j >= static_cast<int>(tube.fine.size()))
    throw Error(Errc::parameter, "di_residual: node index out of range");
  const Vec u = c / c.norm();
  const TubeNode& node = tube.fine[static_cast<std::size_t>(j)];
  const Mat& Q = node.Q;
  const double quad = u.dot(Q * u);
  if (!(quad > 1e-14 * (1.0 + detail::max_abs(Q))) || detail::is_zero(Q)) return std::nullopt;

  const int k = tube.interval_of_fine(j);
  const Vec& u_x = tube.params.u_x[static_cast<std::size_t>(k)];
  const Mat& R = tube.R_u[static_cast<std::size_t>(k)];
  const double sQc = std::sqrt(quad);
  const Vec xi = node.q + Q * u / sQc;
  const Mat A = model.linearization_A(node.q, u_x);
  const Mat B = model.linearization_B(node.q);
  const Mat Gxi = model.input_matrix(xi);
  const Vec Gc = Gxi.transpose() * u;
  const double term_u = std::sqrt(std::max(Gc.dot(R * Gc), 0.0));
  const double term_n = std::sqrt(std::max(u.dot(omega_n(bounds, Q) * u), 0.0));
  const Vec Bc = B.transpose() * u;
  const double term_w =
      std::sqrt(std::max(Bc.dot(model.disturbance_set().shape() * Bc), 0.0));
  const double rhs = u.dot(A * Q * u) - term_u * sQc + sQc * term_n + sQc * term_w;
  return 0.5 * u.dot(Q_dot * u) - rhs;
}

std::optional<double> di_residual(const ControlAffineModel& model, const TubeTrajectory& tube,
                                  const Vec& c, int j, const FrobeniusBoundData& bounds) {
  if (j < 0 || j >= static_cast<int>(tube.fine.size()))
    throw Error(Errc::parameter, "di_residual: node index out of range");
  const int k = tube.interval_of_fine(j);
  const TubeNode& node = tube.fine[static_cast<std::size_t>(j)];
  const auto ku = static_cast<std::size_t>(k);
  const Mat& R = tube.R_u[ku];
  const Mat S = clamp_spectral(tube.params.S[ku]);
  const Mat Q_dot = phi_impl(model, node.q, node.Q, S, R, detail::sqrt_sym_clipped(R),
                             std::clamp(tube.params.lambda[ku], kMultiplierMin, kMultiplierMax),
                             tube.params.kappa[ku] == kInfinity
                                 ? kInfinity
                                 : std::clamp(tube.params.kappa[ku], kMultiplierMin, kMultiplierMax),
                             tube.params.u_x[ku],
                             bounds);
  return di_residual_with_rate(model, tube, c, j, Q_dot, bounds);
}

ResidualSweep di_residual_sweep(const ControlAffineModel& model, const TubeTrajectory& tube,
                                const FrobeniusBoundData& bounds, int n_dirs) {
  ResidualSweep out;
  const Eigen::MatrixXd D = sample_directions(model.n_x(), n_dirs);
  for (int j = 0; j < static_cast<int>(tube.fine.size()); ++j) {
    for (int d = 0; d < D.rows(); ++d) {
      const Vec c = D.row(d).transpose();
      const auto r = di_residual(model, tube, c, j, bounds);
      if (!r) {
        ++out.skipped;
        continue;
      }
      ++out.checked;
      if (*r < out.min_residual) {
        out.min_residual = *r;
        out.worst_node = j;
      }
    }
  }
  return out;
}

}  // namespace ellitube
