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

#include "ellitube/ocp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

#include "ellitube/kernels.hpp"
#include "linalg_detail.hpp"

namespace ellitube {

namespace {

constexpr int kTerminalDirs = 256;

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double logit(double p) {
  p = std::clamp(p, 1e-9, 1.0 - 1e-9);
  return std::log(p / (1.0 - p));
}

// z = r_max tanh(|v|) v / |v|.
Vec squash(const Vec& v, double r_max) {
  const double r = v.norm();
  if (r < 1e-12) return r_max * v;
  return (r_max * std::tanh(r) / r) * v;
}

Vec unsquash(Vec z, double r_max) {
  const double r = z.norm();
  if (r < 1e-300) return z;
  const double s = std::min(r / r_max, 1.0 - 1e-9);
  return (std::atanh(s) / r) * z;
}

// dz/dv of squash().
Mat squash_jacobian(const Vec& v, double r_max) {
  const int n = static_cast<int>(v.size());
  const double r = v.norm();
  if (r < 1e-8) return r_max * Mat::Identity(n, n);
  const double th = std::tanh(r);
  const double phi = th / r;
  const double dphi = ((1.0 - th * th) * r - th) / (r * r);
  return r_max * (phi * Mat::Identity(n, n) + (dphi / r) * v * v.transpose());
}

// S = R (I + R'R)^{-1/2}: a smooth bijection onto the open spectral ball.
Mat ball_from_raw(const Mat& R) {
  const Mat M = Mat::Identity(R.cols(), R.cols()) + R.transpose() * R;
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  const Vec d = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return R * (es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

Mat raw_from_ball(const Mat& S) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(S),
                                              Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd sv = svd.singularValues();
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    const double s = std::min(sv(i), 1.0 - 1e-6);
    sv(i) = s / std::sqrt(1.0 - s * s);
  }
  return Mat(svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose());
}

double max_violation(const Eigen::VectorXd& g) {
  return g.size() == 0 ? 0.0 : std::max(0.0, g.maxCoeff());
}

optim::Options optim_options(const SolverSettings& s) {
  optim::Options o;
  o.max_outer = s.max_outer;
  o.max_inner = s.max_inner;
  o.feas_tol = s.feas_tol;
  o.grad_tol = s.grad_tol;
  o.fd_step = s.fd_step;
  o.lbfgs_memory = s.lbfgs_memory;
  o.stall_tol = s.stall_tol;
  o.settle_tol = s.settle_tol;
  o.max_evaluations = s.max_evaluations;
  if (s.verbose) {
    const auto t0 = std::chrono::steady_clock::now();
    o.log = [t0](const std::string& m) {
      const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cerr << "  [" << t << " s] " << m << '\n';
    };
  }
  return o;
}

double running_cost(const TubeNode& node, const Mat& D, const Vec& x_ref, int n_x) {
  const Vec e = node.q - x_ref;
  return e.dot(D * e) + (D * node.Q).trace() / (n_x + 2.0);
}

// Terminal containment gaps support(end, c) - support(Y_ref, c).
void terminal_gaps(const TubeNode& end, const Ellipsoid& Y, Eigen::VectorXd& g, int offset) {
  const Eigen::MatrixXd Dirs = sample_directions(Y.dim(), kTerminalDirs);
  std::vector<double> se(kTerminalDirs), sy(kTerminalDirs);
  kernels::support_batch(Dirs, end.q, end.Q, se);
  kernels::support_batch(Dirs, Y.center(), Y.shape(), sy);
  for (int i = 0; i < kTerminalDirs; ++i) g(offset + i) = se[static_cast<std::size_t>(i)] - sy[static_cast<std::size_t>(i)];
}

// Decision layout: [v_0 .. v_{N-1}] (n_u each), then per block of intervals
// [theta_gamma, theta_lambda, theta_kappa (when the nonlinearity bound is
// nonzero), raw S (column-major)]. With one block per interval every
// parameter is free on every interval.
// u_x = q_u + Q_u^{1/2} z with |z| < 1 and gamma > |z|^2 keep R_u PSD.
class PolicyCodec {
 public:
  PolicyCodec(const ControlAffineModel& model, bool has_kappa, int N, int blocks)
      : n_x_(model.n_x()), n_u_(model.n_u()), N_(N), B_(std::clamp(blocks, 1, N)),
        has_kappa_(has_kappa) {
    const Ellipsoid& U = model.control_set();
    q_u_ = U.center();
    L_ = detail::sqrt_sym_clipped(U.shape());
    L_inv_ = pinv_psd(U.shape()) * L_;
    r_max_ = std::sqrt(1.0 - 3.0 * kGammaMin);
  }

  int per_block() const { return 2 + (has_kappa_ ? 1 : 0) + n_x_ * n_u_; }
  int size() const { return N_ * n_u_ + B_ * per_block(); }
  int blocks() const { return B_; }
  int block_of(int k) const { return k * B_ / N_; }
  int first_interval(int b) const { return (b * N_ + B_ - 1) / B_; }
  /// First interval whose parameters depend on variable j.
  int first_affected(int j) const {
    return j < N_ * n_u_ ? j / n_u_ : first_interval((j - N_ * n_u_) / per_block());
  }

  IntervalParams decode(const Eigen::VectorXd& x, int k) const {
    IntervalParams p;
    const Vec v = x.segment(k * n_u_, n_u_);
    const Vec z = squash(v, r_max_);
    p.u_x = q_u_ + L_ * z;
    const int o = N_ * n_u_ + block_of(k) * per_block();
    const double lo = kGammaMin + z.squaredNorm();
    const double hi = 1.0 - kGammaMin;
    p.gamma = lo + (hi - lo) * sigmoid(x(o));
    p.lambda = std::clamp(std::exp(x(o + 1)), kMultiplierMin, kMultiplierMax);
    int s = o + 2;
    if (has_kappa_) {
      p.kappa = std::clamp(std::exp(x(s)), kMultiplierMin, kMultiplierMax);
      ++s;
    } else {
      p.kappa = kMultiplierMax;
    }
    p.S = ball_from_raw(Eigen::Map<const Eigen::MatrixXd>(x.data() + s, n_x_, n_u_));
    return p;
  }

  PolicyParams decode_all(const Eigen::VectorXd& x) const {
    PolicyParams pp;
    for (int k = 0; k < N_; ++k) {
      const IntervalParams p = decode(x, k);
      pp.u_x.push_back(p.u_x);
      pp.gamma.push_back(p.gamma);
      pp.lambda.push_back(p.lambda);
      pp.kappa.push_back(p.kappa);
      pp.S.push_back(p.S);
    }
    return pp;
  }

  /// Block parameters are taken from the first interval of each block.
  Eigen::VectorXd encode_all(const PolicyParams& pp) const {
    Eigen::VectorXd x(size());
    for (int k = 0; k < N_; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      x.segment(k * n_u_, n_u_) = unsquash(L_inv_ * (pp.u_x[ku] - q_u_), r_max_);
    }
    for (int b = 0; b < B_; ++b) {
      const int k = first_interval(b);
      const auto ku = static_cast<std::size_t>(k);
      const Vec z = squash(x.segment(k * n_u_, n_u_), r_max_);
      const double lo = kGammaMin + z.squaredNorm();
      const double hi = 1.0 - kGammaMin;
      const int o = N_ * n_u_ + b * per_block();
      x(o) = std::clamp(logit((pp.gamma[ku] - lo) / (hi - lo)), -20.0, 20.0);
      x(o + 1) = std::log(std::clamp(pp.lambda[ku], kMultiplierMin, kMultiplierMax));
      int s = o + 2;
      if (has_kappa_) {
        x(s) = std::log(std::clamp(pp.kappa[ku], kMultiplierMin, kMultiplierMax));
        ++s;
      }
      Eigen::Map<Eigen::MatrixXd>(x.data() + s, n_x_, n_u_) = raw_from_ball(pp.S[ku]);
    }
    return x;
  }

 private:
  int n_x_, n_u_, N_, B_;
  bool has_kappa_;
  Vec q_u_;
  Mat L_, L_inv_;
  double r_max_;
};

class TubeProblem final : public optim::Problem {
 public:
  TubeProblem(const TubeOCP& ocp, const FrobeniusBoundData& bounds, int blocks)
      : ocp_(ocp), model_(*ocp.model), bounds_(bounds),
        codec_(model_, !bounds.is_zero(), ocp.N, blocks) {
    opts_.n_sub = ocp.n_sub;
    opts_.method = ocp.method;
    opts_.strict = false;
    const int M = ocp.N * ocp.n_sub;
    m_state_ = static_cast<int>(ocp.constraints.size()) * M;
    m_domain_ = ocp.domain_constraints ? 2 * model_.n_x() * M : 0;
    m_ = m_state_ + m_domain_ + (ocp.terminal ? kTerminalDirs : 0);
  }

  int n() const override { return codec_.size(); }
  int m() const override { return m_; }
  const PolicyCodec& codec() const { return codec_; }
  const TubeOptions& tube_options() const { return opts_; }

  optim::Evaluation evaluate(const Eigen::VectorXd& x) override {
    try {
      TubeTrajectory tube = integrate_tube(model_, ocp_.x_hat, Mat::Zero(model_.n_x(), model_.n_x()),
                                           codec_.decode_all(x), ocp_.T, ocp_.N, bounds_,
                                           opts_, ocp_.t0);
      return assess(tube);
    } catch (const Error&) {
      return failed();
    }
  }

  void set_base(const Eigen::VectorXd& x) override {
    base_ = x;
    base_ok_ = false;
    try {
      base_tube_ = integrate_tube(model_, ocp_.x_hat, Mat::Zero(model_.n_x(), model_.n_x()),
                                  codec_.decode_all(x), ocp_.T, ocp_.N, bounds_, opts_,
                                  ocp_.t0);
      base_ok_ = true;
    } catch (const Error&) {
    }
  }

  // Only intervals k.. depend on a variable of interval k.
  optim::Evaluation evaluate_perturbed(int j, double h) override {
    if (!base_ok_) return Problem::evaluate_perturbed(j, h);
    const int k = codec_.first_affected(j);
    Eigen::VectorXd y = base_;
    y(j) += h;
    TubeTrajectory tube = base_tube_;
    for (int i = k; i < ocp_.N; ++i) tube.params.set(i, codec_.decode(y, i));
    try {
      reintegrate_from(model_, tube, k, bounds_, opts_);
      return assess(tube);
    } catch (const Error&) {
      return failed();
    }
  }

  optim::Evaluation assess(const TubeTrajectory& tube) const {
    optim::Evaluation e;
    e.g.resize(m_);
    e.f = objective_inertia(tube, ocp_.objective.D, ocp_.objective.x_ref, ocp_.objective.rho);
    const int M = ocp_.N * ocp_.n_sub;
    const auto& rows = ocp_.constraints.rows();
    int o = 0;
    for (int j = 1; j <= M; ++j) {
      const TubeNode& nd = tube.fine[static_cast<std::size_t>(j)];
      for (const auto& r : rows) {
        e.g(o++) = r.h.dot(nd.q) + std::sqrt(std::max(r.h.dot(nd.Q * r.h), 0.0)) - r.eta +
                   ocp_.solver.tighten;
      }
    }
    if (m_domain_ > 0) {
      const Box& box = model_.hessian_domain();
      for (int j = 1; j <= M; ++j) {
        const TubeNode& nd = tube.fine[static_cast<std::size_t>(j)];
        for (int i = 0; i < model_.n_x(); ++i) {
          const double half = std::sqrt(std::max(nd.Q(i, i), 0.0));
          e.g(o++) = nd.q(i) + half - box.upper(i) + ocp_.solver.tighten;
          e.g(o++) = box.lower(i) - nd.q(i) + half + ocp_.solver.tighten;
        }
      }
    }
    if (ocp_.terminal) {
      terminal_gaps(tube.fine.back(), *ocp_.terminal, e.g, o);
      e.g.segment(o, kTerminalDirs).array() += ocp_.solver.tighten;
      o += kTerminalDirs;
    }
    e.ok = std::isfinite(e.f) && e.g.allFinite();
    return e;
  }

 private:
  optim::Evaluation failed() const {
    optim::Evaluation e;
    e.ok = false;
    e.f = std::numeric_limits<double>::infinity();
    e.g = Eigen::VectorXd::Constant(m_, std::numeric_limits<double>::infinity());
    return e;
  }

  const TubeOCP& ocp_;
  const ControlAffineModel& model_;
  const FrobeniusBoundData& bounds_;
  PolicyCodec codec_;
  TubeOptions opts_;
  int m_state_ = 0;
  int m_domain_ = 0;
  int m_ = 0;
  TubeTrajectory base_tube_;
  bool base_ok_ = false;
};

double score(const optim::Evaluation& e) {
  if (!e.ok) return std::numeric_limits<double>::infinity();
  return e.f + 100.0 * max_violation(e.g);
}

// Constant (S, lambda, kappa, gamma) candidates around the reference controls.
Eigen::VectorXd initial_point(TubeProblem& prob, const TubeOCP& ocp,
                              const std::vector<Vec>& controls, bool has_kappa) {
  const ControlAffineModel& model = *ocp.model;
  const int nx = model.n_x();
  const int nu = model.n_u();
  std::vector<Mat> S_set{Mat::Zero(nx, nu)};
  const Eigen::MatrixXd dirs = sample_directions(nx * nu, 16, ocp.solver.seed);
  for (int d = 0; d < dirs.rows(); ++d) {
    Mat S(nx, nu);
    for (int c = 0; c < nu; ++c)
      for (int r = 0; r < nx; ++r) S(r, c) = dirs(d, c * nx + r);
    S *= 0.95 / std::max(std::sqrt(max_eigenvalue(S.transpose() * S)), 1e-12);
    S_set.push_back(S);
  }
  const std::vector<double> lambdas{1.0, 3.0, 10.0};
  const std::vector<double> kappas =
      has_kappa ? std::vector<double>{3.0, 10.0, 30.0} : std::vector<double>{kMultiplierMax};
  const std::vector<double> gammas{0.5, 0.2};

  PolicyParams pp = PolicyParams::constant(
      ocp.N, {model.control_set().center(), 0.5, 1.0, has_kappa ? 1.0 : kMultiplierMax,
              Mat::Zero(nx, nu)});
  for (int k = 0; k < ocp.N && k < static_cast<int>(controls.size()); ++k)
    pp.u_x[static_cast<std::size_t>(k)] = controls[static_cast<std::size_t>(k)];

  Eigen::VectorXd best = prob.codec().encode_all(pp);
  double best_score = score(prob.evaluate(best));
  for (const Mat& S : S_set) {
    for (double lam : lambdas) {
      for (double kap : kappas) {
        for (double gam : gammas) {
          for (int k = 0; k < ocp.N; ++k) {
            pp.S[static_cast<std::size_t>(k)] = S;
            pp.lambda[static_cast<std::size_t>(k)] = lam;
            pp.kappa[static_cast<std::size_t>(k)] = kap;
            pp.gamma[static_cast<std::size_t>(k)] = gam;
          }
          const Eigen::VectorXd x = prob.codec().encode_all(pp);
          const double s = score(prob.evaluate(x));
          if (s < best_score) {
            best_score = s;
            best = x;
          }
        }
      }
    }
  }
  if (!std::isfinite(best_score)) {
    throw Error(Errc::not_converged, "solve_tube_ocp: no initial policy could be integrated");
  }
  return best;
}

}  // namespace

void TubeOCP::validate() const {
  if (!model) throw Error(Errc::configuration, "TubeOCP: model is not set");
  const int n = model->n_x();
  if (!(T > 0.0) || !std::isfinite(T)) throw Error(Errc::parameter, "TubeOCP: T must be > 0");
  if (N < 1) throw Error(Errc::parameter, "TubeOCP: N must be >= 1");
  if (n_sub < 1) throw Error(Errc::parameter, "TubeOCP: n_sub must be >= 1");
  require_dims(x_hat.size() == n && objective.D.rows() == n && objective.D.cols() == n &&
                   objective.x_ref.size() == n,
               "TubeOCP");
  for (const auto& r : constraints.rows()) require_dims(r.h.size() == n, "TubeOCP constraints");
  if (min_eigenvalue(0.5 * (objective.D + objective.D.transpose())) < -1e-12)
    throw Error(Errc::parameter, "TubeOCP: D must be positive semidefinite");
  if (objective.rho < 0.0) throw Error(Errc::parameter, "TubeOCP: rho must be >= 0");
  if (terminal) require_dims(terminal->dim() == n, "TubeOCP terminal set");
  if (initial_guess && initial_guess->size() != N)
    throw Error(Errc::dimension_mismatch, "TubeOCP: initial guess has the wrong length");
}

double objective_inertia(const TubeTrajectory& tube, const Mat& D, const Vec& x_ref, double rho) {
  const int n = static_cast<int>(x_ref.size());
  require_dims(D.rows() == n && D.cols() == n && !tube.fine.empty() &&
                   tube.fine.front().q.size() == n,
               "objective_inertia");
  double J = 0.0;
  for (std::size_t j = 0; j + 1 < tube.fine.size(); ++j) {
    const double dt = tube.fine[j + 1].t - tube.fine[j].t;
    J += 0.5 * dt * (running_cost(tube.fine[j], D, x_ref, n) + running_cost(tube.fine[j + 1], D, x_ref, n));
  }
  if (rho != 0.0) {
    for (int k = 0; k < tube.N(); ++k) {
      const double dt = tube.grid[static_cast<std::size_t>(k + 1)] - tube.grid[static_cast<std::size_t>(k)];
      J += rho * dt * tube.params.u_x[static_cast<std::size_t>(k)].squaredNorm();
    }
  }
  return J;
}

Eigen::VectorXd state_constraint_residuals(const TubeTrajectory& tube,
                                           const LinearStateConstraints& constraints) {
  const auto& rows = constraints.rows();
  Eigen::VectorXd r(static_cast<Eigen::Index>(tube.fine.size() * rows.size()));
  Eigen::Index o = 0;
  for (const TubeNode& nd : tube.fine) {
    for (const auto& row : rows) {
      require_dims(row.h.size() == nd.q.size(), "state_constraint_residuals");
      r(o++) = row.h.dot(nd.q) + std::sqrt(std::max(row.h.dot(nd.Q * row.h), 0.0)) - row.eta;
    }
  }
  return r;
}

double max_state_residual(const TubeTrajectory& tube, const LinearStateConstraints& constraints) {
  const Eigen::VectorXd r = state_constraint_residuals(tube, constraints);
  const auto skip = static_cast<Eigen::Index>(constraints.size());
  if (r.size() <= skip) return -std::numeric_limits<double>::infinity();
  return r.tail(r.size() - skip).maxCoeff();
}

SolveReport solve_tube_ocp(const TubeOCP& problem, const FrobeniusBoundData& bounds) {
  problem.validate();
  const auto start = std::chrono::steady_clock::now();
  const ControlAffineModel& model = *problem.model;
  const bool has_kappa = !bounds.is_zero();
  const int blocks = problem.solver.param_blocks > 0 ? std::min(problem.solver.param_blocks, problem.N)
                                                    : problem.N;
  const int coarse = problem.solver.coarse_blocks;
  const bool staged = coarse > 0 && coarse < blocks;
  TubeProblem first(problem, bounds, staged ? coarse : blocks);

  Eigen::VectorXd x0;
  if (problem.initial_guess) {
    x0 = first.codec().encode_all(*problem.initial_guess);
    if (!first.evaluate(x0).ok) x0.resize(0);
  }
  if (x0.size() == 0) {
    std::vector<Vec> controls = problem.initial_controls;
    if (controls.empty() && problem.initial_guess) controls = problem.initial_guess->u_x;
    if (controls.empty()) {
      NominalOCP nom;
      nom.model = problem.model;
      nom.T = problem.T;
      nom.N = problem.N;
      nom.x_hat = problem.x_hat;
      nom.constraints = problem.constraints;
      nom.D = problem.objective.D;
      nom.x_ref = problem.objective.x_ref;
      nom.rho = problem.objective.rho;
      nom.n_sub = problem.n_sub;
      controls = solve_nominal_ocp(nom).u;
    }
    x0 = initial_point(first, problem, controls, has_kappa);
  }

  // Coarse stage: gamma, lambda, kappa and S shared over blocks of intervals.
  optim::Options oo = optim_options(problem.solver);
  optim::Result res;
  int outer = 0;
  long evals = 0;
  if (staged) {
    res = optim::minimize(first, x0, oo);
    outer += res.outer_iterations;
    evals += res.evaluations;
    if (oo.max_evaluations > 0) oo.max_evaluations = std::max(1L, oo.max_evaluations - evals);
    oo.mu_init = res.mu;
    oo.rho_init = res.rho;
  }
  TubeProblem prob(problem, bounds, blocks);
  if (staged) x0 = prob.codec().encode_all(first.codec().decode_all(res.x));
  res = optim::minimize(prob, x0, oo);
  outer += res.outer_iterations;
  evals += res.evaluations;

  SolveReport rep;
  rep.iterations = outer;
  rep.evaluations = evals;
  PolicyParams params = prob.codec().decode_all(res.x);
  for (auto& S : params.S) S = clamp_spectral(S);
  TubeOptions strict = prob.tube_options();
  strict.strict = true;
  rep.message = res.message;
  try {
    rep.tube = integrate_tube(model, problem.x_hat, Mat::Zero(model.n_x(), model.n_x()), params,
                              problem.T, problem.N, bounds, strict, problem.t0);
  } catch (const InfeasiblePolicyError& e) {
    throw;
  } catch (const Error& e) {
    if (e.code() != Errc::invariant_violation) throw;
    rep.tube = integrate_tube(model, problem.x_hat, Mat::Zero(model.n_x(), model.n_x()), params,
                              problem.T, problem.N, bounds, prob.tube_options(), problem.t0);
    rep.message = std::string("final tube failed the strict re-integration: ") + e.what();
    rep.converged = false;
  }
  rep.objective_value = objective_inertia(rep.tube, problem.objective.D, problem.objective.x_ref,
                                          problem.objective.rho);
  double viol = problem.constraints.empty()
                    ? 0.0
                    : std::max(0.0, max_state_residual(rep.tube, problem.constraints));
  if (problem.terminal) {
    Eigen::VectorXd g(kTerminalDirs);
    terminal_gaps(rep.tube.fine.back(), *problem.terminal, g, 0);
    viol = std::max(viol, max_violation(g));
  }
  rep.max_constraint_violation = viol;
  const bool strict_ok = rep.message == res.message;
  rep.converged = res.converged && strict_ok && viol <= problem.solver.feas_tol && rep.tube.valid;
  if (res.converged && strict_ok && !rep.tube.valid) rep.message = "tube leaves the Hessian domain";
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Terminal set

namespace {

// Stabilizing solution of A'P + PA - P W P + C = 0 by the matrix sign
// function of the Hamiltonian; nullopt when the iteration fails.
std::optional<Eigen::MatrixXd> care_sign(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W,
                                         const Eigen::MatrixXd& C) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd Z(2 * n, 2 * n);
  Z << A, -W, -C, -A.transpose();
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Z);
    const double det = std::abs(lu.determinant());
    if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;
    const double c = std::pow(det, -1.0 / static_cast<double>(2 * n));
    const Eigen::MatrixXd next = 0.5 * (c * Z + lu.inverse() / c);
    const double change = (next - Z).norm();
    Z = next;
    if (change <= 1e-12 * Z.norm()) break;
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd lhs(2 * n, n), rhs(2 * n, n);
  lhs << Z.topRightCorner(n, n), Z.bottomRightCorner(n, n) + I;
  rhs << -(Z.topLeftCorner(n, n) + I), -Z.bottomLeftCorner(n, n);
  Eigen::MatrixXd P = lhs.colPivHouseholderQr().solve(rhs);
  P = 0.5 * (P + P.transpose()).eval();
  if (!P.allFinite()) return std::nullopt;
  return P;
}

// X with A X + X A' + C = 0, via vec(A X + X A') = (I (x) A + A (x) I) vec(X).
Eigen::MatrixXd lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C) {
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    L.block(i * n, i * n, n, n) += A;
    for (Eigen::Index j = 0; j < n; ++j) L.block(i * n, j * n, n, n) += A(i, j) * I;
  }
  const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(C.data(), n * n);
  const Eigen::VectorXd x = L.colPivHouseholderQr().solve(-c);
  const Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

bool hurwitz(const Eigen::MatrixXd& A) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().real().maxCoeff() < 0.0;
}

// Variables: gain K (n_u x n_x, column-major), log lambda, log kappa.
// Q is the fixed point of
//   A_c Q + Q A_c' + lambda B Q_w B' + kappa Omega_n(Q) + eps I = 0,
//   A_c = A + G K + (1/lambda + 1/kappa)/2 I,
// which makes Phi_g = -eps I with S = Q^{1/2} K' R^{-1/2}; the remaining
// constraint is S S' <= I.
class TerminalProblem final : public optim::Problem {
 public:
  TerminalProblem(const ControlAffineModel& model, const Vec& x_ref,
                  const FrobeniusBoundData& bounds, double slack, double tighten)
      : bounds_(bounds), slack_(slack), tighten_(tighten) {
    n_x_ = model.n_x();
    n_u_ = model.n_u();
    has_kappa_ = !bounds.is_zero();
    const Vec& u0 = model.control_set().center();
    A_ = model.linearization_A(x_ref, u0);
    G_ = model.input_matrix(x_ref);
    const Eigen::MatrixXd B = model.linearization_B(x_ref);
    BQB_ = B * model.disturbance_set().shape() * B.transpose();
    const Eigen::MatrixXd R = model.control_set().shape();
    R_isqrt_ = pinv_psd(R) * detail::sqrt_sym_clipped(R);
  }

  int n() const override { return n_u_ * n_x_ + 1 + (has_kappa_ ? 1 : 0); }
  int m() const override { return 1; }
  bool has_kappa() const { return has_kappa_; }

  struct Decoded {
    Eigen::MatrixXd K;
    double lambda = 1.0;
    double kappa = kMultiplierMax;
    Eigen::MatrixXd Q;
    Eigen::MatrixXd S;
    bool ok = false;
  };

  Decoded decode(const Eigen::VectorXd& x) const {
    Decoded d;
    d.K = Eigen::Map<const Eigen::MatrixXd>(x.data(), n_u_, n_x_);
    int o = n_u_ * n_x_;
    d.lambda = std::clamp(std::exp(x(o++)), kMultiplierMin, kMultiplierMax);
    if (has_kappa_) d.kappa = std::clamp(std::exp(x(o++)), kMultiplierMin, kMultiplierMax);
    const double c = 1.0 / d.lambda + (has_kappa_ ? 1.0 / d.kappa : 0.0);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n_x_, n_x_);
    const Eigen::MatrixXd Ac = A_ + G_ * d.K + 0.5 * c * I;
    if (!hurwitz(Ac)) return d;
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n_x_, n_x_);
    bool settled = false;
    for (int it = 0; it < 100; ++it) {
      Eigen::MatrixXd C = d.lambda * BQB_ + slack_ * I;
      if (has_kappa_) C += d.kappa * Eigen::MatrixXd(omega_n(bounds_, Q));
      const Eigen::MatrixXd next = lyapunov(Ac, C);
      if (!next.allFinite() || next.norm() > 1e8) return d;
      const double change = (next - Q).norm();
      Q = next;
      if (change <= 1e-14 * (1.0 + Q.norm())) {
        settled = true;
        break;
      }
    }
    if (!settled || min_eigenvalue(Q) <= 0.0) return d;
    d.Q = Q;
    d.S = sqrt_psd(Q) * d.K.transpose() * R_isqrt_;
    d.ok = true;
    return d;
  }

  Eigen::VectorXd encode(const Eigen::MatrixXd& K, double lambda, double kappa) const {
    Eigen::VectorXd x(n());
    Eigen::Map<Eigen::MatrixXd>(x.data(), n_u_, n_x_) = K;
    int o = n_u_ * n_x_;
    x(o++) = std::log(lambda);
    if (has_kappa_) x(o++) = std::log(kappa);
    return x;
  }

  optim::Evaluation evaluate(const Eigen::VectorXd& x) override {
    optim::Evaluation e;
    e.g.resize(1);
    const Decoded d = decode(x);
    if (!d.ok) {
      e.ok = false;
      e.f = std::numeric_limits<double>::infinity();
      e.g(0) = std::numeric_limits<double>::infinity();
      return e;
    }
    e.f = d.Q.trace();
    e.g(0) = max_eigenvalue(d.S.transpose() * d.S) - 1.0 + tighten_;
    e.ok = std::isfinite(e.f) && e.g.allFinite();
    return e;
  }

 private:
  const FrobeniusBoundData& bounds_;
  double slack_;
  double tighten_;
  int n_x_ = 0, n_u_ = 0;
  bool has_kappa_ = false;
  Eigen::MatrixXd A_, G_, BQB_, R_isqrt_;
};

}  // namespace

TerminalSet solve_terminal_set(const ControlAffineModel& model, const Vec& x_ref,
                               const FrobeniusBoundData& bounds, const TerminalSetOptions& opts) {
  const int nx = model.n_x();
  const int nu = model.n_u();
  require_dims(x_ref.size() == nx && bounds.n_x() == nx, "solve_terminal_set");
  if (!(opts.target <= 0.0)) throw Error(Errc::parameter, "solve_terminal_set: target must be <= 0");
  // Phi_g = -slack I at every iterate, so the certificate only has to absorb
  // rounding.
  const double slack = std::max(10.0 * std::abs(opts.target), 1e-7);
  TerminalProblem prob(model, x_ref, bounds, slack, std::max(opts.solver.tighten, 1e-6));

  // Starts from LQR gains over a grid of weights and multipliers.
  const Vec& u0 = model.control_set().center();
  const Eigen::MatrixXd A = model.linearization_A(x_ref, u0);
  const Eigen::MatrixXd G = model.input_matrix(x_ref);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(nx, nx);
  const std::vector<double> mults{0.1, 0.3, 1.0, 3.0, 10.0};
  const std::vector<double> kappas =
      prob.has_kappa() ? mults : std::vector<double>{kMultiplierMax};
  std::vector<Eigen::MatrixXd> gains;
  for (double qc : {1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3, 1e4}) {
    if (const auto P = care_sign(A, G * G.transpose(), qc * I)) gains.push_back(-G.transpose() * *P);
  }
  Eigen::VectorXd best;
  double best_score = std::numeric_limits<double>::infinity();
  for (const Eigen::MatrixXd& K : gains) {
    for (double scale : {0.25, 0.5, 1.0, 2.0}) {
      for (double lam : mults) {
        for (double kap : kappas) {
          const Eigen::VectorXd x = prob.encode(scale * K, lam, kap);
          const optim::Evaluation e = prob.evaluate(x);
          if (!e.ok) continue;
          const double v = max_violation(e.g);
          const double s = v > 0.0 ? 1e6 + v : e.f;
          if (s < best_score) {
            best_score = s;
            best = x;
          }
        }
      }
    }
  }
  TerminalSet out;
  out.Y_ref = Ellipsoid(x_ref, Mat::Zero(nx, nx));
  out.S = Mat::Zero(nx, nu);
  if (best.size() == 0) {
    out.max_eig_phi = std::numeric_limits<double>::infinity();
    out.message = "terminal set not certified: no stabilizing gain found";
    return out;
  }

  const optim::Result res = optim::minimize(prob, best, optim_options(opts.solver));
  const auto d = prob.decode(res.x);
  if (!d.ok) {
    out.max_eig_phi = std::numeric_limits<double>::infinity();
    out.message = "terminal set not certified: solver returned a non-stabilizing gain";
    return out;
  }
  out.Y_ref = Ellipsoid(x_ref, Mat(d.Q));
  out.lambda = d.lambda;
  out.kappa = prob.has_kappa() ? d.kappa : kInfinity;
  out.S = clamp_spectral(Mat(d.S));
  // Independent re-evaluation through the public Phi_g.
  out.max_eig_phi = max_eigenvalue(phi_g(model, x_ref, out.Y_ref.shape(), out.S,
                                         model.control_set().shape(), out.lambda, out.kappa,
                                         u0, bounds));
  out.certified = res.feasible && out.max_eig_phi <= opts.target;
  out.message = out.certified ? res.message
                              : "terminal set not certified: lambda_max(Phi_g) = " +
                                    std::to_string(out.max_eig_phi) + " (" + res.message + ")";
  return out;
}

// ---------------------------------------------------------------------------
// Nominal OCP

std::vector<Vec> simulate_nominal(const ControlAffineModel& model, const Vec& x0,
                                  const std::vector<Vec>& u, double T, int n_sub) {
  const int N = static_cast<int>(u.size());
  const double h = T / (static_cast<double>(N) * n_sub);
  const Vec w = model.disturbance_set().center();
  std::vector<Vec> xs;
  xs.reserve(static_cast<std::size_t>(N * n_sub + 1));
  xs.push_back(x0);
  Vec x = x0;
  for (int k = 0; k < N; ++k) {
    const Vec& uk = u[static_cast<std::size_t>(k)];
    for (int j = 0; j < n_sub; ++j) {
      const Vec k1 = model.dynamics(x, uk, w);
      const Vec k2 = model.dynamics(x + 0.5 * h * k1, uk, w);
      const Vec k3 = model.dynamics(x + 0.5 * h * k2, uk, w);
      const Vec k4 = model.dynamics(x + h * k3, uk, w);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite()) throw IntegrationBlowUp(h * (k * n_sub + j + 1));
      xs.push_back(x);
    }
  }
  return xs;
}

namespace {

class NominalProblem final : public optim::Problem {
 public:
  explicit NominalProblem(const NominalOCP& p) : p_(p), model_(*p.model) {
    const Ellipsoid& U = model_.control_set();
    q_u_ = U.center();
    L_ = detail::sqrt_sym_clipped(U.shape());
    L_inv_ = pinv_psd(U.shape()) * L_;
    M_ = p.N * p.n_sub;
    h_ = p.T / M_;
  }

  int n() const override { return p_.N * model_.n_u(); }
  int m() const override { return static_cast<int>(p_.constraints.size()) * M_; }

  std::vector<Vec> controls(const Eigen::VectorXd& x) const {
    const int nu = model_.n_u();
    std::vector<Vec> u;
    for (int k = 0; k < p_.N; ++k) u.push_back(q_u_ + L_ * squash(x.segment(k * nu, nu), 1.0));
    return u;
  }

  Eigen::VectorXd encode(const std::vector<Vec>& u) const {
    const int nu = model_.n_u();
    Eigen::VectorXd x(n());
    for (int k = 0; k < p_.N; ++k) {
      x.segment(k * nu, nu) = unsquash(L_inv_ * (u[static_cast<std::size_t>(k)] - q_u_), 1.0);
    }
    return x;
  }

  optim::Evaluation evaluate(const Eigen::VectorXd& x) override {
    optim::Evaluation e;
    try {
      const std::vector<Vec> u = controls(x);
      const std::vector<Vec> xs = simulate_nominal(model_, p_.x_hat, u, p_.T, p_.n_sub);
      e.f = cost(xs, u);
      e.g = constraints(xs);
      e.ok = std::isfinite(e.f) && e.g.allFinite();
    } catch (const Error&) {
      e.ok = false;
      e.f = std::numeric_limits<double>::infinity();
      e.g = Eigen::VectorXd::Constant(m(), std::numeric_limits<double>::infinity());
    }
    return e;
  }

  double cost(const std::vector<Vec>& xs, const std::vector<Vec>& u) const {
    double J = 0.0;
    for (int j = 0; j <= M_; ++j) {
      const Vec e = xs[static_cast<std::size_t>(j)] - p_.x_ref;
      const double wgt = (j == 0 || j == M_) ? 0.5 * h_ : h_;
      J += wgt * e.dot(p_.D * e);
    }
    for (const Vec& uk : u) J += p_.rho * (p_.T / p_.N) * uk.squaredNorm();
    return J;
  }

  Eigen::VectorXd constraints(const std::vector<Vec>& xs) const {
    Eigen::VectorXd g(m());
    int o = 0;
    for (int j = 1; j <= M_; ++j)
      for (const auto& r : p_.constraints.rows())
        g(o++) = r.h.dot(xs[static_cast<std::size_t>(j)]) - r.eta + p_.solver.tighten;
    return g;
  }

  // Discrete adjoint of the RK4 recursion.
  bool weighted_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& w,
                         Eigen::VectorXd& grad) override {
    const int nu = model_.n_u();
    const std::vector<Vec> u = controls(x);
    std::vector<Vec> xs;
    try {
      xs = simulate_nominal(model_, p_.x_hat, u, p_.T, p_.n_sub);
    } catch (const Error&) {
      return false;
    }
    const Vec wq = model_.disturbance_set().center();
    const auto& rows = p_.constraints.rows();
    const int nh = static_cast<int>(rows.size());
    auto node_grad = [&](int j) {
      const Vec e = xs[static_cast<std::size_t>(j)] - p_.x_ref;
      const double wgt = (j == 0 || j == M_) ? 0.5 * h_ : h_;
      Vec g = wgt * (p_.D + p_.D.transpose()) * e;
      if (j >= 1)
        for (int i = 0; i < nh; ++i) g += w((j - 1) * nh + i) * rows[static_cast<std::size_t>(i)].h;
      return g;
    };
    std::vector<Vec> ubar(static_cast<std::size_t>(p_.N), Vec::Zero(nu));
    Vec lam = node_grad(M_);
    const double h = h_;
    for (int j = M_ - 1; j >= 0; --j) {
      const int k = j / p_.n_sub;
      const Vec& uk = u[static_cast<std::size_t>(k)];
      const Vec& x0 = xs[static_cast<std::size_t>(j)];
      const Vec k1 = model_.dynamics(x0, uk, wq);
      const Vec x2 = x0 + 0.5 * h * k1;
      const Vec k2 = model_.dynamics(x2, uk, wq);
      const Vec x3 = x0 + 0.5 * h * k2;
      const Vec k3 = model_.dynamics(x3, uk, wq);
      const Vec x4 = x0 + h * k3;
      auto jac = [&](const Vec& z) {
        return Mat(model_.drift_jacobian_x(z, wq) + model_.input_jacobian_times(z, uk));
      };
      Vec& ub = ubar[static_cast<std::size_t>(k)];
      Vec xbar = lam;
      Vec kb4 = (h / 6.0) * lam;
      Vec kb3 = (h / 3.0) * lam;
      Vec kb2 = (h / 3.0) * lam;
      Vec kb1 = (h / 6.0) * lam;
      Vec s = jac(x4).transpose() * kb4;
      ub += model_.input_matrix(x4).transpose() * kb4;
      xbar += s;
      kb3 += h * s;
      s = jac(x3).transpose() * kb3;
      ub += model_.input_matrix(x3).transpose() * kb3;
      xbar += s;
      kb2 += 0.5 * h * s;
      s = jac(x2).transpose() * kb2;
      ub += model_.input_matrix(x2).transpose() * kb2;
      xbar += s;
      kb1 += 0.5 * h * s;
      s = jac(x0).transpose() * kb1;
      ub += model_.input_matrix(x0).transpose() * kb1;
      xbar += s;
      lam = xbar + (j >= 1 ? node_grad(j) : Vec::Zero(model_.n_x()));
    }
    grad.resize(n());
    const double dt = p_.T / p_.N;
    for (int k = 0; k < p_.N; ++k) {
      const Vec v = x.segment(k * nu, nu);
      const Vec& uk = u[static_cast<std::size_t>(k)];
      const Vec total = ubar[static_cast<std::size_t>(k)] + 2.0 * p_.rho * dt * uk;
      grad.segment(k * nu, nu) = (L_ * squash_jacobian(v, 1.0)).transpose() * total;
    }
    return true;
  }

 private:
  const NominalOCP& p_;
  const ControlAffineModel& model_;
  Vec q_u_;
  Mat L_, L_inv_;
  int M_ = 0;
  double h_ = 0.0;
};

}  // namespace

NominalSolution solve_nominal_ocp(const NominalOCP& problem) {
  if (!problem.model) throw Error(Errc::configuration, "NominalOCP: model is not set");
  const ControlAffineModel& model = *problem.model;
  require_dims(problem.x_hat.size() == model.n_x() && problem.D.rows() == model.n_x() &&
                   problem.x_ref.size() == model.n_x(),
               "solve_nominal_ocp");
  if (problem.N < 1 || problem.n_sub < 1 || !(problem.T > 0.0))
    throw Error(Errc::parameter, "solve_nominal_ocp: bad horizon");
  NominalProblem prob(problem);
  std::vector<Vec> u0 = problem.initial_controls;
  if (static_cast<int>(u0.size()) != problem.N)
    u0.assign(static_cast<std::size_t>(problem.N), model.control_set().center());
  optim::Options o = optim_options(problem.solver);
  const optim::Result res = optim::minimize(prob, prob.encode(u0), o);
  NominalSolution sol;
  sol.u = prob.controls(res.x);
  sol.x = simulate_nominal(model, problem.x_hat, sol.u, problem.T, problem.n_sub);
  const int M = problem.N * problem.n_sub;
  for (int j = 0; j <= M; ++j) sol.t.push_back(problem.T * j / M);
  const optim::Evaluation e = prob.evaluate(res.x);
  sol.objective = e.f;
  double v = 0.0;
  for (int j = 1; j <= M; ++j)
    for (const auto& r : problem.constraints.rows())
      v = std::max(v, r.h.dot(sol.x[static_cast<std::size_t>(j)]) - r.eta);
  sol.max_violation = v;
  sol.converged = res.converged && v <= problem.solver.feas_tol;
  sol.iterations = res.outer_iterations;
  sol.message = res.message;
  return sol;
}

double nominal_merit(const NominalOCP& problem, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
  if (!problem.model) throw Error(Errc::configuration, "NominalOCP: model is not set");
  NominalProblem prob(problem);
  require_dims(x.size() == prob.n() && w.size() == prob.m(), "nominal_merit");
  const optim::Evaluation e = prob.evaluate(x);
  if (grad && !prob.weighted_gradient(x, w, *grad))
    throw Error(Errc::capability, "nominal_merit: no analytic gradient");
  return e.f + w.dot(e.g);
}

}  // namespace ellitube
