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

#include "ellitube/ellipsoid.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <tuple>
#include <vector>

#include "ellitube/kernels.hpp"
#include "linalg_detail.hpp"

namespace ellitube {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::invariant_violation: return "invariant_violation";
    case Errc::parameter: return "parameter";
    case Errc::precondition: return "precondition";
    case Errc::degenerate_point: return "degenerate_point";
    case Errc::span: return "span";
    case Errc::nullspace_direction: return "nullspace_direction";
    case Errc::capability: return "capability";
    case Errc::configuration: return "configuration";
    case Errc::infeasible_policy: return "infeasible_policy";
    case Errc::integration_blowup: return "integration_blowup";
    case Errc::not_converged: return "not_converged";
    case Errc::io: return "io";
  }
  return "unknown";
}

namespace detail {

void eig_sym(const Mat& Q, Vec& evals, Mat& evecs) {
  const auto n = Q.rows();
  if (n == 1) {
    evals.resize(1);
    evals(0) = Q(0, 0);
    evecs = Mat::Identity(1, 1);
    return;
  }
  if (n == 2) {
    const double a = Q(0, 0);
    const double b = 0.5 * (Q(0, 1) + Q(1, 0));
    const double d = Q(1, 1);
    evals.resize(2);
    evecs.resize(2, 2);
    if (b == 0.0) {
      evals << a, d;
      evecs.setIdentity();
      return;
    }
    // One Jacobi rotation diagonalizes a 2x2 symmetric matrix exactly.
    const double tau = (d - a) / (2.0 * b);
    const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
    const double c = 1.0 / std::sqrt(1.0 + t * t);
    const double s = t * c;
    evals << a - t * b, d + t * b;
    evecs << c, s, -s, c;
    return;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(Q);
  evals = es.eigenvalues();
  evecs = es.eigenvectors();
}

Mat sqrt_sym_clipped(const Mat& Q) {
  Vec ev;
  Mat V;
  eig_sym(Q, ev, V);
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::sqrt(std::max(ev(i), 0.0));
  Mat R = V * ev.asDiagonal() * V.transpose();
  return 0.5 * (R + R.transpose());
}

bool is_zero(const Mat& Q) { return Q.size() == 0 || Q.cwiseAbs().maxCoeff() == 0.0; }

double max_abs(const Mat& Q) { return Q.size() == 0 ? 0.0 : Q.cwiseAbs().maxCoeff(); }

}  // namespace detail

namespace {

void check_symmetric(const Mat& Q, const char* where) {
  require_dims(Q.rows() == Q.cols(), where);
  const double scale = 1.0 + detail::max_abs(Q);
  const double asym = Q.size() == 0 ? 0.0 : (Q - Q.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTol * scale) {
    throw Error(Errc::invariant_violation,
                std::string(where) + ": matrix not symmetric (max asymmetry " +
                    std::to_string(asym) + ")");
  }
}

}  // namespace

Ellipsoid::Ellipsoid(Vec center, Mat shape) : q_(std::move(center)), Q_(std::move(shape)) {
  require_dims(Q_.rows() == q_.size() && Q_.cols() == q_.size(), "Ellipsoid");
  check_symmetric(Q_, "Ellipsoid");
  Q_ = 0.5 * (Q_ + Q_.transpose());
  Vec ev;
  Mat V;
  detail::eig_sym(Q_, ev, V);
  if (ev.size() > 0 && ev.minCoeff() < 0.0) {
    const double scale = 1.0 + std::max(ev.maxCoeff(), 0.0);
    if (ev.minCoeff() < -kPsdDustTol * scale) {
      throw Error(Errc::invariant_violation,
                  "Ellipsoid: shape matrix not positive semidefinite (min eig " +
                      std::to_string(ev.minCoeff()) + ")");
    }
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::max(ev(i), 0.0);
    Q_ = V * ev.asDiagonal() * V.transpose();
    Q_ = 0.5 * (Q_ + Q_.transpose());
  }
}

Ellipsoid Ellipsoid::point(const Vec& center) {
  return Ellipsoid(center, Mat::Zero(center.size(), center.size()));
}

Direction::Direction(Vec c) : c_(std::move(c)) {
  if (!(std::abs(c_.norm() - 1.0) <= 1e-12)) {
    throw Error(Errc::invariant_violation, "Direction: vector is not unit norm");
  }
}

Direction Direction::normalized(const Vec& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(Errc::degenerate_point, "Direction: cannot normalize a zero vector");
  }
  Vec c = v / n;
  // One refinement keeps | |c| - 1 | at rounding level for extreme inputs.
  c /= c.norm();
  return Direction(std::move(c));
}

double support(const Ellipsoid& e, const Direction& c) {
  require_dims(e.dim() == c.dim(), "support");
  const Vec& v = c.vec();
  double quad = v.dot(e.shape() * v);
  if (quad < 0.0) {
    if (quad < -1e-12 * (1.0 + detail::max_abs(e.shape()))) {
      throw Error(Errc::invariant_violation, "support: c'Qc is negative");
    }
    quad = 0.0;
  }
  return v.dot(e.center()) + std::sqrt(quad);
}

Mat sqrt_psd(const Mat& Q) {
  check_symmetric(Q, "sqrt_psd");
  return detail::sqrt_sym_clipped(0.5 * (Q + Q.transpose()));
}

Mat pinv_psd(const Mat& Q) {
  require_dims(Q.rows() == Q.cols(), "pinv_psd");
  Vec ev;
  Mat V;
  detail::eig_sym(0.5 * (Q + Q.transpose()), ev, V);
  const double top = ev.size() ? ev.maxCoeff() : 0.0;
  if (!(top > 0.0)) return Mat::Zero(Q.rows(), Q.cols());
  const double cut = 1e-12 * top;
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > cut ? 1.0 / ev(i) : 0.0;
  Mat P = V * ev.asDiagonal() * V.transpose();
  return 0.5 * (P + P.transpose());
}

double repair_psd(Mat& Q) {
  Q = 0.5 * (Q + Q.transpose());
  Vec ev;
  Mat V;
  detail::eig_sym(Q, ev, V);
  const double lo = ev.size() ? ev.minCoeff() : 0.0;
  if (lo >= 0.0) return 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = std::max(ev(i), 0.0);
  Q = V * ev.asDiagonal() * V.transpose();
  Q = 0.5 * (Q + Q.transpose());
  return lo;
}

double min_eigenvalue(const Mat& Q) {
  Vec ev;
  Mat V;
  detail::eig_sym(0.5 * (Q + Q.transpose()), ev, V);
  return ev.minCoeff();
}

double max_eigenvalue(const Mat& Q) {
  Vec ev;
  Mat V;
  detail::eig_sym(0.5 * (Q + Q.transpose()), ev, V);
  return ev.maxCoeff();
}

Direction gauss_map(const Ellipsoid& e, const Vec& xi) {
  require_dims(xi.size() == e.dim(), "gauss_map");
  const Vec d = xi - e.center();
  const double dn = d.norm();
  if (dn <= 1e-12) {
    throw Error(Errc::degenerate_point, "gauss_map: point coincides with the center");
  }
  const Mat P = pinv_psd(e.shape());
  const Vec v = P * d;
  const double vn = v.norm();
  const double pn = detail::max_abs(P);
  if (!(vn > 1e-14 * pn * dn) || vn == 0.0) {
    throw Error(Errc::span, "gauss_map: xi - q lies outside the span of Q");
  }
  return Direction::normalized(v);
}

Vec inverse_gauss_map(const Ellipsoid& e, const Direction& c) {
  require_dims(c.dim() == e.dim(), "inverse_gauss_map");
  const Mat& Q = e.shape();
  if (detail::is_zero(Q)) return e.center();
  const Vec Qc = Q * c.vec();
  const double quad = c.vec().dot(Qc);
  if (!(quad > 1e-14 * detail::max_abs(Q))) {
    throw Error(Errc::nullspace_direction,
                "inverse_gauss_map: direction lies in the nullspace of Q");
  }
  return e.center() + Qc / std::sqrt(quad);
}

Mat inner_control_shape(const Vec& q_u, const Mat& Q_u, const Vec& u_x, double gamma) {
  const Vec d = u_x - q_u;
  Mat R = (1.0 - gamma) * Q_u + (1.0 - 1.0 / gamma) * (d * d.transpose());
  return 0.5 * (R + R.transpose());
}

InnerControl inner_control_ellipsoid(const Vec& q_u, const Mat& Q_u, const Vec& u_x,
                                     double gamma) {
  require_dims(q_u.size() == u_x.size() && Q_u.rows() == q_u.size() &&
                   Q_u.cols() == q_u.size(),
               "inner_control_ellipsoid");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw Error(Errc::parameter, "inner_control_ellipsoid: gamma must lie in (0, 1]");
  }
  const Ellipsoid U(q_u, Q_u);
  if (!(ellipsoid_metric(U, u_x, 1e-9) <= 1.0 + 1e-9)) {
    throw Error(Errc::precondition,
                "inner_control_ellipsoid: reference control outside the control set");
  }
  InnerControl out;
  out.R_u = inner_control_shape(q_u, Q_u, u_x, gamma);
  Vec ev;
  Mat V;
  detail::eig_sym(out.R_u, ev, V);
  out.min_eig = ev.minCoeff();
  const double scale = 1.0 + std::max(ev.maxCoeff(), 0.0);
  out.feasible = out.min_eig >= -kPsdDustTol * scale;
  return out;
}

Mat minkowski_outer(const Mat& Q1, const Mat& Q2, double beta) {
  require_dims(Q1.rows() == Q2.rows() && Q1.cols() == Q2.cols(), "minkowski_outer");
  if (!(beta > 0.0 && beta < 1.0)) {
    throw Error(Errc::parameter, "minkowski_outer: beta must lie in (0, 1)");
  }
  return Q1 / beta + Q2 / (1.0 - beta);
}

Eigen::MatrixXd sample_directions(int dim, int n_dirs, std::uint64_t seed) {
  if (dim < 1 || n_dirs < 1) throw Error(Errc::parameter, "sample_directions: bad size");
  Eigen::MatrixXd D(n_dirs, dim);
  constexpr double pi = std::numbers::pi;
  if (dim == 1) {
    for (int k = 0; k < n_dirs; ++k) D(k, 0) = (k % 2 == 0) ? 1.0 : -1.0;
  } else if (dim == 2) {
    for (int k = 0; k < n_dirs; ++k) {
      const double a = 2.0 * pi * k / n_dirs;
      D(k, 0) = std::cos(a);
      D(k, 1) = std::sin(a);
    }
  } else if (dim == 3) {
    const double golden = pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < n_dirs; ++k) {
      const double z = 1.0 - (2.0 * k + 1.0) / n_dirs;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double a = golden * k;
      D(k, 0) = r * std::cos(a);
      D(k, 1) = r * std::sin(a);
      D(k, 2) = z;
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int k = 0; k < n_dirs; ++k) {
      double nrm = 0.0;
      do {
        for (int i = 0; i < dim; ++i) D(k, i) = nd(rng);
        nrm = D.row(k).norm();
      } while (nrm < 1e-12);
      D.row(k) /= nrm;
    }
  }
  return D;
}

namespace {

const Eigen::MatrixXd& cached_directions(int dim, int n_dirs, std::uint64_t seed) {
  thread_local std::map<std::tuple<int, int, std::uint64_t>, Eigen::MatrixXd> cache;
  const auto key = std::make_tuple(dim, n_dirs, seed);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, sample_directions(dim, n_dirs, seed)).first;
  return it->second;
}

}  // namespace

Containment contains(const Ellipsoid& outer, const Ellipsoid& inner, int n_dirs,
                     std::uint64_t seed) {
  require_dims(outer.dim() == inner.dim(), "contains");
  if (n_dirs < 16) throw Error(Errc::parameter, "contains: n_dirs must be >= 16");
  const Eigen::MatrixXd& D = cached_directions(outer.dim(), n_dirs, seed);
  std::vector<double> so(static_cast<std::size_t>(n_dirs));
  std::vector<double> si(static_cast<std::size_t>(n_dirs));
  kernels::support_batch(D, outer.center(), outer.shape(), so);
  kernels::support_batch(D, inner.center(), inner.shape(), si);
  Containment res;
  res.margin = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (int k = 0; k < n_dirs; ++k) {
    const double gap = so[k] - si[k];
    res.margin = std::min(res.margin, gap);
    if (si[k] > so[k] + 1e-9) ok = false;
  }
  res.contained = ok;
  return res;
}

Eigen::MatrixXd boundary_points(const Ellipsoid& e, int n_dirs, std::uint64_t seed) {
  const Eigen::MatrixXd& D = cached_directions(e.dim(), n_dirs, seed);
  const Mat root = detail::sqrt_sym_clipped(e.shape());
  Eigen::MatrixXd P(n_dirs, e.dim());
  for (int k = 0; k < n_dirs; ++k) {
    const Vec v = D.row(k).transpose();
    P.row(k) = (e.center() + root * v).transpose();
  }
  return P;
}

double ellipsoid_metric(const Ellipsoid& e, const Vec& x, double span_tol) {
  require_dims(x.size() == e.dim(), "ellipsoid_metric");
  const Vec d = x - e.center();
  const double dn = d.norm();
  if (dn == 0.0) return 0.0;
  const Mat P = pinv_psd(e.shape());
  const Vec Pd = P * d;
  const Vec outside = d - e.shape() * Pd;
  if (outside.norm() > span_tol * dn + 1e-12) return std::numeric_limits<double>::infinity();
  return d.dot(Pd);
}

}  // namespace ellitube
