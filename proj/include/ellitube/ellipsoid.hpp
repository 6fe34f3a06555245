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

#ifndef ELLITUBE_ELLIPSOID_HPP_
#define ELLITUBE_ELLIPSOID_HPP_

/**
 * @file
 * @brief Ellipsoids E(q, Q) = { q + Q^{1/2} v : |v| <= 1 } and the set
 * calculus used by the tube machinery.
 *
 * Shape matrices may be singular; every routine works on the span of Q.
 */

#include <cstdint>

#include "ellitube/types.hpp"

namespace ellitube {

/// Relative tolerance below which negative eigenvalues count as rounding dust.
inline constexpr double kPsdDustTol = 1e-10;
/// Relative symmetry tolerance on construction.
inline constexpr double kSymmetryTol = 1e-12;

class Ellipsoid {
 public:
  /// Validates symmetry and positive semidefiniteness of @p shape. Negative
  /// eigenvalues within kPsdDustTol of zero are clipped.
  Ellipsoid(Vec center, Mat shape);

  static Ellipsoid point(const Vec& center);

  const Vec& center() const { return q_; }
  const Mat& shape() const { return Q_; }
  int dim() const { return static_cast<int>(q_.size()); }

 private:
  Vec q_;
  Mat Q_;
};

/// Unit-norm direction in R^n.
class Direction {
 public:
  /// Throws unless | |c| - 1 | <= 1e-12.
  explicit Direction(Vec c);
  /// Normalizes @p v; throws on a zero vector.
  static Direction normalized(const Vec& v);

  const Vec& vec() const { return c_; }
  int dim() const { return static_cast<int>(c_.size()); }

 private:
  Vec c_;
};

/// Support function c'q + sqrt(c'Qc).
double support(const Ellipsoid& e, const Direction& c);

/// Symmetric square root via eigendecomposition; negative eigenvalues are
/// clipped to zero. Throws on a non-symmetric input.
Mat sqrt_psd(const Mat& Q);

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix. Eigenvalues below
/// 1e-12 * lambda_max are treated as zero.
Mat pinv_psd(const Mat& Q);

/// Symmetrizes @p Q in place and clips negative eigenvalues to zero. Returns
/// the most negative eigenvalue seen before clipping (0 when already PSD);
/// callers decide whether that much negativity was acceptable.
double repair_psd(Mat& Q);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Mat& Q);
/// Largest eigenvalue of a symmetric matrix.
double max_eigenvalue(const Mat& Q);

/// Outward normal Q^+(xi - q) / |Q^+(xi - q)| on the extended domain
/// E(q,Q) \ {q}.
Direction gauss_map(const Ellipsoid& e, const Vec& xi);

/// Support point q + Qc / sqrt(c'Qc); returns q when Q = 0.
Vec inverse_gauss_map(const Ellipsoid& e, const Direction& c);

struct InnerControl {
  Mat R_u;
  double min_eig = 0.0;
  /// False when R_u has an eigenvalue below -1e-10 * (1 + lambda_max).
  bool feasible = true;
};

/// Shape of the inner ellipsoid E(u_x, R_u) inside E(q_u, Q_u):
/// R_u = (1 - gamma) Q_u + (1 - 1/gamma) (u_x - q_u)(u_x - q_u)'.
/// Throws on gamma outside (0, 1] or u_x outside E(q_u, Q_u).
InnerControl inner_control_ellipsoid(const Vec& q_u, const Mat& Q_u, const Vec& u_x,
                                     double gamma);

/// Same formula without precondition checks; used on optimizer iterates.
Mat inner_control_shape(const Vec& q_u, const Mat& Q_u, const Vec& u_x, double gamma);

/// Outer bound Q1 / beta + Q2 / (1 - beta) of E(Q1) (+) E(Q2).
Mat minkowski_outer(const Mat& Q1, const Mat& Q2, double beta);

struct Containment {
  bool contained = false;
  /// min over sampled c of support(outer, c) - support(inner, c).
  double margin = 0.0;
};

inline constexpr std::uint64_t kDefaultDirectionSeed = 0x5eed'd1ec'7104'5ULL;

/// Sampled containment test: necessary for inner subset outer, and
/// sufficient as n_dirs grows. Requires n_dirs >= 16.
Containment contains(const Ellipsoid& outer, const Ellipsoid& inner, int n_dirs = 256,
                     std::uint64_t seed = kDefaultDirectionSeed);

/// Quasi-uniform unit directions, one per row (n_dirs x dim). Equally spaced
/// angles in 2-D, a Fibonacci lattice in 3-D, seeded normalized Gaussians
/// otherwise; +/-1 alternating in 1-D.
Eigen::MatrixXd sample_directions(int dim, int n_dirs,
                                  std::uint64_t seed = kDefaultDirectionSeed);

/// Boundary points q + Q^{1/2} v for the sampled unit directions v, one per row.
Eigen::MatrixXd boundary_points(const Ellipsoid& e, int n_dirs,
                                std::uint64_t seed = kDefaultDirectionSeed);

/// (x - q)' Q^+ (x - q), or +inf when x - q leaves the span of Q by more
/// than @p span_tol (relative to |x - q|, absolute floor 1e-12).
double ellipsoid_metric(const Ellipsoid& e, const Vec& x, double span_tol = 1e-7);

}  // namespace ellitube

#endif  // ELLITUBE_ELLIPSOID_HPP_
