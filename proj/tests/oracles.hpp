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

// Test-only reference implementations. Nothing here calls into the library's
// matrix helpers, so a shared bug cannot make a test pass.

#ifndef ELLITUBE_TESTS_ORACLES_HPP_
#define ELLITUBE_TESTS_ORACLES_HPP_

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "ellitube/types.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Principal square root of an SPD matrix by the Denman-Beavers iteration.
/// A multiple of the identity is added for singular inputs and the shift is
/// removed to first order, which is enough at test tolerances.
inline MatrixXd sqrtm(const MatrixXd& A, double shift = 0.0) {
  const auto n = A.rows();
  if (A.isZero(0.0) && shift == 0.0) return A;
  MatrixXd Y = A + shift * MatrixXd::Identity(n, n);
  MatrixXd Z = MatrixXd::Identity(n, n);
  for (int it = 0; it < 100; ++it) {
    const MatrixXd Yi = Y.inverse();
    const MatrixXd Zi = Z.inverse();
    const MatrixXd Yn = 0.5 * (Y + Zi);
    Z = 0.5 * (Z + Yi);
    const double d = (Yn - Y).norm();
    Y = Yn;
    if (d < 1e-15 * (1.0 + Y.norm())) break;
  }
  return Y;
}

/// Random symmetric PSD matrix L L' with L having entries in [-1, 1].
inline MatrixXd random_psd(std::mt19937_64& rng, int n, int rank = -1) {
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const int r = rank < 0 ? n : rank;
  MatrixXd L(n, r);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) L(i, j) = ud(rng);
  return L * L.transpose();
}

/// Uniform sample of the unit ball in R^n.
inline VectorXd ball(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v / v.norm() * std::pow(ud(rng), 1.0 / n);
}

/// max c'z over n boundary points z = q + L v, L L' = Q, of a 2-D ellipsoid.
inline double support_2d_bruteforce(const VectorXd& q, const MatrixXd& Q, const VectorXd& c,
                                    int n) {
  Eigen::LLT<MatrixXd> llt(Q);
  const MatrixXd L = llt.matrixL();
  double best = -1e300;
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * M_PI * k / n;
    VectorXd v(2);
    v << std::cos(a), std::sin(a);
    best = std::max(best, c.dot(q + L * v));
  }
  return best;
}

/// Classical RK4 for x' = f(t, x).
inline VectorXd rk4(const std::function<VectorXd(double, const VectorXd&)>& f, VectorXd x,
                    double t0, double t1, int steps) {
  const double h = (t1 - t0) / steps;
  double t = t0;
  for (int i = 0; i < steps; ++i) {
    const VectorXd k1 = f(t, x);
    const VectorXd k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
    const VectorXd k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
    const VectorXd k4 = f(t + h, x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
  }
  return x;
}

/// Spring-mass-damper drift with stiffness k0 exp(-x1).
inline VectorXd smd_drift(const VectorXd& x, const VectorXd& w, double k0 = 0.33,
                          double c = 1.1, double m = 1.0) {
  VectorXd f(2);
  f << x(1) + w(0), (-k0 * std::exp(-x(0)) * x(0) - c * x(1) + w(1)) / m;
  return f;
}

}  // namespace oracle

/// Runs @p fn and checks that it throws ellitube::Error with @p code.
template <class Fn>
void expect_errc(Fn&& fn, ellitube::Errc code) {
  try {
    fn();
    ADD_FAILURE() << "expected ellitube::Error(" << ellitube::to_string(code) << ")";
  } catch (const ellitube::Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

#endif  // ELLITUBE_TESTS_ORACLES_HPP_
