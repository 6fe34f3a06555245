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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ellitube/bounders.hpp"
#include "oracles.hpp"

using namespace ellitube;

namespace {

// x' = x^2 + u + w on [-2, 2]: constant Hessian 2.
class Quadratic final : public ControlAffineModel {
 public:
  Quadratic() : ControlAffineModel(spec()) {}
  Vec drift(const Vec& x, const Vec& w) const override {
    return Vec::Constant(1, x(0) * x(0) + w(0));
  }
  Mat input_matrix(const Vec&) const override { return Mat::Identity(1, 1); }

 private:
  static Spec spec() {
    Spec s;
    s.name = "quadratic";
    s.n_x = s.n_u = s.n_w = 1;
    s.q_w = Vec::Zero(1);
    s.Q_w = Mat::Identity(1, 1);
    s.q_u = Vec::Zero(1);
    s.Q_u = Mat::Identity(1, 1);
    s.hessian_domain = {Vec::Constant(1, -2.0), Vec::Constant(1, 2.0)};
    return s;
  }
};

}  // namespace

TEST(FrobeniusConstants, LinearModelIsZero) {
  const FrobeniusBoundData b = compute_frobenius_constants(*scalar_linear());
  EXPECT_TRUE(b.is_zero());
  EXPECT_TRUE(omega_n(b, Mat::Identity(1, 1)).isZero());
}

TEST(FrobeniusConstants, ConstantHessian) {
  const Quadratic m;
  const FrobeniusBoundData b = compute_frobenius_constants(m, 10, 0.0);
  ASSERT_EQ(b.n_x(), 1);
  EXPECT_NEAR(b.F_bar[0], 2.0, 1e-4);
  EXPECT_NEAR(compute_frobenius_constants(m, 10, 0.05).F_bar[0], 2.1, 1e-4);
}

TEST(FrobeniusConstants, SpringMassDamperMaxAtLeftEdge) {
  const FrobeniusBoundData b = compute_frobenius_constants(*spring_mass_damper());
  EXPECT_EQ(b.F_bar[0], 0.0);
  const double peak = 0.33 * std::exp(1.0) * 3.0;
  EXPECT_NEAR(peak, 2.691099, 1e-6);
  EXPECT_NEAR(b.F_bar[1], peak * 1.05, 1e-4);
  EXPECT_EQ(b.active_components(), 1);
}

TEST(FrobeniusConstants, ParameterErrors) {
  expect_errc([] { compute_frobenius_constants(*spring_mass_damper(), 1); }, Errc::parameter);
  expect_errc([] { compute_frobenius_constants(*spring_mass_damper(), 10, -1.0); },
              Errc::parameter);
}

TEST(OmegaN, ZeroShapeGivesZero) {
  const FrobeniusBoundData b = compute_frobenius_constants(*spring_mass_damper());
  EXPECT_TRUE(omega_n(b, Mat::Zero(2, 2)).isZero());
}

TEST(OmegaN, ScalarSquareOracle) {
  const Quadratic m;
  const FrobeniusBoundData b = compute_frobenius_constants(m, 10, 0.0);
  for (double Q : {0.01, 0.25, 1.0}) {
    const double On = omega_n(b, Mat::Constant(1, 1, Q))(0, 0);
    EXPECT_NEAR(On, Q * Q, 1e-3 * Q * Q);
    // The remainder of x^2 is dx^2, whose sup over [-sqrt(Q), sqrt(Q)] is Q.
    EXPECT_LE(Q, std::sqrt(On) * (1.0 + 1e-3));
    for (double d : {-std::sqrt(Q), 0.3 * std::sqrt(Q), std::sqrt(Q)}) {
      const double n = eval_nonlinearity_remainder(m, Vec::Constant(1, 0.5), Vec::Constant(1, d))(0);
      EXPECT_NEAR(n, d * d, 1e-10);
    }
  }
}

TEST(OmegaN, SpringMassDamperFormulaAndMembership) {
  const ModelPtr m = spring_mass_damper();
  const FrobeniusBoundData b = compute_frobenius_constants(*m);
  const Mat Qx = 0.04 * Mat::Identity(2, 2);
  const Mat On = omega_n(b, Qx);
  const double expect22 = 0.25 * b.F_bar[1] * b.F_bar[1] * Qx.squaredNorm();
  EXPECT_NEAR(On(1, 1), expect22, 1e-15);
  EXPECT_EQ(On(0, 0), 0.0);
  EXPECT_EQ(On(0, 1), 0.0);
  // Frozen regression value of the same quantity.
  EXPECT_NEAR(On(1, 1), 6.387456e-3, 1e-8);

  std::mt19937_64 rng(9);
  const Ellipsoid bound(Vec::Zero(2), On);
  const Eigen::MatrixXd root = oracle::sqrtm(Qx);
  for (const Vec& q : {Vec((Vec(2) << 0.0, 0.0).finished()), Vec((Vec(2) << -0.7, 1.0).finished()),
                       Vec((Vec(2) << 0.9, -2.5).finished())}) {
    for (int s = 0; s < 10000; ++s) {
      const Vec d = root * oracle::ball(rng, 2);
      EXPECT_LE(ellipsoid_metric(bound, eval_nonlinearity_remainder(*m, q, d)), 1.0 + 1e-12);
    }
  }
}

TEST(OmegaG, ConstantInputMatrixGivesZero) {
  const ModelPtr m = spring_mass_damper();
  EXPECT_TRUE(omega_G(*m, Mat::Identity(2, 2), Mat::Constant(1, 1, 9.0)).isZero());
}

TEST(OmegaG, ScalarBilinearBeta) {
  const ModelPtr m = scalar_bilinear(-1.0, 0.01, 4.0);
  EXPECT_TRUE(omega_G(*m, Mat::Zero(1, 1), Mat::Constant(1, 1, 4.0)).isZero());
  const Mat OG = omega_G(*m, Mat::Identity(1, 1), Mat::Constant(1, 1, 4.0));
  EXPECT_NEAR(OG(0, 0), 4.0, 1e-14);
  // Dominance: (G(xi) - G(q)) R^(1/2) s Q^(1/2) counted twice stays below beta
  // for every xi in E(q, Q) and |s| <= 1.
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const double q = 0.2;
  for (int i = 0; i < 10000; ++i) {
    const double xi = q + ud(rng);
    const double s = ud(rng);
    const double dG = m->input_matrix(Vec::Constant(1, xi))(0, 0) -
                      m->input_matrix(Vec::Constant(1, q))(0, 0);
    EXPECT_LE(2.0 * dG * 2.0 * s * 1.0, OG(0, 0) + 1e-12);
  }
}

TEST(OmegaG, VaryingInputNeedsLipschitzConstant) {
  class NoLipschitz final : public ControlAffineModel {
   public:
    NoLipschitz() : ControlAffineModel(spec()) {}
    Vec drift(const Vec& x, const Vec&) const override { return -x; }
    Mat input_matrix(const Vec& x) const override { return Mat::Constant(1, 1, 1.0 + x(0)); }

   private:
    static Spec spec() {
      Spec s;
      s.name = "nolip";
      s.n_x = s.n_u = s.n_w = 1;
      s.q_w = Vec::Zero(1);
      s.Q_w = Mat::Identity(1, 1);
      s.q_u = Vec::Zero(1);
      s.Q_u = Mat::Identity(1, 1);
      s.hessian_domain = {Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
      s.input_matrix_constant = false;
      return s;
    }
  };
  const NoLipschitz m;
  expect_errc([&] { omega_G(m, Mat::Identity(1, 1), Mat::Identity(1, 1)); }, Errc::configuration);
}

TEST(BoundCache, RoundTripsAndKeysOnParameters) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(ELLITUBE_TEST_TMP) / "bounders";
  fs::create_directories(dir);
  const fs::path file = dir / "cache.json";
  fs::remove(file);
  const ModelPtr m = spring_mass_damper();
  const FrobeniusBoundData a = cached_frobenius_constants(*m, file, 20);
  ASSERT_TRUE(fs::exists(file));
  const FrobeniusBoundData b = cached_frobenius_constants(*m, file, 20);
  EXPECT_EQ(a.F_bar, b.F_bar);
  SpringMassDamperParams p;
  p.stiffness = 0.5;
  const FrobeniusBoundData c = cached_frobenius_constants(*spring_mass_damper(p), file, 20);
  EXPECT_GT(c.F_bar[1], a.F_bar[1]);
  EXPECT_EQ(cached_frobenius_constants(*m, "", 20).F_bar, a.F_bar);
}
