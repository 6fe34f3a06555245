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

#include <random>

#include "ellitube/ellipsoid.hpp"
#include "oracles.hpp"

using namespace ellitube;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }
Mat diag2(double a, double b) { return v2(a, b).asDiagonal(); }

}  // namespace

TEST(Support, UnitBall) {
  EXPECT_DOUBLE_EQ(support(Ellipsoid(Vec::Zero(2), Mat::Identity(2, 2)), Direction(v2(1, 0))),
                   1.0);
}

TEST(Support, ShiftedEllipseMatchesBruteForce) {
  const Ellipsoid e(v2(1, 0), diag2(4, 1));
  EXPECT_NEAR(support(e, Direction(v2(1, 0))), 3.0, 1e-14);
  EXPECT_NEAR(oracle::support_2d_bruteforce(e.center(), e.shape(), v2(1, 0), 100000), 3.0, 1e-3);
}

TEST(Support, RandomEllipsesMatchBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd Q = oracle::random_psd(rng, 2) + 1e-3 * Eigen::MatrixXd::Identity(2, 2);
    const Eigen::VectorXd q = Eigen::VectorXd::Random(2);
    const Eigen::VectorXd c = Eigen::VectorXd::Random(2).normalized();
    const double brute = oracle::support_2d_bruteforce(q, Q, c, 20000);
    EXPECT_NEAR(support(Ellipsoid(q, Q), Direction::normalized(c)), brute, 1e-4);
  }
}

TEST(Support, SingletonGivesLinearForm) {
  const Vec q = v2(0.3, -2.0);
  const Direction c = Direction::normalized(v2(1, 1));
  EXPECT_DOUBLE_EQ(support(Ellipsoid::point(q), c), c.vec().dot(q));
}

TEST(Support, DirectionMustBeUnit) {
  expect_errc([] { Direction(v2(1, 1)); }, Errc::invariant_violation);
  expect_errc([] { Direction::normalized(v2(0, 0)); }, Errc::degenerate_point);
}

TEST(EllipsoidCtor, RejectsNonSymmetricAndIndefinite) {
  Mat bad(2, 2);
  bad << 1, 0.5, 0, 1;
  expect_errc([&] { Ellipsoid(Vec::Zero(2), bad); }, Errc::invariant_violation);
  expect_errc([&] { Ellipsoid(Vec::Zero(2), diag2(1, -1)); }, Errc::invariant_violation);
  expect_errc([&] { Ellipsoid(Vec::Zero(3), diag2(1, 1)); }, Errc::dimension_mismatch);
}

TEST(EllipsoidCtor, ClipsRoundingDust) {
  const Ellipsoid e(Vec::Zero(2), diag2(1, -1e-14));
  EXPECT_GE(e.shape()(1, 1), 0.0);
}

TEST(SqrtPsd, Examples) {
  EXPECT_TRUE(sqrt_psd(diag2(4, 9)).isApprox(diag2(2, 3), 1e-15));
  EXPECT_TRUE(sqrt_psd(Mat::Zero(2, 2)).isZero());
}

TEST(SqrtPsd, SquaresBackOnRandomMatrices) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 5;
    const int rank = trial % 3 == 0 ? std::max(1, n - 1) : n;
    const Mat Q = oracle::random_psd(rng, n, rank);
    const Mat R = sqrt_psd(Q);
    EXPECT_LE((R * R - Q).norm(), 1e-12 * (1.0 + Q.norm()));
    EXPECT_LE((R - R.transpose()).norm(), 1e-14 * (1.0 + R.norm()));
    EXPECT_GE(min_eigenvalue(R), -1e-12);
    if (rank == n && min_eigenvalue(Q) > 1e-4) {
      EXPECT_LE((R - oracle::sqrtm(Q)).norm(), 1e-9 * (1.0 + R.norm()));
    }
  }
}

TEST(SqrtPsd, RejectsNonSymmetric) {
  Mat bad(2, 2);
  bad << 1, 1, 0, 1;
  EXPECT_THROW(sqrt_psd(bad), Error);
}

TEST(PinvPsd, InvertsOnTheSpan) {
  const Mat P = pinv_psd(diag2(4, 0));
  EXPECT_TRUE(P.isApprox(diag2(0.25, 0), 1e-15));
}

TEST(RepairPsd, ReportsNegativity) {
  Mat Q = diag2(1, -0.5);
  EXPECT_DOUBLE_EQ(repair_psd(Q), -0.5);
  EXPECT_GE(min_eigenvalue(Q), 0.0);
  Mat ok = diag2(1, 2);
  EXPECT_EQ(repair_psd(ok), 0.0);
}

TEST(GaussMap, Examples) {
  EXPECT_TRUE(gauss_map(Ellipsoid(Vec::Zero(2), Mat::Identity(2, 2)), v2(0, 2)).vec().isApprox(
      v2(0, 1), 1e-15));
  EXPECT_TRUE(gauss_map(Ellipsoid(v2(1, 1), diag2(4, 1)), v2(3, 1)).vec().isApprox(v2(1, 0), 1e-15));
  EXPECT_TRUE(gauss_map(Ellipsoid(Vec::Zero(2), diag2(1, 0)), v2(1, 0)).vec().isApprox(v2(1, 0), 1e-15));
}

TEST(GaussMap, MatchesNormalizedGradientOfBoundaryFunction) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd Q = oracle::random_psd(rng, 3) + 0.1 * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::VectorXd q = Eigen::VectorXd::Random(3);
    const Eigen::VectorXd xi = q + Eigen::VectorXd::Random(3);
    const Eigen::VectorXd grad = 2.0 * Q.inverse() * (xi - q);
    EXPECT_LE((gauss_map(Ellipsoid(q, Q), xi).vec() - grad.normalized()).norm(), 1e-10);
  }
}

TEST(GaussMap, Errors) {
  const Ellipsoid e(v2(1, 1), diag2(1, 0));
  expect_errc([&] { gauss_map(e, v2(1, 1)); }, Errc::degenerate_point);
  expect_errc([&] { gauss_map(e, v2(1, 2)); }, Errc::span);
}

TEST(InverseGaussMap, Examples) {
  EXPECT_TRUE(inverse_gauss_map(Ellipsoid(Vec::Zero(2), Mat::Identity(2, 2)), Direction(v2(0, 1)))
                  .isApprox(v2(0, 1), 1e-15));
  EXPECT_TRUE(inverse_gauss_map(Ellipsoid(v2(1, 0), diag2(4, 1)), Direction(v2(1, 0)))
                  .isApprox(v2(3, 0), 1e-15));
  const Vec q = v2(2, -1);
  EXPECT_EQ(inverse_gauss_map(Ellipsoid::point(q), Direction::normalized(v2(1, 3))), q);
  expect_errc([] { inverse_gauss_map(Ellipsoid(Vec::Zero(2), diag2(1, 0)), Direction(v2(0, 1))); },
              Errc::nullspace_direction);
}

TEST(InverseGaussMap, AttainsTheSupportAndInvertsTheGaussMap) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat Q = oracle::random_psd(rng, 3) + 0.05 * Mat::Identity(3, 3);
    const Vec q = Vec::Random(3);
    const Ellipsoid e(q, Q);
    const Direction c = Direction::normalized(Vec::Random(3));
    const Vec xi = inverse_gauss_map(e, c);
    EXPECT_NEAR(c.vec().dot(xi), support(e, c), 1e-12);
    EXPECT_NEAR(ellipsoid_metric(e, xi), 1.0, 1e-10);
    EXPECT_LE((gauss_map(e, xi).vec() - c.vec()).norm(), 1e-9);
  }
}

TEST(InnerControl, Examples) {
  const Mat Qu = Mat::Constant(1, 1, 36.0);
  const Vec qu = Vec::Zero(1);
  EXPECT_NEAR(inner_control_ellipsoid(qu, Qu, qu, 0.3).R_u(0, 0), 0.7 * 36.0, 1e-12);
  EXPECT_NEAR(inner_control_ellipsoid(qu, Qu, Vec::Constant(1, 4.0), 1.0).R_u(0, 0), 0.0, 1e-12);
  const InnerControl ic = inner_control_ellipsoid(qu, Qu, Vec::Constant(1, 3.0), 0.5);
  EXPECT_NEAR(ic.R_u(0, 0), 9.0, 1e-12);
  EXPECT_TRUE(ic.feasible);
  // [3 - 3, 3 + 3] = [0, 6] inside [-6, 6].
  EXPECT_LE(3.0 + std::sqrt(ic.R_u(0, 0)), 6.0 + 1e-12);
  EXPECT_GE(3.0 - std::sqrt(ic.R_u(0, 0)), -6.0 - 1e-12);
}

TEST(InnerControl, Errors) {
  const Mat Qu = Mat::Identity(2, 2);
  expect_errc([&] { inner_control_ellipsoid(Vec::Zero(2), Qu, Vec::Zero(2), 0.0); }, Errc::parameter);
  expect_errc([&] { inner_control_ellipsoid(Vec::Zero(2), Qu, Vec::Zero(2), 1.5); }, Errc::parameter);
  expect_errc([&] { inner_control_ellipsoid(Vec::Zero(2), Qu, v2(1, 1), 0.5); }, Errc::precondition);
}

TEST(InnerControl, ContainedForFeasibleGammaInHigherDimensions) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ud;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 2;
    const Mat Qu = oracle::random_psd(rng, n) + 0.1 * Mat::Identity(n, n);
    const Vec qu = Vec::Random(n);
    const Vec z = oracle::ball(rng, n);
    const Vec ux = qu + oracle::sqrtm(Qu) * z;
    const double lo = std::max(z.squaredNorm(), 1e-6);
    const double gamma = lo + ud(rng) * (1.0 - lo);
    const InnerControl ic = inner_control_ellipsoid(qu, Qu, ux, gamma);
    ASSERT_TRUE(ic.feasible);
    const Containment c = contains(Ellipsoid(qu, Qu), Ellipsoid(ux, ic.R_u), 512);
    EXPECT_GE(c.margin, -1e-9);
  }
}

TEST(Minkowski, Examples) {
  EXPECT_TRUE(minkowski_outer(Mat::Identity(2, 2), Mat::Identity(2, 2), 0.5)
                  .isApprox(4.0 * Mat::Identity(2, 2), 1e-15));
  EXPECT_TRUE(minkowski_outer(Mat::Identity(2, 2), Mat::Zero(2, 2), 0.9)
                  .isApprox(Mat::Identity(2, 2) / 0.9, 1e-15));
  expect_errc([] { minkowski_outer(Mat::Identity(2, 2), Mat::Identity(2, 2), 1.0); }, Errc::parameter);
  expect_errc([] { minkowski_outer(Mat::Identity(2, 2), Mat::Identity(2, 2), 0.0); }, Errc::parameter);
}

TEST(Minkowski, OuterBoundDominatesSupportSum) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ud(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat Q1 = oracle::random_psd(rng, 3);
    const Mat Q2 = oracle::random_psd(rng, 3, 1);
    const Mat R = minkowski_outer(Q1, Q2, ud(rng));
    const Eigen::MatrixXd dirs = sample_directions(3, 256, 100 + trial);
    for (int k = 0; k < dirs.rows(); ++k) {
      const Eigen::VectorXd c = dirs.row(k).transpose();
      EXPECT_GE(std::sqrt(c.dot(R * c)),
                std::sqrt(c.dot(Q1 * c)) + std::sqrt(c.dot(Q2 * c)) - 1e-12);
    }
  }
}

TEST(Contains, Examples) {
  const Ellipsoid big(Vec::Zero(2), 4.0 * Mat::Identity(2, 2));
  const Containment a = contains(big, Ellipsoid(Vec::Zero(2), Mat::Identity(2, 2)));
  EXPECT_TRUE(a.contained);
  EXPECT_NEAR(a.margin, 1.0, 1e-12);
  const Containment b = contains(big, Ellipsoid(v2(2, 0), Mat::Identity(2, 2)));
  EXPECT_FALSE(b.contained);
  EXPECT_NEAR(b.margin, -1.0, 1e-12);
  const Containment c = contains(big, big);
  EXPECT_TRUE(c.contained);
  EXPECT_NEAR(c.margin, 0.0, 1e-12);
  expect_errc([&] { contains(big, big, 8); }, Errc::parameter);
}

TEST(SampleDirections, UnitRowsAndDeterministic) {
  for (int dim : {1, 2, 3, 5}) {
    const Eigen::MatrixXd d = sample_directions(dim, 64, 9);
    ASSERT_EQ(d.rows(), 64);
    ASSERT_EQ(d.cols(), dim);
    for (int k = 0; k < 64; ++k) EXPECT_NEAR(d.row(k).norm(), 1.0, 1e-14);
    EXPECT_EQ(d, sample_directions(dim, 64, 9));
  }
}

TEST(BoundaryPoints, LieOnTheBoundary) {
  const Ellipsoid e(v2(1, -1), (Mat(2, 2) << 2, 0.5, 0.5, 1).finished());
  const Eigen::MatrixXd pts = boundary_points(e, 64);
  for (int k = 0; k < pts.rows(); ++k) EXPECT_NEAR(ellipsoid_metric(e, pts.row(k).transpose()), 1.0, 1e-12);
}

TEST(Metric, SpanHandling) {
  const Ellipsoid e(Vec::Zero(2), diag2(4, 0));
  EXPECT_NEAR(ellipsoid_metric(e, v2(1, 0)), 0.25, 1e-15);
  EXPECT_TRUE(std::isinf(ellipsoid_metric(e, v2(0, 1))));
  EXPECT_EQ(ellipsoid_metric(e, Vec::Zero(2)), 0.0);
}
