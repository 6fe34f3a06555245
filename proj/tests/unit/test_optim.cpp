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

#include "ellitube/optim.hpp"

using namespace ellitube;
using Eigen::VectorXd;

namespace {

// min (x0 - 2)^2 + (x1 - 1)^2  s.t.  x0 + x1 <= 1, x0 >= 0.
// KKT: x = (1, 0), f = 2.
class Projection final : public optim::Problem {
 public:
  explicit Projection(bool analytic) : analytic_(analytic) {}
  int n() const override { return 2; }
  int m() const override { return 2; }
  optim::Evaluation evaluate(const VectorXd& x) override {
    optim::Evaluation e;
    e.f = (x(0) - 2) * (x(0) - 2) + (x(1) - 1) * (x(1) - 1);
    e.g = VectorXd(2);
    e.g << x(0) + x(1) - 1.0, -x(0);
    return e;
  }
  bool weighted_gradient(const VectorXd& x, const VectorXd& w, VectorXd& grad) override {
    if (!analytic_) return false;
    grad = VectorXd(2);
    grad << 2 * (x(0) - 2) + w(0) - w(1), 2 * (x(1) - 1) + w(0);
    return true;
  }

 private:
  bool analytic_;
};

// Unreachable constraint: x^2 + 1 <= 0.
class Infeasible final : public optim::Problem {
 public:
  int n() const override { return 1; }
  int m() const override { return 1; }
  optim::Evaluation evaluate(const VectorXd& x) override {
    optim::Evaluation e;
    e.f = x(0);
    e.g = VectorXd::Constant(1, x(0) * x(0) + 1.0);
    return e;
  }
};

}  // namespace

TEST(Lbfgs, Rosenbrock) {
  auto fg = [](const VectorXd& x, VectorXd* g) {
    const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
    if (g) {
      g->resize(2);
      (*g)(0) = -2.0 * a - 400.0 * x(0) * b;
      (*g)(1) = 200.0 * b;
    }
    return a * a + 100.0 * b * b;
  };
  const optim::LbfgsResult r = optim::lbfgs(fg, VectorXd::Constant(2, -1.2), 500, 1e-10);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 1.0, 1e-6);
  EXPECT_NEAR(r.x(1), 1.0, 1e-6);
}

TEST(Minimize, KktPointWithAnalyticGradient) {
  Projection p(true);
  const optim::Result r = optim::minimize(p, VectorXd::Zero(2));
  EXPECT_TRUE(r.feasible);
  EXPECT_TRUE(r.converged) << r.message;
  EXPECT_NEAR(r.x(0), 1.0, 1e-5);
  EXPECT_NEAR(r.x(1), 0.0, 1e-5);
  EXPECT_NEAR(r.f, 2.0, 1e-5);
  EXPECT_LE(r.max_violation, 1e-6);
  EXPECT_NEAR(r.mu(0), 2.0, 1e-3);
}

TEST(Minimize, KktPointWithFiniteDifferences) {
  Projection p(false);
  const optim::Result r = optim::minimize(p, VectorXd::Constant(2, 3.0));
  EXPECT_TRUE(r.feasible);
  EXPECT_NEAR(r.f, 2.0, 1e-4);
}

TEST(Minimize, InfeasibleIsReportedNotHidden) {
  Infeasible p;
  optim::Options o;
  o.max_outer = 5;
  const optim::Result r = optim::minimize(p, VectorXd::Constant(1, 1.0), o);
  EXPECT_FALSE(r.feasible);
  EXPECT_FALSE(r.converged);
  EXPECT_GE(r.max_violation, 1.0 - 1e-9);
}

TEST(Minimize, EvaluationBudget) {
  Projection p(false);
  optim::Options o;
  o.max_evaluations = 5;
  const optim::Result r = optim::minimize(p, VectorXd::Constant(2, 3.0), o);
  EXPECT_FALSE(r.converged);
  EXPECT_LE(r.evaluations, 6);
}

TEST(Minimize, WrongStartSizeThrows) {
  Projection p(true);
  EXPECT_ANY_THROW(optim::minimize(p, VectorXd::Zero(3)));
}
