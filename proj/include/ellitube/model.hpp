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

#ifndef ELLITUBE_MODEL_HPP_
#define ELLITUBE_MODEL_HPP_

/**
 * @file
 * @brief Control-affine uncertain systems  x' = f(x, w) + G(x) u.
 *
 * A model carries its evaluators together with the disturbance ellipsoid
 * E(q_w, Q_w) (an outer bound of W), the admissible-control ellipsoid
 * E(q_u, Q_u) (an inner bound of U) and the box over which Hessian bounds
 * are computed.
 */

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ellitube/ellipsoid.hpp"

namespace ellitube {

/// Axis-aligned box.
struct Box {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& x) const;
  /// E subset of the box, checked with the support function along +/- e_i.
  bool contains(const Ellipsoid& e) const;
};

struct LinearConstraint {
  Vec h;
  double eta = 0.0;
};

/// Half-spaces h_i' x <= eta_i.
class LinearStateConstraints {
 public:
  LinearStateConstraints() = default;
  void add(Vec h, double eta);
  const std::vector<LinearConstraint>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

 private:
  std::vector<LinearConstraint> rows_;
};

class ControlAffineModel {
 public:
  struct Spec {
    std::string name;
    int n_x = 0;
    int n_u = 0;
    int n_w = 0;
    Vec q_w;
    Mat Q_w;
    Vec q_u;
    Mat Q_u;
    Box hessian_domain;
    /// G does not depend on x.
    bool input_matrix_constant = true;
    /// f(x, w) = f0(x) + E w with constant E.
    bool disturbance_affine = true;
    /// Lipschitz constant of G on the domain (spectral norm); only needed
    /// when G varies with x.
    std::optional<double> input_lipschitz;
    /// Per-component scalings S_i of the Hessian bounds; empty = identity.
    std::vector<Mat> hessian_scaling;
  };

  explicit ControlAffineModel(Spec spec);
  virtual ~ControlAffineModel() = default;

  ControlAffineModel(const ControlAffineModel&) = delete;
  ControlAffineModel& operator=(const ControlAffineModel&) = delete;

  /// Drift f(x, w).
  virtual Vec drift(const Vec& x, const Vec& w) const = 0;
  /// Input matrix G(x), n_x x n_u.
  virtual Mat input_matrix(const Vec& x) const = 0;

  /// df/dx; central differences unless overridden.
  virtual Mat drift_jacobian_x(const Vec& x, const Vec& w) const;
  /// df/dw; central differences unless overridden.
  virtual Mat drift_jacobian_w(const Vec& x, const Vec& w) const;
  /// sum_j dG_{:,j}/dx u_j; zero for constant G, central differences otherwise.
  virtual Mat input_jacobian_times(const Vec& x, const Vec& u) const;
  /// d^2 f_i / dx^2 at (x, q_w); second-order central differences unless
  /// overridden.
  virtual Mat drift_hessian(int i, const Vec& x) const;
  /// Stable identifier of the parameter values (cache keys, manifests).
  virtual std::string fingerprint() const;

  Vec dynamics(const Vec& x, const Vec& u, const Vec& w) const {
    return drift(x, w) + input_matrix(x) * u;
  }
  /// A(q_x, u_x) = df/dx(q_x, q_w) + dG/dx(q_x) u_x.
  Mat linearization_A(const Vec& q_x, const Vec& u_x) const;
  /// B(q_x) = df/dw(q_x, q_w).
  Mat linearization_B(const Vec& q_x) const;

  const std::string& name() const { return spec_.name; }
  int n_x() const { return spec_.n_x; }
  int n_u() const { return spec_.n_u; }
  int n_w() const { return spec_.n_w; }
  const Ellipsoid& disturbance_set() const { return W_; }
  const Ellipsoid& control_set() const { return U_; }
  const Box& hessian_domain() const { return spec_.hessian_domain; }
  bool input_matrix_constant() const { return spec_.input_matrix_constant; }
  bool disturbance_affine() const { return spec_.disturbance_affine; }
  std::optional<double> input_lipschitz() const { return spec_.input_lipschitz; }
  /// S_i for component i (identity when unset).
  Mat hessian_scaling(int i) const;
  const Spec& spec() const { return spec_; }

 private:
  Spec spec_;
  Ellipsoid W_;
  Ellipsoid U_;
};

using ModelPtr = std::shared_ptr<const ControlAffineModel>;

/// Parameters of the spring-mass-damper cart with stiffness k0 exp(-x1).
struct SpringMassDamperParams {
  double mass = 1.0;       // kg
  double stiffness = 0.33;  // N/m
  double damping = 1.1;    // Ns/m
  Vec q_w = Vec::Zero(2);
  Mat Q_w = (Mat(2, 2) << 1e-2, 0.0, 0.0, 0.25).finished();
  Vec q_u = Vec::Zero(1);
  Mat Q_u = Mat::Constant(1, 1, 36.0);
  Vec domain_lower = (Vec(2) << -1.0, -3.0).finished();
  Vec domain_upper = (Vec(2) << 1.2, 3.0).finished();
};

ModelPtr spring_mass_damper(const SpringMassDamperParams& p = {});

/// x' = A x + B_u u + E w + c with constant matrices.
struct LinearModelParams {
  std::string name = "linear";
  Mat A;
  Mat B_u;
  Mat E;
  Vec c;  // empty = zero
  Vec q_w;
  Mat Q_w;
  Vec q_u;
  Mat Q_u;
  Vec domain_lower;
  Vec domain_upper;
};

ModelPtr linear_model(const LinearModelParams& p);

/// Scalar x' = a x + b u + w with W = E(0, q_w_var) and U = E(0, q_u_var).
ModelPtr scalar_linear(double a = -1.0, double b = 1.0, double w_var = 1.0,
                       double u_var = 100.0);

/// f = 0, G = 0, W = {0}: every tube is constant.
ModelPtr zero_dynamics(int n_x = 2);

/// Scalar x' = a x + (1 + x) u + w: input matrix varies with the state
/// (Lipschitz constant 1), exercising the general Omega_G branch.
ModelPtr scalar_bilinear(double a = -1.0, double w_var = 0.01, double u_var = 1.0);

/// Flat numeric overrides: scalars are length-1 vectors, matrices row-major.
using ParamMap = std::map<std::string, std::vector<double>>;

/// Builds a registered model by name. Throws Errc::configuration for an
/// unknown name or malformed override, and when the Jacobian consistency
/// check fails.
ModelPtr make_model(const std::string& name, const ParamMap& overrides = {});
std::vector<std::string> registered_models();

/// Largest relative mismatch between the model's A, B and central finite
/// differences of f and G at @p n_points random points of the Hessian domain.
double jacobian_consistency_error(const ControlAffineModel& model, int n_points = 10,
                                  std::uint64_t seed = 7);

/// Taylor remainder n(dx) = f(q_x + dx, q_w) - f(q_x, q_w) - df/dx(q_x, q_w) dx.
/// Requires constant G and f affine in w (Errc::capability otherwise).
Vec eval_nonlinearity_remainder(const ControlAffineModel& model, const Vec& q_x,
                                const Vec& dx);

}  // namespace ellitube

#endif  // ELLITUBE_MODEL_HPP_
