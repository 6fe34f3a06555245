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

#include "ellitube/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace ellitube {

bool Box::contains(const Vec& x) const {
  require_dims(x.size() == lower.size(), "Box::contains");
  return ((x - lower).array() >= 0.0).all() && ((upper - x).array() >= 0.0).all();
}

bool Box::contains(const Ellipsoid& e) const {
  require_dims(e.dim() == dim(), "Box::contains");
  for (int i = 0; i < dim(); ++i) {
    const double half = std::sqrt(std::max(e.shape()(i, i), 0.0));
    if (e.center()(i) + half > upper(i) || e.center()(i) - half < lower(i)) return false;
  }
  return true;
}

void LinearStateConstraints::add(Vec h, double eta) {
  if (h.size() == 0 || h.norm() == 0.0) {
    throw Error(Errc::parameter, "LinearStateConstraints: h must be nonzero");
  }
  if (!rows_.empty()) require_dims(h.size() == rows_.front().h.size(), "LinearStateConstraints");
  rows_.push_back({std::move(h), eta});
}

ControlAffineModel::ControlAffineModel(Spec spec)
    : spec_(std::move(spec)),
      W_(spec_.q_w, spec_.Q_w),
      U_(spec_.q_u, spec_.Q_u) {
  require_dims(spec_.n_x >= 1 && spec_.n_x <= kMaxDim && spec_.n_u >= 1 &&
                   spec_.n_u <= kMaxDim && spec_.n_w >= 1 && spec_.n_w <= kMaxDim,
               "ControlAffineModel");
  require_dims(W_.dim() == spec_.n_w && U_.dim() == spec_.n_u &&
                   spec_.hessian_domain.dim() == spec_.n_x &&
                   spec_.hessian_domain.upper.size() == spec_.n_x,
               "ControlAffineModel");
  if (((spec_.hessian_domain.upper - spec_.hessian_domain.lower).array() < 0.0).any()) {
    throw Error(Errc::configuration, "ControlAffineModel: empty Hessian domain");
  }
  // U needs a non-empty interior; E(q_u, Q_u) qualifies when Q_u is nonsingular.
  if (!(min_eigenvalue(U_.shape()) > 0.0)) {
    throw Error(Errc::invariant_violation, "ControlAffineModel: Q_u must be positive definite");
  }
  if (!spec_.hessian_scaling.empty()) {
    require_dims(static_cast<int>(spec_.hessian_scaling.size()) == spec_.n_x,
                 "ControlAffineModel: hessian_scaling");
    for (const Mat& S : spec_.hessian_scaling) {
      require_dims(S.rows() == spec_.n_x && S.cols() == spec_.n_x,
                   "ControlAffineModel: hessian_scaling");
      if (std::abs(S.determinant()) < 1e-300) {
        throw Error(Errc::configuration, "ControlAffineModel: hessian scaling not invertible");
      }
    }
  }
}

namespace {

double fd_step(double v) { return 1e-6 * (1.0 + std::abs(v)); }

}  // namespace

Mat ControlAffineModel::drift_jacobian_x(const Vec& x, const Vec& w) const {
  Mat J(n_x(), n_x());
  for (int j = 0; j < n_x(); ++j) {
    Vec xp = x, xm = x;
    const double h = fd_step(x(j));
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (drift(xp, w) - drift(xm, w)) / (2.0 * h);
  }
  return J;
}

Mat ControlAffineModel::drift_jacobian_w(const Vec& x, const Vec& w) const {
  Mat J(n_x(), n_w());
  for (int j = 0; j < n_w(); ++j) {
    Vec wp = w, wm = w;
    const double h = fd_step(w(j));
    wp(j) += h;
    wm(j) -= h;
    J.col(j) = (drift(x, wp) - drift(x, wm)) / (2.0 * h);
  }
  return J;
}

Mat ControlAffineModel::input_jacobian_times(const Vec& x, const Vec& u) const {
  if (input_matrix_constant()) return Mat::Zero(n_x(), n_x());
  Mat J(n_x(), n_x());
  for (int j = 0; j < n_x(); ++j) {
    Vec xp = x, xm = x;
    const double h = fd_step(x(j));
    xp(j) += h;
    xm(j) -= h;
    J.col(j) = (input_matrix(xp) * u - input_matrix(xm) * u) / (2.0 * h);
  }
  return J;
}

Mat ControlAffineModel::drift_hessian(int i, const Vec& x) const {
  const Vec& w = W_.center();
  const int n = n_x();
  Mat H(n, n);
  for (int j = 0; j < n; ++j) {
    for (int k = j; k < n; ++k) {
      const double hj = 1e-4 * (1.0 + std::abs(x(j)));
      const double hk = 1e-4 * (1.0 + std::abs(x(k)));
      auto at = [&](double sj, double sk) {
        Vec y = x;
        y(j) += sj * hj;
        y(k) += sk * hk;
        return drift(y, w)(i);
      };
      const double v =
          (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hj * hk);
      H(j, k) = v;
      H(k, j) = v;
    }
  }
  return H;
}

std::string ControlAffineModel::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << spec_.name << ';' << spec_.n_x << ',' << spec_.n_u << ',' << spec_.n_w << ';';
  auto dump = [&os](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) os << m.data()[i] << ',';
    os << ';';
  };
  dump(spec_.q_w);
  dump(spec_.Q_w);
  dump(spec_.q_u);
  dump(spec_.Q_u);
  dump(spec_.hessian_domain.lower);
  dump(spec_.hessian_domain.upper);
  return os.str();
}

Mat ControlAffineModel::linearization_A(const Vec& q_x, const Vec& u_x) const {
  Mat A = drift_jacobian_x(q_x, W_.center());
  if (!input_matrix_constant()) A += input_jacobian_times(q_x, u_x);
  return A;
}

Mat ControlAffineModel::linearization_B(const Vec& q_x) const {
  return drift_jacobian_w(q_x, W_.center());
}

Mat ControlAffineModel::hessian_scaling(int i) const {
  if (spec_.hessian_scaling.empty()) return Mat::Identity(n_x(), n_x());
  return spec_.hessian_scaling.at(static_cast<std::size_t>(i));
}

// ---------------------------------------------------------------------------
// Built-in models

namespace {

class SpringMassDamper final : public ControlAffineModel {
 public:
  explicit SpringMassDamper(const SpringMassDamperParams& p)
      : ControlAffineModel(make_spec(p)), p_(p) {}

  Vec drift(const Vec& x, const Vec& w) const override {
    Vec f(2);
    f(0) = x(1) + w(0);
    f(1) = (-p_.stiffness * std::exp(-x(0)) * x(0) - p_.damping * x(1) + w(1)) / p_.mass;
    return f;
  }

  Mat input_matrix(const Vec&) const override {
    Mat G(2, 1);
    G << 0.0, 1.0 / p_.mass;
    return G;
  }

  Mat drift_jacobian_x(const Vec& x, const Vec&) const override {
    Mat A(2, 2);
    A << 0.0, 1.0,
        -p_.stiffness * std::exp(-x(0)) * (1.0 - x(0)) / p_.mass, -p_.damping / p_.mass;
    return A;
  }

  Mat drift_jacobian_w(const Vec&, const Vec&) const override {
    Mat B(2, 2);
    B << 1.0, 0.0, 0.0, 1.0 / p_.mass;
    return B;
  }

  Mat drift_hessian(int i, const Vec& x) const override {
    Mat H = Mat::Zero(2, 2);
    if (i == 1) H(0, 0) = p_.stiffness * std::exp(-x(0)) * (2.0 - x(0)) / p_.mass;
    return H;
  }

  std::string fingerprint() const override {
    std::ostringstream os;
    os.precision(17);
    os << ControlAffineModel::fingerprint() << p_.mass << ',' << p_.stiffness << ','
       << p_.damping;
    return os.str();
  }

 private:
  static Spec make_spec(const SpringMassDamperParams& p) {
    if (!(p.mass > 0.0)) throw Error(Errc::configuration, "spring_mass_damper: mass must be > 0");
    Spec s;
    s.name = "spring_mass_damper";
    s.n_x = 2;
    s.n_u = 1;
    s.n_w = 2;
    s.q_w = p.q_w;
    s.Q_w = p.Q_w;
    s.q_u = p.q_u;
    s.Q_u = p.Q_u;
    s.hessian_domain = {p.domain_lower, p.domain_upper};
    s.input_matrix_constant = true;
    s.disturbance_affine = true;
    return s;
  }

  SpringMassDamperParams p_;
};

class LinearModel final : public ControlAffineModel {
 public:
  explicit LinearModel(const LinearModelParams& p) : ControlAffineModel(make_spec(p)), p_(p) {
    if (p_.c.size() == 0) p_.c = Vec::Zero(p_.A.rows());
    require_dims(p_.c.size() == p_.A.rows(), "linear_model: c");
  }

  Vec drift(const Vec& x, const Vec& w) const override { return p_.A * x + p_.E * w + p_.c; }
  Mat input_matrix(const Vec&) const override { return p_.B_u; }
  Mat drift_jacobian_x(const Vec&, const Vec&) const override { return p_.A; }
  Mat drift_jacobian_w(const Vec&, const Vec&) const override { return p_.E; }
  Mat drift_hessian(int, const Vec&) const override { return Mat::Zero(n_x(), n_x()); }

  std::string fingerprint() const override {
    std::ostringstream os;
    os.precision(17);
    os << ControlAffineModel::fingerprint();
    for (const Mat* m : {&p_.A, &p_.B_u, &p_.E})
      for (Eigen::Index i = 0; i < m->size(); ++i) os << m->data()[i] << ',';
    return os.str();
  }

 private:
  static Spec make_spec(const LinearModelParams& p) {
    const auto n = p.A.rows();
    require_dims(p.A.cols() == n && p.B_u.rows() == n && p.E.rows() == n &&
                     p.E.cols() == p.q_w.size() && p.B_u.cols() == p.q_u.size(),
                 "linear_model");
    Spec s;
    s.name = p.name;
    s.n_x = static_cast<int>(n);
    s.n_u = static_cast<int>(p.B_u.cols());
    s.n_w = static_cast<int>(p.E.cols());
    s.q_w = p.q_w;
    s.Q_w = p.Q_w;
    s.q_u = p.q_u;
    s.Q_u = p.Q_u;
    s.hessian_domain = {p.domain_lower, p.domain_upper};
    return s;
  }

  LinearModelParams p_;
};

class ZeroDynamics final : public ControlAffineModel {
 public:
  explicit ZeroDynamics(int n) : ControlAffineModel(make_spec(n)) {}
  Vec drift(const Vec& x, const Vec&) const override { return Vec::Zero(x.size()); }
  Mat input_matrix(const Vec&) const override { return Mat::Zero(n_x(), 1); }
  Mat drift_jacobian_x(const Vec&, const Vec&) const override { return Mat::Zero(n_x(), n_x()); }
  Mat drift_jacobian_w(const Vec&, const Vec&) const override { return Mat::Zero(n_x(), 1); }
  Mat drift_hessian(int, const Vec&) const override { return Mat::Zero(n_x(), n_x()); }

 private:
  static Spec make_spec(int n) {
    Spec s;
    s.name = "zero";
    s.n_x = n;
    s.n_u = 1;
    s.n_w = 1;
    s.q_w = Vec::Zero(1);
    s.Q_w = Mat::Zero(1, 1);
    s.q_u = Vec::Zero(1);
    s.Q_u = Mat::Identity(1, 1);
    s.hessian_domain = {Vec::Constant(n, -10.0), Vec::Constant(n, 10.0)};
    return s;
  }
};

class ScalarBilinear final : public ControlAffineModel {
 public:
  ScalarBilinear(double a, double w_var, double u_var)
      : ControlAffineModel(make_spec(w_var, u_var)), a_(a) {}

  Vec drift(const Vec& x, const Vec& w) const override {
    Vec f(1);
    f(0) = a_ * x(0) + w(0);
    return f;
  }
  Mat input_matrix(const Vec& x) const override { return Mat::Constant(1, 1, 1.0 + x(0)); }
  Mat drift_jacobian_x(const Vec&, const Vec&) const override { return Mat::Constant(1, 1, a_); }
  Mat drift_jacobian_w(const Vec&, const Vec&) const override { return Mat::Identity(1, 1); }
  Mat input_jacobian_times(const Vec&, const Vec& u) const override {
    return Mat::Constant(1, 1, u(0));
  }
  Mat drift_hessian(int, const Vec&) const override { return Mat::Zero(1, 1); }

  std::string fingerprint() const override {
    std::ostringstream os;
    os.precision(17);
    os << ControlAffineModel::fingerprint() << a_;
    return os.str();
  }

 private:
  static Spec make_spec(double w_var, double u_var) {
    Spec s;
    s.name = "scalar_bilinear";
    s.n_x = s.n_u = s.n_w = 1;
    s.q_w = Vec::Zero(1);
    s.Q_w = Mat::Constant(1, 1, w_var);
    s.q_u = Vec::Zero(1);
    s.Q_u = Mat::Constant(1, 1, u_var);
    s.hessian_domain = {Vec::Constant(1, -0.5), Vec::Constant(1, 0.5)};
    s.input_matrix_constant = false;
    s.input_lipschitz = 1.0;
    return s;
  }

  double a_;
};

}  // namespace

ModelPtr spring_mass_damper(const SpringMassDamperParams& p) {
  return std::make_shared<SpringMassDamper>(p);
}

ModelPtr linear_model(const LinearModelParams& p) { return std::make_shared<LinearModel>(p); }

ModelPtr scalar_linear(double a, double b, double w_var, double u_var) {
  LinearModelParams p;
  p.name = "scalar_linear";
  p.A = Mat::Constant(1, 1, a);
  p.B_u = Mat::Constant(1, 1, b);
  p.E = Mat::Identity(1, 1);
  p.q_w = Vec::Zero(1);
  p.Q_w = Mat::Constant(1, 1, w_var);
  p.q_u = Vec::Zero(1);
  p.Q_u = Mat::Constant(1, 1, u_var);
  p.domain_lower = Vec::Constant(1, -10.0);
  p.domain_upper = Vec::Constant(1, 10.0);
  return linear_model(p);
}

ModelPtr zero_dynamics(int n_x) { return std::make_shared<ZeroDynamics>(n_x); }

ModelPtr scalar_bilinear(double a, double w_var, double u_var) {
  return std::make_shared<ScalarBilinear>(a, w_var, u_var);
}

// ---------------------------------------------------------------------------
// Registry

namespace {

class Overrides {
 public:
  explicit Overrides(const ParamMap& m) : m_(m) {}

  double scalar(const std::string& key, double fallback) {
    auto it = take(key);
    if (!it) return fallback;
    if (it->size() != 1) bad(key, "expected a scalar");
    return it->front();
  }

  Vec vec(const std::string& key, Vec fallback) {
    auto it = take(key);
    if (!it) return fallback;
    if (static_cast<Eigen::Index>(it->size()) != fallback.size() && fallback.size() != 0)
      bad(key, "expected " + std::to_string(fallback.size()) + " entries");
    Vec v(static_cast<Eigen::Index>(it->size()));
    for (std::size_t i = 0; i < it->size(); ++i) v(static_cast<Eigen::Index>(i)) = (*it)[i];
    return v;
  }

  Mat mat(const std::string& key, Mat fallback, Eigen::Index rows = -1) {
    auto it = take(key);
    if (!it) return fallback;
    const Eigen::Index r = rows >= 0 ? rows : fallback.rows();
    if (r <= 0 || it->size() % static_cast<std::size_t>(r) != 0) bad(key, "bad matrix shape");
    const Eigen::Index c = static_cast<Eigen::Index>(it->size()) / r;
    if (r > kMaxDim || c > kMaxDim) bad(key, "matrix too large");
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) M(i, j) = (*it)[static_cast<std::size_t>(i * c + j)];
    return M;
  }

  void finish(const std::string& model) const {
    for (const auto& [k, v] : m_) {
      if (!used_.count(k)) {
        throw Error(Errc::configuration,
                    "model '" + model + "': unknown parameter '" + k + "'");
      }
    }
  }

 private:
  const std::vector<double>* take(const std::string& key) {
    auto it = m_.find(key);
    if (it == m_.end()) return nullptr;
    used_[key] = true;
    return &it->second;
  }
  [[noreturn]] static void bad(const std::string& key, const std::string& why) {
    throw Error(Errc::configuration, "model parameter '" + key + "': " + why);
  }

  const ParamMap& m_;
  std::map<std::string, bool> used_;
};

ModelPtr build(const std::string& name, const ParamMap& overrides) {
  Overrides o(overrides);
  ModelPtr m;
  if (name == "spring_mass_damper") {
    SpringMassDamperParams p;
    p.mass = o.scalar("mass", p.mass);
    p.stiffness = o.scalar("stiffness", p.stiffness);
    p.damping = o.scalar("damping", p.damping);
    p.q_w = o.vec("q_w", p.q_w);
    p.Q_w = o.mat("Q_w", p.Q_w);
    p.q_u = o.vec("q_u", p.q_u);
    p.Q_u = o.mat("Q_u", p.Q_u);
    p.domain_lower = o.vec("domain_lower", p.domain_lower);
    p.domain_upper = o.vec("domain_upper", p.domain_upper);
    o.finish(name);
    m = spring_mass_damper(p);
  } else if (name == "scalar_linear") {
    const double a = o.scalar("a", -1.0);
    const double b = o.scalar("b", 1.0);
    const double wv = o.scalar("Q_w", 1.0);
    const double uv = o.scalar("Q_u", 100.0);
    o.finish(name);
    m = scalar_linear(a, b, wv, uv);
  } else if (name == "linear") {
    const auto n = static_cast<Eigen::Index>(o.scalar("n_x", 0.0));
    if (n < 1 || n > kMaxDim) throw Error(Errc::configuration, "model 'linear': n_x out of range");
    LinearModelParams p;
    p.A = o.mat("A", Mat(), n);
    p.B_u = o.mat("B_u", Mat(), n);
    p.E = o.mat("E", Mat::Identity(n, n), n);
    p.c = o.vec("c", Vec());
    p.q_w = o.vec("q_w", Vec::Zero(p.E.cols()));
    p.Q_w = o.mat("Q_w", Mat::Zero(p.E.cols(), p.E.cols()), p.E.cols());
    p.q_u = o.vec("q_u", Vec::Zero(p.B_u.cols()));
    p.Q_u = o.mat("Q_u", Mat::Identity(p.B_u.cols(), p.B_u.cols()), p.B_u.cols());
    p.domain_lower = o.vec("domain_lower", Vec::Constant(n, -10.0));
    p.domain_upper = o.vec("domain_upper", Vec::Constant(n, 10.0));
    o.finish(name);
    if (p.A.size() == 0 || p.B_u.size() == 0)
      throw Error(Errc::configuration, "model 'linear': A and B_u are required");
    m = linear_model(p);
  } else if (name == "zero") {
    const int n = static_cast<int>(o.scalar("n_x", 2.0));
    o.finish(name);
    m = zero_dynamics(n);
  } else if (name == "scalar_bilinear") {
    const double a = o.scalar("a", -1.0);
    const double wv = o.scalar("Q_w", 0.01);
    const double uv = o.scalar("Q_u", 1.0);
    o.finish(name);
    m = scalar_bilinear(a, wv, uv);
  } else {
    throw Error(Errc::configuration, "unknown model '" + name + "'");
  }
  return m;
}

}  // namespace

std::vector<std::string> registered_models() {
  return {"linear", "scalar_bilinear", "scalar_linear", "spring_mass_damper", "zero"};
}

ModelPtr make_model(const std::string& name, const ParamMap& overrides) {
  ModelPtr m;
  try {
    m = build(name, overrides);
  } catch (const Error& e) {
    if (e.code() == Errc::configuration) throw;
    throw Error(Errc::configuration, std::string("model '") + name + "': " + e.what());
  }
  const double err = jacobian_consistency_error(*m);
  if (!(err <= 1e-5)) {
    throw Error(Errc::configuration, "model '" + name +
                                         "': Jacobians disagree with finite differences (" +
                                         std::to_string(err) + ")");
  }
  return m;
}

double jacobian_consistency_error(const ControlAffineModel& model, int n_points,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Box& box = model.hessian_domain();
  const Vec& qw = model.disturbance_set().center();
  double worst = 0.0;
  for (int p = 0; p < n_points; ++p) {
    Vec x(model.n_x());
    for (int i = 0; i < model.n_x(); ++i)
      x(i) = box.lower(i) + unit(rng) * (box.upper(i) - box.lower(i));
    Vec u = model.control_set().center();
    for (int i = 0; i < model.n_u(); ++i) u(i) += 0.1 * (unit(rng) - 0.5);

    Mat A_fd(model.n_x(), model.n_x());
    Mat B_fd(model.n_x(), model.n_w());
    for (int j = 0; j < model.n_x(); ++j) {
      const double h = 1e-6 * (1.0 + std::abs(x(j)));
      Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      A_fd.col(j) = (model.dynamics(xp, u, qw) - model.dynamics(xm, u, qw)) / (2.0 * h);
    }
    for (int j = 0; j < model.n_w(); ++j) {
      const double h = 1e-6 * (1.0 + std::abs(qw(j)));
      Vec wp = qw, wm = qw;
      wp(j) += h;
      wm(j) -= h;
      B_fd.col(j) = (model.drift(x, wp) - model.drift(x, wm)) / (2.0 * h);
    }
    const Mat A = model.linearization_A(x, u);
    const Mat B = model.linearization_B(x);
    worst = std::max(worst, (A - A_fd).norm() / (1.0 + A.norm()));
    worst = std::max(worst, (B - B_fd).norm() / (1.0 + B.norm()));
  }
  return worst;
}

Vec eval_nonlinearity_remainder(const ControlAffineModel& model, const Vec& q_x,
                                const Vec& dx) {
  require_dims(q_x.size() == model.n_x() && dx.size() == model.n_x(),
               "eval_nonlinearity_remainder");
  if (!model.input_matrix_constant() || !model.disturbance_affine()) {
    throw Error(Errc::capability,
                "eval_nonlinearity_remainder: model '" + model.name() +
                    "' needs constant G and f affine in w");
  }
  const Vec& qw = model.disturbance_set().center();
  return model.drift(q_x + dx, qw) - model.drift(q_x, qw) -
         model.drift_jacobian_x(q_x, qw) * dx;
}

}  // namespace ellitube
