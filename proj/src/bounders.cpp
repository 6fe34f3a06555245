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

#include "ellitube/bounders.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "linalg_detail.hpp"

namespace ellitube {

int FrobeniusBoundData::active_components() const {
  int m = 0;
  for (double f : F_bar) m += f > 0.0 ? 1 : 0;
  return m;
}

namespace {

// Keeps the tensor grid below ~2e6 Hessian evaluations in high dimension.
int axis_points(int density, int dim) {
  int k = std::max(density, 2);
  while (k > 2 && std::pow(static_cast<double>(k), dim) > 2e6) --k;
  return k;
}

}  // namespace

FrobeniusBoundData compute_frobenius_constants(const ControlAffineModel& model,
                                               int grid_density, double safety) {
  if (grid_density < 2) throw Error(Errc::parameter, "grid_density must be >= 2");
  if (!(safety >= 0.0)) throw Error(Errc::parameter, "safety must be >= 0");
  const int n = model.n_x();
  const Box& box = model.hessian_domain();

  FrobeniusBoundData data;
  data.domain = box;
  data.grid_density = grid_density;
  data.safety = safety;
  data.F_bar.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<Mat> S(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    S[static_cast<std::size_t>(i)] = model.hessian_scaling(i);
    data.S_inv.push_back(S[static_cast<std::size_t>(i)].inverse());
  }

  const int k = axis_points(grid_density, n);
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  Vec y(n);
  for (;;) {
    for (int d = 0; d < n; ++d) {
      const double s = static_cast<double>(idx[static_cast<std::size_t>(d)]) / (k - 1);
      y(d) = box.lower(d) + s * (box.upper(d) - box.lower(d));
    }
    for (int i = 0; i < n; ++i) {
      const Mat H = model.drift_hessian(i, y);
      const double fro = (H * S[static_cast<std::size_t>(i)]).norm();
      if (!std::isfinite(fro)) {
        std::ostringstream os;
        os << "non-finite Hessian of component " << i << " at grid point (";
        for (int d = 0; d < n; ++d) os << (d ? ", " : "") << y(d);
        os << ")";
        throw Error(Errc::invariant_violation, os.str());
      }
      auto& f = data.F_bar[static_cast<std::size_t>(i)];
      f = std::max(f, fro);
    }
    int d = 0;
    while (d < n && ++idx[static_cast<std::size_t>(d)] == k) idx[static_cast<std::size_t>(d++)] = 0;
    if (d == n) break;
  }
  for (double& f : data.F_bar) f *= 1.0 + safety;
  return data;
}

Mat omega_n(const FrobeniusBoundData& data, const Mat& Q_x) {
  const int n = data.n_x();
  require_dims(Q_x.rows() == n && Q_x.cols() == n, "omega_n");
  Mat out = Mat::Zero(n, n);
  const int m = data.active_components();
  if (m == 0) return out;
  const double extra = data.joint_xw ? data.Q_w.squaredNorm() : 0.0;
  for (int i = 0; i < n; ++i) {
    const double F = data.F_bar[static_cast<std::size_t>(i)];
    if (F == 0.0) continue;
    const double fro2 = (data.S_inv[static_cast<std::size_t>(i)] * Q_x).squaredNorm() + extra;
    out(i, i) = 0.25 * m * F * F * fro2;
  }
  return out;
}

Mat omega_G(const ControlAffineModel& model, const Mat& Q_x, const Mat& R_u) {
  const int n = model.n_x();
  require_dims(Q_x.rows() == n && R_u.rows() == model.n_u(), "omega_G");
  if (model.input_matrix_constant()) return Mat::Zero(n, n);
  const auto L = model.input_lipschitz();
  if (!L) {
    throw Error(Errc::configuration,
                "model '" + model.name() + "': state-dependent G needs a Lipschitz constant");
  }
  const double beta = 2.0 * std::max(max_eigenvalue(Q_x), 0.0) *
                      std::sqrt(std::max(max_eigenvalue(R_u), 0.0)) * *L;
  return beta * Mat::Identity(n, n);
}

namespace {

using nlohmann::json;

json cache_key(const ControlAffineModel& model, int grid_density, double safety) {
  const Box& b = model.hessian_domain();
  return json{{"model", model.name()},
              {"fingerprint", model.fingerprint()},
              {"lower", std::vector<double>(b.lower.data(), b.lower.data() + b.lower.size())},
              {"upper", std::vector<double>(b.upper.data(), b.upper.data() + b.upper.size())},
              {"grid_density", grid_density},
              {"safety", safety}};
}

}  // namespace

FrobeniusBoundData cached_frobenius_constants(const ControlAffineModel& model,
                                              const std::filesystem::path& cache_file,
                                              int grid_density, double safety) {
  if (cache_file.empty()) return compute_frobenius_constants(model, grid_density, safety);
  const json key = cache_key(model, grid_density, safety);

  json entries = json::array();
  if (std::ifstream in(cache_file); in) {
    try {
      in >> entries;
      if (!entries.is_array()) entries = json::array();
    } catch (const json::exception&) {
      entries = json::array();  // unreadable cache: recompute and overwrite
    }
  }
  for (const auto& e : entries) {
    if (e.value("key", json()) != key) continue;
    FrobeniusBoundData data;
    data.domain = model.hessian_domain();
    data.grid_density = grid_density;
    data.safety = safety;
    data.F_bar = e.at("F_bar").get<std::vector<double>>();
    if (static_cast<int>(data.F_bar.size()) != model.n_x()) break;
    for (int i = 0; i < model.n_x(); ++i) data.S_inv.push_back(model.hessian_scaling(i).inverse());
    return data;
  }

  FrobeniusBoundData data = compute_frobenius_constants(model, grid_density, safety);
  entries.push_back(json{{"key", key}, {"F_bar", data.F_bar}});
  std::error_code ec;
  if (cache_file.has_parent_path()) std::filesystem::create_directories(cache_file.parent_path(), ec);
  const auto tmp = cache_file.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(Errc::io, "cannot write bound cache " + tmp);
    out << entries.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, cache_file, ec);
  if (ec) throw Error(Errc::io, "cannot write bound cache " + cache_file.string());
  return data;
}

}  // namespace ellitube
