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

#ifndef ELLITUBE_BOUNDERS_HPP_
#define ELLITUBE_BOUNDERS_HPP_

/**
 * @file
 * @brief Nonlinearity bounders: Omega_n from Hessian Frobenius bounds and
 * Omega_G for state-dependent input matrices.
 */

#include <filesystem>
#include <string>
#include <vector>

#include "ellitube/model.hpp"

namespace ellitube {

struct FrobeniusBoundData {
  /// F_i >= sup over the domain of |d^2 f_i/dx^2 S_i|_F (inflated).
  std::vector<double> F_bar;
  std::vector<Mat> S_inv;
  Box domain;
  int grid_density = 50;
  double safety = 0.05;
  /// Use Q_y = blockdiag(Q_x, Q_w) instead of Q_x (joint remainder in (x, w)).
  bool joint_xw = false;
  Mat Q_w;

  int n_x() const { return static_cast<int>(F_bar.size()); }
  /// Number of components with F_i > 0.
  int active_components() const;
  bool is_zero() const { return active_components() == 0; }
};

/// Grid maximization of the Hessian Frobenius norms over the model's Hessian
/// domain with @p grid_density points per axis, inflated by (1 + safety).
/// Throws Errc::invariant_violation naming the grid point when a Hessian is
/// not finite.
FrobeniusBoundData compute_frobenius_constants(const ControlAffineModel& model,
                                               int grid_density = 50, double safety = 0.05);

/// Omega_n = (m / 4) diag(F_i^2 |S_i^-1 Q_y|_F^2), m = active_components().
///
/// Each remainder component satisfies |n_i| <= F_i |S_i^-1 Q_y|_F / 2 on
/// E(Q_y), i.e. n lies in a box. The factor m makes the ellipsoid cover the
/// box corners; for a single nonlinear component it is 1.
Mat omega_n(const FrobeniusBoundData& data, const Mat& Q_x);

/// Omega_G: zero for constant G, otherwise beta I with
/// beta = 2 lambda_max(Q_x) sqrt(lambda_max(R_u)) L_G.
/// Throws Errc::configuration when G varies but L_G is unset.
Mat omega_G(const ControlAffineModel& model, const Mat& Q_x, const Mat& R_u);

/// Loads bound data from a JSON sidecar keyed by model name, fingerprint,
/// domain and grid density; computes and writes it on a miss. An empty path
/// disables caching.
FrobeniusBoundData cached_frobenius_constants(const ControlAffineModel& model,
                                              const std::filesystem::path& cache_file,
                                              int grid_density = 50, double safety = 0.05);

}  // namespace ellitube

#endif  // ELLITUBE_BOUNDERS_HPP_
