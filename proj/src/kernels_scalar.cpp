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

#include <algorithm>
#include <cmath>

#include "ellitube/kernels.hpp"

namespace ellitube::kernels::scalar {

void quadform_batch(const Eigen::MatrixXd& points, const Vec& center, const Mat& P,
                    std::span<double> out) {
  const Eigen::Index K = points.rows();
  const int n = static_cast<int>(center.size());
  double d[kMaxDim];
  for (Eigen::Index k = 0; k < K; ++k) {
    for (int i = 0; i < n; ++i) d[i] = points(k, i) - center(i);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += P(i, i) * d[i] * d[i];
      for (int j = i + 1; j < n; ++j) acc += (P(i, j) + P(j, i)) * d[i] * d[j];
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
}

void support_batch(const Eigen::MatrixXd& dirs, const Vec& center, const Mat& Q,
                   std::span<double> out) {
  const Eigen::Index K = dirs.rows();
  const int n = static_cast<int>(center.size());
  for (Eigen::Index k = 0; k < K; ++k) {
    double lin = 0.0;
    double quad = 0.0;
    for (int i = 0; i < n; ++i) {
      const double ci = dirs(k, i);
      lin += ci * center(i);
      quad += Q(i, i) * ci * ci;
      for (int j = i + 1; j < n; ++j) quad += (Q(i, j) + Q(j, i)) * ci * dirs(k, j);
    }
    out[static_cast<std::size_t>(k)] = lin + std::sqrt(std::max(quad, 0.0));
  }
}

}  // namespace ellitube::kernels::scalar
