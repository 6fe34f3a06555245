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

// Compiled with -mavx2 -mfma; only reached through the runtime dispatcher.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "ellitube/kernels.hpp"

namespace ellitube::kernels::avx2 {

namespace {

// Symmetrized coefficients: diagonal as is, off-diagonal P_ij + P_ji for i < j.
struct PackedQuad {
  int n;
  __m256d diag[kMaxDim];
  __m256d off[kMaxDim][kMaxDim];
};

PackedQuad pack(const Mat& P) {
  PackedQuad pq{};
  pq.n = static_cast<int>(P.rows());
  for (int i = 0; i < pq.n; ++i) {
    pq.diag[i] = _mm256_set1_pd(P(i, i));
    for (int j = i + 1; j < pq.n; ++j) pq.off[i][j] = _mm256_set1_pd(P(i, j) + P(j, i));
  }
  return pq;
}

inline __m256d eval_quad(const PackedQuad& pq, const __m256d* d) {
  __m256d acc = _mm256_setzero_pd();
  for (int i = 0; i < pq.n; ++i) {
    acc = _mm256_fmadd_pd(_mm256_mul_pd(pq.diag[i], d[i]), d[i], acc);
    for (int j = i + 1; j < pq.n; ++j)
      acc = _mm256_fmadd_pd(_mm256_mul_pd(pq.off[i][j], d[i]), d[j], acc);
  }
  return acc;
}

}  // namespace

void quadform_batch(const Eigen::MatrixXd& points, const Vec& center, const Mat& P,
                    std::span<double> out) {
  const Eigen::Index K = points.rows();
  const int n = static_cast<int>(center.size());
  const PackedQuad pq = pack(P);
  __m256d c[kMaxDim];
  for (int i = 0; i < n; ++i) c[i] = _mm256_set1_pd(center(i));

  Eigen::Index k = 0;
  __m256d d[kMaxDim];
  for (; k + 4 <= K; k += 4) {
    for (int i = 0; i < n; ++i) d[i] = _mm256_sub_pd(_mm256_loadu_pd(&points(k, i)), c[i]);
    _mm256_storeu_pd(out.data() + k, eval_quad(pq, d));
  }
  if (k < K) {
    // Tail through the same FMA sequence so results do not depend on K % 4.
    alignas(32) double lanes[kMaxDim][4] = {};
    const Eigen::Index rest = K - k;
    for (int i = 0; i < n; ++i)
      for (Eigen::Index r = 0; r < rest; ++r) lanes[i][r] = points(k + r, i);
    for (int i = 0; i < n; ++i) d[i] = _mm256_sub_pd(_mm256_load_pd(lanes[i]), c[i]);
    alignas(32) double res[4];
    _mm256_store_pd(res, eval_quad(pq, d));
    std::copy(res, res + rest, out.data() + k);
  }
}

void support_batch(const Eigen::MatrixXd& dirs, const Vec& center, const Mat& Q,
                   std::span<double> out) {
  const Eigen::Index K = dirs.rows();
  const int n = static_cast<int>(center.size());
  const PackedQuad pq = pack(Q);
  __m256d q[kMaxDim];
  for (int i = 0; i < n; ++i) q[i] = _mm256_set1_pd(center(i));
  const __m256d zero = _mm256_setzero_pd();

  auto body = [&](const __m256d* c) {
    __m256d lin = zero;
    for (int i = 0; i < n; ++i) lin = _mm256_fmadd_pd(c[i], q[i], lin);
    const __m256d quad = _mm256_max_pd(eval_quad(pq, c), zero);
    return _mm256_add_pd(lin, _mm256_sqrt_pd(quad));
  };

  Eigen::Index k = 0;
  __m256d c[kMaxDim];
  for (; k + 4 <= K; k += 4) {
    for (int i = 0; i < n; ++i) c[i] = _mm256_loadu_pd(&dirs(k, i));
    _mm256_storeu_pd(out.data() + k, body(c));
  }
  if (k < K) {
    alignas(32) double lanes[kMaxDim][4] = {};
    const Eigen::Index rest = K - k;
    for (int i = 0; i < n; ++i)
      for (Eigen::Index r = 0; r < rest; ++r) lanes[i][r] = dirs(k + r, i);
    for (int i = 0; i < n; ++i) c[i] = _mm256_load_pd(lanes[i]);
    alignas(32) double res[4];
    _mm256_store_pd(res, body(c));
    std::copy(res, res + rest, out.data() + k);
  }
}

}  // namespace ellitube::kernels::avx2
