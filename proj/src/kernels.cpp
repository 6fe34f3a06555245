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

#include <atomic>

#include "ellitube/kernels.hpp"

namespace ellitube::kernels {

namespace {

Isa probe() {
#if defined(ELLITUBE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detected_isa()};
  return isa;
}

void check_shapes(const Eigen::MatrixXd& batch, const Vec& center, const Mat& M,
                  std::span<double> out) {
  const auto n = center.size();
  require_dims(batch.cols() == n && M.rows() == n && M.cols() == n &&
                   static_cast<Eigen::Index>(out.size()) == batch.rows(),
               "kernels");
}

}  // namespace

const char* to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

Isa detected_isa() {
  static const Isa isa = probe();
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2) isa = Isa::scalar;
  active().store(isa, std::memory_order_relaxed);
}

void quadform_batch(const Eigen::MatrixXd& points, const Vec& center, const Mat& P,
                    std::span<double> out) {
  check_shapes(points, center, P, out);
#if defined(ELLITUBE_HAVE_AVX2)
  if (active_isa() == Isa::avx2) return avx2::quadform_batch(points, center, P, out);
#endif
  scalar::quadform_batch(points, center, P, out);
}

void support_batch(const Eigen::MatrixXd& dirs, const Vec& center, const Mat& Q,
                   std::span<double> out) {
  check_shapes(dirs, center, Q, out);
#if defined(ELLITUBE_HAVE_AVX2)
  if (active_isa() == Isa::avx2) return avx2::support_batch(dirs, center, Q, out);
#endif
  scalar::support_batch(dirs, center, Q, out);
}

}  // namespace ellitube::kernels
