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

#ifndef ELLITUBE_KERNELS_HPP_
#define ELLITUBE_KERNELS_HPP_

/**
 * @file
 * @brief Batched ellipsoid kernels over structure-of-arrays point sets.
 *
 * Point batches are K x n column-major matrices: column j holds coordinate j
 * of every sample, so a SIMD lane walks K contiguously. Each kernel has a
 * scalar reference and an AVX2/FMA variant picked at runtime. Both variants
 * agree to rounding (FMA contraction changes the last bits).
 */

#include <span>

#include "ellitube/types.hpp"

namespace ellitube::kernels {

enum class Isa { scalar, avx2 };

const char* to_string(Isa isa);

/// Best ISA supported by both the build and the running CPU.
Isa detected_isa();

/// ISA used by the dispatching entry points. Defaults to detected_isa().
Isa active_isa();
/// Overrides the dispatch choice; requesting an unavailable ISA falls back
/// to scalar. Intended for tests and benchmarks.
void set_active_isa(Isa isa);

/// out[k] = (p_k - center)' P (p_k - center).
void quadform_batch(const Eigen::MatrixXd& points, const Vec& center, const Mat& P,
                    std::span<double> out);
/// out[k] = c_k' center + sqrt(max(c_k' Q c_k, 0)).
void support_batch(const Eigen::MatrixXd& dirs, const Vec& center, const Mat& Q,
                   std::span<double> out);

namespace scalar {
void quadform_batch(const Eigen::MatrixXd& points, const Vec& center, const Mat& P,
                    std::span<double> out);
void support_batch(const Eigen::MatrixXd& dirs, const Vec& center, const Mat& Q,
                   std::span<double> out);
}  // namespace scalar

#if defined(ELLITUBE_HAVE_AVX2)
namespace avx2 {
void quadform_batch(const Eigen::MatrixXd& points, const Vec& center, const Mat& P,
                    std::span<double> out);
void support_batch(const Eigen::MatrixXd& dirs, const Vec& center, const Mat& Q,
                   std::span<double> out);
}  // namespace avx2
#endif

}  // namespace ellitube::kernels

#endif  // ELLITUBE_KERNELS_HPP_
