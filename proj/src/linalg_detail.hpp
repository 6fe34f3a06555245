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

#ifndef ELLITUBE_SRC_LINALG_DETAIL_HPP_
#define ELLITUBE_SRC_LINALG_DETAIL_HPP_

#include "ellitube/types.hpp"

namespace ellitube::detail {

/// Symmetric eigendecomposition; closed form for n <= 2.
void eig_sym(const Mat& Q, Vec& evals, Mat& evecs);
/// Square root of the PSD part of a symmetric matrix, no validation.
Mat sqrt_sym_clipped(const Mat& Q);
bool is_zero(const Mat& Q);
double max_abs(const Mat& Q);

}  // namespace ellitube::detail

#endif  // ELLITUBE_SRC_LINALG_DETAIL_HPP_
