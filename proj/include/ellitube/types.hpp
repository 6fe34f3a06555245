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

#ifndef ELLITUBE_TYPES_HPP_
#define ELLITUBE_TYPES_HPP_

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ellitube {

/// Largest state/input/disturbance dimension supported. Small dense
/// matrices live on the stack, which keeps the tube right-hand side free
/// of heap traffic.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

enum class Errc {
  dimension_mismatch,
  invariant_violation,
  parameter,
  precondition,
  degenerate_point,
  span,
  nullspace_direction,
  capability,
  configuration,
  infeasible_policy,
  integration_blowup,
  not_converged,
  io,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// R_u of some interval has a negative eigenvalue beyond tolerance.
class InfeasiblePolicyError : public Error {
 public:
  InfeasiblePolicyError(int interval, double min_eig)
      : Error(Errc::infeasible_policy,
              "infeasible policy on interval " + std::to_string(interval) +
                  ": min eig(R_u) = " + std::to_string(min_eig)),
        interval_(interval) {}
  int interval() const noexcept { return interval_; }

 private:
  int interval_;
};

class IntegrationBlowUp : public Error {
 public:
  explicit IntegrationBlowUp(double t)
      : Error(Errc::integration_blowup,
              "non-finite state during integration at t = " + std::to_string(t)),
        time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

inline void require_dims(bool ok, const char* where) {
  if (!ok) throw Error(Errc::dimension_mismatch, std::string(where) + ": dimension mismatch");
}

}  // namespace ellitube

#endif  // ELLITUBE_TYPES_HPP_
