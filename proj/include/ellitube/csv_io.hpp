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

#ifndef ELLITUBE_CSV_IO_HPP_
#define ELLITUBE_CSV_IO_HPP_

/**
 * @file
 * @brief Frozen CSV schemas. Numbers are written with 17 significant digits
 * so files round-trip exactly. Indices in column names are 1-based.
 *
 *   tube.csv       node,t,q1..qn,Q11,Q12,..,Qnn (upper triangle, row-major),in_domain
 *                  one row per fine (substep) node
 *   boundary.csv   node,t,sample,x1..xn; 64 boundary points per interval node
 *   params.csv     interval,t,u1..um,gamma,lambda,kappa,S11,S12,..,Snm (row-major)
 *   trace CSV      t,x1..xn,u1..um,w1..wp,margin,residual
 *                  margin = 1 - (x-q)'Q^+(x-q) on tube nodes, empty elsewhere
 *   scenarios.csv  controller,scenario,seed,violations,containment_violations,
 *                  min_margin,max_residual,tracking_cost,failed
 *   summary.csv    controller,scenarios,violating,containment_violating,failed,
 *                  violation_rate,worst_residual,mean_cost
 */

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ellitube/closed_loop.hpp"
#include "ellitube/tube.hpp"

namespace ellitube {

std::string format_double(double v);

void write_tube_csv(std::ostream& os, const TubeTrajectory& tube);
void write_boundary_csv(std::ostream& os, const TubeTrajectory& tube, int n_dirs = 64);
void write_params_csv(std::ostream& os, const TubeTrajectory& tube);
/// Reads params.csv; checks the header against the model dimensions.
/// Throws Errc::io with a line number on malformed input.
PolicyParams read_params_csv(std::istream& is, const ControlAffineModel& model);
void write_trace_csv(std::ostream& os, const ScenarioResult& r);
void write_scenarios_csv(std::ostream& os, const std::vector<ScenarioResult>& runs,
                         std::uint64_t seed);
void write_summary_csv(std::ostream& os, const std::vector<ControllerSummary>& rows);

/// Opens @p path for writing (creating parent directories); throws Errc::io.
std::ofstream open_output(const std::string& path);

}  // namespace ellitube

#endif  // ELLITUBE_CSV_IO_HPP_
