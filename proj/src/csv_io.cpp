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

#include "ellitube/csv_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ellitube {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string indexed(const char* base, int n) {
  std::string out;
  for (int i = 1; i <= n; ++i) out += std::string(i > 1 ? "," : "") + base + std::to_string(i);
  return out;
}

void row(std::ostream& os, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << format_double(v[i]);
}

void append(std::vector<double>& out, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string params_header(int n, int m) {
  std::string h = "interval,t," + indexed("u", m) + ",gamma,lambda,kappa";
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) h += ",S" + std::to_string(i) + std::to_string(j);
  return h;
}

}  // namespace

void write_tube_csv(std::ostream& os, const TubeTrajectory& tube) {
  const int n = static_cast<int>(tube.nodes.front().q.size());
  os << "node,t," << indexed("q", n);
  for (int i = 1; i <= n; ++i)
    for (int j = i; j <= n; ++j) os << ",Q" << i << j;
  os << ",in_domain\n";
  for (std::size_t k = 0; k < tube.fine.size(); ++k) {
    const TubeNode& nd = tube.fine[k];
    std::vector<double> v{nd.t};
    append(v, nd.q);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) v.push_back(nd.Q(i, j));
    os << k << ",";
    row(os, v);
    os << "," << (nd.in_domain ? 1 : 0) << "\n";
  }
}

void write_boundary_csv(std::ostream& os, const TubeTrajectory& tube, int n_dirs) {
  const int n = static_cast<int>(tube.nodes.front().q.size());
  os << "node,t,sample," << indexed("x", n) << "\n";
  for (std::size_t k = 0; k < tube.nodes.size(); ++k) {
    const TubeNode& nd = tube.nodes[k];
    const Eigen::MatrixXd pts = boundary_points(Ellipsoid(nd.q, nd.Q), n_dirs);
    for (Eigen::Index s = 0; s < pts.rows(); ++s) {
      os << k << "," << format_double(nd.t) << "," << s;
      for (Eigen::Index i = 0; i < pts.cols(); ++i) os << "," << format_double(pts(s, i));
      os << "\n";
    }
  }
}

void write_params_csv(std::ostream& os, const TubeTrajectory& tube) {
  const PolicyParams& p = tube.params;
  const int m = static_cast<int>(p.u_x.front().size());
  const int n = static_cast<int>(p.S.front().rows());
  os << params_header(n, m) << "\n";
  for (int k = 0; k < p.size(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    std::vector<double> v{tube.grid[ku]};
    append(v, p.u_x[ku]);
    v.push_back(p.gamma[ku]);
    v.push_back(p.lambda[ku]);
    v.push_back(p.kappa[ku]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) v.push_back(p.S[ku](i, j));
    os << k << ",";
    row(os, v);
    os << "\n";
  }
}

PolicyParams read_params_csv(std::istream& is, const ControlAffineModel& model) {
  const int n = model.n_x();
  const int m = model.n_u();
  auto fail = [](int line, const std::string& what) -> void {
    throw Error(Errc::io, "params.csv:" + std::to_string(line) + ": " + what);
  };
  std::string line;
  if (!std::getline(is, line)) fail(1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != params_header(n, m)) fail(1, "header does not match the model dimensions");
  PolicyParams p;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (static_cast<int>(cells.size()) != 2 + m + 3 + n * m) fail(lineno, "wrong number of columns");
    std::vector<double> v;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(c, &used));
        if (used != c.size()) fail(lineno, "bad number '" + c + "'");
      } catch (const std::logic_error&) {
        fail(lineno, "bad number '" + c + "'");
      }
    }
    if (static_cast<int>(v[0]) != p.size()) fail(lineno, "intervals must be numbered 0, 1, ...");
    std::size_t at = 2;
    IntervalParams ip;
    ip.u_x.resize(m);
    for (int i = 0; i < m; ++i) ip.u_x(i) = v[at++];
    ip.gamma = v[at++];
    ip.lambda = v[at++];
    ip.kappa = v[at++];
    ip.S.resize(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ip.S(i, j) = v[at++];
    p.u_x.push_back(ip.u_x);
    p.gamma.push_back(ip.gamma);
    p.lambda.push_back(ip.lambda);
    p.kappa.push_back(ip.kappa);
    p.S.push_back(ip.S);
  }
  if (p.size() == 0) fail(lineno, "no intervals");
  return p;
}

void write_trace_csv(std::ostream& os, const ScenarioResult& r) {
  const int n = r.x.empty() ? 0 : static_cast<int>(r.x.front().size());
  const int m = r.u.empty() ? 0 : static_cast<int>(r.u.front().size());
  const int p = r.w.empty() ? 0 : static_cast<int>(r.w.front().size());
  os << "t," << indexed("x", n) << "," << indexed("u", m) << "," << indexed("w", p)
     << ",margin,residual\n";
  for (std::size_t j = 0; j < r.t.size(); ++j) {
    std::vector<double> v{r.t[j]};
    append(v, r.x[j]);
    append(v, j < r.u.size() ? r.u[j] : Vec(Vec::Constant(m, NAN)));
    append(v, j < r.w.size() ? r.w[j] : Vec(Vec::Constant(p, NAN)));
    row(os, v);
    os << ",";
    if (j < r.margin.size() && !std::isnan(r.margin[j])) os << format_double(r.margin[j]);
    os << "," << format_double(r.residual[j]) << "\n";
  }
}

void write_scenarios_csv(std::ostream& os, const std::vector<ScenarioResult>& runs,
                         std::uint64_t seed) {
  os << "controller,scenario,seed,violations,containment_violations,min_margin,max_residual,"
        "tracking_cost,failed\n";
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const ScenarioResult& r = runs[s];
    os << r.label << "," << s << "," << seed + s << "," << r.violations.size() << ","
       << r.containment_violations << "," << format_double(r.min_margin) << ","
       << format_double(r.max_residual) << "," << format_double(r.tracking_cost) << ","
       << (r.failed ? 1 : 0) << "\n";
  }
}

void write_summary_csv(std::ostream& os, const std::vector<ControllerSummary>& rows) {
  os << "controller,scenarios,violating,containment_violating,failed,violation_rate,"
        "worst_residual,mean_cost\n";
  for (const auto& s : rows) {
    os << s.label << "," << s.scenarios << "," << s.violating << "," << s.containment_violating
       << "," << s.failed << "," << format_double(s.violation_rate) << ","
       << format_double(s.worst_residual) << "," << format_double(s.mean_cost) << "\n";
  }
}

std::ofstream open_output(const std::string& path) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream os(p);
  if (!os) throw Error(Errc::io, "cannot write " + path);
  return os;
}

}  // namespace ellitube
