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

#include "ellitube/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ellitube {

using nlohmann::json;

ConfigError::ConfigError(const std::string& source, int line, const std::string& what)
    : Error(Errc::configuration,
            source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
      line_(line) {}

const char* version_string() { return ELLITUBE_VERSION_STRING; }

namespace {

// Input iterator that counts consumed newlines; lets the SAX pass below map
// JSON pointers to source lines.
struct LineCountingIterator {
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  const char* p = nullptr;
  int* line = nullptr;

  reference operator*() const { return *p; }
  LineCountingIterator& operator++() {
    if (*p == '\n') ++*line;
    ++p;
    return *this;
  }
  LineCountingIterator operator++(int) {
    LineCountingIterator old = *this;
    ++*this;
    return old;
  }
  bool operator==(const LineCountingIterator& o) const { return p == o.p; }
  bool operator!=(const LineCountingIterator& o) const { return p != o.p; }
};

class LineMapper : public nlohmann::json_sax<json> {
 public:
  explicit LineMapper(const int* line) : line_(line) {}
  std::map<std::string, int> lines;

  bool null() override { return value(); }
  bool boolean(bool) override { return value(); }
  bool number_integer(number_integer_t) override { return value(); }
  bool number_unsigned(number_unsigned_t) override { return value(); }
  bool number_float(number_float_t, const string_t&) override { return value(); }
  bool string(string_t&) override { return value(); }
  bool binary(binary_t&) override { return value(); }
  bool start_object(std::size_t) override {
    value();
    stack_.push_back({false, 0, path(), {}});
    return true;
  }
  bool key(string_t& k) override {
    Frame& f = stack_.back();
    f.key = k;
    lines.emplace(f.base + "/" + k, *line_);
    return true;
  }
  bool end_object() override {
    stack_.pop_back();
    return true;
  }
  bool start_array(std::size_t) override {
    value();
    stack_.push_back({true, -1, path(), {}});
    return true;
  }
  bool end_array() override {
    stack_.pop_back();
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override {
    return false;
  }

 private:
  struct Frame {
    bool array;
    int index;
    std::string base;
    std::string key;
  };

  std::string path() const {
    if (stack_.empty()) return "";
    const Frame& f = stack_.back();
    return f.base + "/" + (f.array ? std::to_string(f.index) : f.key);
  }
  bool value() {
    if (!stack_.empty() && stack_.back().array) {
      ++stack_.back().index;
      lines.emplace(path(), *line_);
    }
    return true;
  }

  const int* line_;
  std::vector<Frame> stack_;
};

class Reader {
 public:
  Reader(std::string source, std::map<std::string, int> lines)
      : source_(std::move(source)), lines_(std::move(lines)) {}

  int line_of(std::string path) const {
    for (;;) {
      auto it = lines_.find(path);
      if (it != lines_.end()) return it->second;
      const auto cut = path.rfind('/');
      if (cut == std::string::npos || path.empty()) return 0;
      path = path.substr(0, cut);
    }
  }
  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    throw ConfigError(source_, line_of(path), (path.empty() ? "/" : path) + ": " + what);
  }

  void object(const json& j, const std::string& path,
              std::initializer_list<const char*> allowed) const {
    if (!j.is_object()) fail(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) fail(path + "/" + it.key(), "unknown key");
    }
  }

  double number(const json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "expected a finite number");
    return v;
  }
  long integer(const json& j, const std::string& path) const {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<long>();
  }
  bool boolean(const json& j, const std::string& path) const {
    if (!j.is_boolean()) fail(path, "expected true or false");
    return j.get<bool>();
  }
  std::string string(const json& j, const std::string& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }
  // Numbers, arrays of numbers, or arrays of equal-length number arrays
  // (flattened row-major).
  std::vector<double> numbers(const json& j, const std::string& path) const {
    if (j.is_number()) return {number(j, path)};
    if (!j.is_array()) fail(path, "expected a number or an array of numbers");
    std::vector<double> out;
    std::size_t width = 0;
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string p = path + "/" + std::to_string(i);
      if (j[i].is_array()) {
        if (i > 0 && width == 0) fail(p, "mixed scalars and rows");
        if (i == 0) width = j[i].size();
        if (j[i].size() != width || width == 0) fail(p, "rows must have equal, nonzero length");
        for (std::size_t c = 0; c < j[i].size(); ++c)
          out.push_back(number(j[i][c], p + "/" + std::to_string(c)));
      } else {
        if (width != 0) fail(p, "mixed scalars and rows");
        out.push_back(number(j[i], p));
      }
    }
    return out;
  }

 private:
  std::string source_;
  std::map<std::string, int> lines_;
};

template <class F>
void with(const json& obj, const char* key, const std::string& path, F&& f) {
  auto it = obj.find(key);
  if (it != obj.end()) f(*it, path + "/" + key);
}

void read_model(const Reader& r, const json& j, const std::string& p, ModelConfig& m) {
  r.object(j, p, {"name", "overrides"});
  with(j, "name", p, [&](const json& v, const std::string& q) { m.name = r.string(v, q); });
  with(j, "overrides", p, [&](const json& v, const std::string& q) {
    if (!v.is_object()) r.fail(q, "expected an object");
    for (auto it = v.begin(); it != v.end(); ++it)
      m.overrides[it.key()] = r.numbers(it.value(), q + "/" + it.key());
  });
}

void read_problem(const Reader& r, const json& j, const std::string& p, ProblemConfig& c) {
  r.object(j, p, {"T", "N", "x_hat", "constraints", "D", "x_ref", "rho", "n_sub", "method",
                  "domain_constraints", "terminal_set", "terminal_target"});
  with(j, "T", p, [&](const json& v, const std::string& q) {
    c.T = r.number(v, q);
    if (!(c.T > 0.0)) r.fail(q, "must be positive");
  });
  with(j, "N", p, [&](const json& v, const std::string& q) {
    const long n = r.integer(v, q);
    if (n < 1 || n > 100000) r.fail(q, "must be in [1, 100000]");
    c.N = static_cast<int>(n);
  });
  with(j, "x_hat", p, [&](const json& v, const std::string& q) { c.x_hat = r.numbers(v, q); });
  with(j, "constraints", p, [&](const json& v, const std::string& q) {
    if (!v.is_array()) r.fail(q, "expected an array of {h, eta}");
    c.constraints.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string e = q + "/" + std::to_string(i);
      r.object(v[i], e, {"h", "eta"});
      if (!v[i].contains("h") || !v[i].contains("eta")) r.fail(e, "needs both h and eta");
      c.constraints.push_back({r.numbers(v[i]["h"], e + "/h"), r.number(v[i]["eta"], e + "/eta")});
    }
  });
  with(j, "D", p, [&](const json& v, const std::string& q) { c.D = r.numbers(v, q); });
  with(j, "x_ref", p, [&](const json& v, const std::string& q) { c.x_ref = r.numbers(v, q); });
  with(j, "rho", p, [&](const json& v, const std::string& q) {
    c.rho = r.number(v, q);
    if (c.rho < 0.0) r.fail(q, "must be >= 0");
  });
  with(j, "n_sub", p, [&](const json& v, const std::string& q) {
    const long n = r.integer(v, q);
    if (n < 1 || n > 1000) r.fail(q, "must be in [1, 1000]");
    c.n_sub = static_cast<int>(n);
  });
  with(j, "method", p, [&](const json& v, const std::string& q) {
    c.method = r.string(v, q);
    if (c.method != "radau5" && c.method != "rk4") r.fail(q, "expected \"radau5\" or \"rk4\"");
  });
  with(j, "domain_constraints", p,
       [&](const json& v, const std::string& q) { c.domain_constraints = r.boolean(v, q); });
  with(j, "terminal_set", p,
       [&](const json& v, const std::string& q) { c.terminal_set = r.boolean(v, q); });
  with(j, "terminal_target", p, [&](const json& v, const std::string& q) {
    c.terminal_target = r.number(v, q);
    if (c.terminal_target > 0.0) r.fail(q, "must be <= 0");
  });
}

void read_solver(const Reader& r, const json& j, const std::string& p, SolverSettings& s) {
  r.object(j, p, {"max_outer", "max_inner", "feas_tol", "grad_tol", "fd_step", "stall_tol",
                  "settle_tol", "lbfgs_memory", "param_blocks", "coarse_blocks", "tighten",
                  "max_evaluations", "verbose"});
  auto count = [&](const char* key, int lo, int& out) {
    with(j, key, p, [&](const json& v, const std::string& q) {
      const long n = r.integer(v, q);
      if (n < lo || n > 1000000) r.fail(q, "must be in [" + std::to_string(lo) + ", 1000000]");
      out = static_cast<int>(n);
    });
  };
  auto positive = [&](const char* key, double& out) {
    with(j, key, p, [&](const json& v, const std::string& q) {
      out = r.number(v, q);
      if (!(out > 0.0)) r.fail(q, "must be positive");
    });
  };
  count("max_outer", 1, s.max_outer);
  count("max_inner", 1, s.max_inner);
  positive("feas_tol", s.feas_tol);
  positive("grad_tol", s.grad_tol);
  positive("fd_step", s.fd_step);
  positive("stall_tol", s.stall_tol);
  positive("settle_tol", s.settle_tol);
  count("lbfgs_memory", 1, s.lbfgs_memory);
  count("param_blocks", 0, s.param_blocks);
  count("coarse_blocks", 0, s.coarse_blocks);
  with(j, "tighten", p, [&](const json& v, const std::string& q) {
    s.tighten = r.number(v, q);
    if (s.tighten < 0.0) r.fail(q, "must be >= 0");
  });
  with(j, "max_evaluations", p, [&](const json& v, const std::string& q) {
    s.max_evaluations = r.integer(v, q);
    if (s.max_evaluations < 0) r.fail(q, "must be >= 0");
  });
  with(j, "verbose", p, [&](const json& v, const std::string& q) { s.verbose = r.boolean(v, q); });
}

void read_simulation(const Reader& r, const json& j, const std::string& p, SimulationConfig& s) {
  r.object(j, p, {"n_scenarios", "sampling_period", "duration", "n_sub", "w_sub", "disturbance",
                  "robust_mode", "tolerance", "traces", "use_policy"});
  with(j, "n_scenarios", p, [&](const json& v, const std::string& q) {
    const long n = r.integer(v, q);
    if (n < 0 || n > 10000000) r.fail(q, "must be in [0, 10000000]");
    s.n_scenarios = static_cast<int>(n);
  });
  with(j, "sampling_period", p, [&](const json& v, const std::string& q) {
    s.sampling_period = r.number(v, q);
    if (s.sampling_period < 0.0) r.fail(q, "must be >= 0");
  });
  with(j, "duration", p, [&](const json& v, const std::string& q) {
    s.duration = r.number(v, q);
    if (s.duration < 0.0) r.fail(q, "must be >= 0");
  });
  with(j, "n_sub", p, [&](const json& v, const std::string& q) {
    const long n = r.integer(v, q);
    if (n < 1 || n > 100000) r.fail(q, "must be in [1, 100000]");
    s.n_sub = static_cast<int>(n);
  });
  with(j, "w_sub", p, [&](const json& v, const std::string& q) {
    const long n = r.integer(v, q);
    if (n < 1 || n > 100000) r.fail(q, "must be in [1, 100000]");
    s.w_sub = static_cast<int>(n);
  });
  with(j, "disturbance", p, [&](const json& v, const std::string& q) {
    s.disturbance = r.string(v, q);
    if (s.disturbance != "uniform-ball" && s.disturbance != "boundary")
      r.fail(q, "expected \"uniform-ball\" or \"boundary\"");
  });
  with(j, "robust_mode", p, [&](const json& v, const std::string& q) {
    s.robust_mode = r.string(v, q);
    if (s.robust_mode != "single-tube" && s.robust_mode != "receding")
      r.fail(q, "expected \"single-tube\" or \"receding\"");
  });
  with(j, "tolerance", p, [&](const json& v, const std::string& q) {
    s.tolerance = r.number(v, q);
    if (s.tolerance < 0.0) r.fail(q, "must be >= 0");
  });
  with(j, "traces", p, [&](const json& v, const std::string& q) {
    const long n = r.integer(v, q);
    if (n < 0 || n > 1000000) r.fail(q, "must be in [0, 1000000]");
    s.traces = static_cast<int>(n);
  });
  with(j, "use_policy", p, [&](const json& v, const std::string& q) { s.use_policy = r.boolean(v, q); });
}

void read_policy(const Reader& r, const json& j, const std::string& p, PolicyConfig& c) {
  r.object(j, p, {"params_file", "u_x", "gamma", "lambda", "kappa", "openloop"});
  with(j, "params_file", p, [&](const json& v, const std::string& q) { c.params_file = r.string(v, q); });
  with(j, "u_x", p, [&](const json& v, const std::string& q) { c.u_x = r.numbers(v, q); });
  with(j, "gamma", p, [&](const json& v, const std::string& q) {
    c.gamma = r.number(v, q);
    if (!(c.gamma >= kGammaMin && c.gamma <= 1.0)) r.fail(q, "must be in [1e-4, 1]");
  });
  with(j, "lambda", p, [&](const json& v, const std::string& q) {
    c.lambda = r.number(v, q);
    if (!(c.lambda > 0.0)) r.fail(q, "must be positive");
  });
  with(j, "kappa", p, [&](const json& v, const std::string& q) {
    c.kappa = r.number(v, q);
    if (!(c.kappa > 0.0)) r.fail(q, "must be positive");
  });
  with(j, "openloop", p, [&](const json& v, const std::string& q) { c.openloop = r.boolean(v, q); });
}

// Cross-field checks that need the model dimensions.
void check_against_model(const Reader& r, const ExperimentConfig& c) {
  ModelPtr model;
  try {
    model = make_model(c.model.name, c.model.overrides);
  } catch (const Error& e) {
    r.fail(c.model.overrides.empty() ? "/model/name" : "/model", e.what());
  }
  const auto n = static_cast<std::size_t>(model->n_x());
  const auto m = static_cast<std::size_t>(model->n_u());
  const auto& P = c.problem;
  if (!P.x_hat.empty() && P.x_hat.size() != n)
    r.fail("/problem/x_hat", "expected " + std::to_string(n) + " entries");
  for (std::size_t i = 0; i < P.constraints.size(); ++i)
    if (P.constraints[i].h.size() != n)
      r.fail("/problem/constraints/" + std::to_string(i) + "/h",
             "expected " + std::to_string(n) + " entries");
  if (!P.D.empty() && P.D.size() != n * n)
    r.fail("/problem/D", "expected an " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
  if (!P.x_ref.empty() && P.x_ref.size() != n)
    r.fail("/problem/x_ref", "expected " + std::to_string(n) + " entries");
  if (!c.policy.u_x.empty() && c.policy.u_x.size() != m)
    r.fail("/policy/u_x", "expected " + std::to_string(m) + " entries");
  if (!P.D.empty()) {
    Mat D = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        P.D.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if ((D - D.transpose()).norm() > 1e-12 * (1.0 + D.norm()) ||
        min_eigenvalue(D) < -1e-12 * (1.0 + D.norm()))
      r.fail("/problem/D", "must be symmetric positive semidefinite");
  }
  try {
    RecedingOptions ro = build_receding(c);
    receding_steps(P.T, P.N, ro);
  } catch (const Error& e) {
    r.fail("/simulation/sampling_period", e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json model = {{"name", c.model.name}, {"overrides", json::object()}};
  for (const auto& [k, v] : c.model.overrides) model["overrides"][k] = v;
  json rows = json::array();
  for (const auto& row : c.problem.constraints) rows.push_back({{"h", row.h}, {"eta", row.eta}});
  const auto& P = c.problem;
  const auto& S = c.solver;
  const auto& M = c.simulation;
  const auto& L = c.policy;
  return {
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"output_dir", c.output_dir},
      {"model", model},
      {"problem",
       {{"T", P.T}, {"N", P.N}, {"x_hat", P.x_hat}, {"constraints", rows}, {"D", P.D},
        {"x_ref", P.x_ref}, {"rho", P.rho}, {"n_sub", P.n_sub}, {"method", P.method},
        {"domain_constraints", P.domain_constraints}, {"terminal_set", P.terminal_set},
        {"terminal_target", P.terminal_target}}},
      {"solver",
       {{"max_outer", S.max_outer}, {"max_inner", S.max_inner}, {"feas_tol", S.feas_tol},
        {"grad_tol", S.grad_tol}, {"fd_step", S.fd_step}, {"stall_tol", S.stall_tol},
        {"settle_tol", S.settle_tol}, {"lbfgs_memory", S.lbfgs_memory},
        {"param_blocks", S.param_blocks}, {"coarse_blocks", S.coarse_blocks},
        {"tighten", S.tighten}, {"max_evaluations", S.max_evaluations}, {"verbose", S.verbose}}},
      {"simulation",
       {{"n_scenarios", M.n_scenarios}, {"sampling_period", M.sampling_period},
        {"duration", M.duration}, {"n_sub", M.n_sub}, {"w_sub", M.w_sub}, {"disturbance", M.disturbance},
        {"robust_mode", M.robust_mode}, {"tolerance", M.tolerance}, {"traces", M.traces},
        {"use_policy", M.use_policy}}},
      {"policy",
       {{"params_file", L.params_file}, {"u_x", L.u_x}, {"gamma", L.gamma}, {"lambda", L.lambda},
        {"kappa", L.kappa}, {"openloop", L.openloop}}},
  };
}

int line_at_byte(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte is 1-based and points one past the offending character.
    throw ConfigError(source, line_at_byte(text, e.byte == 0 ? 0 : e.byte - 1),
                      std::string("malformed JSON: ") + e.what());
  }
  int line = 1;
  LineMapper mapper(&line);
  LineCountingIterator first{text.data(), &line};
  LineCountingIterator last{text.data() + text.size(), &line};
  json::sax_parse(first, last, &mapper);
  const Reader r(source, std::move(mapper.lines));

  ExperimentConfig c;
  r.object(root, "", {"seed", "jobs", "output_dir", "model", "problem", "solver", "simulation",
                      "policy"});
  if (!root.contains("seed")) r.fail("", "missing required key \"seed\"");
  if (!root.contains("model")) r.fail("", "missing required key \"model\"");
  with(root, "seed", "", [&](const json& v, const std::string& q) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long>() >= 0))
      r.fail(q, "expected a non-negative integer");
    c.seed = v.get<std::uint64_t>();
  });
  with(root, "jobs", "", [&](const json& v, const std::string& q) {
    const long n = r.integer(v, q);
    if (n < 0 || n > 4096) r.fail(q, "must be in [0, 4096]");
    c.jobs = static_cast<int>(n);
  });
  with(root, "output_dir", "", [&](const json& v, const std::string& q) { c.output_dir = r.string(v, q); });
  with(root, "model", "", [&](const json& v, const std::string& q) {
    read_model(r, v, q, c.model);
    if (!v.contains("name")) r.fail(q, "missing required key \"name\"");
  });
  with(root, "problem", "", [&](const json& v, const std::string& q) { read_problem(r, v, q, c.problem); });
  with(root, "solver", "", [&](const json& v, const std::string& q) { read_solver(r, v, q, c.solver); });
  with(root, "simulation", "",
       [&](const json& v, const std::string& q) { read_simulation(r, v, q, c.simulation); });
  with(root, "policy", "", [&](const json& v, const std::string& q) { read_policy(r, v, q, c.policy); });
  c.solver.seed = c.seed;
  check_against_model(r, c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(Errc::io, "config_hash: SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

TubeMethod tube_method_from_string(const std::string& s) {
  if (s == "radau5") return TubeMethod::radau5;
  if (s == "rk4") return TubeMethod::rk4;
  throw Error(Errc::configuration, "unknown tube method '" + s + "'");
}

ModelPtr build_model(const ExperimentConfig& cfg) {
  return make_model(cfg.model.name, cfg.model.overrides);
}

namespace {

Mat weight(const ProblemConfig& p, int n) {
  if (p.D.empty()) return Mat::Identity(n, n);
  Mat D(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) D(i, j) = p.D[static_cast<std::size_t>(i * n + j)];
  return D;
}

LinearStateConstraints rows(const ProblemConfig& p) {
  LinearStateConstraints c;
  for (const auto& r : p.constraints) c.add(to_vec(r.h), r.eta);
  return c;
}

}  // namespace

TubeOCP build_tube_ocp(const ExperimentConfig& cfg, const ModelPtr& model) {
  const int n = model->n_x();
  const ProblemConfig& p = cfg.problem;
  TubeOCP ocp;
  ocp.model = model;
  ocp.T = p.T;
  ocp.N = p.N;
  ocp.x_hat = p.x_hat.empty() ? Vec(Vec::Zero(n)) : to_vec(p.x_hat);
  ocp.constraints = rows(p);
  ocp.objective.D = weight(p, n);
  ocp.objective.x_ref = p.x_ref.empty() ? Vec(Vec::Zero(n)) : to_vec(p.x_ref);
  ocp.objective.rho = p.rho;
  ocp.n_sub = p.n_sub;
  ocp.method = tube_method_from_string(p.method);
  ocp.domain_constraints = p.domain_constraints;
  ocp.solver = cfg.solver;
  ocp.solver.seed = cfg.seed;
  return ocp;
}

NominalOCP build_nominal_ocp(const ExperimentConfig& cfg, const ModelPtr& model) {
  const int n = model->n_x();
  const ProblemConfig& p = cfg.problem;
  NominalOCP ocp;
  ocp.model = model;
  ocp.T = p.T;
  ocp.N = p.N;
  ocp.x_hat = p.x_hat.empty() ? Vec(Vec::Zero(n)) : to_vec(p.x_hat);
  ocp.constraints = rows(p);
  ocp.D = weight(p, n);
  ocp.x_ref = p.x_ref.empty() ? Vec(Vec::Zero(n)) : to_vec(p.x_ref);
  ocp.rho = p.rho;
  ocp.n_sub = p.n_sub;
  ocp.solver = cfg.solver;
  ocp.solver.seed = cfg.seed;
  return ocp;
}

RecedingOptions build_receding(const ExperimentConfig& cfg) {
  RecedingOptions ro;
  ro.sampling_period = cfg.simulation.sampling_period > 0.0 ? cfg.simulation.sampling_period
                                                            : cfg.problem.T / cfg.problem.N;
  ro.duration = cfg.simulation.duration > 0.0 ? cfg.simulation.duration : cfg.problem.T;
  ro.n_sub = cfg.simulation.n_sub;
  ro.w_sub = cfg.simulation.w_sub;
  ro.tolerance = cfg.simulation.tolerance;
  return ro;
}

CompareOptions build_compare(const ExperimentConfig& cfg) {
  CompareOptions co;
  co.n_scenarios = cfg.simulation.n_scenarios;
  co.seed = cfg.seed;
  co.mode = disturbance_mode_from_string(cfg.simulation.disturbance);
  co.robust_mode =
      cfg.simulation.robust_mode == "receding" ? RobustMode::receding : RobustMode::single_tube;
  co.receding = build_receding(cfg);
  co.jobs = cfg.jobs;
  return co;
}

PolicyParams constant_policy(const ExperimentConfig& cfg, const ControlAffineModel& model) {
  IntervalParams p;
  p.u_x = cfg.policy.u_x.empty() ? model.control_set().center() : to_vec(cfg.policy.u_x);
  p.gamma = cfg.policy.gamma;
  p.lambda = cfg.policy.lambda;
  p.kappa = cfg.policy.kappa;
  p.S = Mat::Zero(model.n_x(), model.n_u());
  return PolicyParams::constant(cfg.problem.N, p);
}

}  // namespace ellitube
