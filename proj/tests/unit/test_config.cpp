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

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "ellitube/bounders.hpp"
#include "ellitube/config.hpp"
#include "ellitube/csv_io.hpp"
#include "oracles.hpp"

using namespace ellitube;

namespace {

const char* kMinimal = R"({
  "seed": 3,
  "model": { "name": "scalar_linear" },
  "problem": { "T": 1.0, "N": 5, "x_hat": [0.2] }
})";

int error_line(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), Errc::configuration);
    const std::string what = e.what();
    EXPECT_EQ(what.rfind("cfg.json:" + std::to_string(e.line()) + ":", 0), 0u) << what;
    return e.line();
  }
  ADD_FAILURE() << "expected a ConfigError";
  return -1;
}

}  // namespace

TEST(Config, MinimalDefaults) {
  const ExperimentConfig c = parse_config(kMinimal);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.model.name, "scalar_linear");
  EXPECT_EQ(c.problem.N, 5);
  EXPECT_EQ(c.problem.n_sub, 4);
  EXPECT_EQ(c.problem.method, "radau5");
  EXPECT_EQ(c.simulation.n_scenarios, 200);
  EXPECT_EQ(c.simulation.n_sub, 512);
  EXPECT_EQ(c.simulation.w_sub, 8);
  EXPECT_EQ(c.simulation.disturbance, "uniform-ball");
  EXPECT_EQ(c.output_dir, "out");
  EXPECT_DOUBLE_EQ(c.policy.gamma, 0.5);
}

TEST(Config, RoundTrip) {
  const ExperimentConfig a = load_config(ELLITUBE_SOURCE_DIR "/configs/case_study.json");
  const std::string text = serialize_config(a);
  const ExperimentConfig b = parse_config(text);
  EXPECT_EQ(serialize_config(b), text);
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(b.solver.param_blocks, 4);
  EXPECT_DOUBLE_EQ(b.problem.constraints.at(0).eta, 0.85);
}

TEST(Config, HashIsSha256HexAndSensitive) {
  ExperimentConfig a = parse_config(kMinimal);
  const std::string h = config_hash(a);
  ASSERT_EQ(h.size(), 64u);
  EXPECT_EQ(h.find_first_not_of("0123456789abcdef"), std::string::npos);
  a.seed = 4;
  EXPECT_NE(config_hash(a), h);
}

TEST(Config, LineAnchoredErrors) {
  EXPECT_EQ(error_line(R"({
  "seed": 1,
  "model": { "name": "zero" },
  "problem": {
    "T": 1.0,
    "Nn": 4
  }
})"),
            6);
  EXPECT_EQ(error_line(R"({
  "seed": 1,
  "model": { "name": "zero" },
  "problem": { "T": -1.0 }
})"),
            4);
  EXPECT_EQ(error_line(R"({
  "seed": 1,
  "model": { "name": "zero" },
  "problem": { "T": 1.0,
     "x_hat": [1, 2, 3] }
})"),
            5);
  // Syntax error on line 3.
  EXPECT_EQ(error_line("{\n  \"seed\": 1,\n  \"model\": { \"name\" \"zero\" }\n}"), 3);
}

TEST(Config, RequiredKeysAndUnknownModel) {
  expect_errc([] { parse_config(R"({ "model": { "name": "zero" } })"); }, Errc::configuration);
  expect_errc([] { parse_config(R"({ "seed": 1 })"); }, Errc::configuration);
  expect_errc([] { parse_config(R"({ "seed": 1, "model": {} })"); }, Errc::configuration);
  expect_errc([] { parse_config(R"({ "seed": 1, "model": { "name": "pendulum" } })"); },
              Errc::configuration);
  expect_errc([] { load_config("/nonexistent/config.json"); }, Errc::configuration);
}

TEST(Config, SamplingPeriodMustFitTheGrid) {
  expect_errc(
      [] {
        parse_config(R"({ "seed": 1, "model": { "name": "scalar_linear" },
          "problem": { "T": 1.0, "N": 10, "x_hat": [0] },
          "simulation": { "sampling_period": 0.033 } })");
      },
      Errc::configuration);
  EXPECT_NO_THROW(parse_config(R"({ "seed": 1, "model": { "name": "scalar_linear" },
      "problem": { "T": 1.0, "N": 10, "x_hat": [0] },
      "simulation": { "sampling_period": 0.2 } })"));
}

TEST(Config, DMustBeSymmetricPsd) {
  expect_errc(
      [] {
        parse_config(R"({ "seed": 1, "model": { "name": "spring_mass_damper" },
          "problem": { "x_hat": [0, 0], "D": [[1, 2], [0, 1]] } })");
      },
      Errc::configuration);
}

TEST(Config, Builders) {
  const ExperimentConfig c = load_config(ELLITUBE_SOURCE_DIR "/configs/case_study.json");
  const ModelPtr m = build_model(c);
  const TubeOCP p = build_tube_ocp(c, m);
  EXPECT_EQ(p.N, 40);
  EXPECT_DOUBLE_EQ(p.T, 10.0);
  EXPECT_EQ(p.constraints.size(), 1u);
  EXPECT_TRUE(p.objective.D.isIdentity());
  EXPECT_EQ(p.solver.param_blocks, 4);
  const NominalOCP n = build_nominal_ocp(c, m);
  EXPECT_EQ(n.x_hat, p.x_hat);
  const RecedingOptions r = build_receding(c);
  EXPECT_DOUBLE_EQ(r.sampling_period, 0.25);
  EXPECT_DOUBLE_EQ(r.duration, 10.0);
  const CompareOptions co = build_compare(c);
  EXPECT_EQ(co.n_scenarios, 200);
  EXPECT_EQ(co.seed, 1u);

  const ExperimentConfig d = parse_config(kMinimal);
  const RecedingOptions rd = build_receding(d);
  EXPECT_DOUBLE_EQ(rd.sampling_period, 0.2);
  EXPECT_DOUBLE_EQ(rd.duration, 1.0);
  EXPECT_EQ(tube_method_from_string("rk4"), TubeMethod::rk4);
  expect_errc([] { tube_method_from_string("euler"); }, Errc::configuration);
}

TEST(Csv, ParamsRoundTripIsExact) {
  const ExperimentConfig c = load_config(ELLITUBE_SOURCE_DIR "/configs/case_study.json");
  const ModelPtr m = build_model(c);
  const FrobeniusBoundData b = compute_frobenius_constants(*m);
  std::ifstream is(ELLITUBE_SOURCE_DIR "/configs/case_study_params.csv");
  const PolicyParams p = read_params_csv(is, *m);
  TubeOptions o;
  const TubeTrajectory t = integrate_tube(*m, Vec::Constant(2, 0.7), Mat::Zero(2, 2), p, 10.0, 40, b, o);
  std::stringstream ss;
  write_params_csv(ss, t);
  const PolicyParams q = read_params_csv(ss, *m);
  ASSERT_EQ(q.size(), p.size());
  for (int k = 0; k < p.size(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    EXPECT_EQ(q.u_x[kk], p.u_x[kk]);
    EXPECT_EQ(q.gamma[kk], p.gamma[kk]);
    EXPECT_EQ(q.lambda[kk], p.lambda[kk]);
    EXPECT_EQ(q.kappa[kk], p.kappa[kk]);
    EXPECT_EQ(q.S[kk], p.S[kk]);
  }
}

TEST(Csv, MalformedParamsNameTheLine) {
  const ModelPtr m = spring_mass_damper();
  std::stringstream bad("interval,t,u1,gamma,lambda,kappa,S11,S21\n0,0,1,0.5,1,1,0,0\n1,0.25,1,0.5\n");
  try {
    read_params_csv(bad, *m);
    ADD_FAILURE() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  std::stringstream header("interval,t,u1\n");
  EXPECT_THROW(read_params_csv(header, *m), Error);
}

TEST(Csv, NumberFormatRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(format_double(v)), v);
}
