// Copyright 2026 The softpref Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "softpref/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "doctest.h"

#include "softpref/error.hpp"
#include "softpref/losses.hpp"
#include "softpref/prefdata.hpp"
#include "softpref/simplex.hpp"
#include "test_util.hpp"

namespace softpref {
namespace {

using testing::CheckClose;
using testing::ErrorCodeOf;

PreferenceObjective PairwiseObjective(const RewardTable& r, double alpha,
                                      double gamma = 0.0) {
  LossSpec spec;
  spec.family = gamma > 0.0 ? LossFamily::kSpoWeighted : LossFamily::kSpoBasic;
  spec.alpha = alpha;
  spec.gamma = gamma;
  return PreferenceObjective(spec,
                             MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2)));
}

const RewardTable& TwoResponses() {
  static const RewardTable r({{std::log(2.0), 0.0}});
  return r;
}

const RewardTable& FiveResponses() {
  static const RewardTable r = RewardTable::UniformRandom(1, 5, -2.0, 2.0, 7);
  return r;
}

TEST_CASE("flow_step") {
  FlowConfig config;
  config.step_size = 0.1;
  const PolicyTable pi{{0.5, 0.5}};
  CheckClose(FlowStep(pi, {{0.0, 0.0}}, config)[0], {0.5, 0.5}, 0.0);
  CheckClose(FlowStep(pi, {{1.0, -1.0}}, config)[0], {0.4, 0.6}, 1e-15);
  // Leaves the simplex, projects to (1, 0), then the floor lifts entry 1.
  config.step_size = 1.0;
  const PolicyTable out = FlowStep(pi, {{-1.0, 1.0}}, config);
  CHECK(out[0][1] == doctest::Approx(config.epsilon).epsilon(1e-6));
  CHECK(out[0][0] + out[0][1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ErrorCodeOf([&] { FlowStep(pi, {{1.0, 0.0, 0.0}}, config); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("flow config validation") {
  FlowConfig config;
  config.Validate(5);
  config.step_size = 0.0;
  CHECK(ErrorCodeOf([&] { config.Validate(5); }) == ErrorCode::kInvalidConfig);
  config = FlowConfig{};
  config.epsilon = 0.25;
  CHECK(ErrorCodeOf([&] { config.Validate(4); }) == ErrorCode::kInvalidConfig);
  config.Validate(3);
  for (Integrator i : {Integrator::kAuto, Integrator::kExplicitEuler,
                       Integrator::kImplicitEuler}) {
    CHECK(ParseIntegrator(IntegratorName(i)) == i);
  }
  CHECK_FALSE(ParseIntegrator("rk4").has_value());
}

TEST_CASE("flow targets") {
  const RewardTable r({{0.0, 2.0, 1.0}});
  CheckClose(FlowTarget(r, 1.0, 1e-9)[0], SoftmaxScaled(r.rewards(0), 1.0).vector(), 0.0);
  CheckClose(FlowTarget(r, 0.0, 1e-9)[0], FlooredVertex(3, 1, 1e-9).vector(), 0.0);
}

TEST_CASE("run_flow reaches softmax targets") {
  for (Integrator integrator : {Integrator::kImplicitEuler, Integrator::kExplicitEuler}) {
    CAPTURE(IntegratorName(integrator));
    FlowConfig config;
    config.integrator = integrator;
    FlowResult result = RunFlow({{0.1, 0.9}}, PairwiseObjective(TwoResponses(), 1.0),
                                TwoResponses(), config);
    CHECK(result.converged);
    CheckClose(result.final_policy[0], {2.0 / 3, 1.0 / 3}, 1e-6);

    result = RunFlow({{0.1, 0.9}}, PairwiseObjective(TwoResponses(), 0.5),
                     TwoResponses(), config);
    CHECK(result.converged);
    CheckClose(result.final_policy[0], {0.8, 0.2}, 1e-6);

    const RewardTable flat({{1.0, 1.0, 1.0, 1.0}});
    result = RunFlow({{0.1, 0.2, 0.3, 0.4}}, PairwiseObjective(flat, 1.0), flat, config);
    CHECK(result.converged);
    CHECK(result.reached_target);
    CheckClose(result.final_policy[0], {0.25, 0.25, 0.25, 0.25}, 1e-6);
  }
}

TEST_CASE("run_flow keeps iterates on the floored simplex") {
  FlowConfig config;
  config.snapshot_every = 1;
  config.max_iters = 300;
  const FlowResult result =
      RunFlow({{0.2, 0.2, 0.2, 0.2, 0.2}}, PairwiseObjective(FiveResponses(), 0.25),
              FiveResponses(), config);
  REQUIRE(!result.trace.snapshots.empty());
  CHECK(result.trace.records.size() <= config.max_iters);
  for (const auto& [iter, policy] : result.trace.snapshots) {
    const Distribution row(policy[0]);
    CHECK(*std::min_element(row.begin(), row.end()) >= config.epsilon * (1 - 1e-9));
  }
  for (const FlowRecord& rec : result.trace.records) CHECK(rec.dist_to_target >= 0.0);
}

TEST_CASE("run_flow is deterministic") {
  FlowConfig config;
  config.max_iters = 2000;
  const PolicyTable init = RandomInteriorPolicy(FiveResponses(), 1e-9, 3, 0);
  const auto objective = PairwiseObjective(FiveResponses(), 1.0);
  const FlowResult a = RunFlow(init, objective, FiveResponses(), config);
  const FlowResult b = RunFlow(init, objective, FiveResponses(), config);
  CHECK(a.final_policy == b.final_policy);
  CHECK(TraceCsv(a.trace) == TraceCsv(b.trace));
}

TEST_CASE("final distance shrinks with the iteration budget") {
  for (double alpha : {0.25, 1.0, 4.0}) {
    CAPTURE(alpha);
    const auto objective = PairwiseObjective(FiveResponses(), alpha);
    const PolicyTable init = RandomInteriorPolicy(FiveResponses(), 1e-9, 7, 1);
    double previous = 1e300;
    for (std::size_t budget : {5, 50, 500}) {
      FlowConfig config;
      config.max_iters = budget;
      const FlowResult result = RunFlow(init, objective, FiveResponses(), config);
      CHECK(result.final_l2 < previous);
      previous = result.final_l2;
    }
  }
}

TEST_CASE("multi_start_convergence") {
  FlowConfig config;
  config.seed = 7;
  const MultiStartReport report = MultiStartConvergence(
      PairwiseObjective(TwoResponses(), 1.0), TwoResponses(), config, 2);
  CHECK(report.all_converged);
  CHECK(report.runs.size() == 20);
  CHECK(report.max_final_distance < 1e-6);

  config.inits = 1;
  CHECK(ErrorCodeOf([&] {
          MultiStartConvergence(PairwiseObjective(TwoResponses(), 1.0), TwoResponses(),
                                config);
        }) == ErrorCode::kPreconditionViolated);
}

TEST_CASE("alpha = 0 with a single positive net winner reaches the vertex") {
  FlowConfig config;
  config.seed = 7;
  const MultiStartReport report = MultiStartConvergence(
      PairwiseObjective(TwoResponses(), 0.0), TwoResponses(), config);
  CHECK(report.max_final_l2 < 1e-4);
}

TEST_CASE("multi-start seeds are reproducible") {
  const PolicyTable a = RandomInteriorPolicy(FiveResponses(), 1e-9, 11, 4);
  CHECK(a == RandomInteriorPolicy(FiveResponses(), 1e-9, 11, 4));
  CHECK(a != RandomInteriorPolicy(FiveResponses(), 1e-9, 11, 5));
  const Distribution row(a[0]);
  CHECK(*std::min_element(row.begin(), row.end()) >= 1e-9);
}

TEST_CASE("weighted flow has the unweighted fixed point") {
  FlowConfig config;
  const PolicyTable init = RandomInteriorPolicy(FiveResponses(), 1e-9, 5, 0);
  const FlowResult plain =
      RunFlow(init, PairwiseObjective(FiveResponses(), 1.0), FiveResponses(), config);
  const FlowResult weighted = RunFlow(init, PairwiseObjective(FiveResponses(), 1.0, 0.01),
                                      FiveResponses(), config);
  CHECK(plain.converged);
  CHECK(weighted.converged);
  CHECK(MaxAbsDifference(plain.final_policy[0], weighted.final_policy[0]) < 1e-5);
}

TEST_CASE("lyapunov_audit") {
  const auto objective = PairwiseObjective(TwoResponses(), 1.0);
  FlowConfig config;
  const FlowResult at_target =
      RunFlow(FlowTarget(TwoResponses(), 1.0, config.epsilon), objective,
              TwoResponses(), config);
  LyapunovReport report = LyapunovAudit(at_target.trace);
  CHECK(report.monotone);
  CHECK(report.max_increase == 0.0);

  const FlowResult tuned = RunFlow({{0.05, 0.95}}, objective, TwoResponses(), config);
  CHECK(LyapunovAudit(tuned.trace).monotone);

  config.integrator = Integrator::kExplicitEuler;
  CHECK(LyapunovAudit(RunFlow({{0.05, 0.95}}, objective, TwoResponses(), config).trace)
            .monotone);

  // Explicit Euler with a step far beyond the stability limit overshoots.
  config.step_size = 1.0;
  config.max_iters = 200;
  const FlowResult oversized = RunFlow({{0.05, 0.95}}, objective, TwoResponses(), config);
  report = LyapunovAudit(oversized.trace);
  CHECK_FALSE(report.monotone);
  REQUIRE(report.first_violation.has_value());
  CHECK(*report.first_violation >= 1);
  CHECK(report.max_increase > 0.0);
}

TEST_CASE("stationarity_scan") {
  const auto two = PairwiseObjective(TwoResponses(), 1.0);
  StationarityReport report = StationarityScan(two, TwoResponses(), 1000);
  CHECK(report.points_scanned == 999);
  CHECK(report.min_grad_norm_away_from_target > 0.0);

  const RewardTable flat({{0.0, 0.0}});
  report = StationarityScan(PairwiseObjective(flat, 1.0), flat, 10);
  CHECK(report.points_excluded == 1);
  CHECK(report.min_grad_norm_away_from_target > 0.0);

  const RewardTable three({{0.5, -1.0, 0.2}});
  report = StationarityScan(PairwiseObjective(three, 1.0), three, 50);
  CHECK(report.points_scanned > 1000);
  CHECK(report.min_grad_norm_away_from_target > 0.0);

  CHECK(ErrorCodeOf([&] {
          StationarityScan(PairwiseObjective(flat, 0.0), flat, 10);
        }) == ErrorCode::kNonpositiveAlpha);
}

TEST_CASE("trace csv") {
  FlowConfig config;
  config.max_iters = 3;
  const FlowResult result = RunFlow({{0.3, 0.7}}, PairwiseObjective(TwoResponses(), 1.0),
                                    TwoResponses(), config);
  const std::string csv = TraceCsv(result.trace);
  CHECK(csv.rfind("iter,loss,grad_norm,dist_to_target\n0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

}  // namespace
}  // namespace softpref
