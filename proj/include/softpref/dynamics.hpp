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

// Discretized projected gradient flow on a product of probability simplices,
// with convergence detection, Lyapunov auditing and multi-start checks.
//
// Two integrators are provided. Explicit Euler projects pi - h * grad back
// onto the simplex. Implicit (backward) Euler solves
//   pi_next = pi - h * P grad(pi_next),  P = I - 11^T / n  per query,
// by damped Newton with the closed-form Hessian. Backward Euler keeps
// ||pi - pi*|| nonincreasing for any step on these losses, where explicit
// Euler oscillates once target probabilities get small.

#ifndef SOFTPREF_DYNAMICS_HPP_
#define SOFTPREF_DYNAMICS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "softpref/losses.hpp"
#include "softpref/oracle.hpp"
#include "softpref/prefdata.hpp"

namespace softpref {

enum class Integrator {
  // Implicit Euler when alpha > 0, explicit Euler when alpha == 0.
  kAuto,
  kExplicitEuler,
  kImplicitEuler,
};

const char* IntegratorName(Integrator integrator);
std::optional<Integrator> ParseIntegrator(const std::string& name);

struct FlowConfig {
  double step_size = 0.01;
  std::size_t max_iters = 200'000;
  // Converged when the L-infinity change between iterates is below this and
  // the stationarity residual is below 10x this.
  double convergence_tol = 1e-10;
  // L-infinity distance to pi* below which a run counts as reaching it.
  double target_tol = 1e-6;
  double epsilon = 1e-9;
  std::size_t inits = 20;
  std::uint64_t seed = 0;
  Integrator integrator = Integrator::kAuto;
  // Keep a policy snapshot every this many iterations; 0 disables.
  std::size_t snapshot_every = 0;

  // Checks the invariants; `max_responses` is the largest row size.
  void Validate(std::size_t max_responses) const;
};

struct FlowRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double dist_to_target = 0.0;
};

struct FlowTrace {
  // State before the first step, reported as iteration 0.
  FlowRecord initial;
  // One record per step taken.
  std::vector<FlowRecord> records;
  std::vector<std::pair<std::size_t, PolicyTable>> snapshots;
};

struct FlowResult {
  PolicyTable final_policy;
  FlowTrace trace;
  bool converged = false;
  std::size_t iterations = 0;
  // Distances from the final policy to the target.
  double final_linf = 0.0;
  double final_l2 = 0.0;
  bool reached_target = false;
};

// pi* per query: softmax(r / alpha), or the epsilon-floored argmax vertex
// when alpha == 0.
PolicyTable FlowTarget(const RewardTable& rewards, double alpha,
                       double epsilon);

// Explicit step: per query project(pi - h * grad), then floor at epsilon.
PolicyTable FlowStep(const PolicyTable& policy, const PolicyGradient& grad,
                     const FlowConfig& config);

// Backward Euler step of size config.step_size, then floor at epsilon.
PolicyTable ImplicitFlowStep(const PolicyTable& policy,
                             const PreferenceObjective& objective,
                             const FlowConfig& config);

// Norm of the gradient restricted to the face of the floored simplex:
// per query, the gradient minus its mean over free coordinates, where
// floored coordinates only count when the flow would pull them inward.
double StationarityResidual(const PolicyTable& policy,
                            const PolicyGradient& grad, double epsilon);

// L2 norm of the per-query mean-centred gradient.
double TangentGradNorm(const PolicyGradient& grad);

FlowResult RunFlow(const PolicyTable& init,
                   const PreferenceObjective& objective,
                   const RewardTable& rewards, const FlowConfig& config);

// Dirichlet(1) rows floored at epsilon, one stream per init index.
PolicyTable RandomInteriorPolicy(const RewardTable& shape, double epsilon,
                                 std::uint64_t seed, std::size_t init_index);

struct MultiStartReport {
  bool all_converged = false;
  double max_final_distance = 0.0;  // L-infinity
  double max_final_l2 = 0.0;
  std::vector<FlowResult> runs;
};

// Runs from config.inits random starts; `jobs` > 1 runs them on threads.
MultiStartReport MultiStartConvergence(const PreferenceObjective& objective,
                                       const RewardTable& rewards,
                                       const FlowConfig& config,
                                       std::size_t jobs = 1);

inline constexpr double kLyapunovTolerance = 1e-10;

struct LyapunovReport {
  bool monotone = true;
  std::optional<std::size_t> first_violation;
  double max_increase = 0.0;
};

LyapunovReport LyapunovAudit(const FlowTrace& trace,
                             double tolerance = kLyapunovTolerance);

struct StationarityReport {
  double min_grad_norm_away_from_target = 0.0;
  std::size_t points_scanned = 0;
  std::size_t points_excluded = 0;
};

// Minimum TangentGradNorm over an interior grid, skipping points within
// `exclusion_radius` (L2) of pi*.
StationarityReport StationarityScan(const PreferenceObjective& objective,
                                    const RewardTable& rewards,
                                    std::size_t grid_resolution,
                                    double exclusion_radius = 1e-9);

// CSV with header iter,loss,grad_norm,dist_to_target; iteration 0 first.
std::string TraceCsv(const FlowTrace& trace);

}  // namespace softpref

#endif  // SOFTPREF_DYNAMICS_HPP_
