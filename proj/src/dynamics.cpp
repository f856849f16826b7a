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
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include <Eigen/Dense>

#include "softpref/error.hpp"
#include "softpref/rng.hpp"
#include "softpref/simplex.hpp"

namespace softpref {
namespace {

// Newton on the backward Euler residual.
constexpr int kNewtonIters = 50;
constexpr double kNewtonTarget = 1e-14;
constexpr double kNewtonAccept = 1e-11;
constexpr int kMaxStepHalvings = 20;
constexpr std::size_t kDivergenceStreak = 50;

double EffectiveAlpha(const LossSpec& spec) {
  return spec.family == LossFamily::kCrossEntropy ? 1.0 : spec.alpha;
}

std::size_t MaxRowSize(const PolicyTable& table) {
  std::size_t out = 0;
  for (const auto& row : table) out = std::max(out, row.size());
  return out;
}

double Mean(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

void CheckInterior(const PolicyTable& policy, double epsilon) {
  // Floored entries may sit a rounding error below epsilon.
  const double bound = epsilon * (1.0 - 1e-9);
  for (const auto& row : policy) {
    for (double p : row) {
      if (!(p >= bound)) {
        Fail(ErrorCode::kPreconditionViolated,
             "policy entry " + std::to_string(p) + " below the interior floor");
      }
    }
  }
}

PolicyTable FloorRows(const PolicyTable& policy, double epsilon) {
  PolicyTable out;
  out.reserve(policy.size());
  for (const auto& row : policy) out.push_back(FloorAndRenormalize(row, epsilon));
  return out;
}

double Linf(const PolicyTable& a, const PolicyTable& b) {
  double out = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) {
    out = std::max(out, MaxAbsDifference(a[q], b[q]));
  }
  return out;
}

double L2(const PolicyTable& a, const PolicyTable& b) {
  double sum = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) {
    for (std::size_t i = 0; i < a[q].size(); ++i) {
      const double d = a[q][i] - b[q][i];
      sum += d * d;
    }
  }
  return std::sqrt(sum);
}

// F(x) = x - start + h * P grad(x); returns ||F||_2.
double BackwardResidual(const PolicyTable& x, const PolicyTable& start,
                        const PreferenceObjective& objective, double h,
                        PolicyTable& residual) {
  const PolicyGradient g = objective.Gradient(x);
  residual.resize(x.size());
  double sum = 0.0;
  for (std::size_t q = 0; q < x.size(); ++q) {
    const double mean = Mean(g[q]);
    residual[q].resize(x[q].size());
    for (std::size_t i = 0; i < x[q].size(); ++i) {
      const double f = x[q][i] - start[q][i] + h * (g[q][i] - mean);
      residual[q][i] = f;
      sum += f * f;
    }
  }
  return std::sqrt(sum);
}

// Newton direction for F, with each row's sum held fixed.
PolicyTable NewtonDirection(const PolicyTable& x, const PolicyTable& residual,
                            const PreferenceObjective& objective, double h) {
  const PolicyHessian hess = objective.Hessian(x);
  PolicyTable dir(x.size());
  for (std::size_t q = 0; q < x.size(); ++q) {
    const auto n = static_cast<Eigen::Index>(x[q].size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 1, n + 1);
    const Eigen::RowVectorXd col_mean = hess[q].colwise().mean();
    a.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n) +
                            h * (hess[q].rowwise() - col_mean);
    a.block(0, n, n, 1).setOnes();
    a.block(n, 0, 1, n).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) rhs(i) = -residual[q][static_cast<std::size_t>(i)];
    const Eigen::VectorXd sol = a.fullPivLu().solve(rhs);
    dir[q].resize(x[q].size());
    for (Eigen::Index i = 0; i < n; ++i) dir[q][static_cast<std::size_t>(i)] = sol(i);
  }
  return dir;
}

PolicyTable Axpy(const PolicyTable& x, double t, const PolicyTable& d) {
  PolicyTable out = x;
  for (std::size_t q = 0; q < x.size(); ++q) {
    for (std::size_t i = 0; i < x[q].size(); ++i) out[q][i] += t * d[q][i];
  }
  return out;
}

bool Positive(const PolicyTable& x) {
  for (const auto& row : x) {
    for (double p : row) {
      if (!(p > 0.0)) return false;
    }
  }
  return true;
}

PolicyTable SolveBackwardEuler(const PolicyTable& start,
                               const PreferenceObjective& objective, double h,
                               int depth) {
  PolicyTable x = start;
  PolicyTable residual;
  double r = BackwardResidual(x, start, objective, h, residual);
  for (int it = 0; it < kNewtonIters && r > kNewtonTarget; ++it) {
    const PolicyTable d = NewtonDirection(x, residual, objective, h);
    double t = 1.0;
    while (t > 1e-12 && !Positive(Axpy(x, t, d))) t *= 0.5;
    bool moved = false;
    PolicyTable trial_residual;
    // Once the residual is at rounding level only the full step is tried.
    const double t_min = r <= kNewtonAccept ? 0.75 : 1e-12;
    for (; t > t_min; t *= 0.5) {
      PolicyTable trial = Axpy(x, t, d);
      if (!Positive(trial)) continue;
      const double rt = BackwardResidual(trial, start, objective, h, trial_residual);
      if (rt <= r * (1.0 - 1e-4 * t)) {
        x = std::move(trial);
        residual = std::move(trial_residual);
        r = rt;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (r <= kNewtonAccept) return x;
  if (depth >= kMaxStepHalvings) {
    Fail(ErrorCode::kDivergenceDetected,
         "backward Euler step did not converge after repeated halving");
  }
  const PolicyTable mid = SolveBackwardEuler(start, objective, h / 2, depth + 1);
  return SolveBackwardEuler(mid, objective, h / 2, depth + 1);
}

void CheckFinite(const PolicyGradient& grad) {
  for (const auto& row : grad) {
    for (double g : row) {
      if (!std::isfinite(g)) {
        Fail(ErrorCode::kNonfiniteGradient, "gradient has a non-finite entry");
      }
    }
  }
}

void FormatDouble(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

const char* IntegratorName(Integrator integrator) {
  switch (integrator) {
    case Integrator::kAuto: return "auto";
    case Integrator::kExplicitEuler: return "explicit_euler";
    case Integrator::kImplicitEuler: return "implicit_euler";
  }
  return "unknown";
}

std::optional<Integrator> ParseIntegrator(const std::string& name) {
  for (Integrator i : {Integrator::kAuto, Integrator::kExplicitEuler,
                       Integrator::kImplicitEuler}) {
    if (name == IntegratorName(i)) return i;
  }
  return std::nullopt;
}

void FlowConfig::Validate(std::size_t max_responses) const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    Fail(ErrorCode::kInvalidConfig, "step_size must be > 0");
  }
  if (max_iters == 0) Fail(ErrorCode::kInvalidConfig, "max_iters must be > 0");
  if (!(convergence_tol > 0.0)) {
    Fail(ErrorCode::kInvalidConfig, "convergence_tol must be > 0");
  }
  if (!(target_tol > 0.0)) Fail(ErrorCode::kInvalidConfig, "target_tol must be > 0");
  if (!(epsilon > 0.0) ||
      (max_responses > 0 &&
       !(epsilon < 1.0 / static_cast<double>(max_responses)))) {
    Fail(ErrorCode::kInvalidConfig,
         "epsilon must be in (0, 1/max responses per query)");
  }
}

PolicyTable FlowTarget(const RewardTable& rewards, double alpha,
                       double epsilon) {
  PolicyTable out;
  for (std::size_t q = 0; q < rewards.num_queries(); ++q) {
    if (alpha == 0.0) {
      // SoftmaxScaled rejects ties, which keeps the vertex well defined.
      const Distribution vertex = SoftmaxScaled(rewards.rewards(q), 0.0);
      const auto top = static_cast<std::size_t>(
          std::max_element(vertex.begin(), vertex.end()) - vertex.begin());
      out.push_back(FlooredVertex(vertex.size(), top, epsilon).vector());
    } else {
      out.push_back(SoftmaxScaled(rewards.rewards(q), alpha).vector());
    }
  }
  return out;
}

PolicyTable FlowStep(const PolicyTable& policy, const PolicyGradient& grad,
                     const FlowConfig& config) {
  CheckInterior(policy, config.epsilon);
  CheckFinite(grad);
  if (grad.size() != policy.size()) {
    Fail(ErrorCode::kDimensionMismatch, "gradient and policy differ in shape");
  }
  PolicyTable out(policy.size());
  std::vector<double> moved;
  for (std::size_t q = 0; q < policy.size(); ++q) {
    if (grad[q].size() != policy[q].size()) {
      Fail(ErrorCode::kDimensionMismatch, "gradient and policy differ in shape");
    }
    moved.resize(policy[q].size());
    for (std::size_t i = 0; i < moved.size(); ++i) {
      moved[i] = policy[q][i] - config.step_size * grad[q][i];
    }
    out[q] = FloorAndRenormalize(ProjectToSimplex(moved).probs(), config.epsilon);
  }
  return out;
}

PolicyTable ImplicitFlowStep(const PolicyTable& policy,
                             const PreferenceObjective& objective,
                             const FlowConfig& config) {
  CheckInterior(policy, config.epsilon);
  return FloorRows(SolveBackwardEuler(policy, objective, config.step_size, 0),
                   config.epsilon);
}

double StationarityResidual(const PolicyTable& policy,
                            const PolicyGradient& grad, double epsilon) {
  const double pinned = epsilon * (1.0 + 1e-6);
  double sum = 0.0;
  for (std::size_t q = 0; q < policy.size(); ++q) {
    double free_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t i = 0; i < policy[q].size(); ++i) {
      if (policy[q][i] > pinned) {
        free_sum += grad[q][i];
        ++free_count;
      }
    }
    const double mean = free_count > 0
                            ? free_sum / static_cast<double>(free_count)
                            : Mean(grad[q]);
    for (std::size_t i = 0; i < policy[q].size(); ++i) {
      double d = grad[q][i] - mean;
      // A pinned coordinate pushed further outward is not a stationarity
      // violation.
      if (policy[q][i] <= pinned && d > 0.0) d = 0.0;
      sum += d * d;
    }
  }
  return std::sqrt(sum);
}

double TangentGradNorm(const PolicyGradient& grad) {
  double sum = 0.0;
  for (const auto& row : grad) {
    const double mean = Mean(row);
    for (double g : row) sum += (g - mean) * (g - mean);
  }
  return std::sqrt(sum);
}

FlowResult RunFlow(const PolicyTable& init,
                   const PreferenceObjective& objective,
                   const RewardTable& rewards, const FlowConfig& config) {
  config.Validate(MaxRowSize(init));
  if (init.size() != rewards.num_queries()) {
    Fail(ErrorCode::kDimensionMismatch, "policy and rewards differ in queries");
  }
  for (std::size_t q = 0; q < init.size(); ++q) {
    if (init[q].size() != rewards.num_responses(q)) {
      Fail(ErrorCode::kDimensionMismatch, "policy and rewards differ in responses");
    }
    const Distribution row(init[q]);
    (void)row;
  }
  CheckInterior(init, config.epsilon);

  const double alpha = EffectiveAlpha(objective.spec());
  Integrator integrator = config.integrator;
  if (integrator == Integrator::kAuto) {
    integrator = alpha > 0.0 ? Integrator::kImplicitEuler
                             : Integrator::kExplicitEuler;
  }
  if (integrator == Integrator::kImplicitEuler && alpha == 0.0) {
    Fail(ErrorCode::kInvalidConfig,
         "implicit Euler needs an interior fixed point (alpha > 0)");
  }
  const PolicyTable target = FlowTarget(rewards, alpha, config.epsilon);

  FlowResult result;
  PolicyTable x = init;
  double loss = objective.Loss(x);
  PolicyGradient g = objective.Gradient(x);
  CheckFinite(g);
  result.trace.initial = {0, loss, StationarityResidual(x, g, config.epsilon),
                          L2(x, target)};
  if (config.snapshot_every > 0) result.trace.snapshots.emplace_back(0, x);

  std::size_t increases = 0;
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    PolicyTable next = integrator == Integrator::kImplicitEuler
                           ? ImplicitFlowStep(x, objective, config)
                           : FlowStep(x, g, config);
    const double change = Linf(next, x);
    x = std::move(next);
    const double prev_loss = loss;
    loss = objective.Loss(x);
    g = objective.Gradient(x);
    CheckFinite(g);
    const double residual = StationarityResidual(x, g, config.epsilon);
    result.trace.records.push_back({it, loss, residual, L2(x, target)});
    if (config.snapshot_every > 0 && it % config.snapshot_every == 0) {
      result.trace.snapshots.emplace_back(it, x);
    }
    result.iterations = it;

    if (loss > prev_loss + 1e-12 * std::max(1.0, std::abs(prev_loss))) {
      if (++increases >= kDivergenceStreak) {
        Fail(ErrorCode::kDivergenceDetected,
             "loss increased for " + std::to_string(kDivergenceStreak) +
                 " consecutive iterations at step " + std::to_string(it));
      }
    } else {
      increases = 0;
    }
    if (change < config.convergence_tol &&
        residual < 10.0 * config.convergence_tol) {
      result.converged = true;
      break;
    }
  }
  result.final_linf = Linf(x, target);
  result.final_l2 = L2(x, target);
  result.reached_target = result.final_linf < config.target_tol;
  result.final_policy = std::move(x);
  return result;
}

PolicyTable RandomInteriorPolicy(const RewardTable& shape, double epsilon,
                                 std::uint64_t seed, std::size_t init_index) {
  Rng rng = Rng(seed).Split(init_index);
  PolicyTable out;
  for (std::size_t q = 0; q < shape.num_queries(); ++q) {
    out.push_back(
        FloorAndRenormalize(rng.DirichletOnes(shape.num_responses(q)), epsilon));
  }
  return out;
}

MultiStartReport MultiStartConvergence(const PreferenceObjective& objective,
                                       const RewardTable& rewards,
                                       const FlowConfig& config,
                                       std::size_t jobs) {
  if (config.inits < 2) {
    Fail(ErrorCode::kPreconditionViolated, "multi-start needs inits >= 2");
  }
  std::vector<FlowResult> runs(config.inits);
  std::vector<std::exception_ptr> errors(config.inits);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.inits; i = next++) {
      try {
        const PolicyTable init =
            RandomInteriorPolicy(rewards, config.epsilon, config.seed, i);
        runs[i] = RunFlow(init, objective, rewards, config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, config.inits);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.code(), "init " + std::to_string(i) + ": " + e.detail());
    }
  }

  MultiStartReport report;
  report.all_converged = true;
  for (const FlowResult& run : runs) {
    report.all_converged = report.all_converged && run.converged && run.reached_target;
    report.max_final_distance = std::max(report.max_final_distance, run.final_linf);
    report.max_final_l2 = std::max(report.max_final_l2, run.final_l2);
  }
  report.runs = std::move(runs);
  return report;
}

LyapunovReport LyapunovAudit(const FlowTrace& trace, double tolerance) {
  LyapunovReport report;
  double prev = trace.initial.dist_to_target;
  for (const FlowRecord& rec : trace.records) {
    const double increase = rec.dist_to_target - prev;
    if (increase > report.max_increase) report.max_increase = increase;
    if (increase > tolerance && report.monotone) {
      report.monotone = false;
      report.first_violation = rec.iter;
    }
    prev = rec.dist_to_target;
  }
  return report;
}

StationarityReport StationarityScan(const PreferenceObjective& objective,
                                    const RewardTable& rewards,
                                    std::size_t grid_resolution,
                                    double exclusion_radius) {
  const double alpha = EffectiveAlpha(objective.spec());
  if (!(alpha > 0.0)) {
    Fail(ErrorCode::kNonpositiveAlpha, "stationarity scan needs alpha > 0");
  }
  std::vector<std::size_t> sizes;
  for (std::size_t q = 0; q < rewards.num_queries(); ++q) {
    sizes.push_back(rewards.num_responses(q));
  }
  // alpha > 0, so the floor argument is unused.
  const PolicyTable target = FlowTarget(rewards, alpha, 1e-9);
  StationarityReport report;
  report.min_grad_norm_away_from_target = INFINITY;
  GridSpec grid;
  grid.resolution = grid_resolution;
  grid.margin = 0.5 / static_cast<double>(grid_resolution);
  ForEachGridPoint(sizes, grid, [&](const ProbTable& point) {
    if (L2(point, target) <= exclusion_radius) {
      ++report.points_excluded;
      return;
    }
    ++report.points_scanned;
    report.min_grad_norm_away_from_target =
        std::min(report.min_grad_norm_away_from_target,
                 TangentGradNorm(objective.Gradient(point)));
  });
  return report;
}

std::string TraceCsv(const FlowTrace& trace) {
  std::string out = "iter,loss,grad_norm,dist_to_target\n";
  auto row = [&out](const FlowRecord& r) {
    out += std::to_string(r.iter);
    out += ',';
    FormatDouble(out, r.loss);
    out += ',';
    FormatDouble(out, r.grad_norm);
    out += ',';
    FormatDouble(out, r.dist_to_target);
    out += '\n';
  };
  row(trace.initial);
  for (const FlowRecord& r : trace.records) row(r);
  return out;
}

}  // namespace softpref
