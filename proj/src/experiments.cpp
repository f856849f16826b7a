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

#include "softpref/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string_view>

#include "softpref/dynamics.hpp"
#include "softpref/error.hpp"
#include "softpref/losses.hpp"
#include "softpref/oracle.hpp"
#include "softpref/prefdata.hpp"
#include "softpref/rng.hpp"
#include "softpref/seqkl.hpp"
#include "softpref/serialize.hpp"

namespace softpref {
namespace {

// ---------------------------------------------------------------------------
// Config plumbing

Json FlowDefaults(std::size_t inits) {
  return {{"step_size", 0.01},      {"max_iters", 200000},
          {"convergence_tol", 1e-10}, {"target_tol", 1e-6},
          {"alpha_zero_tol", 1e-4},  {"epsilon", 1e-9},
          {"inits", inits},          {"integrator", "auto"}};
}

Json RewardDefaults(std::size_t responses) {
  return {{"source", "random"},   {"num_queries", 1},
          {"num_responses", responses}, {"low", -2.0},
          {"high", 2.0},          {"file", ""},
          {"inline", Json::array()}};
}

Json Defaults(const std::string& name) {
  Json c = {{"experiment", name}, {"seed", 7}};
  if (name == "thm1-pairwise") {
    c["rewards"] = RewardDefaults(5);
    c["loss"] = {{"alphas", {0.25, 1.0, 4.0}}};
    c["flow"] = FlowDefaults(20);
    c["output"] = {{"all_traces", false}};
  } else if (name == "thm2-weighted") {
    c["rewards"] = RewardDefaults(5);
    c["loss"] = {{"alphas", {0.25, 1.0, 4.0}}, {"gamma", 0.01}};
    c["flow"] = FlowDefaults(20);
    c["match_tol"] = 1e-5;
    c["output"] = {{"all_traces", false}};
  } else if (name == "thm3-bestofn") {
    c["rewards"] = RewardDefaults(4);
    c["loss"] = {{"alphas", {0.5, 1.0}}, {"n", 3}, {"gamma", 0.0}};
    c["flow"] = FlowDefaults(10);
    c["output"] = {{"all_traces", false}};
  } else if (name == "thm4-ranking") {
    c["rewards"] = RewardDefaults(4);
    c["loss"] = {{"alphas", {0.5, 1.0}}, {"n", 3}, {"etas", {1.0, 0.5}}};
    c["flow"] = FlowDefaults(10);
    c["decomposition"] = {{"instances", 50}, {"tol", 1e-10}};
    c["output"] = {{"all_traces", false}};
  } else if (name == "grad-check") {
    c["instances"] = 200;
    c["h"] = 1e-6;
    c["tol"] = 1e-5;
    c["small_alpha"] = 1e-6;
    c["small_alpha_instances"] = 50;
    c["small_alpha_tol"] = 1e-4;
    c["policy_floor"] = 0.02;
  } else if (name == "kl-chainrule") {
    c["pairs"] = 50;
    c["alphabet_size"] = 3;
    c["max_length"] = 4;
    c["tol"] = 1e-10;
    c["variance"] = {{"batches", 1000}, {"batch_size", 16}, {"max_length", 3}};
  } else if (name == "kl-staleness") {
    c["alphabet_size"] = 3;
    c["max_length"] = 3;
    c["steps"] = 64;
    c["refresh_period"] = 8;
    c["batch_size"] = 32;
    c["exhaustive_tol"] = 1e-10;
  } else if (name == "alg1-toy") {
    c["alphabet_size"] = 3;
    c["max_length"] = 3;
    c["steps"] = 200;
    c["refresh_period"] = 8;
    c["batch_size"] = 32;
    c["alpha"] = 1.0;
    c["beta"] = 0.1;
    c["learning_rate"] = 0.5;
  } else if (name == "dpo-symmetry") {
    c["instances"] = 20;
    c["min_ref_gap"] = 1e-3;
  } else {
    Fail(ErrorCode::kInvalidConfig, "unknown experiment '" + name + "'");
  }
  return c;
}

bool SameKind(const Json& def, const Json& value) {
  if (def.is_number()) {
    if (!value.is_number()) return false;
    if (def.is_number_unsigned() || def.is_number_integer()) {
      if (value.is_number_float()) {
        const double v = value.get<double>();
        return v == std::floor(v) && v >= 0.0;
      }
      return !value.is_number_integer() || value.get<std::int64_t>() >= 0;
    }
    return true;
  }
  if (def.is_array()) return value.is_array();
  return def.type() == value.type();
}

void MergeInto(Json& target, const Json& source, const std::string& path) {
  if (!source.is_object()) {
    Fail(ErrorCode::kInvalidConfig, "config section '" + path + "' must be an object");
  }
  for (const auto& [key, value] : source.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!target.contains(key)) {
      Fail(ErrorCode::kInvalidConfig, "unknown config field '" + here + "'");
    }
    Json& slot = target[key];
    if (slot.is_object()) {
      MergeInto(slot, value, here);
    } else if (!SameKind(slot, value)) {
      Fail(ErrorCode::kInvalidConfig, "config field '" + here + "' has the wrong type");
    } else if (slot.is_number_integer() && value.is_number_float()) {
      slot = static_cast<std::int64_t>(value.get<double>());
    } else {
      slot = value;
    }
  }
}

const Json& At(const Json& config, std::string_view path) {
  const Json* node = &config;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const std::size_t dot = std::min(path.find('.', pos), path.size());
    const std::string key(path.substr(pos, dot - pos));
    if (!node->is_object() || !node->contains(key)) {
      Fail(ErrorCode::kInvalidConfig, "missing config field '" + std::string(path) + "'");
    }
    node = &(*node)[key];
    pos = dot + 1;
    if (dot == path.size()) break;
  }
  return *node;
}

double Real(const Json& config, std::string_view path) {
  const Json& v = At(config, path);
  if (!v.is_number()) Fail(ErrorCode::kInvalidConfig, std::string(path) + " must be a number");
  return v.get<double>();
}

std::size_t Count(const Json& config, std::string_view path) {
  const Json& v = At(config, path);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    Fail(ErrorCode::kInvalidConfig, std::string(path) + " must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

std::vector<double> Reals(const Json& config, std::string_view path) {
  const Json& v = At(config, path);
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) Fail(ErrorCode::kInvalidConfig, std::string(path) + " must hold numbers");
    out.push_back(x.get<double>());
  }
  if (out.empty()) Fail(ErrorCode::kInvalidConfig, std::string(path) + " is empty");
  return out;
}

std::uint64_t Seed(const Json& config) { return At(config, "seed").get<std::uint64_t>(); }

// Runs `body` and reports any module error as an invalid configuration.
template <typename F>
auto Setup(F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidConfig) throw;
    Fail(ErrorCode::kInvalidConfig, e.what());
  }
}

RewardTable MakeRewards(const Json& config) {
  const Json& r = At(config, "rewards");
  const std::string source = At(r, "source").get<std::string>();
  if (source == "random") {
    return RewardTable::UniformRandom(Count(r, "num_queries"), Count(r, "num_responses"),
                                      Real(r, "low"), Real(r, "high"), Seed(config));
  }
  if (source == "inline") {
    return RewardTable(At(r, "inline").get<std::vector<std::vector<double>>>());
  }
  if (source == "file") return LoadRewards(At(r, "file").get<std::string>());
  Fail(ErrorCode::kInvalidConfig, "rewards.source must be random, inline or file");
}

FlowConfig MakeFlowConfig(const Json& config) {
  const Json& f = At(config, "flow");
  FlowConfig out;
  out.step_size = Real(f, "step_size");
  out.max_iters = Count(f, "max_iters");
  out.convergence_tol = Real(f, "convergence_tol");
  out.target_tol = Real(f, "target_tol");
  out.epsilon = Real(f, "epsilon");
  out.inits = Count(f, "inits");
  out.seed = Seed(config);
  const auto integrator = ParseIntegrator(At(f, "integrator").get<std::string>());
  if (!integrator) Fail(ErrorCode::kInvalidConfig, "unknown flow.integrator");
  out.integrator = *integrator;
  if (out.inits < 2) Fail(ErrorCode::kInvalidConfig, "flow.inits must be >= 2");
  return out;
}

std::string Num(double v) { return FormatShortest(v); }

std::string AlphaLabel(double alpha) { return "alpha=" + Num(alpha); }

Json Row(const std::string& label, std::optional<double> alpha,
         std::optional<double> distance, std::optional<std::size_t> iterations,
         bool pass) {
  Json row = {{"label", label}};
  row["alpha"] = alpha ? Json(*alpha) : Json(nullptr);
  row["final_distance"] = distance ? Json(*distance) : Json(nullptr);
  row["iterations"] = iterations ? Json(*iterations) : Json(nullptr);
  row["pass"] = pass;
  return row;
}

Json BaseSummary(const Json& config) {
  return {{"experiment", At(config, "experiment")}, {"seed", At(config, "seed")}};
}

void Finish(ExperimentOutcome& out, Json rows, Json details) {
  out.summary["passed"] = out.failures.empty();
  out.summary["rows"] = std::move(rows);
  out.summary["details"] = std::move(details);
  Json failures = Json::array();
  for (const auto& f : out.failures) {
    failures.push_back({{"assertion", f.assertion}, {"expected", f.expected},
                        {"observed", f.observed}});
  }
  out.summary["failures"] = std::move(failures);
}

void Check(ExperimentOutcome& out, bool ok, std::string assertion,
           std::string expected, double observed) {
  if (!ok) out.failures.push_back({std::move(assertion), std::move(expected), observed});
}

// ---------------------------------------------------------------------------
// Flow experiments

struct FlowRun {
  double alpha = 0.0;
  std::string label;
  MultiStartReport report;
  LyapunovReport lyapunov;
  std::size_t max_iterations = 0;
};

FlowRun RunMultiStart(const PreferenceObjective& objective,
                      const RewardTable& rewards, const FlowConfig& flow,
                      std::size_t jobs, std::string label) {
  FlowRun run;
  run.alpha = objective.spec().alpha;
  run.label = std::move(label);
  run.report = MultiStartConvergence(objective, rewards, flow, jobs);
  for (const FlowResult& r : run.report.runs) {
    run.max_iterations = std::max(run.max_iterations, r.iterations);
    if (!r.converged) continue;
    const LyapunovReport audit = LyapunovAudit(r.trace);
    run.lyapunov.max_increase = std::max(run.lyapunov.max_increase, audit.max_increase);
    if (!audit.monotone && run.lyapunov.monotone) {
      run.lyapunov.monotone = false;
      run.lyapunov.first_violation = audit.first_violation;
    }
  }
  return run;
}

// Convergence and monotonicity assertions shared by the flow experiments.
bool CheckFlowRun(ExperimentOutcome& out, const std::string& prefix,
                  const FlowRun& run, const Json& config) {
  bool ok = true;
  if (run.alpha > 0.0) {
    const double tol = Real(config, "flow.target_tol");
    bool converged = true;
    for (const auto& r : run.report.runs) converged = converged && r.converged;
    const bool close = run.report.max_final_distance < tol;
    Check(out, close, prefix + ".max_final_distance", "< " + Num(tol),
          run.report.max_final_distance);
    Check(out, converged, prefix + ".all_converged", "true", 0.0);
    ok = close && converged;
  } else {
    const double tol = Real(config, "flow.alpha_zero_tol");
    ok = run.report.max_final_l2 < tol;
    Check(out, ok, prefix + ".max_final_l2", "< " + Num(tol), run.report.max_final_l2);
  }
  Check(out, run.lyapunov.monotone, prefix + ".lyapunov_max_increase",
        "<= " + Num(kLyapunovTolerance), run.lyapunov.max_increase);
  return ok && run.lyapunov.monotone;
}

Json FlowDetails(const FlowRun& run) {
  Json d = {{"label", run.label},
            {"alpha", run.alpha},
            {"max_final_distance", run.report.max_final_distance},
            {"max_final_l2", run.report.max_final_l2},
            {"max_iterations", run.max_iterations},
            {"lyapunov_monotone", run.lyapunov.monotone},
            {"lyapunov_max_increase", run.lyapunov.max_increase}};
  Json finals = Json::array();
  for (const auto& r : run.report.runs) {
    finals.push_back({{"converged", r.converged},
                      {"iterations", r.iterations},
                      {"final_linf", r.final_linf}});
  }
  d["runs"] = std::move(finals);
  return d;
}

void AddTraces(ExperimentOutcome& out, const Json& config,
               const std::vector<FlowRun>& runs) {
  if (!runs.empty() && !runs.front().report.runs.empty()) {
    out.trace_csv = TraceCsv(runs.front().report.runs.front().trace);
  }
  if (!At(config, "output.all_traces").get<bool>()) return;
  for (const auto& run : runs) {
    for (std::size_t i = 0; i < run.report.runs.size(); ++i) {
      out.extra_files.emplace_back(
          "traces/" + run.label + "_init=" + std::to_string(i) + ".csv",
          TraceCsv(run.report.runs[i].trace));
    }
  }
}

ExperimentOutcome RunThm1(const Json& config, std::size_t jobs) {
  const auto [rewards, dist, flow, alphas] = Setup([&] {
    RewardTable r = MakeRewards(config);
    PairwiseDistribution d = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
    return std::make_tuple(r, d, MakeFlowConfig(config), Reals(config, "loss.alphas"));
  });
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};
  std::vector<FlowRun> runs;
  Json rows = Json::array();
  Json details = Json::array();
  for (double alpha : alphas) {
    LossSpec spec;
    spec.family = LossFamily::kSpoBasic;
    spec.alpha = alpha;
    const PreferenceObjective objective = Setup([&] { return PreferenceObjective(spec, dist); });
    runs.push_back(RunMultiStart(objective, rewards, flow, jobs, AlphaLabel(alpha)));
    const FlowRun& run = runs.back();
    const bool ok = CheckFlowRun(out, "thm1." + run.label, run, config);
    rows.push_back(Row(run.label, alpha,
                       alpha > 0.0 ? run.report.max_final_distance : run.report.max_final_l2,
                       run.max_iterations, ok));
    details.push_back(FlowDetails(run));
  }
  AddTraces(out, config, runs);
  Finish(out, std::move(rows), {{"flows", std::move(details)}});
  return out;
}

ExperimentOutcome RunThm2(const Json& config, std::size_t jobs) {
  const auto [rewards, dist, flow, alphas, gamma, match_tol] = Setup([&] {
    RewardTable r = MakeRewards(config);
    PairwiseDistribution d = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
    return std::make_tuple(r, d, MakeFlowConfig(config), Reals(config, "loss.alphas"),
                           Real(config, "loss.gamma"), Real(config, "match_tol"));
  });
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};
  std::vector<FlowRun> runs;
  Json rows = Json::array();
  Json details = Json::array();
  for (double alpha : alphas) {
    if (!(alpha > 0.0)) Fail(ErrorCode::kInvalidConfig, "thm2 needs alpha > 0");
    LossSpec weighted{LossFamily::kSpoWeighted, alpha, gamma, 1.0, 1.0};
    LossSpec plain{LossFamily::kSpoBasic, alpha, 0.0, 1.0, 1.0};
    const auto objectives = Setup([&] {
      return std::make_pair(PreferenceObjective(weighted, dist),
                            PreferenceObjective(plain, dist));
    });
    runs.push_back(RunMultiStart(objectives.first, rewards, flow, jobs,
                                 AlphaLabel(alpha) + "_weighted"));
    const FlowRun base = RunMultiStart(objectives.second, rewards, flow, jobs,
                                       AlphaLabel(alpha) + "_unweighted");
    const FlowRun& run = runs.back();
    double gap = 0.0;
    for (std::size_t i = 0; i < run.report.runs.size(); ++i) {
      const auto& a = run.report.runs[i].final_policy;
      const auto& b = base.report.runs[i].final_policy;
      for (std::size_t q = 0; q < a.size(); ++q) gap = std::max(gap, MaxAbsDifference(a[q], b[q]));
    }
    const bool ok_w = CheckFlowRun(out, "thm2." + run.label, run, config);
    const bool ok_u = CheckFlowRun(out, "thm2." + base.label, base, config);
    const bool match = gap < match_tol;
    Check(out, match, "thm2." + AlphaLabel(alpha) + ".weighted_vs_unweighted",
          "< " + Num(match_tol), gap);
    rows.push_back(Row(run.label, alpha, run.report.max_final_distance,
                       run.max_iterations, ok_w && ok_u && match));
    Json d = FlowDetails(run);
    d["unweighted"] = FlowDetails(base);
    d["max_final_gap"] = gap;
    details.push_back(std::move(d));
  }
  AddTraces(out, config, runs);
  Finish(out, std::move(rows), {{"flows", std::move(details)}});
  return out;
}

ExperimentOutcome RunThm3(const Json& config, std::size_t jobs) {
  const auto [rewards, dist, flow, alphas, gamma] = Setup([&] {
    RewardTable r = MakeRewards(config);
    const std::size_t n = Count(config, "loss.n");
    BestOfNDistribution d = MakeNaryBtConsistent(r, UniformSetMarginal(r, n), n);
    return std::make_tuple(r, d, MakeFlowConfig(config), Reals(config, "loss.alphas"),
                           Real(config, "loss.gamma"));
  });
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};
  std::vector<FlowRun> runs;
  Json rows = Json::array();
  Json details = Json::array();
  for (double alpha : alphas) {
    LossSpec spec{LossFamily::kBestOfN, alpha, gamma, 1.0, 1.0};
    const PreferenceObjective objective = Setup([&] { return PreferenceObjective(spec, dist); });
    runs.push_back(RunMultiStart(objective, rewards, flow, jobs, AlphaLabel(alpha)));
    const FlowRun& run = runs.back();
    const bool ok = CheckFlowRun(out, "thm3." + run.label, run, config);
    rows.push_back(Row(run.label, alpha, run.report.max_final_distance, run.max_iterations, ok));
    details.push_back(FlowDetails(run));
  }
  AddTraces(out, config, runs);
  Finish(out, std::move(rows), {{"flows", std::move(details)}});
  return out;
}

// Largest |ranking loss - sum_k mu_k * best-of loss on the rank-k suffixes|
// over random instances.
double RankingDecompositionError(std::size_t instances, std::size_t n,
                                 std::uint64_t seed) {
  const Rng root(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = root.Split(1000 + i);
    const std::size_t responses = n + rng.NextU64() % 3;
    const std::size_t queries = 1 + rng.NextU64() % 2;
    const RewardTable rewards = RewardTable::UniformRandom(
        queries, responses, -2.0, 2.0, rng.NextU64());
    const RankedDistribution dist =
        MakePlConsistentRanked(rewards, UniformSetMarginal(rewards, n), n);
    const PolicyTable policy = RandomInteriorPolicy(rewards, 1e-3, rng.NextU64(), 0);
    const double alpha = std::exp(rng.Uniform(std::log(0.1), std::log(5.0)));
    const double eta = rng.Uniform(0.2, 1.0);
    const RankWeights weights = RankWeights::Decayed(n, eta);
    const double whole = RankingLoss(policy, dist, alpha, weights);
    double parts = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      parts += weights.scales[k] * BestOfNLoss(policy, RankSuffixMarginal(dist, k), alpha,
                                               WeightFunction::Uniform());
    }
    worst = std::max(worst, std::abs(whole - parts));
  }
  return worst;
}

ExperimentOutcome RunThm4(const Json& config, std::size_t jobs) {
  const auto [rewards, dist, flow, alphas, etas, n] = Setup([&] {
    RewardTable r = MakeRewards(config);
    const std::size_t n = Count(config, "loss.n");
    RankedDistribution d = MakePlConsistentRanked(r, UniformSetMarginal(r, n), n);
    return std::make_tuple(r, d, MakeFlowConfig(config), Reals(config, "loss.alphas"),
                           Reals(config, "loss.etas"), n);
  });
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};
  std::vector<FlowRun> runs;
  Json rows = Json::array();
  Json details = Json::array();
  for (double alpha : alphas) {
    std::vector<const FlowRun*> group;
    for (double eta : etas) {
      LossSpec spec{LossFamily::kRanking, alpha, 0.0, 1.0, eta};
      const PreferenceObjective objective =
          Setup([&] { return PreferenceObjective(spec, dist); });
      runs.push_back(RunMultiStart(objective, rewards, flow, jobs,
                                   AlphaLabel(alpha) + "_eta=" + Num(eta)));
      const FlowRun& run = runs.back();
      const bool ok = CheckFlowRun(out, "thm4." + run.label, run, config);
      rows.push_back(Row(run.label, alpha, run.report.max_final_distance,
                         run.max_iterations, ok));
      Json d = FlowDetails(run);
      d["eta"] = eta;
      details.push_back(std::move(d));
    }
  }
  const std::size_t instances = Count(config, "decomposition.instances");
  const double tol = Real(config, "decomposition.tol");
  const double worst = RankingDecompositionError(instances, n, Seed(config));
  Check(out, worst <= tol, "thm4.ranking_decomposition", "<= " + Num(tol), worst);
  rows.push_back(Row("ranking_decomposition", std::nullopt, std::nullopt, std::nullopt,
                     worst <= tol));
  AddTraces(out, config, runs);
  Finish(out, std::move(rows),
         {{"flows", std::move(details)},
          {"decomposition", {{"instances", instances}, {"max_abs_error", worst}}}});
  return out;
}

// ---------------------------------------------------------------------------
// Gradient check

enum class CheckFamily {
  kSpoBasic,
  kSpoZero,
  kSpoWeighted,
  kCrossEntropy,
  kBestOfN,
  kRankingConstant,
  kRankingDecayed,
  kDpo,
};
constexpr int kNumCheckFamilies = 8;

const char* CheckFamilyName(CheckFamily f) {
  switch (f) {
    case CheckFamily::kSpoBasic: return "spo_basic";
    case CheckFamily::kSpoZero: return "spo_basic_alpha0";
    case CheckFamily::kSpoWeighted: return "spo_weighted";
    case CheckFamily::kCrossEntropy: return "cross_entropy";
    case CheckFamily::kBestOfN: return "best_of_n";
    case CheckFamily::kRankingConstant: return "ranking_constant";
    case CheckFamily::kRankingDecayed: return "ranking_decayed";
    case CheckFamily::kDpo: return "dpo";
  }
  return "unknown";
}

struct GradInstance {
  CheckFamily family;
  double alpha;
  PolicyGradient analytic;
  ProbTable numeric;
};

GradInstance MakeGradInstance(std::size_t index, std::uint64_t seed, double floor,
                              double h) {
  Rng rng = Rng(seed).Split(index);
  const auto family = static_cast<CheckFamily>(index % kNumCheckFamilies);
  const std::size_t queries = 1 + rng.NextU64() % 2;
  const std::size_t responses = 3 + rng.NextU64() % 3;
  const RewardTable rewards =
      RewardTable::UniformRandom(queries, responses, -2.0, 2.0, rng.NextU64());
  const PolicyTable policy = RandomInteriorPolicy(rewards, floor, rng.NextU64(), 0);
  double alpha = std::exp(rng.Uniform(std::log(0.1), std::log(5.0)));
  if (family == CheckFamily::kSpoZero) alpha = 0.0;
  if (family == CheckFamily::kCrossEntropy) alpha = 1.0;
  const double gamma = rng.Uniform(0.01, 2.0);
  const double beta = rng.Uniform(0.05, 2.0);
  const double eta = rng.Uniform(0.2, 1.0);

  GradInstance out{family, alpha, {}, {}};
  switch (family) {
    case CheckFamily::kSpoBasic:
    case CheckFamily::kSpoZero:
    case CheckFamily::kSpoWeighted:
    case CheckFamily::kCrossEntropy: {
      const auto dist = MakeBtConsistentPairwise(rewards, UniformSetMarginal(rewards, 2));
      const WeightFunction mu = family == CheckFamily::kSpoWeighted
                                    ? WeightFunction::SigmoidSum(gamma)
                                    : WeightFunction::Uniform();
      const std::vector<double> frozen = AtomWeights(policy, dist, mu);
      out.analytic = SpoPrefGrad(policy, dist, alpha, mu);
      if (family == CheckFamily::kCrossEntropy) {
        out.numeric = FiniteDifferenceGrad(
            [&](const ProbTable& p) { return CrossEntropyLoss(p, dist); }, policy, h);
      } else {
        out.numeric = FiniteDifferenceGrad(
            [&](const ProbTable& p) { return SpoPrefLoss(p, dist, alpha, frozen); },
            policy, h);
      }
      break;
    }
    case CheckFamily::kBestOfN: {
      const auto dist = MakeNaryBtConsistent(rewards, UniformSetMarginal(rewards, 3), 3);
      const WeightFunction mu = WeightFunction::SigmoidSum(gamma);
      const std::vector<double> frozen = AtomWeights(policy, dist, mu);
      out.analytic = BestOfNGrad(policy, dist, alpha, mu);
      out.numeric = FiniteDifferenceGrad(
          [&](const ProbTable& p) { return BestOfNLoss(p, dist, alpha, frozen); }, policy, h);
      break;
    }
    case CheckFamily::kRankingConstant:
    case CheckFamily::kRankingDecayed: {
      const auto dist = MakePlConsistentRanked(rewards, UniformSetMarginal(rewards, 3), 3);
      RankWeights mu = family == CheckFamily::kRankingConstant ? RankWeights::Constant(3)
                                                               : RankWeights::Decayed(3, eta);
      if (family == CheckFamily::kRankingDecayed) mu.base = WeightFunction::SigmoidSum(gamma);
      const auto frozen = AtomWeights(policy, dist, mu);
      out.analytic = RankingGrad(policy, dist, alpha, mu);
      out.numeric = FiniteDifferenceGrad(
          [&](const ProbTable& p) { return RankingLoss(p, dist, alpha, frozen); }, policy, h);
      break;
    }
    case CheckFamily::kDpo: {
      const auto dist = MakeBtConsistentPairwise(rewards, UniformSetMarginal(rewards, 2));
      const PolicyTable ref = RandomInteriorPolicy(rewards, floor, rng.NextU64(), 1);
      out.analytic = DpoGrad(policy, ref, dist, beta);
      out.numeric = FiniteDifferenceGrad(
          [&](const ProbTable& p) { return DpoLoss(p, ref, dist, beta); }, policy, h);
      break;
    }
  }
  return out;
}

// Relative difference of SPO gradients at a tiny alpha and at alpha = 0.
double SmallAlphaError(std::size_t index, std::uint64_t seed, double small_alpha) {
  Rng rng = Rng(seed).Split(100000 + index);
  const std::size_t queries = 1 + rng.NextU64() % 2;
  const std::size_t responses = 2 + rng.NextU64() % 4;
  const RewardTable rewards =
      RewardTable::UniformRandom(queries, responses, -2.0, 2.0, rng.NextU64());
  const PolicyTable policy = RandomInteriorPolicy(rewards, 0.01, rng.NextU64(), 0);
  const auto dist = MakeBtConsistentPairwise(rewards, UniformSetMarginal(rewards, 2));
  const WeightFunction uniform = WeightFunction::Uniform();
  return MaxRelativeError(SpoPrefGrad(policy, dist, 0.0, uniform),
                          SpoPrefGrad(policy, dist, small_alpha, uniform));
}

ExperimentOutcome RunGradCheck(const Json& config, std::size_t) {
  const std::size_t instances = Count(config, "instances");
  const double h = Real(config, "h");
  const double tol = Real(config, "tol");
  const double floor = Real(config, "policy_floor");
  const double small_alpha = Real(config, "small_alpha");
  const std::size_t small_instances = Count(config, "small_alpha_instances");
  const double small_tol = Real(config, "small_alpha_tol");
  if (!(h > 0.0) || !(floor > h) || floor * 5.0 >= 1.0) {
    Fail(ErrorCode::kInvalidConfig, "need 0 < h < policy_floor < 0.2");
  }
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};
  out.trace_csv = "instance,family,alpha,max_relative_error\n";
  std::map<std::string, double> per_family;
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    const GradInstance inst = MakeGradInstance(i, Seed(config), floor, h);
    const double err = MaxRelativeError(inst.analytic, inst.numeric);
    worst = std::max(worst, err);
    double& fam = per_family[CheckFamilyName(inst.family)];
    fam = std::max(fam, err);
    out.trace_csv += std::to_string(i) + "," + CheckFamilyName(inst.family) + "," +
                     FormatCsv(inst.alpha) + "," + FormatCsv(err) + "\n";
  }
  double small_worst = 0.0;
  for (std::size_t i = 0; i < small_instances; ++i) {
    small_worst = std::max(small_worst, SmallAlphaError(i, Seed(config), small_alpha));
  }
  Check(out, worst < tol, "grad-check.max_relative_error", "< " + Num(tol), worst);
  Check(out, small_worst < small_tol, "grad-check.small_alpha_relative_error",
        "< " + Num(small_tol), small_worst);
  Json rows = Json::array();
  rows.push_back(Row("finite_difference", std::nullopt, std::nullopt, std::nullopt,
                     worst < tol));
  rows.push_back(Row("small_alpha_limit", small_alpha, std::nullopt, std::nullopt,
                     small_worst < small_tol));
  Json families = Json::object();
  for (const auto& [name, err] : per_family) families[name] = err;
  Finish(out, std::move(rows),
         {{"instances", instances},
          {"max_relative_error", worst},
          {"per_family", std::move(families)},
          {"small_alpha_relative_error", small_worst}});
  return out;
}

// ---------------------------------------------------------------------------
// Sequence-level KL experiments

ExperimentOutcome RunKlChainRule(const Json& config, std::size_t) {
  const std::size_t pairs = Count(config, "pairs");
  const std::size_t s = Count(config, "alphabet_size");
  const std::size_t len = Count(config, "max_length");
  const double tol = Real(config, "tol");
  const std::size_t batches = Count(config, "variance.batches");
  const std::size_t batch_size = Count(config, "variance.batch_size");
  const std::size_t var_len = Count(config, "variance.max_length");
  if (batches < 2 || batch_size < 1) {
    Fail(ErrorCode::kInvalidConfig, "variance.batches >= 2 and batch_size >= 1 needed");
  }
  const Rng root(Seed(config));
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};

  double worst = 0.0;
  Setup([&] { return TokenModel::Random(1, s, len, 0); });
  for (std::size_t i = 0; i < pairs; ++i) {
    const TokenModel theta = TokenModel::Random(1, s, len, root.Split(2 * i).seed());
    const TokenModel ref = TokenModel::Random(1, s, len, root.Split(2 * i + 1).seed());
    worst = std::max(worst, std::abs(ExactTokenwiseKl(theta, ref, 0) -
                                     ExactSequenceKl(theta, ref, 0)));
  }

  const TokenModel theta = Setup([&] {
    return TokenModel::Random(1, s, var_len, root.Split(1'000'000).seed());
  });
  const TokenModel ref = TokenModel::Random(1, s, var_len, root.Split(1'000'001).seed());
  const double exact = ExactSequenceKl(theta, ref, 0);
  double sum_tok = 0.0, sum_tok2 = 0.0, sum_naive = 0.0, sum_naive2 = 0.0;
  out.trace_csv = "batch,tokenwise,naive\n";
  for (std::size_t b = 0; b < batches; ++b) {
    const SampleBatch batch =
        SampleSequences(theta, 0, batch_size, root.Split(2'000'000 + b).seed());
    const double tok = TokenwiseKlEstimate(theta, ref, batch);
    const double naive = NaiveSequenceKlEstimate(theta, ref, batch);
    sum_tok += tok;
    sum_tok2 += tok * tok;
    sum_naive += naive;
    sum_naive2 += naive * naive;
    out.trace_csv += std::to_string(b) + "," + FormatCsv(tok) + "," + FormatCsv(naive) + "\n";
  }
  const auto nb = static_cast<double>(batches);
  const double mean_tok = sum_tok / nb;
  const double mean_naive = sum_naive / nb;
  const double var_tok = (sum_tok2 - nb * mean_tok * mean_tok) / (nb - 1.0);
  const double var_naive = (sum_naive2 - nb * mean_naive * mean_naive) / (nb - 1.0);
  const double se = std::sqrt(var_tok / nb);
  const double z = se > 0.0 ? std::abs(mean_tok - exact) / se : 0.0;

  Check(out, worst <= tol, "kl-chainrule.identity", "<= " + Num(tol), worst);
  Check(out, z <= 3.0, "kl-chainrule.unbiased_z", "<= 3", z);
  Check(out, var_tok < var_naive, "kl-chainrule.variance_ratio", "< 1",
        var_naive > 0.0 ? var_tok / var_naive : INFINITY);
  Json rows = Json::array();
  rows.push_back(Row("chain_rule_identity", std::nullopt, std::nullopt, std::nullopt,
                     worst <= tol));
  rows.push_back(Row("fresh_batch_unbiased", std::nullopt, std::nullopt, std::nullopt,
                     z <= 3.0));
  rows.push_back(Row("variance_reduction", std::nullopt, std::nullopt, std::nullopt,
                     var_tok < var_naive));
  Finish(out, std::move(rows),
         {{"pairs", pairs},
          {"max_identity_error", worst},
          {"exact_sequence_kl", exact},
          {"tokenwise_mean", mean_tok},
          {"tokenwise_variance", var_tok},
          {"tokenwise_standard_error", se},
          {"naive_mean", mean_naive},
          {"naive_variance", var_naive}});
  return out;
}

// Logits interpolated linearly between two random models.
std::vector<TokenModel> MovingTrajectory(std::size_t s, std::size_t len,
                                         std::size_t steps, std::uint64_t seed) {
  const TokenModel a = TokenModel::Random(1, s, len, seed);
  const TokenModel b = TokenModel::Random(1, s, len, MixSeed(seed + 1));
  std::vector<TokenModel> out;
  for (std::size_t t = 0; t < steps; ++t) {
    const double w = steps > 1 ? static_cast<double>(t) / static_cast<double>(steps - 1) : 0.0;
    std::vector<std::vector<double>> logits(a.num_prefixes(), std::vector<double>(s));
    for (std::size_t k = 0; k < a.num_prefixes(); ++k) {
      for (std::size_t i = 0; i < s; ++i) {
        logits[k][i] = (1.0 - w) * std::log(a.Row(0, k)[i]) + w * std::log(b.Row(0, k)[i]);
      }
    }
    out.push_back(TokenModel::FromLogits(s, len, {logits}));
  }
  return out;
}

ExperimentOutcome RunKlStaleness(const Json& config, std::size_t) {
  const std::size_t s = Count(config, "alphabet_size");
  const std::size_t len = Count(config, "max_length");
  const std::size_t steps = Count(config, "steps");
  const std::size_t period = Count(config, "refresh_period");
  const std::size_t batch_size = Count(config, "batch_size");
  const double exhaustive_tol = Real(config, "exhaustive_tol");
  const std::uint64_t seed = Seed(config);
  const auto [trajectory, ref] = Setup([&] {
    if (steps < 1 || period < 1) Fail(ErrorCode::kInvalidConfig, "steps, refresh_period >= 1");
    return std::make_pair(MovingTrajectory(s, len, steps, seed),
                          TokenModel::Random(1, s, len, MixSeed(seed + 2)));
  });
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};

  const auto records = StalenessBiasProbe(trajectory, ref, 0, period, batch_size, MixSeed(seed + 3));
  const auto exhaustive_fresh = StalenessBiasProbe(trajectory, ref, 0, 1, 0, seed);
  const auto exhaustive_stale = StalenessBiasProbe(trajectory, ref, 0, period, 0, seed);

  double fresh_gap = 0.0;
  for (const auto& r : exhaustive_fresh) fresh_gap = std::max(fresh_gap, std::abs(r.gap));
  double stale_gap = 0.0;
  double sum_refresh = 0.0, sum_reuse = 0.0;
  std::size_t n_refresh = 0, n_reuse = 0;
  for (const auto& r : exhaustive_stale) {
    stale_gap = std::max(stale_gap, std::abs(r.gap));
    if (r.step == r.batch_step) {
      sum_refresh += r.gap;
      ++n_refresh;
    } else {
      sum_reuse += r.gap;
      ++n_reuse;
    }
  }
  double sampled_mean_gap = 0.0;
  bool nonnegative = true;
  out.trace_csv = "step,batch_step,estimate,exact_current_kl,gap\n";
  for (const auto& r : records) {
    sampled_mean_gap += r.gap / static_cast<double>(records.size());
    nonnegative = nonnegative && r.estimate >= 0.0;
    out.trace_csv += std::to_string(r.step) + "," + std::to_string(r.batch_step) + "," +
                     FormatCsv(r.estimate) + "," + FormatCsv(r.exact_current_kl) + "," +
                     FormatCsv(r.gap) + "\n";
  }
  Check(out, fresh_gap <= exhaustive_tol, "kl-staleness.fresh_exhaustive_gap",
        "<= " + Num(exhaustive_tol), fresh_gap);
  Check(out, nonnegative, "kl-staleness.estimate_nonnegative", "true", 0.0);
  Json rows = Json::array();
  rows.push_back(Row("fresh_exhaustive", std::nullopt, std::nullopt, std::nullopt,
                     fresh_gap <= exhaustive_tol));
  rows.push_back(Row("sampled_T=" + std::to_string(period), std::nullopt, std::nullopt,
                     std::nullopt, nonnegative));
  Finish(out, std::move(rows),
         {{"refresh_period", period},
          {"batch_size", batch_size},
          {"fresh_exhaustive_max_abs_gap", fresh_gap},
          {"stale_exhaustive_max_abs_gap", stale_gap},
          {"stale_exhaustive_mean_gap_at_refresh",
           n_refresh ? sum_refresh / static_cast<double>(n_refresh) : 0.0},
          {"stale_exhaustive_mean_gap_between_refreshes",
           n_reuse ? sum_reuse / static_cast<double>(n_reuse) : 0.0},
          {"sampled_mean_gap", sampled_mean_gap}});
  return out;
}

ExperimentOutcome RunAlg1Toy(const Json& config, std::size_t) {
  const std::size_t s = Count(config, "alphabet_size");
  const std::size_t len = Count(config, "max_length");
  OnlineTrainingConfig train;
  train.alpha = Real(config, "alpha");
  train.beta = Real(config, "beta");
  train.learning_rate = Real(config, "learning_rate");
  train.steps = Count(config, "steps");
  train.refresh_period = Count(config, "refresh_period");
  train.batch_size = Count(config, "batch_size");
  train.seed = MixSeed(Seed(config) + 5);
  const auto [init, rewards] = Setup([&] {
    TokenModel model = TokenModel::Random(1, s, len, Seed(config));
    Rng rng = Rng(Seed(config)).Split(7);
    std::vector<double> r;
    for (std::size_t i = 0; i < EnumerateSequences(model, 0).size(); ++i) {
      r.push_back(rng.Uniform(-2.0, 2.0));
    }
    if (!(train.alpha >= 0.0)) Fail(ErrorCode::kInvalidConfig, "alpha must be >= 0");
    if (train.steps < 1) Fail(ErrorCode::kInvalidConfig, "steps must be >= 1");
    return std::make_pair(model, r);
  });
  const OnlineTrainingResult result = Setup([&, &init = init, &rewards = rewards] {
    // The reference policy is the initial model.
    return RunOnlineTraining(init, init, rewards, train);
  });
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};
  out.trace_csv = "step,pref_loss,kl_estimate,kl_exact,objective\n";
  bool nonnegative = true;
  for (const auto& r : result.records) {
    nonnegative = nonnegative && r.kl_estimate >= 0.0;
    out.trace_csv += std::to_string(r.step) + "," + FormatCsv(r.pref_loss) + "," +
                     FormatCsv(r.kl_estimate) + "," + FormatCsv(r.kl_exact) + "," +
                     FormatCsv(r.objective) + "\n";
  }
  const double first = result.records.front().objective;
  const double last = result.records.back().objective;
  Check(out, last < first, "alg1-toy.objective_decrease", "< " + Num(first), last);
  Check(out, nonnegative, "alg1-toy.kl_estimate_nonnegative", "true", 0.0);
  // Policy over sequences reached versus the unregularized target.
  const PolicyTable final_row{SequencePolicyRow(result.final_model, 0)};
  const Distribution target = SoftmaxScaled(rewards, train.alpha > 0.0 ? train.alpha : 1.0);
  Json rows = Json::array();
  rows.push_back(Row("objective_decrease", train.alpha, std::nullopt, train.steps,
                     last < first && nonnegative));
  Finish(out, std::move(rows),
         {{"initial_objective", first},
          {"final_objective", last},
          {"final_kl_exact", result.records.back().kl_exact},
          {"final_kl_estimate", result.records.back().kl_estimate},
          {"final_distance_to_unregularized_target",
           EuclideanDistance(final_row[0], target.probs())}});
  return out;
}

// ---------------------------------------------------------------------------
// Separability symmetry

ExperimentOutcome RunDpoSymmetry(const Json& config, std::size_t) {
  const std::size_t instances = Count(config, "instances");
  const double min_gap = Real(config, "min_ref_gap");
  const Rng root(Seed(config));
  ExperimentOutcome out{BaseSummary(config), {}, {}, {}};
  out.trace_csv = "instance,alpha,beta,spo_before,spo_after,dpo_before,dpo_after\n";
  std::size_t spo_invariant = 0;
  std::size_t dpo_changed = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng = root.Split(i);
    const std::size_t n = 3 + rng.NextU64() % 3;
    const std::size_t w = rng.NextU64() % n;
    const std::size_t l = (w + 1 + rng.NextU64() % (n - 1)) % n;
    std::vector<double> p = FloorAndRenormalize(rng.DirichletOnes(n), 1e-3);
    const double half = 0.5 * (p[w] + p[l]);
    p[w] = half;
    p[l] = half;
    std::vector<double> r;
    do {
      r = FloorAndRenormalize(rng.DirichletOnes(n), 1e-3);
    } while (std::abs(r[w] - r[l]) < min_gap);
    const TabularPolicy policy(PolicyTable{p});
    const TabularPolicy ref(PolicyTable{r});
    const double alpha = std::exp(rng.Uniform(std::log(0.1), std::log(5.0)));
    const double beta = rng.Uniform(0.05, 2.0);
    const SymmetryReport rep =
        SeparabilitySymmetryCheck(policy, ref, PairwiseTuple{0, w, l}, alpha, beta);
    spo_invariant += rep.spo_invariant ? 1 : 0;
    dpo_changed += rep.dpo_invariant ? 0 : 1;
    out.trace_csv += std::to_string(i) + "," + FormatCsv(alpha) + "," + FormatCsv(beta) + "," +
                     FormatCsv(rep.spo_before) + "," + FormatCsv(rep.spo_after) + "," +
                     FormatCsv(rep.dpo_before) + "," + FormatCsv(rep.dpo_after) + "\n";
  }
  const auto total = static_cast<double>(instances);
  Check(out, spo_invariant == instances, "dpo-symmetry.spo_invariant_count",
        "== " + std::to_string(instances), static_cast<double>(spo_invariant));
  Check(out, dpo_changed == instances, "dpo-symmetry.dpo_changed_count",
        "== " + std::to_string(instances), static_cast<double>(dpo_changed));
  Json rows = Json::array();
  rows.push_back(Row("spo_invariant", std::nullopt, std::nullopt, std::nullopt,
                     spo_invariant == instances));
  rows.push_back(Row("dpo_not_invariant", std::nullopt, std::nullopt, std::nullopt,
                     dpo_changed == instances));
  Finish(out, std::move(rows),
         {{"instances", instances},
          {"spo_invariant_fraction", static_cast<double>(spo_invariant) / total},
          {"dpo_changed_fraction", static_cast<double>(dpo_changed) / total}});
  return out;
}

using Runner = ExperimentOutcome (*)(const Json&, std::size_t);

const std::vector<std::pair<std::string, Runner>>& Registry() {
  static const std::vector<std::pair<std::string, Runner>> registry = {
      {"thm1-pairwise", RunThm1},   {"thm2-weighted", RunThm2},
      {"thm3-bestofn", RunThm3},    {"thm4-ranking", RunThm4},
      {"grad-check", RunGradCheck}, {"kl-chainrule", RunKlChainRule},
      {"kl-staleness", RunKlStaleness}, {"alg1-toy", RunAlg1Toy},
      {"dpo-symmetry", RunDpoSymmetry},
  };
  return registry;
}

}  // namespace

const std::vector<std::string>& ExperimentNames() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, runner] : Registry()) out.push_back(name);
    return out;
  }();
  return names;
}

bool IsExperiment(const std::string& name) {
  const auto& names = ExperimentNames();
  return std::find(names.begin(), names.end(), name) != names.end();
}

Json DefaultConfig(const std::string& name) { return Defaults(name); }

Json ResolveConfig(const std::string& name, const std::optional<Json>& file_doc,
                   const std::vector<std::pair<std::string, std::string>>& overrides,
                   std::optional<std::uint64_t> seed) {
  Json config = Defaults(name);
  if (file_doc) {
    if (file_doc->contains("experiment") && (*file_doc)["experiment"] != name) {
      Fail(ErrorCode::kInvalidConfig, "config file is for experiment " +
                                          (*file_doc)["experiment"].dump());
    }
    MergeInto(config, *file_doc, "");
  }
  for (const auto& [path, text] : overrides) {
    Json value;
    try {
      value = Json::parse(text);
    } catch (const Json::exception&) {
      value = text;
    }
    // Build {"a": {"b": value}} and merge it.
    Json patch = value;
    std::string_view rest = path;
    std::vector<std::string> keys;
    for (std::size_t pos = 0; pos <= rest.size();) {
      const std::size_t dot = std::min(rest.find('.', pos), rest.size());
      keys.emplace_back(rest.substr(pos, dot - pos));
      pos = dot + 1;
      if (dot == rest.size()) break;
    }
    for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
      if (it->empty()) Fail(ErrorCode::kInvalidConfig, "bad override path '" + path + "'");
      patch = Json{{*it, patch}};
    }
    MergeInto(config, patch, "");
  }
  if (seed) config["seed"] = *seed;
  if (config["experiment"] != name) {
    Fail(ErrorCode::kInvalidConfig, "the experiment field cannot be overridden");
  }
  return config;
}

ExperimentOutcome RunExperiment(const Json& config, std::size_t jobs) {
  const std::string name = At(config, "experiment").get<std::string>();
  for (const auto& [registered, runner] : Registry()) {
    if (registered == name) return runner(config, jobs);
  }
  Fail(ErrorCode::kInvalidConfig, "unknown experiment '" + name + "'");
}

}  // namespace softpref
