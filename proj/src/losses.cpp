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

#include "softpref/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "softpref/error.hpp"

namespace softpref {
namespace {

constexpr double kSymmetryTolerance = 1e-12;

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double Softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Referenced probability, rejecting boundary and out-of-range entries.
double Referenced(PolicyView policy, std::size_t query, std::size_t response) {
  const double p = policy.prob(query, response);
  if (!(p > 0.0) || !std::isfinite(p)) {
    Fail(ErrorCode::kBoundaryPolicy,
         "pi(" + std::to_string(response) + "|" + std::to_string(query) +
             ") = " + std::to_string(p));
  }
  return p;
}

void CheckAlphaPositive(double alpha) {
  if (!(alpha > 0.0)) {
    Fail(ErrorCode::kNonpositiveAlpha, "this loss is defined for alpha > 0");
  }
}

void CheckAlphaNonnegative(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    Fail(ErrorCode::kNonpositiveAlpha, "alpha must be finite and >= 0");
  }
}

void CheckWeightCount(std::size_t weights, std::size_t atoms) {
  if (weights != atoms) {
    Fail(ErrorCode::kDimensionMismatch,
         std::to_string(weights) + " weights for " + std::to_string(atoms) +
             " atoms");
  }
}

// Accumulators for one evaluation pass. Gradient and Hessian are optional so
// that loss-only calls skip the extra work.
struct Accumulator {
  double loss = 0.0;
  PolicyGradient* grad = nullptr;
  PolicyHessian* hess = nullptr;
};

// Softmax-choice term  w * ( -log pi(c) + (1/alpha) log sum_j pi(j)^alpha )
// over `responses`, with `chosen` a position into `responses`. This is the
// best-of-n summand; pairwise SPO with alpha > 0 is the n = 2 case.
void AddChoiceTerm(PolicyView policy, std::size_t query,
                   std::span<const std::size_t> responses, std::size_t chosen,
                   double alpha, double weight, Accumulator& acc) {
  const std::size_t n = responses.size();
  double log_probs[16];
  double probs[16];
  std::vector<double> spill_log, spill_p;
  double* lp = log_probs;
  double* p = probs;
  if (n > 16) {
    spill_log.resize(n);
    spill_p.resize(n);
    lp = spill_log.data();
    p = spill_p.data();
  }
  double max_scaled = -INFINITY;
  for (std::size_t j = 0; j < n; ++j) {
    p[j] = Referenced(policy, query, responses[j]);
    lp[j] = std::log(p[j]);
    max_scaled = std::max(max_scaled, alpha * lp[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += std::exp(alpha * lp[j] - max_scaled);
  // log sum_j pi_j^alpha = max_scaled + log(total)
  acc.loss += weight * (-lp[chosen] + (max_scaled + std::log(total)) / alpha);
  if (acc.grad == nullptr && acc.hess == nullptr) return;

  // q_j = pi_j^alpha / sum_i pi_i^alpha
  double q_buf[16];
  std::vector<double> spill_q;
  double* q = q_buf;
  if (n > 16) {
    spill_q.resize(n);
    q = spill_q.data();
  }
  for (std::size_t j = 0; j < n; ++j) {
    q[j] = std::exp(alpha * lp[j] - max_scaled) / total;
  }
  if (acc.grad != nullptr) {
    auto& row = (*acc.grad)[query];
    for (std::size_t j = 0; j < n; ++j) {
      const double indicator = j == chosen ? 1.0 : 0.0;
      row[responses[j]] += weight * (q[j] - indicator) / p[j];
    }
  }
  if (acc.hess != nullptr) {
    Eigen::MatrixXd& block = (*acc.hess)[query];
    for (std::size_t j = 0; j < n; ++j) {
      const double indicator = j == chosen ? 1.0 : 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double delta = j == k ? 1.0 : 0.0;
        double h = alpha * q[j] * (delta - q[k]) / (p[j] * p[k]);
        if (j == k) h -= (q[j] - indicator) / (p[j] * p[j]);
        block(static_cast<Eigen::Index>(responses[j]),
              static_cast<Eigen::Index>(responses[k])) += weight * h;
      }
    }
  }
}

// alpha = 0 pairwise term  -(w/2) log(pi_w / pi_l).
void AddLogRatioTerm(PolicyView policy, const PairwiseTuple& t, double weight,
                     Accumulator& acc) {
  const double pw = Referenced(policy, t.query, t.winner);
  const double pl = Referenced(policy, t.query, t.loser);
  acc.loss += -0.5 * weight * (std::log(pw) - std::log(pl));
  if (acc.grad != nullptr) {
    (*acc.grad)[t.query][t.winner] += -0.5 * weight / pw;
    (*acc.grad)[t.query][t.loser] += 0.5 * weight / pl;
  }
  if (acc.hess != nullptr) {
    Eigen::MatrixXd& block = (*acc.hess)[t.query];
    const auto w = static_cast<Eigen::Index>(t.winner);
    const auto l = static_cast<Eigen::Index>(t.loser);
    block(w, w) += 0.5 * weight / (pw * pw);
    block(l, l) += -0.5 * weight / (pl * pl);
  }
}

void EvaluateSpo(PolicyView policy, const PairwiseDistribution& dist,
                 double alpha, std::span<const double> mu, Accumulator& acc) {
  CheckAlphaNonnegative(alpha);
  CheckWeightCount(mu.size(), dist.size());
  const auto& atoms = dist.atoms();
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    const PairwiseTuple& t = atoms[a].tuple;
    const double weight = atoms[a].weight * mu[a];
    if (alpha == 0.0) {
      AddLogRatioTerm(policy, t, weight, acc);
    } else {
      const std::size_t ids[2] = {t.winner, t.loser};
      AddChoiceTerm(policy, t.query, ids, 0, alpha, weight, acc);
    }
  }
}

void EvaluateBestOfN(PolicyView policy, const BestOfNDistribution& dist,
                     double alpha, std::span<const double> mu,
                     Accumulator& acc) {
  CheckAlphaPositive(alpha);
  CheckWeightCount(mu.size(), dist.size());
  const auto& atoms = dist.atoms();
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    const BestOfNTuple& t = atoms[a].tuple;
    AddChoiceTerm(policy, t.query, t.responses, t.best, alpha,
                  atoms[a].weight * mu[a], acc);
  }
}

void EvaluateRanking(PolicyView policy, const RankedDistribution& dist,
                     double alpha,
                     const std::vector<std::vector<double>>& mu,
                     Accumulator& acc) {
  CheckAlphaPositive(alpha);
  CheckWeightCount(mu.size(), dist.size());
  const auto& atoms = dist.atoms();
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    const std::vector<std::size_t> ordered = atoms[a].tuple.Ordered();
    if (mu[a].size() + 1 != ordered.size()) {
      Fail(ErrorCode::kDimensionMismatch, "one weight per rank level needed");
    }
    const std::span<const std::size_t> all(ordered);
    for (std::size_t level = 0; level + 1 < ordered.size(); ++level) {
      if (mu[a][level] == 0.0) continue;
      AddChoiceTerm(policy, atoms[a].tuple.query, all.subspan(level), 0, alpha,
                    atoms[a].weight * mu[a][level], acc);
    }
  }
}

double WeightedBatchMean(std::span<const double> values,
                         std::span<const double> weights) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    num += weights[i] * values[i];
    den += weights[i];
  }
  return num / den;
}

template <typename Dist>
std::vector<double> SetWeights(PolicyView policy, const Dist& dist,
                               const WeightFunction& mu) {
  const auto& atoms = dist.atoms();
  std::vector<double> out(atoms.size(), mu.value());
  if (mu.kind() == WeightFunction::Kind::kConstant) return out;
  if (mu.gamma() == 0.0) {
    std::fill(out.begin(), out.end(), 1.0);
    return out;
  }
  std::vector<double> powered(atoms.size());
  std::vector<double> weights(atoms.size());
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    const auto& t = atoms[a].tuple;
    if constexpr (std::is_same_v<Dist, PairwiseDistribution>) {
      const std::size_t ids[2] = {t.winner, t.loser};
      powered[a] = mu.PoweredSum(policy, t.query, ids);
    } else {
      powered[a] = mu.PoweredSum(policy, t.query, t.responses);
    }
    weights[a] = atoms[a].weight;
  }
  const double mean = WeightedBatchMean(powered, weights);
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    out[a] = mu.Evaluate(powered[a], mean);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// TabularPolicy / PolicyView

TabularPolicy::TabularPolicy(PolicyTable rows) {
  if (rows.empty()) Fail(ErrorCode::kEmptyInput, "policy has no queries");
  rows_.reserve(rows.size());
  for (auto& row : rows) rows_.push_back(Distribution(std::move(row)).vector());
}

TabularPolicy::TabularPolicy(const std::vector<Distribution>& rows) {
  if (rows.empty()) Fail(ErrorCode::kEmptyInput, "policy has no queries");
  for (const auto& row : rows) rows_.push_back(row.vector());
}

TabularPolicy TabularPolicy::Uniform(std::span<const std::size_t> sizes) {
  PolicyTable rows;
  for (std::size_t size : sizes) {
    rows.emplace_back(size, 1.0 / static_cast<double>(size));
  }
  return TabularPolicy(std::move(rows));
}

TabularPolicy TabularPolicy::Uniform(const RewardTable& shape) {
  std::vector<std::size_t> sizes;
  for (std::size_t q = 0; q < shape.num_queries(); ++q) {
    sizes.push_back(shape.num_responses(q));
  }
  return Uniform(sizes);
}

TabularPolicy TabularPolicy::SoftmaxTarget(const RewardTable& rewards,
                                           double alpha) {
  std::vector<Distribution> rows;
  for (std::size_t q = 0; q < rewards.num_queries(); ++q) {
    rows.push_back(SoftmaxScaled(rewards.rewards(q), alpha));
  }
  return TabularPolicy(rows);
}

std::size_t TabularPolicy::num_responses(std::size_t query) const {
  return rows_.at(query).size();
}

double TabularPolicy::prob(std::size_t query, std::size_t response) const {
  return rows_.at(query).at(response);
}

std::span<const double> TabularPolicy::row(std::size_t query) const {
  return rows_.at(query);
}

Distribution TabularPolicy::distribution(std::size_t query) const {
  return Distribution(rows_.at(query));
}

bool TabularPolicy::Interior(double floor) const {
  for (const auto& row : rows_) {
    for (double p : row) {
      if (p < floor) return false;
    }
  }
  return true;
}

std::size_t PolicyView::num_responses(std::size_t query) const {
  if (query >= table_->size()) {
    Fail(ErrorCode::kUnknownResponse,
         "query " + std::to_string(query) + " not in policy");
  }
  return (*table_)[query].size();
}

double PolicyView::prob(std::size_t query, std::size_t response) const {
  if (response >= num_responses(query)) {
    Fail(ErrorCode::kUnknownResponse,
         "response " + std::to_string(response) + " not in policy row " +
             std::to_string(query));
  }
  return (*table_)[query][response];
}

PolicyGradient ZerosLike(PolicyView policy) {
  PolicyGradient out(policy.num_queries());
  for (std::size_t q = 0; q < out.size(); ++q) {
    out[q].assign(policy.num_responses(q), 0.0);
  }
  return out;
}

PolicyHessian ZeroHessianLike(PolicyView policy) {
  PolicyHessian out;
  out.reserve(policy.num_queries());
  for (std::size_t q = 0; q < policy.num_queries(); ++q) {
    const auto n = static_cast<Eigen::Index>(policy.num_responses(q));
    out.push_back(Eigen::MatrixXd::Zero(n, n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// LossSpec

const char* LossFamilyName(LossFamily family) {
  switch (family) {
    case LossFamily::kSpoBasic: return "spo_basic";
    case LossFamily::kSpoWeighted: return "spo_weighted";
    case LossFamily::kBestOfN: return "best_of_n";
    case LossFamily::kRanking: return "ranking";
    case LossFamily::kDpo: return "dpo";
    case LossFamily::kCrossEntropy: return "cross_entropy";
  }
  return "unknown";
}

std::optional<LossFamily> ParseLossFamily(const std::string& name) {
  for (LossFamily f : {LossFamily::kSpoBasic, LossFamily::kSpoWeighted,
                       LossFamily::kBestOfN, LossFamily::kRanking,
                       LossFamily::kDpo, LossFamily::kCrossEntropy}) {
    if (name == LossFamilyName(f)) return f;
  }
  return std::nullopt;
}

void LossSpec::Validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) {
    Fail(ErrorCode::kNonpositiveAlpha, "alpha must be finite and >= 0");
  }
  if ((family == LossFamily::kBestOfN || family == LossFamily::kRanking) &&
      alpha == 0.0) {
    Fail(ErrorCode::kNonpositiveAlpha,
         std::string(LossFamilyName(family)) + " requires alpha > 0");
  }
  if (!std::isfinite(gamma) || gamma < 0.0) {
    Fail(ErrorCode::kInvalidConfig, "gamma must be finite and >= 0");
  }
  if (!std::isfinite(beta) || beta < 0.0 ||
      (family == LossFamily::kDpo && beta == 0.0)) {
    Fail(ErrorCode::kInvalidConfig, "beta out of range");
  }
  if (!std::isfinite(eta) || !(eta > 0.0)) {
    Fail(ErrorCode::kInvalidConfig, "eta must be positive");
  }
}

// ---------------------------------------------------------------------------
// Weight functions

WeightFunction WeightFunction::Constant(double value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    Fail(ErrorCode::kPreconditionViolated, "weights must be positive");
  }
  return WeightFunction(Kind::kConstant, 0.0, value);
}

WeightFunction WeightFunction::SigmoidSum(double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    Fail(ErrorCode::kPreconditionViolated, "gamma must be >= 0");
  }
  return WeightFunction(Kind::kSigmoidSum, gamma, 1.0);
}

double WeightFunction::Evaluate(double powered_sum, double batch_mean) const {
  if (kind_ == Kind::kConstant) return value_;
  return 2.0 * Sigmoid(powered_sum - batch_mean);
}

double WeightFunction::PoweredSum(PolicyView policy, std::size_t query,
                                  std::span<const std::size_t> responses) const {
  double mass = 0.0;
  for (std::size_t y : responses) mass += policy.prob(query, y);
  return std::pow(mass, gamma_);
}

RankWeights RankWeights::Constant(std::size_t n, double value) {
  if (n < 2) Fail(ErrorCode::kPreconditionViolated, "n must be >= 2");
  return RankWeights{std::vector<double>(n - 1, value), WeightFunction::Uniform()};
}

RankWeights RankWeights::Decayed(std::size_t n, double eta) {
  if (n < 2) Fail(ErrorCode::kPreconditionViolated, "n must be >= 2");
  RankWeights out{{}, WeightFunction::Uniform()};
  double scale = 1.0;
  for (std::size_t k = 1; k < n; ++k) {
    scale *= eta;
    out.scales.push_back(scale);
  }
  return out;
}

double ModelPrefProb(PolicyView policy, std::size_t query, std::size_t y1,
                     std::size_t y2) {
  const double p1 = policy.prob(query, y1);
  const double p2 = policy.prob(query, y2);
  if (!(p1 + p2 > 0.0)) {
    Fail(ErrorCode::kZeroMass, "pi(y1) + pi(y2) is zero");
  }
  return p1 / (p1 + p2);
}

std::vector<double> MuSigmoid(PolicyView policy,
                              std::span<const PairwiseTuple> batch,
                              double gamma) {
  if (batch.empty()) Fail(ErrorCode::kEmptyInput, "empty batch");
  const WeightFunction mu = WeightFunction::SigmoidSum(gamma);
  std::vector<double> powered(batch.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t ids[2] = {batch[i].winner, batch[i].loser};
    powered[i] = mu.PoweredSum(policy, batch[i].query, ids);
    sum += powered[i];
  }
  const double mean = sum / static_cast<double>(batch.size());
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out[i] = mu.Evaluate(powered[i], mean);
  }
  return out;
}

std::vector<double> AtomWeights(PolicyView policy,
                                const PairwiseDistribution& dist,
                                const WeightFunction& mu) {
  return SetWeights(policy, dist, mu);
}

std::vector<double> AtomWeights(PolicyView policy,
                                const BestOfNDistribution& dist,
                                const WeightFunction& mu) {
  return SetWeights(policy, dist, mu);
}

std::vector<std::vector<double>> AtomWeights(PolicyView policy,
                                             const RankedDistribution& dist,
                                             const RankWeights& mu) {
  const std::size_t levels = dist.arity() - 1;
  if (mu.scales.size() != levels) {
    Fail(ErrorCode::kDimensionMismatch, "one rank scale per level needed");
  }
  const auto& atoms = dist.atoms();
  std::vector<std::vector<double>> out(atoms.size(),
                                       std::vector<double>(levels, 0.0));
  const bool constant = mu.base.kind() == WeightFunction::Kind::kConstant ||
                        mu.base.gamma() == 0.0;
  const double base_value =
      mu.base.kind() == WeightFunction::Kind::kConstant ? mu.base.value() : 1.0;
  if (constant) {
    for (auto& row : out) {
      for (std::size_t k = 0; k < levels; ++k) row[k] = mu.scales[k] * base_value;
    }
    return out;
  }
  // Sigmoid-sum base: each level has its own batch of suffix sets.
  std::vector<double> powered(atoms.size());
  std::vector<double> weights(atoms.size());
  for (std::size_t k = 0; k < levels; ++k) {
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      const std::vector<std::size_t> ordered = atoms[a].tuple.Ordered();
      const std::span<const std::size_t> suffix =
          std::span<const std::size_t>(ordered).subspan(k);
      powered[a] = mu.base.PoweredSum(policy, atoms[a].tuple.query, suffix);
      weights[a] = atoms[a].weight;
    }
    const double mean = WeightedBatchMean(powered, weights);
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      out[a][k] = mu.scales[k] * mu.base.Evaluate(powered[a], mean);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pairwise SPO

double SpoPrefLoss(PolicyView policy, const PairwiseDistribution& dist,
                   double alpha, std::span<const double> frozen_mu) {
  Accumulator acc;
  EvaluateSpo(policy, dist, alpha, frozen_mu, acc);
  return acc.loss;
}

double SpoPrefLoss(PolicyView policy, const PairwiseDistribution& dist,
                   double alpha, const WeightFunction& mu) {
  return SpoPrefLoss(policy, dist, alpha, AtomWeights(policy, dist, mu));
}

PolicyGradient SpoPrefGrad(PolicyView policy, const PairwiseDistribution& dist,
                           double alpha, std::span<const double> frozen_mu) {
  PolicyGradient grad = ZerosLike(policy);
  Accumulator acc{0.0, &grad, nullptr};
  EvaluateSpo(policy, dist, alpha, frozen_mu, acc);
  return grad;
}

PolicyGradient SpoPrefGrad(PolicyView policy, const PairwiseDistribution& dist,
                           double alpha, const WeightFunction& mu) {
  return SpoPrefGrad(policy, dist, alpha, AtomWeights(policy, dist, mu));
}

PolicyHessian SpoPrefHessian(PolicyView policy,
                             const PairwiseDistribution& dist, double alpha,
                             std::span<const double> frozen_mu) {
  PolicyHessian hess = ZeroHessianLike(policy);
  Accumulator acc{0.0, nullptr, &hess};
  EvaluateSpo(policy, dist, alpha, frozen_mu, acc);
  return hess;
}

double CrossEntropyLoss(PolicyView policy, const PairwiseDistribution& dist) {
  double loss = 0.0;
  for (const auto& atom : dist.atoms()) {
    const PairwiseTuple& t = atom.tuple;
    Referenced(policy, t.query, t.winner);
    Referenced(policy, t.query, t.loser);
    loss -= atom.weight * std::log(ModelPrefProb(policy, t.query, t.winner, t.loser));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Best-of-n

double BestOfNLoss(PolicyView policy, const BestOfNDistribution& dist,
                   double alpha, std::span<const double> frozen_mu) {
  Accumulator acc;
  EvaluateBestOfN(policy, dist, alpha, frozen_mu, acc);
  return acc.loss;
}

double BestOfNLoss(PolicyView policy, const BestOfNDistribution& dist,
                   double alpha, const WeightFunction& mu) {
  CheckAlphaPositive(alpha);
  return BestOfNLoss(policy, dist, alpha, AtomWeights(policy, dist, mu));
}

PolicyGradient BestOfNGrad(PolicyView policy, const BestOfNDistribution& dist,
                           double alpha, std::span<const double> frozen_mu) {
  PolicyGradient grad = ZerosLike(policy);
  Accumulator acc{0.0, &grad, nullptr};
  EvaluateBestOfN(policy, dist, alpha, frozen_mu, acc);
  return grad;
}

PolicyGradient BestOfNGrad(PolicyView policy, const BestOfNDistribution& dist,
                           double alpha, const WeightFunction& mu) {
  CheckAlphaPositive(alpha);
  return BestOfNGrad(policy, dist, alpha, AtomWeights(policy, dist, mu));
}

PolicyHessian BestOfNHessian(PolicyView policy,
                             const BestOfNDistribution& dist, double alpha,
                             std::span<const double> frozen_mu) {
  PolicyHessian hess = ZeroHessianLike(policy);
  Accumulator acc{0.0, nullptr, &hess};
  EvaluateBestOfN(policy, dist, alpha, frozen_mu, acc);
  return hess;
}

// ---------------------------------------------------------------------------
// Ranking

double RankingLoss(PolicyView policy, const RankedDistribution& dist,
                   double alpha,
                   const std::vector<std::vector<double>>& frozen_mu) {
  Accumulator acc;
  EvaluateRanking(policy, dist, alpha, frozen_mu, acc);
  return acc.loss;
}

double RankingLoss(PolicyView policy, const RankedDistribution& dist,
                   double alpha, const RankWeights& mu) {
  CheckAlphaPositive(alpha);
  return RankingLoss(policy, dist, alpha, AtomWeights(policy, dist, mu));
}

PolicyGradient RankingGrad(PolicyView policy, const RankedDistribution& dist,
                           double alpha,
                           const std::vector<std::vector<double>>& frozen_mu) {
  PolicyGradient grad = ZerosLike(policy);
  Accumulator acc{0.0, &grad, nullptr};
  EvaluateRanking(policy, dist, alpha, frozen_mu, acc);
  return grad;
}

PolicyGradient RankingGrad(PolicyView policy, const RankedDistribution& dist,
                           double alpha, const RankWeights& mu) {
  CheckAlphaPositive(alpha);
  return RankingGrad(policy, dist, alpha, AtomWeights(policy, dist, mu));
}

PolicyHessian RankingHessian(PolicyView policy, const RankedDistribution& dist,
                             double alpha,
                             const std::vector<std::vector<double>>& frozen_mu) {
  PolicyHessian hess = ZeroHessianLike(policy);
  Accumulator acc{0.0, nullptr, &hess};
  EvaluateRanking(policy, dist, alpha, frozen_mu, acc);
  return hess;
}

// ---------------------------------------------------------------------------
// DPO and KL

double DpoLoss(PolicyView policy, PolicyView ref_policy,
               const PairwiseDistribution& dist, double beta) {
  double loss = 0.0;
  for (const auto& atom : dist.atoms()) {
    const PairwiseTuple& t = atom.tuple;
    const double margin =
        beta * ((std::log(Referenced(policy, t.query, t.winner)) -
                 std::log(Referenced(ref_policy, t.query, t.winner))) -
                (std::log(Referenced(policy, t.query, t.loser)) -
                 std::log(Referenced(ref_policy, t.query, t.loser))));
    loss += atom.weight * Softplus(-margin);
  }
  return loss;
}

PolicyGradient DpoGrad(PolicyView policy, PolicyView ref_policy,
                       const PairwiseDistribution& dist, double beta) {
  PolicyGradient grad = ZerosLike(policy);
  for (const auto& atom : dist.atoms()) {
    const PairwiseTuple& t = atom.tuple;
    const double pw = Referenced(policy, t.query, t.winner);
    const double pl = Referenced(policy, t.query, t.loser);
    const double margin =
        beta * ((std::log(pw) - std::log(Referenced(ref_policy, t.query, t.winner))) -
                (std::log(pl) - std::log(Referenced(ref_policy, t.query, t.loser))));
    const double slope = atom.weight * beta * Sigmoid(-margin);
    grad[t.query][t.winner] -= slope / pw;
    grad[t.query][t.loser] += slope / pl;
  }
  return grad;
}

double PolicyKl(PolicyView policy, PolicyView ref_policy) {
  if (policy.num_queries() != ref_policy.num_queries()) {
    Fail(ErrorCode::kDimensionMismatch, "policies cover different queries");
  }
  double total = 0.0;
  for (std::size_t q = 0; q < policy.num_queries(); ++q) {
    total += KlDivergence(policy.table()[q], ref_policy.table()[q]);
  }
  return total / static_cast<double>(policy.num_queries());
}

SymmetryReport SeparabilitySymmetryCheck(const TabularPolicy& policy,
                                         const TabularPolicy& ref_policy,
                                         const PairwiseTuple& tuple,
                                         double alpha, double beta) {
  const double pw = policy.prob(tuple.query, tuple.winner);
  const double pl = policy.prob(tuple.query, tuple.loser);
  if (std::abs(pw - pl) > kSymmetryTolerance) {
    Fail(ErrorCode::kPreconditionViolated,
         "pi(y_w|x) and pi(y_l|x) must be equal");
  }
  const PairwiseDistribution single({{tuple, 1.0}}, 2, false);
  const WeightFunction uniform = WeightFunction::Uniform();

  PolicyTable swapped = ref_policy.table();
  std::swap(swapped[tuple.query][tuple.winner], swapped[tuple.query][tuple.loser]);

  SymmetryReport report;
  report.spo_before = SpoPrefLoss(policy, single, alpha, uniform) +
                      beta * PolicyKl(policy, ref_policy);
  report.spo_after = SpoPrefLoss(policy, single, alpha, uniform) +
                     beta * PolicyKl(policy, swapped);
  report.dpo_before = DpoLoss(policy, ref_policy, single, beta);
  report.dpo_after = DpoLoss(policy, swapped, single, beta);
  auto same = [](double a, double b) {
    return std::abs(a - b) <= kSymmetryTolerance * std::max(1.0, std::abs(a));
  };
  report.spo_invariant = same(report.spo_before, report.spo_after);
  report.dpo_invariant = same(report.dpo_before, report.dpo_after);
  return report;
}

// ---------------------------------------------------------------------------
// Objective dispatch

namespace {

WeightFunction SetWeightFor(const LossSpec& spec) {
  if (spec.family == LossFamily::kSpoBasic ||
      spec.family == LossFamily::kCrossEntropy || spec.gamma == 0.0) {
    return WeightFunction::Uniform();
  }
  return WeightFunction::SigmoidSum(spec.gamma);
}

RankWeights RankWeightsFor(const LossSpec& spec, std::size_t n) {
  RankWeights out = RankWeights::Decayed(n, spec.eta);
  out.base = SetWeightFor(spec);
  return out;
}

double EffectiveAlpha(const LossSpec& spec) {
  return spec.family == LossFamily::kCrossEntropy ? 1.0 : spec.alpha;
}

template <typename Dist>
const Dist& Expect(const AnyPreferenceDistribution& dist, LossFamily family) {
  const Dist* out = std::get_if<Dist>(&dist);
  if (out == nullptr) {
    Fail(ErrorCode::kPreconditionViolated,
         std::string(LossFamilyName(family)) + " loss needs a " +
             PreferenceKindName(Dist::kind()) + " distribution");
  }
  return *out;
}

}  // namespace

double PreferenceLoss(PolicyView policy, const AnyPreferenceDistribution& dist,
                      const LossSpec& spec,
                      std::optional<PolicyView> ref_policy) {
  spec.Validate();
  switch (spec.family) {
    case LossFamily::kSpoBasic:
    case LossFamily::kSpoWeighted:
      return SpoPrefLoss(policy, Expect<PairwiseDistribution>(dist, spec.family),
                         spec.alpha, SetWeightFor(spec));
    case LossFamily::kCrossEntropy:
      return CrossEntropyLoss(policy,
                              Expect<PairwiseDistribution>(dist, spec.family));
    case LossFamily::kBestOfN:
      return BestOfNLoss(policy, Expect<BestOfNDistribution>(dist, spec.family),
                         spec.alpha, SetWeightFor(spec));
    case LossFamily::kRanking: {
      const auto& ranked = Expect<RankedDistribution>(dist, spec.family);
      return RankingLoss(policy, ranked, spec.alpha,
                         RankWeightsFor(spec, ranked.arity()));
    }
    case LossFamily::kDpo:
      if (!ref_policy.has_value()) {
        Fail(ErrorCode::kPreconditionViolated, "DPO needs a reference policy");
      }
      return DpoLoss(policy, *ref_policy,
                     Expect<PairwiseDistribution>(dist, spec.family), spec.beta);
  }
  return 0.0;
}

double CombinedSpoObjective(PolicyView policy,
                            const AnyPreferenceDistribution& dist,
                            const LossSpec& spec, double kl_value) {
  if (!(kl_value >= 0.0)) {
    Fail(ErrorCode::kPreconditionViolated, "KL value must be >= 0");
  }
  if (spec.family == LossFamily::kDpo) {
    Fail(ErrorCode::kPreconditionViolated,
         "the combined objective is defined for SPO families");
  }
  const double pref = PreferenceLoss(policy, dist, spec);
  if (spec.beta == 0.0) return pref;
  return pref + spec.beta * kl_value;
}

PreferenceObjective::PreferenceObjective(LossSpec spec,
                                         AnyPreferenceDistribution dist)
    : spec_(spec), dist_(std::move(dist)) {
  spec_.Validate();
  switch (spec_.family) {
    case LossFamily::kSpoBasic:
    case LossFamily::kSpoWeighted:
    case LossFamily::kCrossEntropy:
      Expect<PairwiseDistribution>(dist_, spec_.family);
      break;
    case LossFamily::kBestOfN:
      Expect<BestOfNDistribution>(dist_, spec_.family);
      break;
    case LossFamily::kRanking:
      Expect<RankedDistribution>(dist_, spec_.family);
      break;
    case LossFamily::kDpo:
      Fail(ErrorCode::kPreconditionViolated,
           "DPO has no reference-free objective");
  }
}

double PreferenceObjective::Loss(PolicyView policy) const {
  return PreferenceLoss(policy, dist_, spec_);
}

PolicyGradient PreferenceObjective::Gradient(PolicyView policy) const {
  const double alpha = EffectiveAlpha(spec_);
  switch (spec_.family) {
    case LossFamily::kBestOfN:
      return BestOfNGrad(policy, std::get<BestOfNDistribution>(dist_), alpha,
                         SetWeightFor(spec_));
    case LossFamily::kRanking: {
      const auto& ranked = std::get<RankedDistribution>(dist_);
      return RankingGrad(policy, ranked, alpha,
                         RankWeightsFor(spec_, ranked.arity()));
    }
    default:
      return SpoPrefGrad(policy, std::get<PairwiseDistribution>(dist_), alpha,
                         SetWeightFor(spec_));
  }
}

PolicyHessian PreferenceObjective::Hessian(PolicyView policy) const {
  const double alpha = EffectiveAlpha(spec_);
  switch (spec_.family) {
    case LossFamily::kBestOfN: {
      const auto& d = std::get<BestOfNDistribution>(dist_);
      return BestOfNHessian(policy, d, alpha,
                            AtomWeights(policy, d, SetWeightFor(spec_)));
    }
    case LossFamily::kRanking: {
      const auto& d = std::get<RankedDistribution>(dist_);
      return RankingHessian(policy, d, alpha,
                            AtomWeights(policy, d, RankWeightsFor(spec_, d.arity())));
    }
    default: {
      const auto& d = std::get<PairwiseDistribution>(dist_);
      return SpoPrefHessian(policy, d, alpha,
                            AtomWeights(policy, d, SetWeightFor(spec_)));
    }
  }
}

}  // namespace softpref
