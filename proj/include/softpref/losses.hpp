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

// Preference losses over tabular policies together with their closed-form
// gradients and Hessians: SPO (pairwise, weighted), best-of-n, ranking,
// cross-entropy and the DPO baseline.
//
// Losses are exact expectations over the atoms of a PreferenceDistribution.
// Weight functions mu may depend on the policy; they are evaluated once per
// call and treated as constants when differentiating.

#ifndef SOFTPREF_LOSSES_HPP_
#define SOFTPREF_LOSSES_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "softpref/prefdata.hpp"
#include "softpref/simplex.hpp"

namespace softpref {

// One row of probabilities per query. Rows need not be normalized; this is
// the raw parameterization that finite differences perturb.
using PolicyTable = std::vector<std::vector<double>>;
using PolicyGradient = PolicyTable;
// Losses decompose over queries, so the Hessian is block diagonal.
using PolicyHessian = std::vector<Eigen::MatrixXd>;

// pi_theta(.|x) stored as one Distribution per query.
class TabularPolicy {
 public:
  explicit TabularPolicy(PolicyTable rows);
  explicit TabularPolicy(const std::vector<Distribution>& rows);

  static TabularPolicy Uniform(std::span<const std::size_t> sizes);
  static TabularPolicy Uniform(const RewardTable& shape);
  // Softmax(r(.|x) / alpha) for every query.
  static TabularPolicy SoftmaxTarget(const RewardTable& rewards, double alpha);

  std::size_t num_queries() const { return rows_.size(); }
  std::size_t num_responses(std::size_t query) const;
  double prob(std::size_t query, std::size_t response) const;
  std::span<const double> row(std::size_t query) const;
  Distribution distribution(std::size_t query) const;
  const PolicyTable& table() const { return rows_; }

  // True when every entry is at least `floor`.
  bool Interior(double floor) const;

  bool operator==(const TabularPolicy&) const = default;

 private:
  PolicyTable rows_;
};

// Non-owning view accepted by every loss: either a validated TabularPolicy
// or a raw PolicyTable.
class PolicyView {
 public:
  PolicyView(const TabularPolicy& policy) : table_(&policy.table()) {}
  PolicyView(const PolicyTable& table) : table_(&table) {}

  std::size_t num_queries() const { return table_->size(); }
  std::size_t num_responses(std::size_t query) const;
  double prob(std::size_t query, std::size_t response) const;
  const PolicyTable& table() const { return *table_; }

 private:
  const PolicyTable* table_;
};

PolicyGradient ZerosLike(PolicyView policy);
PolicyHessian ZeroHessianLike(PolicyView policy);

enum class LossFamily {
  kSpoBasic,
  kSpoWeighted,
  kBestOfN,
  kRanking,
  kDpo,
  kCrossEntropy,
};

const char* LossFamilyName(LossFamily family);
std::optional<LossFamily> ParseLossFamily(const std::string& name);

struct LossSpec {
  LossFamily family = LossFamily::kSpoBasic;
  double alpha = 1.0;
  // Exponent of the sigmoid-sum weight function; 0 gives uniform weights.
  double gamma = 0.0;
  // DPO temperature, and the KL coefficient of the combined objective.
  double beta = 1.0;
  // Per-rank decay of ranking weights: mu_k = eta^k for k = 1..n-1.
  double eta = 1.0;

  // Throws InvalidConfig / NonpositiveAlpha on out-of-range parameters.
  void Validate() const;
};

// Symmetric positive weight over a response set. kConstant returns `value`;
// kSigmoidSum returns 2 sigma(s^gamma - E[s^gamma]) with s the policy mass
// of the set and E the batch mean.
class WeightFunction {
 public:
  enum class Kind { kConstant, kSigmoidSum };

  static WeightFunction Uniform() { return Constant(1.0); }
  static WeightFunction Constant(double value);
  static WeightFunction SigmoidSum(double gamma);

  Kind kind() const { return kind_; }
  double gamma() const { return gamma_; }
  double value() const { return value_; }

  // mu for a set whose powered mass is `powered_sum`, given the batch mean.
  double Evaluate(double powered_sum, double batch_mean) const;
  // (sum of the set's probabilities)^gamma.
  double PoweredSum(PolicyView policy, std::size_t query,
                    std::span<const std::size_t> responses) const;

 private:
  WeightFunction(Kind kind, double gamma, double value)
      : kind_(kind), gamma_(gamma), value_(value) {}

  Kind kind_;
  double gamma_;
  double value_;
};

// Per-rank weights for the ranking loss: level k (1-based) uses
// scales[k-1] * base(suffix set).
struct RankWeights {
  std::vector<double> scales;
  WeightFunction base = WeightFunction::Uniform();

  static RankWeights Constant(std::size_t n, double value = 1.0);
  // scales = (eta, eta^2, ..., eta^(n-1)).
  static RankWeights Decayed(std::size_t n, double eta);
};

// P_pi(y1 > y2 | x) = pi(y1) / (pi(y1) + pi(y2)).
double ModelPrefProb(PolicyView policy, std::size_t query, std::size_t y1,
                     std::size_t y2);

// Sample-batch form of the sigmoid-sum weights: E is the plain mean over
// `batch`.
std::vector<double> MuSigmoid(PolicyView policy,
                              std::span<const PairwiseTuple> batch,
                              double gamma);

// mu for every atom at the current policy. In exact-expectation mode the
// batch mean is the D-weighted mean over all atoms.
std::vector<double> AtomWeights(PolicyView policy,
                                const PairwiseDistribution& dist,
                                const WeightFunction& mu);
std::vector<double> AtomWeights(PolicyView policy,
                                const BestOfNDistribution& dist,
                                const WeightFunction& mu);
// Indexed [atom][level], level 0 meaning k = 1.
std::vector<std::vector<double>> AtomWeights(PolicyView policy,
                                             const RankedDistribution& dist,
                                             const RankWeights& mu);

// Pairwise SPO preference loss; alpha = 0 selects the log-ratio form.
double SpoPrefLoss(PolicyView policy, const PairwiseDistribution& dist,
                   double alpha, const WeightFunction& mu);
double SpoPrefLoss(PolicyView policy, const PairwiseDistribution& dist,
                   double alpha, std::span<const double> frozen_mu);
PolicyGradient SpoPrefGrad(PolicyView policy, const PairwiseDistribution& dist,
                           double alpha, const WeightFunction& mu);
PolicyGradient SpoPrefGrad(PolicyView policy, const PairwiseDistribution& dist,
                           double alpha, std::span<const double> frozen_mu);
PolicyHessian SpoPrefHessian(PolicyView policy,
                             const PairwiseDistribution& dist, double alpha,
                             std::span<const double> frozen_mu);

// -E[log P_pi(y_w > y_l)], computed directly from ModelPrefProb.
double CrossEntropyLoss(PolicyView policy, const PairwiseDistribution& dist);

double BestOfNLoss(PolicyView policy, const BestOfNDistribution& dist,
                   double alpha, const WeightFunction& mu);
double BestOfNLoss(PolicyView policy, const BestOfNDistribution& dist,
                   double alpha, std::span<const double> frozen_mu);
PolicyGradient BestOfNGrad(PolicyView policy, const BestOfNDistribution& dist,
                           double alpha, const WeightFunction& mu);
PolicyGradient BestOfNGrad(PolicyView policy, const BestOfNDistribution& dist,
                           double alpha, std::span<const double> frozen_mu);
PolicyHessian BestOfNHessian(PolicyView policy,
                             const BestOfNDistribution& dist, double alpha,
                             std::span<const double> frozen_mu);

double RankingLoss(PolicyView policy, const RankedDistribution& dist,
                   double alpha, const RankWeights& mu);
double RankingLoss(PolicyView policy, const RankedDistribution& dist,
                   double alpha,
                   const std::vector<std::vector<double>>& frozen_mu);
PolicyGradient RankingGrad(PolicyView policy, const RankedDistribution& dist,
                           double alpha, const RankWeights& mu);
PolicyGradient RankingGrad(PolicyView policy, const RankedDistribution& dist,
                           double alpha,
                           const std::vector<std::vector<double>>& frozen_mu);
PolicyHessian RankingHessian(PolicyView policy, const RankedDistribution& dist,
                             double alpha,
                             const std::vector<std::vector<double>>& frozen_mu);

double DpoLoss(PolicyView policy, PolicyView ref_policy,
               const PairwiseDistribution& dist, double beta);
PolicyGradient DpoGrad(PolicyView policy, PolicyView ref_policy,
                       const PairwiseDistribution& dist, double beta);

// Mean over queries of D_KL(pi(.|x) || pi_ref(.|x)).
double PolicyKl(PolicyView policy, PolicyView ref_policy);

struct SymmetryReport {
  bool spo_invariant = false;
  bool dpo_invariant = false;
  double spo_before = 0.0;
  double spo_after = 0.0;
  double dpo_before = 0.0;
  double dpo_after = 0.0;
};

// Swaps pi_ref(y_w|x) and pi_ref(y_l|x) and re-evaluates the SPO objective
// (alpha-preference loss plus beta * KL) and the DPO loss on the single
// tuple. Requires pi(y_w|x) == pi(y_l|x) within 1e-12.
SymmetryReport SeparabilitySymmetryCheck(const TabularPolicy& policy,
                                         const TabularPolicy& ref_policy,
                                         const PairwiseTuple& tuple,
                                         double alpha, double beta);

// Preference loss selected by `spec` for the matching distribution kind.
double PreferenceLoss(PolicyView policy, const AnyPreferenceDistribution& dist,
                      const LossSpec& spec,
                      std::optional<PolicyView> ref_policy = std::nullopt);

// Preference loss + beta * kl_value.
double CombinedSpoObjective(PolicyView policy,
                            const AnyPreferenceDistribution& dist,
                            const LossSpec& spec, double kl_value);

// A LossSpec bound to its preference distribution: the object the flow
// integrates. DPO is not supported here (its minimizer depends on pi_ref).
class PreferenceObjective {
 public:
  PreferenceObjective(LossSpec spec, AnyPreferenceDistribution dist);

  const LossSpec& spec() const { return spec_; }
  const AnyPreferenceDistribution& distribution() const { return dist_; }

  double Loss(PolicyView policy) const;
  PolicyGradient Gradient(PolicyView policy) const;
  // Hessian of the loss with mu frozen at `policy`.
  PolicyHessian Hessian(PolicyView policy) const;

 private:
  LossSpec spec_;
  AnyPreferenceDistribution dist_;
};

}  // namespace softpref

#endif  // SOFTPREF_LOSSES_HPP_
