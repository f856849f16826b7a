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
#include <cstddef>
#include <functional>
#include <vector>

#include "doctest.h"

#include "softpref/error.hpp"
#include "softpref/oracle.hpp"
#include "softpref/prefdata.hpp"
#include "softpref/rng.hpp"
#include "test_util.hpp"

namespace softpref {
namespace {

using testing::CheckClose;
using testing::ErrorCodeOf;

const double kLn2 = std::log(2.0);
const double kLn3 = std::log(3.0);

PairwiseDistribution SinglePair(std::size_t winner, std::size_t loser) {
  return PairwiseDistribution({{{0, winner, loser}, 1.0}}, 2, false);
}

// Dirichlet rows with every entry >= floor.
PolicyTable RandomPolicy(Rng& rng, const std::vector<std::size_t>& sizes,
                         double floor) {
  PolicyTable out;
  for (std::size_t m : sizes) {
    std::vector<double> row = rng.DirichletOnes(m);
    for (double& x : row) x = floor + (1.0 - floor * static_cast<double>(m)) * x;
    out.push_back(row);
  }
  return out;
}

struct Instance {
  RewardTable rewards;
  PolicyTable policy;
};

// One or two queries with between min_responses and 5 responses each.
Instance RandomInstance(Rng& rng, std::size_t min_responses) {
  const std::size_t queries = 1 + rng.NextU64() % 2;
  std::vector<std::vector<double>> r;
  std::vector<std::size_t> sizes;
  for (std::size_t q = 0; q < queries; ++q) {
    const std::size_t m = min_responses + rng.NextU64() % (6 - min_responses);
    sizes.push_back(m);
    std::vector<double> row(m);
    for (double& x : row) x = rng.Uniform(-2.0, 2.0);
    r.push_back(row);
  }
  return {RewardTable(r), RandomPolicy(rng, sizes, 0.05)};
}

double FdError(const TableEvaluator& f, const PolicyTable& point,
               const PolicyGradient& analytic) {
  return MaxRelativeError(analytic, FiniteDifferenceGrad(f, point));
}

TEST_CASE("model_pref_prob") {
  CHECK(ModelPrefProb(PolicyTable{{0.2, 0.2, 0.6}}, 0, 0, 1) == 0.5);
  CHECK(ModelPrefProb(PolicyTable{{0.3, 0.1, 0.6}}, 0, 0, 1) ==
        doctest::Approx(0.75).epsilon(1e-15));
  CHECK(ModelPrefProb(PolicyTable{{0.4, 0.0, 0.6}}, 0, 0, 1) == 1.0);
  CHECK(ErrorCodeOf([] {
          ModelPrefProb(PolicyTable{{0.0, 0.0, 1.0}}, 0, 0, 1);
        }) == ErrorCode::kZeroMass);
}

TEST_CASE("spo_pref_loss examples") {
  const PolicyTable pi{{0.5, 0.5}};
  const PairwiseDistribution d = SinglePair(0, 1);
  const WeightFunction uniform = WeightFunction::Uniform();
  CHECK(SpoPrefLoss(pi, d, 1.0, uniform) == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(SpoPrefLoss(pi, d, 2.0, uniform) ==
        doctest::Approx(0.5 * kLn2).epsilon(1e-15));
  CHECK(SpoPrefLoss(pi, d, 0.0, uniform) == 0.0);
  CHECK(SpoPrefLoss(pi, d, 1.0, WeightFunction::Constant(2.0)) ==
        doctest::Approx(2 * kLn2).epsilon(1e-15));
}

TEST_CASE("spo_pref_loss errors") {
  const PairwiseDistribution d = SinglePair(0, 1);
  const WeightFunction uniform = WeightFunction::Uniform();
  CHECK(ErrorCodeOf([&] { SpoPrefLoss(PolicyTable{{1.0, 0.0}}, d, 1.0, uniform); }) ==
        ErrorCode::kBoundaryPolicy);
  CHECK(ErrorCodeOf([&] { SpoPrefLoss(PolicyTable{{0.5, 0.5}}, d, -1.0, uniform); }) ==
        ErrorCode::kNonpositiveAlpha);
  CHECK(ErrorCodeOf([&] {
          SpoPrefLoss(PolicyTable{{0.5, 0.5}}, d, 1.0, std::vector<double>{1, 1});
        }) == ErrorCode::kDimensionMismatch);
  CHECK(ErrorCodeOf([&] { SpoPrefLoss(PolicyTable{{0.5, 0.5}}, SinglePair(0, 2), 1.0, uniform); }) ==
        ErrorCode::kUnknownResponse);
}

TEST_CASE("spo_pref_grad examples") {
  const PairwiseDistribution d = SinglePair(0, 1);
  const WeightFunction uniform = WeightFunction::Uniform();
  PolicyGradient g = SpoPrefGrad(PolicyTable{{0.5, 0.5}}, d, 1.0, uniform);
  CheckClose(g[0], {-1.0, 1.0}, 1e-15);

  // Equal probabilities: the softmax weight of the loser is 1/2 for every
  // alpha, so the gradient is (-1/2) / pi_w and (+1/2) / pi_l.
  const PolicyTable tied{{0.3, 0.3, 0.4}};
  for (double alpha : {0.0, 0.3, 1.0, 2.7}) {
    g = SpoPrefGrad(tied, d, alpha, uniform);
    CheckClose(g[0], {-0.5 / 0.3, 0.5 / 0.3, 0.0}, 1e-14);
  }
  // alpha = 0: the coefficient stays 1/2 away from ties too.
  g = SpoPrefGrad(PolicyTable{{0.7, 0.1, 0.2}}, d, 0.0, uniform);
  CheckClose(g[0], {-0.5 / 0.7, 0.5 / 0.1, 0.0}, 1e-14);
}

TEST_CASE("mu_sigmoid") {
  const PolicyTable pi{{0.1, 0.2, 0.3, 0.4}};
  const std::vector<PairwiseTuple> batch{{0, 0, 1}, {0, 2, 3}, {0, 1, 3}};
  for (double w : MuSigmoid(pi, batch, 0.0)) CHECK(w == 1.0);
  for (double gamma : {0.01, 1.0, 3.0}) {
    const auto one = MuSigmoid(pi, std::vector<PairwiseTuple>{{0, 2, 1}}, gamma);
    CHECK(one[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  const std::vector<PairwiseTuple> two{{0, 0, 1}, {0, 2, 3}};
  const double s1 = 0.3;
  const double s2 = 0.7;
  const auto sigma = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  CheckClose(MuSigmoid(pi, two, 1.0),
             {2 * sigma((s1 - s2) / 2), 2 * sigma((s2 - s1) / 2)}, 1e-15);
  CHECK(ErrorCodeOf([&] { MuSigmoid(pi, std::vector<PairwiseTuple>{}, 1.0); }) ==
        ErrorCode::kEmptyInput);
}

TEST_CASE("atom weights are symmetric and collapse at gamma zero") {
  const RewardTable r = RewardTable::UniformRandom(1, 4, -2.0, 2.0, 3);
  const PairwiseDistribution d = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
  const PolicyTable pi{{0.1, 0.2, 0.3, 0.4}};
  for (double w : AtomWeights(pi, d, WeightFunction::SigmoidSum(0.0))) CHECK(w == 1.0);
  const auto mu = AtomWeights(pi, d, WeightFunction::SigmoidSum(1.0));
  // Atoms come in (a, b), (b, a) pairs over the same set.
  for (std::size_t i = 0; i < mu.size(); i += 2) {
    CHECK(mu[i] == mu[i + 1]);
    CHECK(mu[i] > 0.0);
    CHECK(mu[i] < 2.0);
  }
}

TEST_CASE("best_of_n_loss examples") {
  const WeightFunction uniform = WeightFunction::Uniform();
  const BestOfNDistribution d({{{0, {0, 1, 2}, 0}, 1.0}}, 3, false);
  CHECK(BestOfNLoss(PolicyTable{{1.0 / 3, 1.0 / 3, 1.0 / 3}}, d, 1.0, uniform) ==
        doctest::Approx(kLn3).epsilon(1e-15));
  CHECK(BestOfNLoss(PolicyTable{{0.5, 0.25, 0.25}}, d, 1.0, uniform) ==
        doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(ErrorCodeOf([&] {
          BestOfNLoss(PolicyTable{{0.5, 0.25, 0.25}}, d, 0.0, uniform);
        }) == ErrorCode::kNonpositiveAlpha);
}

TEST_CASE("best_of_n with n = 2 equals the pairwise loss") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = RandomInstance(rng, 2);
    const PairwiseDistribution pairs =
        MakeBtConsistentPairwise(inst.rewards, UniformSetMarginal(inst.rewards, 2));
    std::vector<Atom<BestOfNTuple>> atoms;
    for (const auto& a : pairs.atoms()) {
      atoms.push_back({{a.tuple.query, {a.tuple.winner, a.tuple.loser}, 0}, a.weight});
    }
    const BestOfNDistribution best(atoms, 2, true);
    const double alpha = rng.Uniform(0.2, 3.0);
    const WeightFunction mu = WeightFunction::SigmoidSum(0.5);
    CHECK(BestOfNLoss(inst.policy, best, alpha, mu) ==
          doctest::Approx(SpoPrefLoss(inst.policy, pairs, alpha, mu)).epsilon(1e-13));
    const auto gb = BestOfNGrad(inst.policy, best, alpha, mu);
    const auto gp = SpoPrefGrad(inst.policy, pairs, alpha, mu);
    CHECK(MaxRelativeError(gb, gp) < 1e-13);
  }
}

TEST_CASE("ranking_loss examples") {
  const RankedDistribution d({{{0, {0, 1, 2}, {0, 1, 2}}, 1.0}}, 3, false);
  const PolicyTable uniform{{1.0 / 3, 1.0 / 3, 1.0 / 3}};
  CHECK(RankingLoss(uniform, d, 1.0, RankWeights::Constant(3)) ==
        doctest::Approx(kLn3 + kLn2).epsilon(1e-15));

  // Zero weight on the second level leaves only the best-of-3 term.
  const PolicyTable pi{{0.2, 0.5, 0.3}};
  const BestOfNDistribution top({{{0, {0, 1, 2}, 0}, 1.0}}, 3, false);
  const double best = BestOfNLoss(pi, top, 0.7, WeightFunction::Uniform());
  CHECK(RankingLoss(pi, d, 0.7, std::vector<std::vector<double>>{{1.0, 0.0}}) ==
        doctest::Approx(best).epsilon(1e-15));
  CHECK(RankingLoss(pi, d, 0.7, RankWeights{{1.0, 0.0}, WeightFunction::Uniform()}) ==
        doctest::Approx(best).epsilon(1e-15));
  CHECK(ErrorCodeOf([&] { RankingLoss(pi, d, 0.7, RankWeights::Constant(4)); }) ==
        ErrorCode::kDimensionMismatch);
}

TEST_CASE("ranking with n = 2 equals the pairwise loss") {
  const RewardTable r = RewardTable::UniformRandom(1, 4, -2.0, 2.0, 8);
  const RankedDistribution ranked = MakePlConsistentRanked(r, UniformSetMarginal(r, 2), 2);
  const PairwiseDistribution pairs = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
  const PolicyTable pi{{0.1, 0.2, 0.3, 0.4}};
  for (double alpha : {0.5, 1.0, 2.0}) {
    CHECK(RankingLoss(pi, ranked, alpha, RankWeights::Constant(2, 1.5)) ==
          doctest::Approx(SpoPrefLoss(pi, pairs, alpha, WeightFunction::Constant(1.5)))
              .epsilon(1e-13));
  }
}

TEST_CASE("dpo_loss") {
  const PairwiseDistribution d = SinglePair(0, 1);
  const PolicyTable ref{{0.25, 0.5, 0.25}};
  for (double beta : {0.1, 1.0, 5.0}) {
    CHECK(DpoLoss(ref, ref, d, beta) == doctest::Approx(kLn2).epsilon(1e-15));
  }
  // Ratios 2 and 0.5 against the reference.
  const PolicyTable pi{{0.5, 0.25, 0.25}};
  CHECK(DpoLoss(pi, ref, d, 1.0) == doctest::Approx(std::log(1.25)).epsilon(1e-14));

  Rng rng(2);
  const PolicyTable point = RandomPolicy(rng, {4}, 0.05);
  const PolicyTable reference = RandomPolicy(rng, {4}, 0.05);
  const RewardTable r({{0.3, -1.0, 0.5, 1.2}});
  const PairwiseDistribution all = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
  const auto f = [&](const ProbTable& p) { return DpoLoss(p, reference, all, 0.7); };
  CHECK(FdError(f, point, DpoGrad(point, reference, all, 0.7)) < 1e-5);
}

TEST_CASE("separability symmetry") {
  const TabularPolicy ref_equal(PolicyTable{{0.2, 0.2, 0.6}});
  const TabularPolicy pi(PolicyTable{{0.4, 0.4, 0.2}});
  const PairwiseTuple t{0, 0, 1};
  SymmetryReport report = SeparabilitySymmetryCheck(pi, ref_equal, t, 1.0, 1.0);
  CHECK(report.spo_invariant);
  CHECK(report.dpo_invariant);

  const TabularPolicy ref(PolicyTable{{0.3, 0.1, 0.6}});
  for (double beta : {0.01, 1.0}) {
    report = SeparabilitySymmetryCheck(pi, ref, t, 1.0, beta);
    CHECK(report.spo_invariant);
    CHECK_FALSE(report.dpo_invariant);
  }
  const TabularPolicy unequal(PolicyTable{{0.5, 0.3, 0.2}});
  CHECK(ErrorCodeOf([&] { SeparabilitySymmetryCheck(unequal, ref, t, 1.0, 1.0); }) ==
        ErrorCode::kPreconditionViolated);
}

TEST_CASE("combined objective") {
  const PolicyTable pi{{0.5, 0.5}};
  const AnyPreferenceDistribution d = SinglePair(0, 1);
  LossSpec spec;
  spec.beta = 2.0;
  CHECK(CombinedSpoObjective(pi, d, spec, 0.0) == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(CombinedSpoObjective(pi, d, spec, 0.5) ==
        doctest::Approx(kLn2 + 1.0).epsilon(1e-15));
  spec.beta = 0.0;
  CHECK(CombinedSpoObjective(pi, d, spec, 0.5) == doctest::Approx(kLn2).epsilon(1e-15));
  spec.family = LossFamily::kDpo;
  spec.beta = 1.0;
  CHECK(ErrorCodeOf([&] { CombinedSpoObjective(pi, d, spec, 0.5); }) ==
        ErrorCode::kPreconditionViolated);
}

TEST_CASE("policy kl") {
  const PolicyTable p{{0.5, 0.5}, {0.2, 0.8}};
  const PolicyTable q{{0.25, 0.75}, {0.2, 0.8}};
  CHECK(PolicyKl(p, p) == 0.0);
  CHECK(PolicyKl(p, q) ==
        doctest::Approx(0.5 * (0.5 * kLn2 + 0.5 * std::log(2.0 / 3))).epsilon(1e-14));
}

TEST_CASE("loss spec validation and names") {
  LossSpec spec;
  spec.Validate();
  spec.alpha = -0.1;
  CHECK(ErrorCodeOf([&] { spec.Validate(); }) == ErrorCode::kNonpositiveAlpha);
  spec.alpha = 0.0;
  spec.family = LossFamily::kRanking;
  CHECK(ErrorCodeOf([&] { spec.Validate(); }) == ErrorCode::kNonpositiveAlpha);
  spec.alpha = 1.0;
  spec.eta = 0.0;
  CHECK(ErrorCodeOf([&] { spec.Validate(); }) == ErrorCode::kInvalidConfig);
  for (LossFamily f : {LossFamily::kSpoBasic, LossFamily::kSpoWeighted,
                       LossFamily::kBestOfN, LossFamily::kRanking, LossFamily::kDpo,
                       LossFamily::kCrossEntropy}) {
    CHECK(ParseLossFamily(LossFamilyName(f)) == f);
  }
  CHECK_FALSE(ParseLossFamily("ipo").has_value());
}

// Properties over random instances.

TEST_CASE("alpha = 1 with uniform weights is the log-likelihood loss") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = RandomInstance(rng, 2);
    const PairwiseDistribution d =
        MakeBtConsistentPairwise(inst.rewards, UniformSetMarginal(inst.rewards, 2));
    CHECK(std::abs(SpoPrefLoss(inst.policy, d, 1.0, WeightFunction::Uniform()) -
                   CrossEntropyLoss(inst.policy, d)) < 1e-12);
  }
}

TEST_CASE("gradients match finite differences") {
  Rng rng(202);
  for (int trial = 0; trial < 40; ++trial) {
    const Instance inst = RandomInstance(rng, 3);
    const auto& r = inst.rewards;
    const PairwiseDistribution pairs = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
    const BestOfNDistribution best = MakeNaryBtConsistent(r, UniformSetMarginal(r, 3), 3);
    const RankedDistribution ranked = MakePlConsistentRanked(r, UniformSetMarginal(r, 3), 3);
    for (double alpha : {0.0, 0.3, 1.0, 2.7}) {
      CAPTURE(trial);
      CAPTURE(alpha);
      const auto spo = [&](const ProbTable& p) {
        return SpoPrefLoss(p, pairs, alpha, WeightFunction::Uniform());
      };
      CHECK(FdError(spo, inst.policy,
                    SpoPrefGrad(inst.policy, pairs, alpha, WeightFunction::Uniform())) <
            1e-5);
      if (alpha == 0.0) continue;
      const auto bon = [&](const ProbTable& p) {
        return BestOfNLoss(p, best, alpha, WeightFunction::Uniform());
      };
      CHECK(FdError(bon, inst.policy,
                    BestOfNGrad(inst.policy, best, alpha, WeightFunction::Uniform())) <
            1e-5);
      const RankWeights decayed = RankWeights::Decayed(3, 0.5);
      const auto rank = [&](const ProbTable& p) {
        return RankingLoss(p, ranked, alpha, decayed);
      };
      CHECK(FdError(rank, inst.policy, RankingGrad(inst.policy, ranked, alpha, decayed)) <
            1e-5);
    }
  }
}

TEST_CASE("hessians match finite differences of the gradient") {
  Rng rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance inst = RandomInstance(rng, 3);
    const auto& r = inst.rewards;
    const PairwiseDistribution pairs = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
    const BestOfNDistribution best = MakeNaryBtConsistent(r, UniformSetMarginal(r, 3), 3);
    const RankedDistribution ranked = MakePlConsistentRanked(r, UniformSetMarginal(r, 3), 3);
    const double alpha = trial % 4 == 0 ? 0.0 : rng.Uniform(0.2, 3.0);
    const auto mu_pairs = AtomWeights(inst.policy, pairs, WeightFunction::SigmoidSum(0.5));
    const auto mu_best = AtomWeights(inst.policy, best, WeightFunction::SigmoidSum(0.5));
    const auto mu_ranked = AtomWeights(inst.policy, ranked, RankWeights::Decayed(3, 0.5));

    struct Case {
      std::function<PolicyGradient(const PolicyTable&)> grad;
      PolicyHessian hessian;
    };
    std::vector<Case> cases;
    cases.push_back({[&](const PolicyTable& p) { return SpoPrefGrad(p, pairs, alpha, mu_pairs); },
                     SpoPrefHessian(inst.policy, pairs, alpha, mu_pairs)});
    if (alpha > 0.0) {
      cases.push_back({[&](const PolicyTable& p) { return BestOfNGrad(p, best, alpha, mu_best); },
                       BestOfNHessian(inst.policy, best, alpha, mu_best)});
      cases.push_back(
          {[&](const PolicyTable& p) { return RankingGrad(p, ranked, alpha, mu_ranked); },
           RankingHessian(inst.policy, ranked, alpha, mu_ranked)});
    }
    for (const Case& c : cases) {
      for (std::size_t q = 0; q < inst.policy.size(); ++q) {
        for (std::size_t k = 0; k < inst.policy[q].size(); ++k) {
          PolicyTable plus = inst.policy;
          PolicyTable minus = inst.policy;
          plus[q][k] += 1e-6;
          minus[q][k] -= 1e-6;
          const PolicyGradient gp = c.grad(plus);
          const PolicyGradient gm = c.grad(minus);
          for (std::size_t j = 0; j < inst.policy[q].size(); ++j) {
            const double numeric = (gp[q][j] - gm[q][j]) / 2e-6;
            const double analytic = c.hessian[q](j, k);
            CHECK(std::abs(numeric - analytic) / std::max(1.0, std::abs(analytic)) < 1e-5);
          }
        }
      }
    }
  }
}

TEST_CASE("small alpha gradient approaches the alpha = 0 gradient") {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = RandomInstance(rng, 2);
    const PairwiseDistribution d =
        MakeBtConsistentPairwise(inst.rewards, UniformSetMarginal(inst.rewards, 2));
    const auto small = SpoPrefGrad(inst.policy, d, 1e-6, WeightFunction::Uniform());
    const auto zero = SpoPrefGrad(inst.policy, d, 0.0, WeightFunction::Uniform());
    CHECK(MaxRelativeError(zero, small) < 1e-4);
  }
}

TEST_CASE("sigmoid-sum weights with gamma zero reproduce the unweighted loss") {
  Rng rng(505);
  for (int trial = 0; trial < 30; ++trial) {
    const Instance inst = RandomInstance(rng, 2);
    const PairwiseDistribution d =
        MakeBtConsistentPairwise(inst.rewards, UniformSetMarginal(inst.rewards, 2));
    const double alpha = rng.Uniform(0.0, 3.0);
    const WeightFunction flat = WeightFunction::SigmoidSum(0.0);
    CHECK(SpoPrefLoss(inst.policy, d, alpha, flat) ==
          SpoPrefLoss(inst.policy, d, alpha, WeightFunction::Uniform()));
    CHECK(SpoPrefGrad(inst.policy, d, alpha, flat) ==
          SpoPrefGrad(inst.policy, d, alpha, WeightFunction::Uniform()));
  }
}

TEST_CASE("gradient does not propagate through mu") {
  const RewardTable r({{0.5, -0.3, 1.1, 0.0}});
  const PairwiseDistribution d = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
  const PolicyTable pi{{0.1, 0.2, 0.3, 0.4}};
  const WeightFunction mu = WeightFunction::SigmoidSum(1.0);
  const PolicyGradient analytic = SpoPrefGrad(pi, d, 1.0, mu);

  const auto recomputed = [&](const ProbTable& p) { return SpoPrefLoss(p, d, 1.0, mu); };
  CHECK(FdError(recomputed, pi, analytic) > 1e-3);

  const std::vector<double> frozen = AtomWeights(pi, d, mu);
  const auto fixed = [&](const ProbTable& p) { return SpoPrefLoss(p, d, 1.0, frozen); };
  CHECK(FdError(fixed, pi, analytic) < 1e-5);
}

TEST_CASE("ranking loss decomposes into best-of-k losses") {
  Rng rng(606);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = RandomInstance(rng, 3);
    const auto& r = inst.rewards;
    const RankedDistribution ranked = MakePlConsistentRanked(r, UniformSetMarginal(r, 3), 3);
    const double alpha = rng.Uniform(0.2, 3.0);
    const double mu1 = rng.Uniform(0.5, 2.0);
    const double mu2 = rng.Uniform(0.5, 2.0);
    const RankWeights weights{{mu1, mu2}, WeightFunction::Uniform()};
    const double sum =
        mu1 * BestOfNLoss(inst.policy, RankSuffixMarginal(ranked, 0), alpha,
                          WeightFunction::Uniform()) +
        mu2 * BestOfNLoss(inst.policy, RankSuffixMarginal(ranked, 1), alpha,
                          WeightFunction::Uniform());
    CHECK(std::abs(RankingLoss(inst.policy, ranked, alpha, weights) - sum) < 1e-10);
  }
}

TEST_CASE("losses are invariant to relabeling positions within a tuple") {
  const PolicyTable pi{{0.15, 0.25, 0.35, 0.25}};
  const BestOfNDistribution best({{{0, {0, 2, 3}, 1}, 1.0}}, 3, false);
  const BestOfNDistribution best_perm({{{0, {3, 0, 2}, 2}, 1.0}}, 3, false);
  CHECK(BestOfNLoss(pi, best, 0.8, WeightFunction::SigmoidSum(0.3)) ==
        doctest::Approx(BestOfNLoss(pi, best_perm, 0.8, WeightFunction::SigmoidSum(0.3)))
            .epsilon(1e-14));
  // Same ordering 3 > 0 > 2 expressed through different positions.
  const RankedDistribution ranked({{{0, {0, 2, 3}, {2, 0, 1}}, 1.0}}, 3, false);
  const RankedDistribution ranked_perm({{{0, {2, 3, 0}, {1, 2, 0}}, 1.0}}, 3, false);
  CHECK(RankingLoss(pi, ranked, 1.3, RankWeights::Decayed(3, 0.5)) ==
        doctest::Approx(RankingLoss(pi, ranked_perm, 1.3, RankWeights::Decayed(3, 0.5)))
            .epsilon(1e-14));
}

TEST_CASE("preference objective dispatch") {
  const RewardTable r = RewardTable::UniformRandom(1, 4, -2.0, 2.0, 12);
  const PairwiseDistribution pairs = MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2));
  const PolicyTable pi{{0.1, 0.2, 0.3, 0.4}};

  LossSpec spec;
  spec.family = LossFamily::kSpoWeighted;
  spec.alpha = 0.7;
  spec.gamma = 0.5;
  const PreferenceObjective weighted(spec, pairs);
  CHECK(weighted.Loss(pi) ==
        doctest::Approx(SpoPrefLoss(pi, pairs, 0.7, WeightFunction::SigmoidSum(0.5)))
            .epsilon(1e-15));
  CHECK(weighted.Gradient(pi) == SpoPrefGrad(pi, pairs, 0.7, WeightFunction::SigmoidSum(0.5)));
  CHECK(PreferenceLoss(pi, pairs, spec) == weighted.Loss(pi));

  spec.family = LossFamily::kCrossEntropy;
  const PreferenceObjective ce(spec, pairs);
  CHECK(ce.Loss(pi) == doctest::Approx(CrossEntropyLoss(pi, pairs)).epsilon(1e-13));

  spec.family = LossFamily::kBestOfN;
  CHECK(ErrorCodeOf([&] { PreferenceObjective(spec, pairs); }) ==
        ErrorCode::kPreconditionViolated);
  spec.family = LossFamily::kDpo;
  CHECK(ErrorCodeOf([&] { PreferenceObjective(spec, pairs); }) ==
        ErrorCode::kPreconditionViolated);
  CHECK(ErrorCodeOf([&] { PreferenceLoss(pi, pairs, spec); }) ==
        ErrorCode::kPreconditionViolated);
  CHECK(PreferenceLoss(pi, pairs, spec, PolicyView(pi)) ==
        doctest::Approx(kLn2).epsilon(1e-15));
}

}  // namespace
}  // namespace softpref
