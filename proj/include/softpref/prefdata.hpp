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

// Ground-truth reward tables and exact synthesis of preference
// distributions that are consistent with Bradley-Terry (pairwise and n-ary)
// or Plackett-Luce (ranked) models.

#ifndef SOFTPREF_PREFDATA_HPP_
#define SOFTPREF_PREFDATA_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace softpref {

// Latent rewards r(y|x). Queries are indexed 0..Q-1 and carry a name used
// by the text and JSON formats; responses are indexed 0..n_x-1 per query.
class RewardTable {
 public:
  // Empty `names` generates "q0", "q1", ...
  explicit RewardTable(std::vector<std::vector<double>> rewards,
                       std::vector<std::string> names = {});

  // Q queries with `num_responses` rewards each, drawn uniformly from
  // [lo, hi).
  static RewardTable UniformRandom(std::size_t num_queries,
                                   std::size_t num_responses, double lo,
                                   double hi, std::uint64_t seed);

  std::size_t num_queries() const { return rewards_.size(); }
  std::size_t num_responses(std::size_t query) const;
  std::span<const double> rewards(std::size_t query) const;
  double reward(std::size_t query, std::size_t response) const;
  const std::string& name(std::size_t query) const;
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const RewardTable&) const = default;

 private:
  std::vector<std::vector<double>> rewards_;
  std::vector<std::string> names_;
};

struct PairwiseTuple {
  std::size_t query = 0;
  std::size_t winner = 0;
  std::size_t loser = 0;

  bool operator==(const PairwiseTuple&) const = default;
};

// `best` is a zero-based position into `responses`.
struct BestOfNTuple {
  std::size_t query = 0;
  std::vector<std::size_t> responses;
  std::size_t best = 0;

  bool operator==(const BestOfNTuple&) const = default;
};

// `ranking[k]` is the position in `responses` of the k-th best response
// (zero-based), so responses[ranking[0]] is preferred to all others.
struct RankedTuple {
  std::size_t query = 0;
  std::vector<std::size_t> responses;
  std::vector<std::size_t> ranking;

  // Response ids from best to worst.
  std::vector<std::size_t> Ordered() const;

  bool operator==(const RankedTuple&) const = default;
};

enum class PreferenceKind { kPairwise, kBestOfN, kRanked };

template <typename Tuple>
struct Atom {
  Tuple tuple;
  double weight = 0.0;

  bool operator==(const Atom&) const = default;
};

// Exact weights over preference tuples. Weights are positive and sum to one
// within 1e-12; `full_support` records that every tuple of the declared
// space carries mass.
template <typename Tuple>
class PreferenceDistribution {
 public:
  PreferenceDistribution(std::vector<Atom<Tuple>> atoms, std::size_t arity,
                         bool full_support);

  static constexpr PreferenceKind kind();

  const std::vector<Atom<Tuple>>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  std::size_t arity() const { return arity_; }
  bool full_support() const { return full_support_; }

  bool operator==(const PreferenceDistribution&) const = default;

 private:
  std::vector<Atom<Tuple>> atoms_;
  std::size_t arity_;
  bool full_support_;
};

using PairwiseDistribution = PreferenceDistribution<PairwiseTuple>;
using BestOfNDistribution = PreferenceDistribution<BestOfNTuple>;
using RankedDistribution = PreferenceDistribution<RankedTuple>;

template <>
constexpr PreferenceKind PairwiseDistribution::kind() {
  return PreferenceKind::kPairwise;
}
template <>
constexpr PreferenceKind BestOfNDistribution::kind() {
  return PreferenceKind::kBestOfN;
}
template <>
constexpr PreferenceKind RankedDistribution::kind() {
  return PreferenceKind::kRanked;
}

const char* PreferenceKindName(PreferenceKind kind);

using AnyPreferenceDistribution =
    std::variant<PairwiseDistribution, BestOfNDistribution, RankedDistribution>;

// Mass assigned to one unordered response set of one query.
struct ResponseSetWeight {
  std::size_t query = 0;
  std::vector<std::size_t> responses;
  double weight = 0.0;
};
using SetMarginal = std::vector<ResponseSetWeight>;

// Uniform mass over every unordered `n`-subset of every query with at least
// `n` responses.
SetMarginal UniformSetMarginal(const RewardTable& rewards, std::size_t n);

// sigma(r(y1|x) - r(y2|x)). The two orderings sum to exactly one.
double BtPreferenceProb(const RewardTable& rewards, std::size_t query,
                        std::size_t y1, std::size_t y2);

// Plackett-Luce probability of the ranking y_1 > ... > y_n.
double PlRankingProb(const RewardTable& rewards, std::size_t query,
                     std::span<const std::size_t> ordered);

// Splits each pair's mass between its two orderings in BT proportion. The
// marginal must cover every unordered pair of every query with positive
// weight; it is normalized to total mass one.
PairwiseDistribution MakeBtConsistentPairwise(const RewardTable& rewards,
                                              const SetMarginal& marginal);

// Distributes each n-set's mass over the best position proportionally to
// exp(r). Responses inside a tuple are stored in increasing id order.
BestOfNDistribution MakeNaryBtConsistent(const RewardTable& rewards,
                                         const SetMarginal& marginal,
                                         std::size_t n);

// Distributes each n-set's mass over all n! rankings in proportion to the
// Plackett-Luce probability.
RankedDistribution MakePlConsistentRanked(const RewardTable& rewards,
                                          const SetMarginal& marginal,
                                          std::size_t n);

// Best-of-(n-k) distribution over the suffixes that remain after removing
// the top `k` ranks (k = 0 keeps the full list). The best response of a
// suffix is the highest-ranked one it contains. Total mass is preserved.
BestOfNDistribution RankSuffixMarginal(const RankedDistribution& dist,
                                       std::size_t k);

// Checks every tuple of `dist` against the table's query/response ranges.
template <typename Tuple>
void ValidateAgainst(const PreferenceDistribution<Tuple>& dist,
                     const RewardTable& rewards);

// I.i.d. draws from the atom weights.
template <typename Tuple>
std::vector<Tuple> SampleDataset(const PreferenceDistribution<Tuple>& dist,
                                 std::size_t count, std::uint64_t seed);

}  // namespace softpref

#endif  // SOFTPREF_PREFDATA_HPP_
