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

#include "softpref/prefdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>

#include "softpref/error.hpp"
#include "softpref/rng.hpp"
#include "softpref/simplex.hpp"

namespace softpref {
namespace {

constexpr double kWeightSumTolerance = 1e-12;

void CheckResponse(const RewardTable& rewards, std::size_t query,
                   std::size_t response) {
  if (query >= rewards.num_queries()) {
    Fail(ErrorCode::kUnknownResponse,
         "query " + std::to_string(query) + " out of range");
  }
  if (response >= rewards.num_responses(query)) {
    Fail(ErrorCode::kUnknownResponse,
         "response " + std::to_string(response) + " out of range for query " +
             std::to_string(query));
  }
}

void CheckDistinct(std::span<const std::size_t> ids) {
  std::set<std::size_t> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) {
    Fail(ErrorCode::kDuplicateResponse, "responses must be distinct");
  }
}

bool IsPermutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> sorted(perm.begin(), perm.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) return false;
  }
  return true;
}

void ValidateTuple(const PairwiseTuple& t, std::size_t arity) {
  if (arity != 2) Fail(ErrorCode::kPreconditionViolated, "pairwise arity is 2");
  if (t.winner == t.loser) {
    Fail(ErrorCode::kSameResponse, "winner equals loser");
  }
}

void ValidateTuple(const BestOfNTuple& t, std::size_t arity) {
  if (t.responses.size() != arity || arity < 2) {
    Fail(ErrorCode::kPreconditionViolated, "tuple size differs from arity");
  }
  CheckDistinct(t.responses);
  if (t.best >= arity) {
    Fail(ErrorCode::kPreconditionViolated, "best index out of range");
  }
}

void ValidateTuple(const RankedTuple& t, std::size_t arity) {
  if (t.responses.size() != arity || t.ranking.size() != arity || arity < 2) {
    Fail(ErrorCode::kPreconditionViolated, "tuple size differs from arity");
  }
  CheckDistinct(t.responses);
  if (!IsPermutation(t.ranking)) {
    Fail(ErrorCode::kPreconditionViolated, "ranking is not a permutation");
  }
}

// log(exp(a_1) + ... + exp(a_m)).
double LogSumExp(std::span<const double> values) {
  const double max_value = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max_value);
  return max_value + std::log(sum);
}

// Validated, canonicalized (sorted) copy of the marginal with total mass 1.
// Requires every n-subset of every query with >= n responses to appear once.
SetMarginal NormalizeMarginal(const RewardTable& rewards,
                              const SetMarginal& marginal, std::size_t n) {
  if (n < 2) Fail(ErrorCode::kPreconditionViolated, "arity must be >= 2");
  if (marginal.empty()) Fail(ErrorCode::kZeroMarginal, "empty marginal");
  SetMarginal out;
  out.reserve(marginal.size());
  std::set<std::pair<std::size_t, std::vector<std::size_t>>> seen;
  double total = 0.0;
  for (const ResponseSetWeight& entry : marginal) {
    if (entry.responses.size() != n) {
      Fail(ErrorCode::kPreconditionViolated,
           "marginal set of size " + std::to_string(entry.responses.size()) +
               " for arity " + std::to_string(n));
    }
    for (std::size_t y : entry.responses) CheckResponse(rewards, entry.query, y);
    CheckDistinct(entry.responses);
    if (!(entry.weight > 0.0) || !std::isfinite(entry.weight)) {
      Fail(ErrorCode::kZeroMarginal, "marginal weights must be positive");
    }
    ResponseSetWeight canonical = entry;
    std::sort(canonical.responses.begin(), canonical.responses.end());
    if (!seen.emplace(canonical.query, canonical.responses).second) {
      Fail(ErrorCode::kPreconditionViolated, "response set listed twice");
    }
    total += canonical.weight;
    out.push_back(std::move(canonical));
  }
  // Full support: count the sets each query should have.
  std::map<std::size_t, std::size_t> per_query;
  for (const auto& entry : out) ++per_query[entry.query];
  for (std::size_t q = 0; q < rewards.num_queries(); ++q) {
    const std::size_t m = rewards.num_responses(q);
    if (m < n) continue;
    double expected = 1.0;  // C(m, n)
    for (std::size_t i = 0; i < n; ++i) {
      expected = expected * static_cast<double>(m - i) / static_cast<double>(i + 1);
    }
    if (static_cast<double>(per_query[q]) != std::round(expected)) {
      Fail(ErrorCode::kZeroMarginal,
           "marginal misses response sets of query " + std::to_string(q));
    }
  }
  for (auto& entry : out) entry.weight /= total;
  return out;
}

template <typename Tuple>
PreferenceDistribution<Tuple> Finish(std::vector<Atom<Tuple>> atoms,
                                     std::size_t arity) {
  // Renormalize away rounding so the weights sum to one as tightly as
  // possible.
  double total = 0.0;
  for (const auto& atom : atoms) total += atom.weight;
  for (auto& atom : atoms) atom.weight /= total;
  return PreferenceDistribution<Tuple>(std::move(atoms), arity, true);
}

}  // namespace

RewardTable::RewardTable(std::vector<std::vector<double>> rewards,
                         std::vector<std::string> names)
    : rewards_(std::move(rewards)), names_(std::move(names)) {
  if (rewards_.empty()) Fail(ErrorCode::kEmptyInput, "no queries");
  if (names_.empty()) {
    for (std::size_t q = 0; q < rewards_.size(); ++q) {
      names_.push_back("q" + std::to_string(q));
    }
  }
  if (names_.size() != rewards_.size()) {
    Fail(ErrorCode::kDimensionMismatch, "one name per query is required");
  }
  std::set<std::string> unique_names;
  for (const std::string& name : names_) {
    if (name.empty() ||
        name.find_first_of(" \t\r\n") != std::string::npos) {
      Fail(ErrorCode::kPreconditionViolated,
           "query names must be nonempty and free of whitespace");
    }
    if (!unique_names.insert(name).second) {
      Fail(ErrorCode::kPreconditionViolated, "duplicate query name " + name);
    }
  }
  for (const auto& row : rewards_) {
    if (row.size() < 2) {
      Fail(ErrorCode::kPreconditionViolated,
           "every query needs at least two responses");
    }
    for (double r : row) {
      if (!std::isfinite(r)) {
        Fail(ErrorCode::kPreconditionViolated, "rewards must be finite");
      }
    }
  }
}

RewardTable RewardTable::UniformRandom(std::size_t num_queries,
                                       std::size_t num_responses, double lo,
                                       double hi, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rewards(num_queries);
  for (auto& row : rewards) {
    row.resize(num_responses);
    for (double& r : row) r = rng.Uniform(lo, hi);
  }
  return RewardTable(std::move(rewards));
}

std::size_t RewardTable::num_responses(std::size_t query) const {
  return rewards_.at(query).size();
}

std::span<const double> RewardTable::rewards(std::size_t query) const {
  return rewards_.at(query);
}

double RewardTable::reward(std::size_t query, std::size_t response) const {
  CheckResponse(*this, query, response);
  return rewards_[query][response];
}

const std::string& RewardTable::name(std::size_t query) const {
  return names_.at(query);
}

std::vector<std::size_t> RankedTuple::Ordered() const {
  std::vector<std::size_t> out;
  out.reserve(ranking.size());
  for (std::size_t position : ranking) out.push_back(responses.at(position));
  return out;
}

template <typename Tuple>
PreferenceDistribution<Tuple>::PreferenceDistribution(
    std::vector<Atom<Tuple>> atoms, std::size_t arity, bool full_support)
    : atoms_(std::move(atoms)), arity_(arity), full_support_(full_support) {
  if (atoms_.empty()) Fail(ErrorCode::kEmptyInput, "no atoms");
  double total = 0.0;
  for (const auto& atom : atoms_) {
    ValidateTuple(atom.tuple, arity_);
    if (!(atom.weight > 0.0) || !std::isfinite(atom.weight)) {
      Fail(ErrorCode::kInvalidDistribution, "atom weights must be positive");
    }
    total += atom.weight;
  }
  if (std::abs(total - 1.0) > kWeightSumTolerance) {
    Fail(ErrorCode::kInvalidDistribution,
         "atom weights sum to " + std::to_string(total));
  }
}

template class PreferenceDistribution<PairwiseTuple>;
template class PreferenceDistribution<BestOfNTuple>;
template class PreferenceDistribution<RankedTuple>;

const char* PreferenceKindName(PreferenceKind kind) {
  switch (kind) {
    case PreferenceKind::kPairwise: return "pairwise";
    case PreferenceKind::kBestOfN: return "best_of_n";
    case PreferenceKind::kRanked: return "ranked";
  }
  return "unknown";
}

SetMarginal UniformSetMarginal(const RewardTable& rewards, std::size_t n) {
  if (n < 2) Fail(ErrorCode::kPreconditionViolated, "arity must be >= 2");
  SetMarginal out;
  for (std::size_t q = 0; q < rewards.num_queries(); ++q) {
    const std::size_t m = rewards.num_responses(q);
    if (m < n) continue;
    // Enumerate n-subsets in lexicographic order via a selection mask.
    std::vector<bool> mask(m, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n), true);
    do {
      ResponseSetWeight entry;
      entry.query = q;
      for (std::size_t y = 0; y < m; ++y) {
        if (mask[y]) entry.responses.push_back(y);
      }
      entry.weight = 1.0;
      out.push_back(std::move(entry));
    } while (std::prev_permutation(mask.begin(), mask.end()));
  }
  if (out.empty()) {
    Fail(ErrorCode::kZeroMarginal, "no query has enough responses");
  }
  const double each = 1.0 / static_cast<double>(out.size());
  for (auto& entry : out) entry.weight = each;
  return out;
}

double BtPreferenceProb(const RewardTable& rewards, std::size_t query,
                        std::size_t y1, std::size_t y2) {
  CheckResponse(rewards, query, y1);
  CheckResponse(rewards, query, y2);
  if (y1 == y2) Fail(ErrorCode::kSameResponse, "y1 equals y2");
  const double diff = rewards.reward(query, y1) - rewards.reward(query, y2);
  // Evaluate the larger side directly and take the complement for the
  // smaller one: p + (1 - p) == 1 holds exactly for p in [0.5, 1].
  if (diff >= 0.0) return 1.0 / (1.0 + std::exp(-diff));
  return 1.0 - 1.0 / (1.0 + std::exp(diff));
}

double PlRankingProb(const RewardTable& rewards, std::size_t query,
                     std::span<const std::size_t> ordered) {
  if (ordered.size() < 2) {
    Fail(ErrorCode::kPreconditionViolated, "a ranking needs two responses");
  }
  for (std::size_t y : ordered) CheckResponse(rewards, query, y);
  CheckDistinct(ordered);
  std::vector<double> tail;
  double log_prob = 0.0;
  for (std::size_t k = 0; k + 1 < ordered.size(); ++k) {
    tail.clear();
    for (std::size_t i = k; i < ordered.size(); ++i) {
      tail.push_back(rewards.reward(query, ordered[i]));
    }
    log_prob += tail.front() - LogSumExp(tail);
  }
  return std::exp(log_prob);
}

PairwiseDistribution MakeBtConsistentPairwise(const RewardTable& rewards,
                                              const SetMarginal& marginal) {
  const SetMarginal normalized = NormalizeMarginal(rewards, marginal, 2);
  std::vector<Atom<PairwiseTuple>> atoms;
  atoms.reserve(2 * normalized.size());
  for (const auto& entry : normalized) {
    const std::size_t a = entry.responses[0];
    const std::size_t b = entry.responses[1];
    const double forward = BtPreferenceProb(rewards, entry.query, a, b);
    const double backward = BtPreferenceProb(rewards, entry.query, b, a);
    atoms.push_back({{entry.query, a, b}, entry.weight * forward});
    atoms.push_back({{entry.query, b, a}, entry.weight * backward});
  }
  return Finish(std::move(atoms), 2);
}

BestOfNDistribution MakeNaryBtConsistent(const RewardTable& rewards,
                                         const SetMarginal& marginal,
                                         std::size_t n) {
  const SetMarginal normalized = NormalizeMarginal(rewards, marginal, n);
  std::vector<Atom<BestOfNTuple>> atoms;
  std::vector<double> scores(n);
  for (const auto& entry : normalized) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rewards.reward(entry.query, entry.responses[i]);
    }
    const Distribution best = SoftmaxScaled(scores, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      atoms.push_back({{entry.query, entry.responses, i}, entry.weight * best[i]});
    }
  }
  return Finish(std::move(atoms), n);
}

RankedDistribution MakePlConsistentRanked(const RewardTable& rewards,
                                          const SetMarginal& marginal,
                                          std::size_t n) {
  const SetMarginal normalized = NormalizeMarginal(rewards, marginal, n);
  std::vector<Atom<RankedTuple>> atoms;
  std::vector<std::size_t> ranking(n);
  for (const auto& entry : normalized) {
    std::iota(ranking.begin(), ranking.end(), std::size_t{0});
    do {
      RankedTuple tuple{entry.query, entry.responses, ranking};
      const std::vector<std::size_t> ordered = tuple.Ordered();
      const double prob = PlRankingProb(rewards, entry.query, ordered);
      atoms.push_back({std::move(tuple), entry.weight * prob});
    } while (std::next_permutation(ranking.begin(), ranking.end()));
  }
  return Finish(std::move(atoms), n);
}

BestOfNDistribution RankSuffixMarginal(const RankedDistribution& dist,
                                       std::size_t k) {
  const std::size_t n = dist.arity();
  if (k + 2 > n) {
    Fail(ErrorCode::kPreconditionViolated,
         "suffix after " + std::to_string(k) + " ranks has fewer than 2 items");
  }
  // Keyed by (query, sorted suffix, best position) in first-seen order.
  std::map<std::tuple<std::size_t, std::vector<std::size_t>, std::size_t>,
           std::size_t>
      index;
  std::vector<Atom<BestOfNTuple>> atoms;
  for (const auto& atom : dist.atoms()) {
    const std::vector<std::size_t> ordered = atom.tuple.Ordered();
    std::vector<std::size_t> suffix(ordered.begin() + static_cast<std::ptrdiff_t>(k),
                                    ordered.end());
    const std::size_t top = suffix.front();
    std::sort(suffix.begin(), suffix.end());
    const std::size_t best = static_cast<std::size_t>(
        std::find(suffix.begin(), suffix.end(), top) - suffix.begin());
    auto key = std::make_tuple(atom.tuple.query, suffix, best);
    auto [it, inserted] = index.emplace(key, atoms.size());
    if (inserted) {
      atoms.push_back({{atom.tuple.query, std::move(suffix), best}, 0.0});
    }
    atoms[it->second].weight += atom.weight;
  }
  return BestOfNDistribution(std::move(atoms), n - k, dist.full_support());
}

namespace {

void ValidateIds(const PairwiseTuple& t, const RewardTable& rewards) {
  CheckResponse(rewards, t.query, t.winner);
  CheckResponse(rewards, t.query, t.loser);
}

void ValidateIds(const BestOfNTuple& t, const RewardTable& rewards) {
  for (std::size_t y : t.responses) CheckResponse(rewards, t.query, y);
}

void ValidateIds(const RankedTuple& t, const RewardTable& rewards) {
  for (std::size_t y : t.responses) CheckResponse(rewards, t.query, y);
}

}  // namespace

template <typename Tuple>
void ValidateAgainst(const PreferenceDistribution<Tuple>& dist,
                     const RewardTable& rewards) {
  for (const auto& atom : dist.atoms()) ValidateIds(atom.tuple, rewards);
}

template <typename Tuple>
std::vector<Tuple> SampleDataset(const PreferenceDistribution<Tuple>& dist,
                                 std::size_t count, std::uint64_t seed) {
  if (count == 0) Fail(ErrorCode::kPreconditionViolated, "count must be >= 1");
  std::vector<double> cumulative;
  cumulative.reserve(dist.size());
  double total = 0.0;
  for (const auto& atom : dist.atoms()) {
    total += atom.weight;
    cumulative.push_back(total);
  }
  Rng rng(seed);
  std::vector<Tuple> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = rng.Uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    out.push_back(dist.atoms()[static_cast<std::size_t>(it - cumulative.begin())].tuple);
  }
  return out;
}

template void ValidateAgainst(const PairwiseDistribution&, const RewardTable&);
template void ValidateAgainst(const BestOfNDistribution&, const RewardTable&);
template void ValidateAgainst(const RankedDistribution&, const RewardTable&);
template std::vector<PairwiseTuple> SampleDataset(const PairwiseDistribution&,
                                                  std::size_t, std::uint64_t);
template std::vector<BestOfNTuple> SampleDataset(const BestOfNDistribution&,
                                                 std::size_t, std::uint64_t);
template std::vector<RankedTuple> SampleDataset(const RankedDistribution&,
                                                std::size_t, std::uint64_t);

}  // namespace softpref
