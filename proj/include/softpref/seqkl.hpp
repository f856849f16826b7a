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

// A tabular autoregressive token model over a small alphabet, exact
// sequence-level and token-wise KL by enumeration, the sampled token-wise
// estimator, and a replay of the periodic batch refresh used for online
// KL estimation.
//
// Token s - 1 is the terminal token. A sequence ends at the terminal token
// or after max_length tokens, whichever comes first. Prefixes are strings
// of non-terminal tokens of length 0 .. max_length - 1.

#ifndef SOFTPREF_SEQKL_HPP_
#define SOFTPREF_SEQKL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "softpref/losses.hpp"
#include "softpref/simplex.hpp"

namespace softpref {

using TokenSequence = std::vector<std::size_t>;

// Complete-sequence enumerations above this size are refused.
inline constexpr double kMaxEnumeration = 1e6;

class TokenModel {
 public:
  // rows[query][prefix index] is the next-token distribution, rows ordered
  // as PrefixIndex enumerates them.
  TokenModel(std::size_t alphabet_size, std::size_t max_length,
             std::vector<std::vector<Distribution>> rows);

  // Each next-token row is softmax(logits[query][prefix]).
  static TokenModel FromLogits(
      std::size_t alphabet_size, std::size_t max_length,
      const std::vector<std::vector<std::vector<double>>>& logits);
  // Dirichlet(1) rows, floored at `floor` so every token has support.
  static TokenModel Random(std::size_t num_queries, std::size_t alphabet_size,
                           std::size_t max_length, std::uint64_t seed,
                           double floor = 1e-3);

  std::size_t num_queries() const { return rows_.size(); }
  std::size_t alphabet_size() const { return alphabet_size_; }
  std::size_t max_length() const { return max_length_; }
  std::size_t terminal() const { return alphabet_size_ - 1; }
  std::size_t num_prefixes() const { return num_prefixes_; }

  // Index of a prefix of non-terminal tokens with length < max_length.
  std::size_t PrefixIndex(std::span<const std::size_t> prefix) const;
  // Inverse of PrefixIndex.
  TokenSequence PrefixAt(std::size_t index) const;

  const Distribution& Next(std::size_t query,
                           std::span<const std::size_t> prefix) const;
  const Distribution& Row(std::size_t query, std::size_t prefix_index) const;

  // Throws InvalidSequence unless `sequence` is complete and well formed.
  void CheckSequence(std::span<const std::size_t> sequence) const;

  bool operator==(const TokenModel&) const = default;

 private:
  std::size_t alphabet_size_;
  std::size_t max_length_;
  std::size_t num_prefixes_;
  std::vector<std::vector<Distribution>> rows_;
};

struct SequenceProb {
  TokenSequence tokens;
  double prob = 0.0;
};

// Every complete sequence in canonical order (depth first, token order),
// including zero-probability ones.
std::vector<SequenceProb> EnumerateSequences(const TokenModel& model,
                                             std::size_t query);

double SequenceLogProb(const TokenModel& model, std::size_t query,
                       std::span<const std::size_t> sequence);

struct SampleBatch {
  struct Entry {
    std::size_t query = 0;
    TokenSequence tokens;
    // Estimates are weighted means; sampled entries carry equal weight.
    double weight = 1.0;
  };
  std::vector<Entry> entries;
  std::size_t generation_step = 0;
};

// I.i.d. ancestral samples.
SampleBatch SampleSequences(const TokenModel& model, std::size_t query,
                            std::size_t count, std::uint64_t seed,
                            std::size_t generation_step = 0);

// Every positive-probability sequence weighted by its probability: the
// infinite-batch limit of SampleSequences.
SampleBatch ExhaustiveBatch(const TokenModel& model, std::size_t query,
                            std::size_t generation_step = 0);

// Weighted batch mean of sum over tau of KL(theta(.|y_<tau) || ref(.|y_<tau)).
double TokenwiseKlEstimate(const TokenModel& theta, const TokenModel& ref,
                           const SampleBatch& batch);

// Weighted batch mean of log P_theta(y) - log P_ref(y).
double NaiveSequenceKlEstimate(const TokenModel& theta, const TokenModel& ref,
                               const SampleBatch& batch);

// E_{y ~ theta} of the token-wise summand.
double ExactTokenwiseKl(const TokenModel& theta, const TokenModel& ref,
                        std::size_t query);

// KL(P_theta || P_ref) over complete sequences.
double ExactSequenceKl(const TokenModel& theta, const TokenModel& ref,
                       std::size_t query);

struct StalenessRecord {
  std::size_t step = 0;
  // Step at which the batch in use was drawn.
  std::size_t batch_step = 0;
  double estimate = 0.0;
  double exact_current_kl = 0.0;
  double gap = 0.0;
};

// Replays the refresh schedule: a new batch from theta_t whenever t is a
// multiple of `refresh_period`, otherwise the previous batch is reused.
// batch_size == 0 uses ExhaustiveBatch.
std::vector<StalenessRecord> StalenessBiasProbe(
    std::span<const TokenModel> trajectory, const TokenModel& ref,
    std::size_t query, std::size_t refresh_period, std::size_t batch_size,
    std::uint64_t seed);

// The sequence distribution of one query as a policy row, in
// EnumerateSequences order.
std::vector<double> SequencePolicyRow(const TokenModel& model,
                                      std::size_t query);

struct OnlineTrainingConfig {
  double alpha = 1.0;
  double beta = 0.1;
  double learning_rate = 0.5;
  std::size_t steps = 200;
  std::size_t refresh_period = 8;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct OnlineTrainingRecord {
  std::size_t step = 0;
  double pref_loss = 0.0;
  double kl_estimate = 0.0;
  double kl_exact = 0.0;
  // pref_loss + beta * kl_exact.
  double objective = 0.0;
};

struct OnlineTrainingResult {
  TokenModel final_model;
  std::vector<OnlineTrainingRecord> records;
};

// Gradient descent on the logits of a single-query model for the SPO
// preference loss over complete sequences plus beta times the token-wise
// KL estimate, with the batch refreshed every refresh_period steps.
// `sequence_rewards` follows EnumerateSequences order.
OnlineTrainingResult RunOnlineTraining(const TokenModel& init,
                                       const TokenModel& ref,
                                       std::span<const double> sequence_rewards,
                                       const OnlineTrainingConfig& config);

}  // namespace softpref

#endif  // SOFTPREF_SEQKL_HPP_
