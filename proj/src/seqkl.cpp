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

#include "softpref/seqkl.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "softpref/error.hpp"
#include "softpref/prefdata.hpp"
#include "softpref/rng.hpp"

namespace softpref {
namespace {

double Power(std::size_t base, std::size_t exp) {
  double out = 1.0;
  for (std::size_t i = 0; i < exp; ++i) out *= static_cast<double>(base);
  return out;
}

void CheckEnumerable(const TokenModel& model) {
  if (Power(model.alphabet_size(), model.max_length()) > kMaxEnumeration) {
    Fail(ErrorCode::kEnumerationTooLarge,
         "alphabet^max_length exceeds " + std::to_string(kMaxEnumeration));
  }
}

void CheckQuery(const TokenModel& model, std::size_t query) {
  if (query >= model.num_queries()) {
    Fail(ErrorCode::kUnknownResponse,
         "query " + std::to_string(query) + " not in token model");
  }
}

void CheckCompatible(const TokenModel& a, const TokenModel& b) {
  if (a.alphabet_size() != b.alphabet_size() ||
      a.max_length() != b.max_length() || a.num_queries() != b.num_queries()) {
    Fail(ErrorCode::kDimensionMismatch, "token models differ in shape");
  }
}

std::string TokensToString(std::span<const std::size_t> tokens) {
  std::string out;
  for (std::size_t t : tokens) {
    if (!out.empty()) out += ' ';
    out += std::to_string(t);
  }
  return out;
}

// Depth-first walk over prefixes with their theta probability. `visit`
// receives (prefix, prefix probability).
void WalkPrefixes(const TokenModel& model, std::size_t query,
                  TokenSequence& prefix, double mass,
                  const std::function<void(const TokenSequence&, double)>& visit) {
  visit(prefix, mass);
  if (prefix.size() + 1 >= model.max_length()) return;
  const Distribution& next = model.Next(query, prefix);
  for (std::size_t t = 0; t < model.terminal(); ++t) {
    if (next[t] == 0.0) continue;
    prefix.push_back(t);
    WalkPrefixes(model, query, prefix, mass * next[t], visit);
    prefix.pop_back();
  }
}

double NormalizedWeightSum(const SampleBatch& batch) {
  double total = 0.0;
  for (const auto& e : batch.entries) {
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
      Fail(ErrorCode::kPreconditionViolated, "batch weights must be >= 0");
    }
    total += e.weight;
  }
  if (batch.entries.empty() || !(total > 0.0)) {
    Fail(ErrorCode::kEmptyInput, "batch has no weight");
  }
  return total;
}

}  // namespace

TokenModel::TokenModel(std::size_t alphabet_size, std::size_t max_length,
                       std::vector<std::vector<Distribution>> rows)
    : alphabet_size_(alphabet_size),
      max_length_(max_length),
      num_prefixes_(0),
      rows_(std::move(rows)) {
  if (alphabet_size < 2) {
    Fail(ErrorCode::kPreconditionViolated, "alphabet needs a terminal and one token");
  }
  if (max_length < 1) Fail(ErrorCode::kPreconditionViolated, "max_length must be >= 1");
  if (rows_.empty()) Fail(ErrorCode::kEmptyInput, "token model has no queries");
  CheckEnumerable(*this);
  const std::size_t m = alphabet_size - 1;
  std::size_t level = 1;
  for (std::size_t len = 0; len < max_length; ++len) {
    num_prefixes_ += level;
    level *= m;
  }
  for (const auto& q : rows_) {
    if (q.size() != num_prefixes_) {
      Fail(ErrorCode::kDimensionMismatch,
           "expected " + std::to_string(num_prefixes_) + " prefix rows, got " +
               std::to_string(q.size()));
    }
    for (const auto& row : q) {
      if (row.size() != alphabet_size) {
        Fail(ErrorCode::kDimensionMismatch, "next-token row has wrong size");
      }
    }
  }
}

TokenModel TokenModel::FromLogits(
    std::size_t alphabet_size, std::size_t max_length,
    const std::vector<std::vector<std::vector<double>>>& logits) {
  std::vector<std::vector<Distribution>> rows;
  for (const auto& q : logits) {
    rows.emplace_back();
    for (const auto& l : q) rows.back().push_back(SoftmaxScaled(l, 1.0));
  }
  return TokenModel(alphabet_size, max_length, std::move(rows));
}

TokenModel TokenModel::Random(std::size_t num_queries,
                              std::size_t alphabet_size,
                              std::size_t max_length, std::uint64_t seed,
                              double floor) {
  if (alphabet_size < 2 || max_length < 1 || num_queries < 1) {
    Fail(ErrorCode::kPreconditionViolated, "invalid token model shape");
  }
  if (Power(alphabet_size, max_length) > kMaxEnumeration) {
    Fail(ErrorCode::kEnumerationTooLarge, "token model too large");
  }
  std::size_t prefixes = 0;
  std::size_t level = 1;
  for (std::size_t len = 0; len < max_length; ++len) {
    prefixes += level;
    level *= alphabet_size - 1;
  }
  Rng rng(seed);
  std::vector<std::vector<Distribution>> rows(num_queries);
  for (auto& q : rows) {
    for (std::size_t p = 0; p < prefixes; ++p) {
      q.emplace_back(FloorAndRenormalize(rng.DirichletOnes(alphabet_size), floor));
    }
  }
  return TokenModel(alphabet_size, max_length, std::move(rows));
}

std::size_t TokenModel::PrefixIndex(std::span<const std::size_t> prefix) const {
  if (prefix.size() >= max_length_) {
    Fail(ErrorCode::kInvalidSequence, "prefix reaches max_length");
  }
  const std::size_t m = alphabet_size_ - 1;
  std::size_t offset = 0;
  std::size_t level = 1;
  for (std::size_t len = 0; len < prefix.size(); ++len) {
    offset += level;
    level *= m;
  }
  std::size_t digits = 0;
  for (std::size_t t : prefix) {
    if (t >= m) {
      Fail(ErrorCode::kInvalidSequence,
           "prefix token " + std::to_string(t) + " is terminal or out of range");
    }
    digits = digits * m + t;
  }
  return offset + digits;
}

TokenSequence TokenModel::PrefixAt(std::size_t index) const {
  if (index >= num_prefixes_) {
    Fail(ErrorCode::kInvalidSequence, "prefix index out of range");
  }
  const std::size_t m = alphabet_size_ - 1;
  std::size_t len = 0;
  std::size_t level = 1;
  while (index >= level) {
    index -= level;
    level *= m;
    ++len;
  }
  TokenSequence out(len);
  for (std::size_t i = len; i-- > 0;) {
    out[i] = index % m;
    index /= m;
  }
  return out;
}

const Distribution& TokenModel::Next(std::size_t query,
                                     std::span<const std::size_t> prefix) const {
  return Row(query, PrefixIndex(prefix));
}

const Distribution& TokenModel::Row(std::size_t query,
                                    std::size_t prefix_index) const {
  CheckQuery(*this, query);
  return rows_[query].at(prefix_index);
}

void TokenModel::CheckSequence(std::span<const std::size_t> sequence) const {
  if (sequence.empty() || sequence.size() > max_length_) {
    Fail(ErrorCode::kInvalidSequence,
         "sequence length " + std::to_string(sequence.size()) +
             " outside 1.." + std::to_string(max_length_));
  }
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const std::size_t t = sequence[i];
    if (t >= alphabet_size_) {
      Fail(ErrorCode::kInvalidSequence, "token " + std::to_string(t) + " not in alphabet");
    }
    if (t == terminal() && i + 1 != sequence.size()) {
      Fail(ErrorCode::kInvalidSequence, "terminal token before the end");
    }
  }
  if (sequence.back() != terminal() && sequence.size() != max_length_) {
    Fail(ErrorCode::kInvalidSequence,
         "sequence [" + TokensToString(sequence) + "] is not complete");
  }
}

std::vector<SequenceProb> EnumerateSequences(const TokenModel& model,
                                             std::size_t query) {
  CheckQuery(model, query);
  std::vector<SequenceProb> out;
  TokenSequence seq;
  std::function<void(double)> walk = [&](double mass) {
    const Distribution& next = model.Next(query, seq);
    for (std::size_t t = 0; t < model.alphabet_size(); ++t) {
      seq.push_back(t);
      const double p = mass * next[t];
      if (t == model.terminal() || seq.size() == model.max_length()) {
        out.push_back({seq, p});
      } else {
        walk(p);
      }
      seq.pop_back();
    }
  };
  walk(1.0);
  return out;
}

double SequenceLogProb(const TokenModel& model, std::size_t query,
                       std::span<const std::size_t> sequence) {
  CheckQuery(model, query);
  model.CheckSequence(sequence);
  double total = 0.0;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    total += std::log(model.Next(query, sequence.first(i))[sequence[i]]);
  }
  return total;
}

SampleBatch SampleSequences(const TokenModel& model, std::size_t query,
                            std::size_t count, std::uint64_t seed,
                            std::size_t generation_step) {
  CheckQuery(model, query);
  if (count < 1) Fail(ErrorCode::kPreconditionViolated, "count must be >= 1");
  Rng rng(seed);
  SampleBatch batch;
  batch.generation_step = generation_step;
  batch.entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    TokenSequence seq;
    while (true) {
      const std::size_t t = rng.Categorical(model.Next(query, seq).probs());
      seq.push_back(t);
      if (t == model.terminal() || seq.size() == model.max_length()) break;
    }
    batch.entries.push_back({query, std::move(seq), 1.0});
  }
  return batch;
}

SampleBatch ExhaustiveBatch(const TokenModel& model, std::size_t query,
                            std::size_t generation_step) {
  SampleBatch batch;
  batch.generation_step = generation_step;
  for (auto& s : EnumerateSequences(model, query)) {
    if (s.prob > 0.0) batch.entries.push_back({query, std::move(s.tokens), s.prob});
  }
  return batch;
}

double TokenwiseKlEstimate(const TokenModel& theta, const TokenModel& ref,
                           const SampleBatch& batch) {
  CheckCompatible(theta, ref);
  const double total_weight = NormalizedWeightSum(batch);
  double total = 0.0;
  for (const auto& e : batch.entries) {
    theta.CheckSequence(e.tokens);
    const std::span<const std::size_t> tokens(e.tokens);
    double sum = 0.0;
    for (std::size_t tau = 0; tau < tokens.size(); ++tau) {
      const std::size_t idx = theta.PrefixIndex(tokens.first(tau));
      sum += KlDivergence(theta.Row(e.query, idx), ref.Row(e.query, idx));
    }
    total += e.weight * sum;
  }
  return std::max(0.0, total / total_weight);
}

double NaiveSequenceKlEstimate(const TokenModel& theta, const TokenModel& ref,
                               const SampleBatch& batch) {
  CheckCompatible(theta, ref);
  const double total_weight = NormalizedWeightSum(batch);
  double total = 0.0;
  for (const auto& e : batch.entries) {
    const double lp = SequenceLogProb(theta, e.query, e.tokens);
    const double lr = SequenceLogProb(ref, e.query, e.tokens);
    if (std::isinf(lr) && !std::isinf(lp)) {
      Fail(ErrorCode::kSupportViolation, "reference gives a sampled sequence zero mass");
    }
    total += e.weight * (lp - lr);
  }
  return total / total_weight;
}

double ExactTokenwiseKl(const TokenModel& theta, const TokenModel& ref,
                        std::size_t query) {
  CheckCompatible(theta, ref);
  CheckQuery(theta, query);
  double total = 0.0;
  TokenSequence prefix;
  WalkPrefixes(theta, query, prefix, 1.0,
               [&](const TokenSequence& p, double mass) {
                 if (mass == 0.0) return;
                 total += mass * KlDivergence(theta.Next(query, p),
                                              ref.Next(query, p));
               });
  return std::max(0.0, total);
}

double ExactSequenceKl(const TokenModel& theta, const TokenModel& ref,
                       std::size_t query) {
  CheckCompatible(theta, ref);
  const auto p = EnumerateSequences(theta, query);
  const auto q = EnumerateSequences(ref, query);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].prob == 0.0) continue;
    if (q[i].prob == 0.0) {
      Fail(ErrorCode::kSupportViolation,
           "reference gives [" + TokensToString(p[i].tokens) + "] zero mass");
    }
    total += p[i].prob * std::log(p[i].prob / q[i].prob);
  }
  return std::max(0.0, total);
}

std::vector<StalenessRecord> StalenessBiasProbe(
    std::span<const TokenModel> trajectory, const TokenModel& ref,
    std::size_t query, std::size_t refresh_period, std::size_t batch_size,
    std::uint64_t seed) {
  if (trajectory.empty()) Fail(ErrorCode::kEmptyInput, "empty trajectory");
  if (refresh_period < 1) {
    Fail(ErrorCode::kPreconditionViolated, "refresh period must be >= 1");
  }
  const Rng root(seed);
  std::vector<StalenessRecord> out;
  SampleBatch batch;
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const TokenModel& theta = trajectory[t];
    if (t % refresh_period == 0) {
      batch = batch_size == 0
                  ? ExhaustiveBatch(theta, query, t)
                  : SampleSequences(theta, query, batch_size,
                                    root.Split(t).seed(), t);
    }
    StalenessRecord rec;
    rec.step = t;
    rec.batch_step = batch.generation_step;
    rec.estimate = TokenwiseKlEstimate(theta, ref, batch);
    rec.exact_current_kl = ExactSequenceKl(theta, ref, query);
    rec.gap = rec.estimate - rec.exact_current_kl;
    out.push_back(rec);
  }
  return out;
}

std::vector<double> SequencePolicyRow(const TokenModel& model,
                                      std::size_t query) {
  std::vector<double> out;
  for (const auto& s : EnumerateSequences(model, query)) out.push_back(s.prob);
  return out;
}

OnlineTrainingResult RunOnlineTraining(const TokenModel& init,
                                       const TokenModel& ref,
                                       std::span<const double> sequence_rewards,
                                       const OnlineTrainingConfig& config) {
  CheckCompatible(init, ref);
  if (init.num_queries() != 1) {
    Fail(ErrorCode::kPreconditionViolated, "online training uses one query");
  }
  if (config.refresh_period < 1 || config.batch_size < 1) {
    Fail(ErrorCode::kInvalidConfig, "refresh period and batch size must be >= 1");
  }
  if (!(config.learning_rate > 0.0) || !(config.beta >= 0.0)) {
    Fail(ErrorCode::kInvalidConfig, "learning rate must be > 0, beta >= 0");
  }
  const std::vector<SequenceProb> shape = EnumerateSequences(init, 0);
  if (sequence_rewards.size() != shape.size()) {
    Fail(ErrorCode::kDimensionMismatch,
         "expected " + std::to_string(shape.size()) + " sequence rewards");
  }
  const RewardTable rewards(
      {std::vector<double>(sequence_rewards.begin(), sequence_rewards.end())});
  const PairwiseDistribution prefs =
      MakeBtConsistentPairwise(rewards, UniformSetMarginal(rewards, 2));
  const WeightFunction uniform = WeightFunction::Uniform();

  const std::size_t s = init.alphabet_size();
  std::vector<std::vector<double>> logits(init.num_prefixes(),
                                          std::vector<double>(s));
  for (std::size_t k = 0; k < init.num_prefixes(); ++k) {
    for (std::size_t t = 0; t < s; ++t) {
      const double p = init.Row(0, k)[t];
      if (!(p > 0.0)) {
        Fail(ErrorCode::kBoundaryPolicy, "initial model needs full support");
      }
      logits[k][t] = std::log(p);
    }
  }

  const Rng root(config.seed);
  OnlineTrainingResult result{init, {}};
  SampleBatch batch;
  std::vector<std::vector<double>> grad(init.num_prefixes(),
                                        std::vector<double>(s));
  for (std::size_t step = 0; step <= config.steps; ++step) {
    const TokenModel model = TokenModel::FromLogits(s, init.max_length(), {logits});
    if (step % config.refresh_period == 0) {
      batch = SampleSequences(model, 0, config.batch_size,
                              root.Split(step).seed(), step);
    }
    const PolicyTable policy{SequencePolicyRow(model, 0)};
    OnlineTrainingRecord rec;
    rec.step = step;
    rec.pref_loss = SpoPrefLoss(policy, prefs, config.alpha, uniform);
    rec.kl_estimate = TokenwiseKlEstimate(model, ref, batch);
    rec.kl_exact = ExactSequenceKl(model, ref, 0);
    rec.objective = rec.pref_loss + config.beta * rec.kl_exact;
    result.records.push_back(rec);
    result.final_model = model;
    if (step == config.steps) break;

    for (auto& row : grad) std::fill(row.begin(), row.end(), 0.0);
    // Preference term: d/dlogit of L(P) through d log P(y) / d logit.
    const std::vector<double> g_seq =
        SpoPrefGrad(policy, prefs, config.alpha, uniform)[0];
    for (std::size_t j = 0; j < shape.size(); ++j) {
      const double coeff = g_seq[j] * policy[0][j];
      const std::span<const std::size_t> tokens(shape[j].tokens);
      for (std::size_t tau = 0; tau < tokens.size(); ++tau) {
        const std::size_t k = model.PrefixIndex(tokens.first(tau));
        const Distribution& row = model.Row(0, k);
        for (std::size_t t = 0; t < s; ++t) {
          grad[k][t] += coeff * ((t == tokens[tau] ? 1.0 : 0.0) - row[t]);
        }
      }
    }
    // KL term: the batch is held fixed; each visited prefix contributes the
    // gradient of its conditional KL.
    double total_weight = 0.0;
    for (const auto& e : batch.entries) total_weight += e.weight;
    for (const auto& e : batch.entries) {
      const double w = config.beta * e.weight / total_weight;
      const std::span<const std::size_t> tokens(e.tokens);
      for (std::size_t tau = 0; tau < tokens.size(); ++tau) {
        const std::size_t k = model.PrefixIndex(tokens.first(tau));
        const Distribution& p = model.Row(0, k);
        const Distribution& r = ref.Row(0, k);
        const double kl = KlDivergence(p, r);
        for (std::size_t t = 0; t < s; ++t) {
          grad[k][t] += w * p[t] * (std::log(p[t] / r[t]) - kl);
        }
      }
    }
    for (std::size_t k = 0; k < logits.size(); ++k) {
      for (std::size_t t = 0; t < s; ++t) logits[k][t] -= config.learning_rate * grad[k][t];
    }
  }
  return result;
}

}  // namespace softpref
