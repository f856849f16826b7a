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
#include <cstddef>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "softpref/error.hpp"
#include "softpref/rng.hpp"
#include "softpref/simplex.hpp"
#include "test_util.hpp"

namespace softpref {
namespace {

using testing::ErrorCodeOf;
using Rows = std::vector<std::vector<Distribution>>;

// One query; rows listed in PrefixIndex order.
TokenModel Model(std::size_t s, std::size_t len,
                 std::vector<std::vector<double>> rows) {
  std::vector<Distribution> dists;
  for (auto& row : rows) dists.emplace_back(std::move(row));
  return TokenModel(s, len, Rows{dists});
}

// Relabels non-terminal tokens by `perm` (old -> new) in both the
// sequences and the next-token rows.
TokenModel Relabel(const TokenModel& model, const std::vector<std::size_t>& perm) {
  const std::size_t s = model.alphabet_size();
  std::vector<std::size_t> inverse(s);
  for (std::size_t i = 0; i < s; ++i) inverse[perm[i]] = i;
  std::vector<Distribution> rows;
  for (std::size_t p = 0; p < model.num_prefixes(); ++p) {
    TokenSequence prefix = model.PrefixAt(p);
    for (auto& t : prefix) t = inverse[t];
    const Distribution& old = model.Row(0, model.PrefixIndex(prefix));
    std::vector<double> row(s);
    for (std::size_t i = 0; i < s; ++i) row[perm[i]] = old[i];
    rows.emplace_back(row);
  }
  return TokenModel(s, model.max_length(), Rows{rows});
}

TEST_CASE("prefix indexing round trips") {
  const TokenModel m = TokenModel::Random(2, 3, 4, 1);
  CHECK(m.num_prefixes() == 1 + 2 + 4 + 8);
  for (std::size_t p = 0; p < m.num_prefixes(); ++p) {
    CHECK(m.PrefixIndex(m.PrefixAt(p)) == p);
  }
  CHECK(m.PrefixIndex(std::vector<std::size_t>{}) == 0);
  CHECK(ErrorCodeOf([&] { m.PrefixIndex(std::vector<std::size_t>{0, 2}); }) ==
        ErrorCode::kInvalidSequence);
  CHECK(ErrorCodeOf([&] { m.PrefixIndex(std::vector<std::size_t>{0, 0, 0, 0}); }) ==
        ErrorCode::kInvalidSequence);
}

TEST_CASE("sequence validation") {
  const TokenModel m = TokenModel::Random(1, 3, 3, 2);
  m.CheckSequence(std::vector<std::size_t>{2});
  m.CheckSequence(std::vector<std::size_t>{0, 1, 2});
  m.CheckSequence(std::vector<std::size_t>{0, 1, 1});
  for (const std::vector<std::size_t>& bad :
       {std::vector<std::size_t>{}, {0, 1}, {2, 0}, {0, 3}, {0, 0, 0, 2}}) {
    CHECK(ErrorCodeOf([&] { m.CheckSequence(bad); }) == ErrorCode::kInvalidSequence);
  }
  CHECK(ErrorCodeOf([] { TokenModel::Random(1, 11, 6, 1); }) ==
        ErrorCode::kEnumerationTooLarge);
}

TEST_CASE("sequence_log_prob") {
  const TokenModel one = Model(4, 1, {{0.25, 0.25, 0.25, 0.25}});
  CHECK(SequenceLogProb(one, 0, std::vector<std::size_t>{0}) ==
        doctest::Approx(std::log(0.25)).epsilon(1e-15));

  const TokenModel det = Model(2, 2, {{1.0, 0.0}, {0.0, 1.0}});
  CHECK(SequenceLogProb(det, 0, std::vector<std::size_t>{0, 1}) == 0.0);

  const TokenModel two = Model(3, 2, {{0.5, 0.3, 0.2}, {0.1, 0.4, 0.5}, {0.3, 0.3, 0.4}});
  CHECK(SequenceLogProb(two, 0, std::vector<std::size_t>{0, 1}) ==
        doctest::Approx(std::log(0.2)).epsilon(1e-14));
}

TEST_CASE("enumeration covers all probability") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const TokenModel m = TokenModel::Random(1, 3, 4, seed);
    const auto seqs = EnumerateSequences(m, 0);
    double total = 0.0;
    for (const auto& s : seqs) total += s.prob;
    CHECK(std::abs(total - 1.0) < 1e-10);
    // 3 tokens, length <= 4: 1 + 2 + 4 + 8 terminated plus 16 full length.
    CHECK(seqs.size() == 31);
  }
}

TEST_CASE("sample_sequences") {
  const TokenModel det = Model(2, 2, {{1.0, 0.0}, {0.0, 1.0}});
  const SampleBatch batch = SampleSequences(det, 0, 5, 3);
  REQUIRE(batch.entries.size() == 5);
  for (const auto& e : batch.entries) CHECK(e.tokens == TokenSequence{0, 1});

  const TokenModel m = TokenModel::Random(1, 3, 3, 4);
  const SampleBatch a = SampleSequences(m, 0, 100, 9, 4);
  const SampleBatch b = SampleSequences(m, 0, 100, 9, 4);
  CHECK(a.generation_step == 4);
  for (std::size_t i = 0; i < 100; ++i) CHECK(a.entries[i].tokens == b.entries[i].tokens);

  const TokenModel coin = Model(2, 3, {{0.3, 0.7}, {0.5, 0.5}, {0.5, 0.5}});
  const SampleBatch big = SampleSequences(coin, 0, 100000, 12);
  std::size_t starts_with_a = 0;
  for (const auto& e : big.entries) starts_with_a += e.tokens.front() == 0;
  CHECK(std::abs(static_cast<double>(starts_with_a) / 100000.0 - 0.3) < 0.01);
}

TEST_CASE("tokenwise_kl_estimate") {
  const TokenModel theta = TokenModel::Random(1, 3, 3, 5);
  const TokenModel ref = TokenModel::Random(1, 3, 3, 6);
  const SampleBatch batch = SampleSequences(theta, 0, 20, 1);
  CHECK(TokenwiseKlEstimate(theta, theta, batch) == 0.0);

  const TokenModel p = Model(2, 1, {{0.5, 0.5}});
  const TokenModel q = Model(2, 1, {{0.25, 0.75}});
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3);
  for (std::uint64_t seed : {1, 2}) {
    CHECK(TokenwiseKlEstimate(p, q, SampleSequences(p, 0, 7, seed)) ==
          doctest::Approx(expected).epsilon(1e-14));
  }

  // Averaging over every possible batch is the exhaustive batch.
  CHECK(TokenwiseKlEstimate(theta, ref, ExhaustiveBatch(theta, 0)) ==
        doctest::Approx(ExactTokenwiseKl(theta, ref, 0)).epsilon(1e-13));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(TokenwiseKlEstimate(theta, ref, SampleSequences(theta, 0, 8, seed)) >= 0.0);
  }
}

TEST_CASE("exact kl oracles") {
  const TokenModel a = TokenModel::Random(1, 3, 3, 7);
  CHECK(ExactTokenwiseKl(a, a, 0) == 0.0);
  CHECK(ExactSequenceKl(a, a, 0) == 0.0);

  const TokenModel p = Model(3, 1, {{0.2, 0.5, 0.3}});
  const TokenModel q = Model(3, 1, {{0.4, 0.4, 0.2}});
  const double plain = KlDivergence(p.Row(0, 0), q.Row(0, 0));
  CHECK(ExactTokenwiseKl(p, q, 0) == doctest::Approx(plain).epsilon(1e-14));
  CHECK(ExactSequenceKl(p, q, 0) == doctest::Approx(plain).epsilon(1e-14));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const TokenModel t2 = TokenModel::Random(1, 2, 2, 100 + seed);
    const TokenModel r2 = TokenModel::Random(1, 2, 2, 200 + seed);
    CHECK(std::abs(ExactTokenwiseKl(t2, r2, 0) - ExactSequenceKl(t2, r2, 0)) < 1e-10);
    const TokenModel t3 = TokenModel::Random(1, 3, 3, 300 + seed);
    const TokenModel r3 = TokenModel::Random(1, 3, 3, 400 + seed);
    const double seq = ExactSequenceKl(t3, r3, 0);
    CHECK(seq > 0.0);
    CHECK(std::abs(ExactTokenwiseKl(t3, r3, 0) - seq) < 1e-10);
  }
}

TEST_CASE("exact kl is invariant to relabeling the alphabet") {
  const TokenModel theta = TokenModel::Random(1, 4, 3, 8);
  const TokenModel ref = TokenModel::Random(1, 4, 3, 9);
  const std::vector<std::size_t> perm{2, 0, 1, 3};
  const TokenModel theta_p = Relabel(theta, perm);
  const TokenModel ref_p = Relabel(ref, perm);
  CHECK(ExactSequenceKl(theta_p, ref_p, 0) ==
        doctest::Approx(ExactSequenceKl(theta, ref, 0)).epsilon(1e-13));
  CHECK(ExactTokenwiseKl(theta_p, ref_p, 0) ==
        doctest::Approx(ExactTokenwiseKl(theta, ref, 0)).epsilon(1e-13));
}

TEST_CASE("tokenwise estimator has lower variance than the naive one") {
  const TokenModel theta = TokenModel::Random(1, 3, 3, 21);
  const TokenModel ref = TokenModel::Random(1, 3, 3, 22);
  std::vector<double> tok, naive;
  for (std::uint64_t b = 0; b < 1000; ++b) {
    const SampleBatch batch = SampleSequences(theta, 0, 16, 5000 + b);
    tok.push_back(TokenwiseKlEstimate(theta, ref, batch));
    naive.push_back(NaiveSequenceKlEstimate(theta, ref, batch));
  }
  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  const auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  };
  CHECK(var(tok) < var(naive));
  const double exact = ExactSequenceKl(theta, ref, 0);
  CHECK(std::abs(mean(tok) - exact) < 3.0 * std::sqrt(var(tok) / 1000.0));
}

TEST_CASE("staleness_bias_probe") {
  std::vector<TokenModel> moving;
  for (std::uint64_t t = 0; t < 16; ++t) moving.push_back(TokenModel::Random(1, 3, 3, 40 + t));
  const TokenModel ref = TokenModel::Random(1, 3, 3, 99);

  for (const auto& rec : StalenessBiasProbe(moving, ref, 0, 1, 0, 1)) {
    CHECK(std::abs(rec.gap) < 1e-12);
    CHECK(rec.batch_step == rec.step);
  }

  const auto stale = StalenessBiasProbe(moving, ref, 0, 8, 0, 1);
  double between = 0.0;
  for (const auto& rec : stale) {
    CHECK(rec.batch_step == rec.step - rec.step % 8);
    if (rec.step % 8 == 0) {
      CHECK(std::abs(rec.gap) < 1e-12);
    } else {
      between += std::abs(rec.gap);
    }
  }
  CHECK(between > 1e-3);

  // Constant trajectory: only sampling noise, shrinking with the batch.
  const std::vector<TokenModel> still(16, moving.front());
  const auto mean_abs_gap = [&](std::size_t batch_size) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      for (const auto& rec : StalenessBiasProbe(still, ref, 0, 1, batch_size, seed)) {
        total += rec.gap;
      }
    }
    return std::abs(total) / 160.0;
  };
  CHECK(mean_abs_gap(4096) < mean_abs_gap(8));
  CHECK(mean_abs_gap(4096) < 5e-3);

  CHECK(ErrorCodeOf([&] { StalenessBiasProbe({}, ref, 0, 1, 0, 1); }) ==
        ErrorCode::kEmptyInput);
  CHECK(ErrorCodeOf([&] { StalenessBiasProbe(moving, ref, 0, 0, 0, 1); }) ==
        ErrorCode::kPreconditionViolated);
}

TEST_CASE("sequence policy row") {
  const TokenModel m = TokenModel::Random(1, 3, 2, 13);
  const auto row = SequencePolicyRow(m, 0);
  const auto seqs = EnumerateSequences(m, 0);
  REQUIRE(row.size() == seqs.size());
  for (std::size_t i = 0; i < row.size(); ++i) CHECK(row[i] == seqs[i].prob);
}

TEST_CASE("online training lowers the objective") {
  const TokenModel init = TokenModel::Random(1, 3, 3, 14);
  const TokenModel ref = TokenModel::Random(1, 3, 3, 15);
  Rng rng(16);
  std::vector<double> rewards(EnumerateSequences(init, 0).size());
  for (double& r : rewards) r = rng.Uniform(-2.0, 2.0);
  OnlineTrainingConfig config;
  config.steps = 60;
  const OnlineTrainingResult a = RunOnlineTraining(init, ref, rewards, config);
  REQUIRE(a.records.size() == 61);
  CHECK(a.records.front().step == 0);
  CHECK(a.records.back().objective < a.records.front().objective);
  for (const auto& rec : a.records) CHECK(rec.kl_exact >= 0.0);
  const OnlineTrainingResult b = RunOnlineTraining(init, ref, rewards, config);
  CHECK(a.final_model == b.final_model);

  CHECK(ErrorCodeOf([&] {
          RunOnlineTraining(init, ref, std::vector<double>{1.0}, config);
        }) == ErrorCode::kDimensionMismatch);
}

}  // namespace
}  // namespace softpref
