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

#include "softpref/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "softpref/error.hpp"

namespace softpref {
namespace {

void CheckSameSize(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    Fail(ErrorCode::kDimensionMismatch,
         "sizes " + std::to_string(a.size()) + " and " +
             std::to_string(b.size()));
  }
}

bool OnSimplex(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) {
    if (!(x >= 0.0) || !std::isfinite(x)) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= kNormalizationTolerance;
}

}  // namespace

Distribution::Distribution(std::vector<double> probs)
    : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    Fail(ErrorCode::kInvalidDistribution,
         "a distribution needs at least two outcomes");
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) {
      Fail(ErrorCode::kInvalidDistribution,
           "entry " + std::to_string(p) + " is negative or not finite");
    }
    sum += p;
  }
  const double deviation = std::abs(sum - 1.0);
  if (deviation <= kNormalizationTolerance) return;
  if (deviation > kRenormalizationLimit) {
    Fail(ErrorCode::kInvalidDistribution,
         "entries sum to " + std::to_string(sum));
  }
  for (double& p : probs_) p /= sum;
}

Distribution Distribution::Uniform(std::size_t size) {
  return Distribution(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

Distribution SoftmaxScaled(std::span<const double> scores, double alpha) {
  if (scores.empty()) Fail(ErrorCode::kEmptyInput, "no scores");
  if (!(alpha >= 0.0)) {
    Fail(ErrorCode::kPreconditionViolated, "alpha must be nonnegative");
  }
  const auto max_it = std::max_element(scores.begin(), scores.end());
  const double max_score = *max_it;
  std::vector<double> out(scores.size(), 0.0);
  if (alpha == 0.0) {
    if (std::count(scores.begin(), scores.end(), max_score) > 1) {
      Fail(ErrorCode::kTiedArgmax, "maximum score is not unique");
    }
    out[static_cast<std::size_t>(max_it - scores.begin())] = 1.0;
    return Distribution(std::move(out));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - max_score) / alpha);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return Distribution(std::move(out));
}

std::vector<double> ProjectToSimplexRaw(std::span<const double> v) {
  if (v.empty()) Fail(ErrorCode::kEmptyInput, "cannot project an empty vector");
  for (double x : v) {
    if (!std::isfinite(x)) {
      Fail(ErrorCode::kPreconditionViolated, "nonfinite input to projection");
    }
  }
  if (OnSimplex(v)) return {v.begin(), v.end()};

  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double threshold = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) threshold = candidate;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::max(v[i] - threshold, 0.0);
  }
  return out;
}

Distribution ProjectToSimplex(std::span<const double> v) {
  return Distribution(ProjectToSimplexRaw(v));
}

double EuclideanDistance(std::span<const double> a, std::span<const double> b) {
  CheckSameSize(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

double EuclideanDistance(const Distribution& a, const Distribution& b) {
  return EuclideanDistance(a.probs(), b.probs());
}

double MaxAbsDifference(std::span<const double> a, std::span<const double> b) {
  CheckSameSize(a, b);
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out = std::max(out, std::abs(a[i] - b[i]));
  }
  return out;
}

double KlDivergence(std::span<const double> p, std::span<const double> q) {
  CheckSameSize(p, q);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] <= 0.0) {
      Fail(ErrorCode::kSupportViolation,
           "q vanishes at index " + std::to_string(i) + " where p > 0");
    }
    sum += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can leave a tiny negative value when p == q up to ulps.
  return std::max(sum, 0.0);
}

double KlDivergence(const Distribution& p, const Distribution& q) {
  return KlDivergence(p.probs(), q.probs());
}

std::vector<double> FloorAndRenormalize(std::span<const double> v,
                                        double floor) {
  const std::size_t n = v.size();
  if (n == 0) Fail(ErrorCode::kEmptyInput, "nothing to floor");
  if (!(floor >= 0.0) || floor * static_cast<double>(n) >= 1.0) {
    Fail(ErrorCode::kPreconditionViolated, "floor must be below 1/size");
  }
  // Pinned entries sit exactly at the floor; the rest share the remaining
  // mass in proportion to their input values. Pinning is monotone, so the
  // loop runs at most n times.
  std::vector<bool> pinned(n, false);
  std::vector<double> out(v.begin(), v.end());
  for (std::size_t round = 0; round <= n; ++round) {
    std::size_t num_pinned = 0;
    double free_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!pinned[i] && v[i] < floor) pinned[i] = true;
      if (pinned[i]) {
        ++num_pinned;
      } else {
        free_total += v[i];
      }
    }
    if (num_pinned == 0) {
      const double total = std::accumulate(out.begin(), out.end(), 0.0);
      if (std::abs(total - 1.0) > kNormalizationTolerance) {
        for (double& x : out) x /= total;
      }
      return out;
    }
    const double free_mass = 1.0 - static_cast<double>(num_pinned) * floor;
    bool stable = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (pinned[i]) {
        out[i] = floor;
      } else {
        out[i] = v[i] * free_mass / free_total;
        if (out[i] < floor) stable = false;
      }
    }
    if (stable) return out;
    for (std::size_t i = 0; i < n; ++i) {
      if (!pinned[i] && out[i] < floor) pinned[i] = true;
    }
    // Re-run with the enlarged pinned set; `v` is consulted only for the
    // relative sizes of the free entries.
  }
  return out;
}

Distribution FlooredVertex(std::size_t size, std::size_t index, double floor) {
  std::vector<double> vertex(size, 0.0);
  vertex.at(index) = 1.0;
  return Distribution(FloorAndRenormalize(vertex, floor));
}

}  // namespace softpref
