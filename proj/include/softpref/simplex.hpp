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

// Probability-simplex primitives: validated distributions, scaled softmax,
// Euclidean projection onto the simplex and the usual divergences.

#ifndef SOFTPREF_SIMPLEX_HPP_
#define SOFTPREF_SIMPLEX_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace softpref {

// Entries within this distance of summing to one are accepted as is.
inline constexpr double kNormalizationTolerance = 1e-12;
// Deviations up to this size are silently renormalized; larger ones throw.
inline constexpr double kRenormalizationLimit = 1e-9;

// A probability vector over at least two outcomes. Immutable once built.
class Distribution {
 public:
  // Validates `probs`: finite, nonnegative, size >= 2 and summing to one
  // (renormalizing when the deviation is below kRenormalizationLimit).
  explicit Distribution(std::vector<double> probs);

  static Distribution Uniform(std::size_t size);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& vector() const { return probs_; }

  auto begin() const { return probs_.begin(); }
  auto end() const { return probs_.end(); }

  bool operator==(const Distribution&) const = default;

 private:
  std::vector<double> probs_;
};

// Softmax(scores / alpha). alpha == 0 yields the argmax indicator and
// requires a unique maximum.
Distribution SoftmaxScaled(std::span<const double> scores, double alpha);

// Euclidean projection onto the probability simplex (sort and threshold).
// Points already on the simplex are returned unchanged.
Distribution ProjectToSimplex(std::span<const double> v);

// Raw form of the projection without the Distribution size requirement.
std::vector<double> ProjectToSimplexRaw(std::span<const double> v);

double EuclideanDistance(std::span<const double> a, std::span<const double> b);
double EuclideanDistance(const Distribution& a, const Distribution& b);

double MaxAbsDifference(std::span<const double> a, std::span<const double> b);

// D_KL(p || q) with 0 ln(0/q) = 0. Throws SupportViolation when p > 0 = q.
double KlDivergence(std::span<const double> p, std::span<const double> q);
double KlDivergence(const Distribution& p, const Distribution& q);

// Raises entries below `floor` to `floor`, then renormalizes.
std::vector<double> FloorAndRenormalize(std::span<const double> v,
                                        double floor);

// The indicator of `index` in dimension `size`, floored at `floor`.
Distribution FlooredVertex(std::size_t size, std::size_t index, double floor);

}  // namespace softpref

#endif  // SOFTPREF_SIMPLEX_HPP_
