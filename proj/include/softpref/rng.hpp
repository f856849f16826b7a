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

#ifndef SOFTPREF_RNG_HPP_
#define SOFTPREF_RNG_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace softpref {

// Seedable, splittable generator. The engine is std::mt19937_64, whose
// output sequence is fixed by the standard; uniform doubles and categorical
// draws are derived here rather than through <random> distributions, whose
// algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t NextU64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of precision.
  double Uniform();
  // Uniform on (0, 1].
  double UniformPositive() { return 1.0 - Uniform(); }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Index drawn with probability proportional to `weights`.
  std::size_t Categorical(std::span<const double> weights);

  // Symmetric Dirichlet(1) sample of the given dimension.
  std::vector<double> DirichletOnes(std::size_t dim);

  // An independent generator keyed by `stream`; does not advance *this.
  Rng Split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer, used to derive seeds.
std::uint64_t MixSeed(std::uint64_t value);

}  // namespace softpref

#endif  // SOFTPREF_RNG_HPP_
