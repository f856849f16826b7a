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

#include "softpref/rng.hpp"

#include <cmath>

#include "softpref/error.hpp"

namespace softpref {

std::uint64_t MixSeed(std::uint64_t value) {
  value += 0x9e3779b97f4a7c15ULL;
  value = (value ^ (value >> 30)) * 0xbf58476d1ce4e5b9ULL;
  value = (value ^ (value >> 27)) * 0x94d049bb133111ebULL;
  return value ^ (value >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(MixSeed(seed)) {}

double Rng::Uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::Categorical(std::span<const double> weights) {
  if (weights.empty()) Fail(ErrorCode::kEmptyInput, "no categories");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) Fail(ErrorCode::kZeroMass, "weights sum to zero");
  const double u = Uniform() * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cumulative += weights[i];
    if (u < cumulative) return i;
  }
  // u landed in the rounding gap at the top; return the last positive entry.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

std::vector<double> Rng::DirichletOnes(std::size_t dim) {
  std::vector<double> out(dim);
  double total = 0.0;
  for (double& x : out) {
    x = -std::log(UniformPositive());
    total += x;
  }
  for (double& x : out) x /= total;
  return out;
}

Rng Rng::Split(std::uint64_t stream) const {
  return Rng(MixSeed(seed_ ^ MixSeed(stream + 0x632be59bd9b4e019ULL)));
}

}  // namespace softpref
