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

// Brute-force reference computations: central finite differences, exhaustive
// grid search over products of simplices, and exact expectations over
// preference atoms. Nothing here calls into the closed-form gradient code.

#ifndef SOFTPREF_ORACLE_HPP_
#define SOFTPREF_ORACLE_HPP_

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "softpref/prefdata.hpp"

namespace softpref {

// One probability row per query.
using ProbTable = std::vector<std::vector<double>>;
using TableEvaluator = std::function<double(const ProbTable&)>;

inline constexpr double kDefaultFiniteDifferenceStep = 1e-6;
// Upper bound on the number of points GridMinimize and friends will visit.
inline constexpr std::size_t kMaxGridPoints = 20'000'000;

// Central differences of `f` in every entry of `point`, holding the others
// fixed (no renormalization). Requires every entry > h.
ProbTable FiniteDifferenceGrad(const TableEvaluator& f, const ProbTable& point,
                               double h = kDefaultFiniteDifferenceStep);

// Largest |a - b| / max(1, |a|) over all entries.
double MaxRelativeError(const ProbTable& analytic, const ProbTable& numeric);

struct GridSpec {
  // Points are k / resolution with integer k.
  std::size_t resolution = 100;
  // Points with any coordinate below `margin` are skipped.
  double margin = 1e-12;

  void Validate() const;
};

// All points of {k / resolution} on the simplex of dimension size - 1 with
// every coordinate >= margin, in lexicographic order of k.
std::vector<std::vector<double>> SimplexGrid(std::size_t size,
                                             const GridSpec& grid);

// Calls `visit` on every point of the product grid over simplices of the
// given sizes. At most two factors of at most four responses each.
void ForEachGridPoint(std::span<const std::size_t> sizes, const GridSpec& grid,
                      const std::function<void(const ProbTable&)>& visit);

struct GridMinimum {
  ProbTable argmin;
  double value = 0.0;
};

// Exhaustive minimization; ties keep the first point in visiting order.
GridMinimum GridMinimize(const TableEvaluator& f,
                         std::span<const std::size_t> sizes,
                         const GridSpec& grid);

// sum over atoms of weight * f(tuple).
template <typename Tuple>
double ExhaustiveExpectation(const std::function<double(const Tuple&)>& f,
                             const PreferenceDistribution<Tuple>& dist) {
  double total = 0.0;
  for (const auto& atom : dist.atoms()) total += atom.weight * f(atom.tuple);
  return total;
}

}  // namespace softpref

#endif  // SOFTPREF_ORACLE_HPP_
