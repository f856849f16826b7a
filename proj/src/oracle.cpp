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

#include "softpref/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "softpref/error.hpp"

namespace softpref {

ProbTable FiniteDifferenceGrad(const TableEvaluator& f, const ProbTable& point,
                               double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    Fail(ErrorCode::kPreconditionViolated, "finite-difference step must be > 0");
  }
  for (const auto& row : point) {
    for (double p : row) {
      if (!(p > h)) {
        Fail(ErrorCode::kBoundaryTooClose,
             "entry " + std::to_string(p) + " within h of the boundary");
      }
    }
  }
  ProbTable grad(point.size());
  ProbTable work = point;
  for (std::size_t q = 0; q < point.size(); ++q) {
    grad[q].resize(point[q].size());
    for (std::size_t i = 0; i < point[q].size(); ++i) {
      const double x = point[q][i];
      work[q][i] = x + h;
      const double up = f(work);
      work[q][i] = x - h;
      const double down = f(work);
      work[q][i] = x;
      grad[q][i] = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

double MaxRelativeError(const ProbTable& analytic, const ProbTable& numeric) {
  if (analytic.size() != numeric.size()) {
    Fail(ErrorCode::kDimensionMismatch, "tables differ in query count");
  }
  double worst = 0.0;
  for (std::size_t q = 0; q < analytic.size(); ++q) {
    if (analytic[q].size() != numeric[q].size()) {
      Fail(ErrorCode::kDimensionMismatch, "tables differ in row length");
    }
    for (std::size_t i = 0; i < analytic[q].size(); ++i) {
      const double a = analytic[q][i];
      worst = std::max(worst, std::abs(a - numeric[q][i]) /
                                  std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

void GridSpec::Validate() const {
  if (resolution < 3) {
    Fail(ErrorCode::kPreconditionViolated, "grid resolution must be >= 3");
  }
  if (!(margin > 0.0)) {
    Fail(ErrorCode::kPreconditionViolated, "grid margin must be > 0");
  }
}

namespace {

void Compositions(std::size_t remaining_parts, std::size_t remaining_units,
                  std::size_t min_units, std::vector<std::size_t>& prefix,
                  std::vector<std::vector<std::size_t>>& out) {
  if (remaining_parts == 1) {
    if (remaining_units >= min_units) {
      prefix.push_back(remaining_units);
      out.push_back(prefix);
      prefix.pop_back();
    }
    return;
  }
  for (std::size_t k = min_units;
       k + min_units * (remaining_parts - 1) <= remaining_units; ++k) {
    prefix.push_back(k);
    Compositions(remaining_parts - 1, remaining_units - k, min_units, prefix,
                 out);
    prefix.pop_back();
  }
}

std::size_t CountPoints(std::size_t size, std::size_t resolution) {
  // C(resolution + size - 1, size - 1), saturating.
  double count = 1.0;
  for (std::size_t i = 1; i < size; ++i) {
    count = count * static_cast<double>(resolution + i) / static_cast<double>(i);
  }
  return count > 1e18 ? static_cast<std::size_t>(1e18)
                      : static_cast<std::size_t>(count);
}

void CheckShape(std::span<const std::size_t> sizes, const GridSpec& grid) {
  grid.Validate();
  if (sizes.empty() || sizes.size() > 2) {
    Fail(ErrorCode::kGridTooLarge, "grid search supports one or two queries");
  }
  double total = 1.0;
  for (std::size_t size : sizes) {
    if (size < 2 || size > 4) {
      Fail(ErrorCode::kGridTooLarge,
           "grid search supports 2 to 4 responses per query");
    }
    total *= static_cast<double>(CountPoints(size, grid.resolution));
  }
  if (total > static_cast<double>(kMaxGridPoints)) {
    Fail(ErrorCode::kGridTooLarge,
         "grid has more than " + std::to_string(kMaxGridPoints) + " points");
  }
}

}  // namespace

std::vector<std::vector<double>> SimplexGrid(std::size_t size,
                                             const GridSpec& grid) {
  grid.Validate();
  if (size < 2) Fail(ErrorCode::kPreconditionViolated, "size must be >= 2");
  if (CountPoints(size, grid.resolution) > kMaxGridPoints) {
    Fail(ErrorCode::kGridTooLarge, "simplex grid too large");
  }
  const auto res = static_cast<double>(grid.resolution);
  const auto min_units =
      static_cast<std::size_t>(std::ceil(grid.margin * res - 1e-9));
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> prefix;
  Compositions(size, grid.resolution, min_units,
               prefix, comps);
  std::vector<std::vector<double>> points;
  points.reserve(comps.size());
  for (const auto& c : comps) {
    std::vector<double> p(size);
    bool inside = true;
    for (std::size_t i = 0; i < size; ++i) {
      p[i] = static_cast<double>(c[i]) / res;
      if (p[i] < grid.margin) inside = false;
    }
    if (inside) points.push_back(std::move(p));
  }
  return points;
}

void ForEachGridPoint(std::span<const std::size_t> sizes, const GridSpec& grid,
                      const std::function<void(const ProbTable&)>& visit) {
  CheckShape(sizes, grid);
  const auto first = SimplexGrid(sizes[0], grid);
  ProbTable point(sizes.size());
  if (sizes.size() == 1) {
    for (const auto& p : first) {
      point[0] = p;
      visit(point);
    }
    return;
  }
  const auto second = SimplexGrid(sizes[1], grid);
  for (const auto& p : first) {
    point[0] = p;
    for (const auto& r : second) {
      point[1] = r;
      visit(point);
    }
  }
}

GridMinimum GridMinimize(const TableEvaluator& f,
                         std::span<const std::size_t> sizes,
                         const GridSpec& grid) {
  GridMinimum best;
  bool found = false;
  ForEachGridPoint(sizes, grid, [&](const ProbTable& point) {
    const double value = f(point);
    if (!found || value < best.value) {
      best.value = value;
      best.argmin = point;
      found = true;
    }
  });
  if (!found) Fail(ErrorCode::kEmptyInput, "grid has no interior points");
  return best;
}

}  // namespace softpref
