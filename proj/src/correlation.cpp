/*
 * Copyright 2026 The BMX Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "bmx/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "bmx/common.hpp"

namespace bmx {
namespace {

void CheckSizes(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("correlation inputs differ in length");
  if (x.size() < 2) throw UndefinedCorrelation("correlation needs at least two items");
}

// Merge sort that counts inversions (pairs out of order).
std::uint64_t SortCountingSwaps(std::vector<double>& v, std::vector<double>& buffer,
                                std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = SortCountingSwaps(v, buffer, lo, mid) +
                        SortCountingSwaps(v, buffer, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buffer[k++] = v[j++];
    } else {
      buffer[k++] = v[i++];
    }
  }
  while (i < mid) buffer[k++] = v[i++];
  while (j < hi) buffer[k++] = v[j++];
  std::copy(buffer.begin() + lo, buffer.begin() + hi, v.begin() + lo);
  return swaps;
}

// Number of tied pairs in a sorted range.
template <typename It, typename Eq>
std::uint64_t TiedPairs(It begin, It end, Eq eq) {
  std::uint64_t pairs = 0;
  for (It run = begin; run != end;) {
    It next = run + 1;
    while (next != end && eq(*run, *next)) ++next;
    const auto len = static_cast<std::uint64_t>(next - run);
    pairs += len * (len - 1) / 2;
    run = next;
  }
  return pairs;
}

}  // namespace

std::string ToString(Coefficient c) {
  switch (c) {
    case Coefficient::kPearson: return "pearson";
    case Coefficient::kSpearman: return "spearman";
    case Coefficient::kKendall: return "kendall";
  }
  return "?";
}

Coefficient ParseCoefficient(std::string_view name) {
  if (name == "pearson") return Coefficient::kPearson;
  if (name == "spearman") return Coefficient::kSpearman;
  if (name == "kendall") return Coefficient::kKendall;
  throw UsageError("unknown correlation '" + std::string(name) + "'");
}

double Pearson(std::span<const double> x, std::span<const double> y) {
  CheckSizes(x, y);
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelation("correlation undefined for a constant vector");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> FractionalRanks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 (0-based) share rank mean(i+1..j)
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double Spearman(std::span<const double> x, std::span<const double> y) {
  CheckSizes(x, y);
  const std::vector<double> rx = FractionalRanks(x);
  const std::vector<double> ry = FractionalRanks(y);
  return Pearson(rx, ry);
}

double Kendall(std::span<const double> x, std::span<const double> y) {
  CheckSizes(x, y);
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
  });

  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t tied_x = TiedPairs(order.begin(), order.end(),
                                         [&](std::size_t a, std::size_t b) { return x[a] == x[b]; });
  const std::uint64_t tied_xy =
      TiedPairs(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] == x[b] && y[a] == y[b];
      });

  std::vector<double> ys(n), buffer(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::uint64_t swaps = SortCountingSwaps(ys, buffer, 0, n);
  const std::uint64_t tied_y =
      TiedPairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });

  const double denom = std::sqrt(static_cast<double>(total - tied_x) *
                                 static_cast<double>(total - tied_y));
  if (denom == 0.0) throw UndefinedCorrelation("Kendall tau undefined: all pairs tied");
  // concordant - discordant = total - tied_x - tied_y + tied_xy - 2 * swaps
  const double numer = static_cast<double>(total) - static_cast<double>(tied_x) -
                       static_cast<double>(tied_y) + static_cast<double>(tied_xy) -
                       2.0 * static_cast<double>(swaps);
  return std::clamp(numer / denom, -1.0, 1.0);
}

double Correlate(Coefficient c, std::span<const double> x, std::span<const double> y) {
  switch (c) {
    case Coefficient::kPearson: return Pearson(x, y);
    case Coefficient::kSpearman: return Spearman(x, y);
    case Coefficient::kKendall: return Kendall(x, y);
  }
  throw UsageError("unknown correlation");
}

}  // namespace bmx
