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

#ifndef BMX_EVALUATION_HPP_
#define BMX_EVALUATION_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bmx/core.hpp"
#include "bmx/correlation.hpp"
#include "bmx/corpus.hpp"
#include "bmx/metrics.hpp"

namespace bmx {

enum class Level { kSegment, kSystem };

std::string ToString(Level level);
Level ParseLevel(std::string_view name);

struct CorrelationSpec {
  Coefficient coefficient = Coefficient::kPearson;
  Level level = Level::kSegment;
  std::string aspect;

  // "pearson:segment:da"
  static CorrelationSpec Parse(std::string_view text);
  std::string ToString() const;
};

inline constexpr double kSignificanceLevel = 0.05;

// Human score of `aspect` for every instance; DataError naming the aspect
// when an instance lacks it.
std::vector<double> HumanScores(const Dataset& dataset, const std::string& aspect);

struct SystemScore {
  std::string system;
  double metric_mean = 0.0;
  double human_mean = 0.0;
  std::size_t count = 0;
};

// Arithmetic means per system, sorted by system name.
std::vector<SystemScore> SystemScores(const Dataset& dataset,
                                      std::span<const double> scores,
                                      const std::string& aspect);

// Correlation at the spec's level (system level averages per system first).
double LevelCorrelation(const CorrelationSpec& spec, const Dataset& dataset,
                        std::span<const double> scores);

struct PermutationTest {
  double delta = 0.0;  // corr(b, human) - corr(a, human)
  double p_value = 1.0;
  std::size_t resamples = 0;
};

// One-sided paired permutation test that b correlates better with human
// than a. Each resample swaps a/b per item with probability 1/2;
// p = (#{delta* >= delta} + 1) / (resamples + 1).
PermutationTest PermuteBothTest(std::span<const double> a, std::span<const double> b,
                                std::span<const double> human, Coefficient coefficient,
                                std::size_t resamples, std::uint64_t seed,
                                std::size_t jobs = 1);

// Same statistic over all 2^n swap patterns (n <= 24); p is the share of
// patterns with delta* >= delta. Patterns with undefined correlations are
// left out of both counts.
PermutationTest PermuteBothExact(std::span<const double> a, std::span<const double> b,
                                 std::span<const double> human, Coefficient coefficient);

// flag[i] = p[i] <= alpha / family_size.
std::vector<bool> Bonferroni(std::span<const double> p_values, std::size_t family_size,
                             double alpha = kSignificanceLevel);

struct ReportRow {
  std::string group;  // language pair, or the aspect when there is none
  CorrelationSpec spec;
  std::optional<double> baseline;
  std::optional<double> boosted;
  std::optional<double> delta;
  std::optional<double> p_value;
  bool significant = false;             // p <= 0.05
  bool significant_bonferroni = false;  // p <= 0.05 / family_size
  std::size_t family_size = 0;
};

struct EvalReport {
  std::string metric;
  BmxParams params;
  std::vector<ReportRow> rows;
  std::size_t significant = 0;
  std::size_t significant_bonferroni = 0;

  std::string ToJson() const;
  // Plain-text table: group, correlation, ORIG, BMX, delta, p. Improvements
  // carry '+', significant ones '*', Bonferroni-significant ones '**'.
  std::string ToText() const;
};

struct EvaluateOptions {
  std::size_t resamples = 1000;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  // Bonferroni family size; 0 means the number of rows sharing the
  // correlation type.
  std::size_t family_size = 0;
};

// Builds the report from precomputed original and boosted scores.
EvalReport BuildReport(const Dataset& dataset, std::span<const double> original,
                       std::span<const double> boosted,
                       const std::vector<CorrelationSpec>& specs,
                       const EvaluateOptions& options);

// Boosts every instance, then reports baseline vs boosted correlations per
// language pair (or aspect) with permute-both p-values.
EvalReport Evaluate(Metric& metric, const Dataset& dataset, const BmxParams& params,
                    const std::vector<CorrelationSpec>& specs,
                    const EvaluateOptions& options);

struct StabilityResult {
  double mean_pearson = 0.0;
  std::vector<double> pairwise;
};

// Runs the boost pipeline once per seed and averages the pairwise Pearson
// correlations of the boosted score vectors.
StabilityResult StabilityCheck(Metric& metric, const Dataset& dataset,
                               const BmxParams& params,
                               const std::vector<std::uint64_t>& seeds,
                               std::size_t jobs = 1);

}  // namespace bmx

#endif  // BMX_EVALUATION_HPP_
