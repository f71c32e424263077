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

#ifndef BMX_CORE_HPP_
#define BMX_CORE_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bmx/explainers.hpp"
#include "bmx/metrics.hpp"

namespace bmx {

inline constexpr double kRegularizationOffset = 1e-9;
inline constexpr double kMaxAbsP = 30.0;

// Shifts by |min| when any value is negative, then adds 1e-9 to every
// value. The result is strictly positive and order-preserving.
std::vector<double> Regularize(std::span<const double> values);

// Generalized mean ((1/n) sum v^p)^(1/p); p == 0 is the geometric mean.
// Requires a nonempty, strictly positive input (DataError otherwise).
double PowerMean(std::span<const double> values, double p);

// Regularized concatenation of all per-segment attributions.
std::vector<double> RegularizedImportances(const Attribution& attribution);

// Power mean of the regularized concatenated attribution.
double Aggregate(const Attribution& attribution, double p);

// w * s0 + (1 - w) * s_hat; w == 1 returns s0 unchanged.
double Combine(double s0, double s_hat, double w);

struct BmxParams {
  double p = 1.0;
  double w = 1.0;
  std::size_t iterations = 1;
  ExplainerConfig explainer = ExplainerConfig::ForKind(ExplainerKind::kLime);

  void Validate() const;
};

struct IterationScore {
  double s_hat = 0.0;
  double s = 0.0;
};

struct ScoredInstance {
  std::string id;
  double s0 = 0.0;
  double s_hat = 0.0;  // aggregate of the first explanation
  double s1 = 0.0;     // final boosted score (after all iterations)
  std::vector<IterationScore> history;
};

// The boosted metric S1 = w * S0 + (1 - w) * f(E(S0, .)) as a metric in its
// own right; each scored request is explained end to end. Explanations of
// `root` are seeded with `root_key`, others with a key derived from content.
class BoostedMetric final : public Metric {
 public:
  BoostedMetric(Metric& inner, BmxParams params, MetricRequest root = {},
                std::string root_key = "");

  std::string name() const override { return "bmx(" + inner_.name() + ")"; }
  std::size_t batch_capacity() const override { return inner_.batch_capacity(); }
  bool single_flight() const override { return inner_.single_flight(); }

 protected:
  std::vector<double> ScoreChunk(std::span<const MetricRequest> chunk) override;

 private:
  Metric& inner_;
  BmxParams params_;
  MetricRequest root_;
  std::string root_key_;
};

// Scores, explains, aggregates and combines one instance; with
// iterations > 1 the combined metric is explained again as the new metric.
ScoredInstance Boost(Metric& metric, const EvalInstance& instance,
                     const BmxParams& params);

// Boost over every instance, `jobs` instances at a time. Output order
// follows the dataset.
std::vector<ScoredInstance> BoostAll(Metric& metric, const Dataset& dataset,
                                     const BmxParams& params, std::size_t jobs = 1);

}  // namespace bmx

#endif  // BMX_CORE_HPP_
