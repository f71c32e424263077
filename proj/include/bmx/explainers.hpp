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

#ifndef BMX_EXPLAINERS_HPP_
#define BMX_EXPLAINERS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bmx/common.hpp"
#include "bmx/corpus.hpp"
#include "bmx/metrics.hpp"

namespace bmx {

enum class ExplainerKind { kErasure, kLime, kShap };

std::string ToString(ExplainerKind kind);
ExplainerKind ParseExplainerKind(std::string_view name);

inline constexpr const char* kDefaultReplacementToken = "UNKWORDZ";

struct ExplainerConfig {
  ExplainerKind kind = ExplainerKind::kLime;
  // LIME: masked samples per segment. SHAP: sampled permutations per segment
  // (each walked forward and in reverse). Ignored by erasure.
  std::size_t permutations = 100;
  std::string replacement_token = kDefaultReplacementToken;
  std::uint64_t seed = 0;
  // Segments with at most this many tokens get exact Shapley values.
  std::size_t exact_shap_max_tokens = 7;
  // LIME surrogate: proximity kernel width and ridge strength.
  double kernel_width = 25.0;
  double ridge_alpha = 1.0;
  // Score identical perturbed inputs once per Explain() call.
  bool memoize = true;

  // Defaults for a kind: 100 LIME samples, 10 SHAP permutations.
  static ExplainerConfig ForKind(ExplainerKind kind);
  void Validate() const;
};

// Per-segment token importances. Segments are ordered ground truths first,
// hypothesis last; each vector is aligned with that segment's tokens.
struct Attribution {
  std::vector<std::vector<double>> per_segment;
  double base_score = 0.0;

  std::size_t size() const;
  std::vector<double> Concatenated() const;
};

struct ExplainStats {
  std::size_t applications = 0;           // explainer runs, one per segment
  std::size_t sampled_perturbations = 0;  // perturbed inputs built
  std::size_t base_evaluations = 0;       // unperturbed inputs built
  std::size_t metric_requests = 0;        // requests sent after memoization
};

// Scores batches through a metric, optionally memoizing identical requests.
class ScoringSession {
 public:
  ScoringSession(Metric& metric, bool memoize) : metric_(metric), memoize_(memoize) {}

  // One ScoreBatch call for the requests not already cached.
  std::vector<double> Score(const std::vector<MetricRequest>& batch);

  std::size_t requests_sent() const { return requests_sent_; }

 private:
  Metric& metric_;
  bool memoize_;
  std::unordered_map<std::string, double> cache_;
  std::size_t requests_sent_ = 0;
};

// Erasure: phi_i = S(x) - S(x with token i of the segment deleted).
std::vector<double> ExplainErasure(Metric& metric, const MetricRequest& input,
                                   std::size_t segment);

// LIME: weighted ridge surrogate fitted on randomly masked variants of one
// segment. `key` names the input for seeding (instance id).
std::vector<double> ExplainLime(Metric& metric, const MetricRequest& input,
                                std::size_t segment, const ExplainerConfig& config,
                                std::string_view key = "");

// SHAP: exact enumeration up to exact_shap_max_tokens, else antithetic
// permutation sampling.
std::vector<double> ExplainShap(Metric& metric, const MetricRequest& input,
                                std::size_t segment, const ExplainerConfig& config,
                                std::string_view key = "");

// Explains every segment, holding the others fixed. The perturbed inputs of
// all segments and the input itself go to the metric as one batch.
Attribution ExplainRequest(Metric& metric, const MetricRequest& input,
                           std::string_view key, const ExplainerConfig& config,
                           ExplainStats* stats = nullptr);

Attribution Explain(Metric& metric, const EvalInstance& instance,
                    const ExplainerConfig& config, ExplainStats* stats = nullptr);

// Exact Shapley values of a cooperative game given as v[coalition bitmask]
// over `players` players (v.size() == 2^players).
std::vector<double> ExactShapleyFromValues(const std::vector<double>& values,
                                           std::size_t players);

}  // namespace bmx

#endif  // BMX_EXPLAINERS_HPP_
