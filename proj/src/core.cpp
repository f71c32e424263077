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

#include "bmx/core.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "bmx/common.hpp"

namespace bmx {

std::vector<double> Regularize(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  if (out.empty()) return out;
  const double lowest = *std::min_element(out.begin(), out.end());
  const double shift = lowest < 0.0 ? -lowest : 0.0;
  for (double& v : out) v = (v + shift) + kRegularizationOffset;
  return out;
}

double PowerMean(std::span<const double> values, double p) {
  if (values.empty()) throw DataError("power mean of an empty vector");
  if (!std::isfinite(p)) throw UsageError("power mean exponent must be finite");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DataError("power mean needs strictly positive finite values (regularize first)");
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const auto n = static_cast<double>(values.size());
  double result;
  if (p == 0.0) {
    double log_sum = 0.0;
    for (double v : values) log_sum += std::log(v);
    result = std::exp(log_sum / n);
  } else {
    // Scale by the extreme value that keeps every term of v^p at most 1.
    const double scale = p > 0.0 ? hi : lo;
    double sum = 0.0;
    for (double v : values) sum += std::pow(v / scale, p);
    result = scale * std::pow(sum / n, 1.0 / p);
  }
  return std::clamp(result, lo, hi);
}

std::vector<double> RegularizedImportances(const Attribution& attribution) {
  const std::vector<double> flat = attribution.Concatenated();
  if (flat.empty()) throw DataError("cannot aggregate an empty attribution");
  return Regularize(flat);
}

double Aggregate(const Attribution& attribution, double p) {
  return PowerMean(RegularizedImportances(attribution), p);
}

double Combine(double s0, double s_hat, double w) {
  if (w == 1.0) return s0;
  return w * s0 + (1.0 - w) * s_hat;
}

void BmxParams::Validate() const {
  if (!std::isfinite(p) || p < -kMaxAbsP || p > kMaxAbsP) {
    throw UsageError("p must be a finite value in [-30, 30]");
  }
  if (!(w >= 0.0 && w <= 1.0)) throw UsageError("w must lie in [0, 1]");
  if (iterations == 0) throw UsageError("iterations must be at least 1");
  explainer.Validate();
}

BoostedMetric::BoostedMetric(Metric& inner, BmxParams params, MetricRequest root,
                             std::string root_key)
    : inner_(inner),
      params_(std::move(params)),
      root_(std::move(root)),
      root_key_(std::move(root_key)) {}

std::vector<double> BoostedMetric::ScoreChunk(std::span<const MetricRequest> chunk) {
  const std::vector<double> base = inner_.ScoreBatch(chunk);
  std::vector<double> out;
  out.reserve(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    std::string key;
    if (chunk[i] == root_) {
      key = root_key_;
    } else {
      std::ostringstream os;
      os << root_key_ << '/' << std::hex << Fnv1a64(RequestKey(chunk[i]));
      key = os.str();
    }
    const Attribution attribution = ExplainRequest(inner_, chunk[i], key, params_.explainer);
    out.push_back(Combine(base[i], Aggregate(attribution, params_.p), params_.w));
  }
  return out;
}

ScoredInstance Boost(Metric& metric, const EvalInstance& instance,
                     const BmxParams& params) {
  params.Validate();
  const MetricRequest input = MakeRequest(instance);
  ScoredInstance scored;
  scored.id = instance.id;
  scored.s0 = metric.Score(input);

  // Level t of the chain is the metric boosted t times.
  std::vector<std::unique_ptr<BoostedMetric>> chain;
  Metric* current = &metric;
  double previous = scored.s0;
  for (std::size_t t = 0; t < params.iterations; ++t) {
    const Attribution attribution =
        ExplainRequest(*current, input, instance.id, params.explainer);
    IterationScore step;
    step.s_hat = Aggregate(attribution, params.p);
    step.s = Combine(previous, step.s_hat, params.w);
    scored.history.push_back(step);
    previous = step.s;
    if (t + 1 < params.iterations) {
      chain.push_back(std::make_unique<BoostedMetric>(*current, params, input, instance.id));
      current = chain.back().get();
    }
  }
  scored.s_hat = scored.history.front().s_hat;
  scored.s1 = scored.history.back().s;
  return scored;
}

std::vector<ScoredInstance> BoostAll(Metric& metric, const Dataset& dataset,
                                     const BmxParams& params, std::size_t jobs) {
  params.Validate();
  if (metric.single_flight()) jobs = 1;
  std::vector<ScoredInstance> out(dataset.instances.size());
  ParallelFor(out.size(), jobs, [&](std::size_t i) {
    out[i] = Boost(metric, dataset.instances[i], params);
  });
  return out;
}

}  // namespace bmx
