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

#include "bmx/explainers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>

namespace bmx {
namespace {

using Mask = std::vector<char>;

const Tokens& SegmentTokens(const MetricRequest& input, std::size_t segment) {
  if (segment < input.ground_truths.size()) return input.ground_truths[segment];
  if (segment == input.ground_truths.size()) return input.hypothesis;
  throw UsageError("segment index " + std::to_string(segment) + " out of range");
}

MetricRequest WithSegment(const MetricRequest& input, std::size_t segment, Tokens tokens) {
  MetricRequest out = input;
  if (segment < out.ground_truths.size()) {
    out.ground_truths[segment] = std::move(tokens);
  } else {
    out.hypothesis = std::move(tokens);
  }
  return out;
}

Tokens ApplyMask(const Tokens& tokens, const Mask& keep, const std::string& replacement) {
  Tokens out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out[i] = keep[i] ? tokens[i] : replacement;
  }
  return out;
}

void Count(ExplainStats* stats, const std::vector<Mask>& masks) {
  if (!stats) return;
  ++stats->applications;
  for (const Mask& m : masks) {
    const bool full = std::all_of(m.begin(), m.end(), [](char c) { return c != 0; });
    ++(full ? stats->base_evaluations : stats->sampled_perturbations);
  }
}

// The requests one segment explanation needs, and how to turn their scores
// into attributions. Planning draws all randomness up front, so plans for
// every segment can share one metric batch.
struct SegmentPlan {
  std::vector<MetricRequest> requests;
  std::function<std::vector<double>(std::span<const double>)> finish;
};

std::vector<MetricRequest> MaskedRequests(const MetricRequest& input, std::size_t segment,
                                          const std::vector<Mask>& masks,
                                          const std::string& replacement) {
  const Tokens& tokens = SegmentTokens(input, segment);
  std::vector<MetricRequest> batch;
  batch.reserve(masks.size());
  for (const Mask& m : masks) {
    batch.push_back(WithSegment(input, segment, ApplyMask(tokens, m, replacement)));
  }
  return batch;
}

SegmentPlan PlanErasure(const MetricRequest& input, std::size_t segment,
                        ExplainStats* stats) {
  const Tokens& tokens = SegmentTokens(input, segment);
  const std::size_t k = tokens.size();
  SegmentPlan plan;
  if (k == 0) {
    plan.finish = [](std::span<const double>) { return std::vector<double>{}; };
    return plan;
  }
  plan.requests.reserve(k + 1);
  plan.requests.push_back(input);
  for (std::size_t i = 0; i < k; ++i) {
    Tokens reduced;
    reduced.reserve(k - 1);
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) reduced.push_back(tokens[j]);
    }
    plan.requests.push_back(WithSegment(input, segment, std::move(reduced)));
  }
  if (stats) {
    ++stats->applications;
    ++stats->base_evaluations;
    stats->sampled_perturbations += k;
  }
  plan.finish = [k](std::span<const double> scores) {
    std::vector<double> phi(k);
    for (std::size_t i = 0; i < k; ++i) phi[i] = scores[0] - scores[i + 1];
    return phi;
  };
  return plan;
}

std::vector<double> FitLime(const std::vector<Mask>& masks, std::span<const double> y,
                            const ExplainerConfig& config) {
  const std::size_t n = masks.size();
  const std::size_t d = masks.front().size();
  // Proximity weight exp(-D^2 / sigma^2), D = 1 - cos(mask, all-ones).
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd target(n), weight(n);
  const double width2 = config.kernel_width * config.kernel_width;
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < d; ++c) {
      x(r, c) = masks[r][c] ? 1.0 : 0.0;
      ones += masks[r][c] ? 1 : 0;
    }
    const double cosine = ones == 0 ? 0.0 : std::sqrt(static_cast<double>(ones) / d);
    const double dist = 1.0 - cosine;
    weight(r) = std::exp(-dist * dist / width2);
    target(r) = y[r];
  }

  // Weighted ridge with an unpenalized intercept: centre, then solve
  // (Xc' W Xc + alpha I) beta = Xc' W yc.
  const double wsum = weight.sum();
  const Eigen::RowVectorXd x_mean = (weight.transpose() * x) / wsum;
  const double y_mean = weight.dot(target) / wsum;
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = target.array() - y_mean;
  const Eigen::MatrixXd xw = weight.asDiagonal() * xc;
  Eigen::MatrixXd normal = xc.transpose() * xw;
  normal.diagonal().array() += config.ridge_alpha;
  const Eigen::VectorXd rhs = xw.transpose() * yc;
  const Eigen::VectorXd beta = normal.ldlt().solve(rhs);
  return std::vector<double>(beta.data(), beta.data() + d);
}

SegmentPlan PlanLime(const MetricRequest& input, std::size_t segment,
                     const ExplainerConfig& config, Rng& rng, ExplainStats* stats) {
  const std::size_t d = SegmentTokens(input, segment).size();
  SegmentPlan plan;
  if (d == 0) {
    plan.finish = [](std::span<const double>) { return std::vector<double>{}; };
    return plan;
  }

  // Row 0 is the unperturbed input; every other row masks k ~ U{1..d}
  // distinct positions.
  std::vector<Mask> masks;
  masks.reserve(config.permutations + 1);
  masks.emplace_back(d, 1);
  std::vector<std::size_t> positions(d);
  for (std::size_t s = 0; s < config.permutations; ++s) {
    const std::size_t k = 1 + rng.UniformIndex(d);
    std::iota(positions.begin(), positions.end(), 0);
    Mask m(d, 1);
    for (std::size_t j = 0; j < k; ++j) {
      std::swap(positions[j], positions[j + rng.UniformIndex(d - j)]);
      m[positions[j]] = 0;
    }
    masks.push_back(std::move(m));
  }
  Count(stats, masks);
  plan.requests = MaskedRequests(input, segment, masks, config.replacement_token);
  plan.finish = [masks = std::move(masks), config](std::span<const double> y) {
    return FitLime(masks, y, config);
  };
  return plan;
}

SegmentPlan PlanShap(const MetricRequest& input, std::size_t segment,
                     const ExplainerConfig& config, Rng& rng, ExplainStats* stats) {
  const std::size_t d = SegmentTokens(input, segment).size();
  SegmentPlan plan;
  if (d == 0) {
    plan.finish = [](std::span<const double>) { return std::vector<double>{}; };
    return plan;
  }

  if (d <= config.exact_shap_max_tokens) {
    const std::size_t coalitions = std::size_t{1} << d;
    std::vector<Mask> masks(coalitions, Mask(d, 0));
    for (std::size_t s = 0; s < coalitions; ++s) {
      for (std::size_t i = 0; i < d; ++i) masks[s][i] = (s >> i) & 1U;
    }
    Count(stats, masks);
    plan.requests = MaskedRequests(input, segment, masks, config.replacement_token);
    plan.finish = [d](std::span<const double> values) {
      return ExactShapleyFromValues(std::vector<double>(values.begin(), values.end()), d);
    };
    return plan;
  }

  // Each sampled permutation is walked twice: adding tokens in its order,
  // then in reverse order. Both walks start from the fully masked input.
  const std::size_t perms = config.permutations;
  std::vector<std::vector<std::size_t>> orders(perms);
  std::vector<Mask> masks;
  masks.reserve(perms * 2 * (d + 1));
  for (auto& order : orders) {
    order.resize(d);
    std::iota(order.begin(), order.end(), 0);
    rng.Shuffle(order);
    for (int pass = 0; pass < 2; ++pass) {
      Mask m(d, 0);
      masks.push_back(m);
      for (std::size_t j = 0; j < d; ++j) {
        m[pass == 0 ? order[j] : order[d - 1 - j]] = 1;
        masks.push_back(m);
      }
    }
  }
  Count(stats, masks);
  plan.requests = MaskedRequests(input, segment, masks, config.replacement_token);
  plan.finish = [orders = std::move(orders), d](std::span<const double> values) {
    std::vector<double> phi(d, 0.0);
    std::size_t at = 0;
    for (const auto& order : orders) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t token = pass == 0 ? order[j] : order[d - 1 - j];
          phi[token] += values[at + j + 1] - values[at + j];
        }
        at += d + 1;
      }
    }
    for (double& v : phi) v /= static_cast<double>(2 * orders.size());
    return phi;
  };
  return plan;
}

SegmentPlan Plan(const MetricRequest& input, std::size_t segment, std::string_view key,
                 const ExplainerConfig& config, ExplainStats* stats) {
  Rng rng(DeriveSeed(config.seed, key, segment));
  switch (config.kind) {
    case ExplainerKind::kErasure:
      return PlanErasure(input, segment, stats);
    case ExplainerKind::kLime:
      return PlanLime(input, segment, config, rng, stats);
    case ExplainerKind::kShap:
      return PlanShap(input, segment, config, rng, stats);
  }
  throw UsageError("unknown explainer kind");
}

std::vector<double> Run(ScoringSession& session, const SegmentPlan& plan) {
  const std::vector<double> scores = session.Score(plan.requests);
  return plan.finish(scores);
}

}  // namespace

std::string ToString(ExplainerKind kind) {
  switch (kind) {
    case ExplainerKind::kErasure: return "erasure";
    case ExplainerKind::kLime: return "lime";
    case ExplainerKind::kShap: return "shap";
  }
  return "?";
}

ExplainerKind ParseExplainerKind(std::string_view name) {
  if (name == "erasure") return ExplainerKind::kErasure;
  if (name == "lime") return ExplainerKind::kLime;
  if (name == "shap") return ExplainerKind::kShap;
  throw UsageError("unknown explainer '" + std::string(name) +
                   "' (expected erasure, lime or shap)");
}

ExplainerConfig ExplainerConfig::ForKind(ExplainerKind kind) {
  ExplainerConfig config;
  config.kind = kind;
  config.permutations = kind == ExplainerKind::kShap ? 10 : 100;
  return config;
}

void ExplainerConfig::Validate() const {
  if (permutations == 0) throw UsageError("explainer needs at least one permutation");
  if (exact_shap_max_tokens == 0 || exact_shap_max_tokens > 20) {
    throw UsageError("exact SHAP token limit must be in [1, 20]");
  }
  if (!(kernel_width > 0.0)) throw UsageError("LIME kernel width must be positive");
  if (!(ridge_alpha > 0.0)) throw UsageError("LIME ridge strength must be positive");
}

std::size_t Attribution::size() const {
  std::size_t n = 0;
  for (const auto& v : per_segment) n += v.size();
  return n;
}

std::vector<double> Attribution::Concatenated() const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& v : per_segment) out.insert(out.end(), v.begin(), v.end());
  return out;
}

std::vector<double> ScoringSession::Score(const std::vector<MetricRequest>& batch) {
  if (batch.empty()) return {};
  if (!memoize_) {
    requests_sent_ += batch.size();
    return metric_.ScoreBatch(batch);
  }
  std::vector<std::string> keys;
  keys.reserve(batch.size());
  std::vector<MetricRequest> pending;
  std::vector<std::string> pending_keys;
  std::unordered_map<std::string, std::size_t> queued;
  for (const MetricRequest& r : batch) {
    keys.push_back(RequestKey(r));
    const std::string& key = keys.back();
    if (cache_.count(key) || queued.count(key)) continue;
    queued.emplace(key, pending.size());
    pending.push_back(r);
    pending_keys.push_back(key);
  }
  if (!pending.empty()) {
    requests_sent_ += pending.size();
    const std::vector<double> scores = metric_.ScoreBatch(pending);
    for (std::size_t i = 0; i < pending.size(); ++i) cache_[pending_keys[i]] = scores[i];
  }
  std::vector<double> out;
  out.reserve(batch.size());
  for (const std::string& key : keys) out.push_back(cache_.at(key));
  return out;
}

std::vector<double> ExplainErasure(Metric& metric, const MetricRequest& input,
                                   std::size_t segment) {
  ScoringSession session(metric, true);
  return Run(session, PlanErasure(input, segment, nullptr));
}

std::vector<double> ExplainLime(Metric& metric, const MetricRequest& input,
                                std::size_t segment, const ExplainerConfig& config,
                                std::string_view key) {
  config.Validate();
  ScoringSession session(metric, config.memoize);
  Rng rng(DeriveSeed(config.seed, key, segment));
  return Run(session, PlanLime(input, segment, config, rng, nullptr));
}

std::vector<double> ExplainShap(Metric& metric, const MetricRequest& input,
                                std::size_t segment, const ExplainerConfig& config,
                                std::string_view key) {
  config.Validate();
  ScoringSession session(metric, config.memoize);
  Rng rng(DeriveSeed(config.seed, key, segment));
  return Run(session, PlanShap(input, segment, config, rng, nullptr));
}

Attribution ExplainRequest(Metric& metric, const MetricRequest& input,
                           std::string_view key, const ExplainerConfig& config,
                           ExplainStats* stats) {
  config.Validate();
  const std::size_t segments = input.ground_truths.size() + 1;
  std::vector<SegmentPlan> plans;
  plans.reserve(segments);
  for (std::size_t s = 0; s < segments; ++s) plans.push_back(Plan(input, s, key, config, stats));

  // One batch per instance: every segment's requests, then the input itself.
  std::vector<MetricRequest> batch;
  for (const SegmentPlan& plan : plans) {
    batch.insert(batch.end(), plan.requests.begin(), plan.requests.end());
  }
  batch.push_back(input);
  ScoringSession session(metric, config.memoize);
  const std::vector<double> scores = session.Score(batch);

  Attribution attribution;
  attribution.per_segment.reserve(segments);
  std::size_t at = 0;
  for (const SegmentPlan& plan : plans) {
    attribution.per_segment.push_back(
        plan.finish(std::span<const double>(scores).subspan(at, plan.requests.size())));
    at += plan.requests.size();
  }
  attribution.base_score = scores.back();
  if (stats) stats->metric_requests += session.requests_sent();
  return attribution;
}

Attribution Explain(Metric& metric, const EvalInstance& instance,
                    const ExplainerConfig& config, ExplainStats* stats) {
  return ExplainRequest(metric, MakeRequest(instance), instance.id, config, stats);
}

std::vector<double> ExactShapleyFromValues(const std::vector<double>& values,
                                           std::size_t players) {
  const std::size_t coalitions = std::size_t{1} << players;
  if (values.size() != coalitions) {
    throw UsageError("ExactShapleyFromValues: expected 2^players values");
  }
  // weight[s] = s! (n - s - 1)! / n!
  std::vector<double> weight(players, 0.0);
  for (std::size_t s = 0; s < players; ++s) {
    double w = 1.0 / static_cast<double>(players);
    // 1 / (n * C(n-1, s))
    for (std::size_t j = 1; j <= s; ++j) {
      w *= static_cast<double>(j) / static_cast<double>(players - j);
    }
    weight[s] = w;
  }
  std::vector<double> phi(players, 0.0);
  for (std::size_t mask = 0; mask < coalitions; ++mask) {
    const auto size = static_cast<std::size_t>(__builtin_popcountll(mask));
    for (std::size_t i = 0; i < players; ++i) {
      if (mask & (std::size_t{1} << i)) continue;
      phi[i] += weight[size] * (values[mask | (std::size_t{1} << i)] - values[mask]);
    }
  }
  return phi;
}

}  // namespace bmx
