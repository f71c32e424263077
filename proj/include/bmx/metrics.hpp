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

#ifndef BMX_METRICS_HPP_
#define BMX_METRICS_HPP_

#include <atomic>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bmx/corpus.hpp"

namespace bmx {

using Tokens = std::vector<std::string>;

// Input to a segment-level metric. Explainers hand metrics perturbed token
// lists; a metric that needs raw text joins tokens with single spaces.
struct MetricRequest {
  std::vector<Tokens> ground_truths;
  Tokens hypothesis;

  bool operator==(const MetricRequest&) const = default;
};

MetricRequest MakeRequest(const EvalInstance& instance);

// Canonical byte string of a request; equal requests give equal keys.
std::string RequestKey(const MetricRequest& request);

// Tokens joined by single spaces.
std::string JoinTokens(const Tokens& tokens);

enum class MetricKind { kBuiltin, kExternal };

// Black-box segment-level metric S(g, h) -> real.
//
// Scoring must be a pure function of the request. Subclasses implement
// ScoreChunk(); ScoreBatch() chunks to batch_capacity(), checks that every
// score is finite and serializes calls for single-flight metrics.
class Metric {
 public:
  virtual ~Metric() = default;

  virtual std::string name() const = 0;
  virtual MetricKind kind() const { return MetricKind::kBuiltin; }
  virtual std::size_t batch_capacity() const { return 1024; }
  // True when the metric cannot serve concurrent calls.
  virtual bool single_flight() const { return false; }

  std::vector<double> ScoreBatch(std::span<const MetricRequest> batch);
  double Score(const MetricRequest& request);

 protected:
  virtual std::vector<double> ScoreChunk(
      std::span<const MetricRequest> chunk) = 0;

 private:
  std::mutex flight_mu_;
};

using MetricHandle = std::shared_ptr<Metric>;

// Metrics defined request-by-request.
class PointwiseMetric : public Metric {
 protected:
  virtual double ScoreOne(const MetricRequest& request) const = 0;
  std::vector<double> ScoreChunk(std::span<const MetricRequest> chunk) override;
};

// Harmonic mean of token precision (share of hypothesis tokens found in any
// ground truth) and recall (share of the best ground truth's tokens found in
// the hypothesis). Empty hypothesis scores 0.
double TokenF1(const std::vector<Tokens>& ground_truths, const Tokens& hypothesis);

// Sum of table[t] over hypothesis tokens; unknown tokens add 0.
double AdditiveScore(const std::unordered_map<std::string, double>& table,
                     const Tokens& hypothesis);

// Token precision scaled by a brevity penalty exp(min(0, 1 - r/h)), where r
// is the length of the shortest ground truth and h the hypothesis length.
double OverlapWithLengthPenalty(const std::vector<Tokens>& ground_truths,
                                const Tokens& hypothesis);

// Deterministic pseudo-score in [0, 1): FNV-1a of the segments (ground truths
// then hypothesis, each joined by spaces) separated by '\n', top 53 bits.
// The bridge adapter's mock scorer implements the same function.
double MockScore(const std::vector<Tokens>& ground_truths, const Tokens& hypothesis);

class TokenF1Metric final : public PointwiseMetric {
 public:
  std::string name() const override { return "token_f1"; }

 protected:
  double ScoreOne(const MetricRequest& r) const override {
    return TokenF1(r.ground_truths, r.hypothesis);
  }
};

class AdditiveMetric final : public PointwiseMetric {
 public:
  explicit AdditiveMetric(std::unordered_map<std::string, double> table)
      : table_(std::move(table)) {}
  std::string name() const override { return "additive"; }
  const std::unordered_map<std::string, double>& table() const { return table_; }

 protected:
  double ScoreOne(const MetricRequest& r) const override {
    return AdditiveScore(table_, r.hypothesis);
  }

 private:
  std::unordered_map<std::string, double> table_;
};

class OverlapLpMetric final : public PointwiseMetric {
 public:
  std::string name() const override { return "overlap_lp"; }

 protected:
  double ScoreOne(const MetricRequest& r) const override {
    return OverlapWithLengthPenalty(r.ground_truths, r.hypothesis);
  }
};

class ConstantMetric final : public PointwiseMetric {
 public:
  explicit ConstantMetric(double value) : value_(value) {}
  std::string name() const override { return "constant"; }

 protected:
  double ScoreOne(const MetricRequest&) const override { return value_; }

 private:
  double value_;
};

class MockMetric final : public PointwiseMetric {
 public:
  std::string name() const override { return "mock"; }

 protected:
  double ScoreOne(const MetricRequest& r) const override {
    return MockScore(r.ground_truths, r.hypothesis);
  }
};

// Forwards to an inner metric and counts calls and scored requests.
class CountingMetric final : public Metric {
 public:
  explicit CountingMetric(MetricHandle inner) : inner_(std::move(inner)) {}

  std::string name() const override { return inner_->name(); }
  MetricKind kind() const override { return inner_->kind(); }
  std::size_t batch_capacity() const override { return inner_->batch_capacity(); }
  bool single_flight() const override { return inner_->single_flight(); }

  std::size_t requests() const { return requests_.load(); }
  std::size_t calls() const { return calls_.load(); }
  void Reset() {
    requests_ = 0;
    calls_ = 0;
  }

 protected:
  std::vector<double> ScoreChunk(std::span<const MetricRequest> chunk) override {
    calls_.fetch_add(1);
    requests_.fetch_add(chunk.size());
    return inner_->ScoreBatch(chunk);
  }

 private:
  MetricHandle inner_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> calls_{0};
};

// Builds a builtin metric from a descriptor:
//   token_f1 | overlap_lp | mock | constant:<value> | additive:<table.json>
// where table.json is an object mapping tokens to numbers.
MetricHandle MakeBuiltinMetric(const std::string& descriptor);

std::unordered_map<std::string, double> LoadTokenTable(const std::string& path);

}  // namespace bmx

#endif  // BMX_METRICS_HPP_
