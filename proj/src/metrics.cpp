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

#include "bmx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "bmx/common.hpp"
#include "json.hpp"

namespace bmx {

MetricRequest MakeRequest(const EvalInstance& instance) {
  MetricRequest r;
  r.ground_truths.reserve(instance.ground_truths.size());
  for (const Segment& gt : instance.ground_truths) r.ground_truths.push_back(gt.words());
  r.hypothesis = instance.hypothesis.words();
  return r;
}

std::string JoinTokens(const Tokens& tokens) {
  std::string out;
  for (const std::string& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::string RequestKey(const MetricRequest& request) {
  // Unit/record separators cannot appear inside whitespace-free tokens
  // produced by the tokenizer; lengths make the key unambiguous anyway.
  std::string key;
  auto append = [&key](const Tokens& tokens) {
    key += std::to_string(tokens.size());
    key += '\x1e';
    for (const std::string& t : tokens) {
      key += std::to_string(t.size());
      key += '\x1f';
      key += t;
    }
  };
  key += std::to_string(request.ground_truths.size());
  key += '\x1d';
  for (const Tokens& gt : request.ground_truths) append(gt);
  append(request.hypothesis);
  return key;
}

std::vector<double> Metric::ScoreBatch(std::span<const MetricRequest> batch) {
  if (batch.empty()) throw UsageError("score_batch: empty batch");
  std::unique_lock<std::mutex> lock(flight_mu_, std::defer_lock);
  if (single_flight()) lock.lock();

  const std::size_t capacity = std::max<std::size_t>(1, batch_capacity());
  std::vector<double> scores;
  scores.reserve(batch.size());
  for (std::size_t start = 0, chunk = 0; start < batch.size();
       start += capacity, ++chunk) {
    const std::size_t len = std::min(capacity, batch.size() - start);
    std::vector<double> part;
    try {
      part = ScoreChunk(batch.subspan(start, len));
    } catch (const MetricError& e) {
      throw MetricError(name() + ": chunk " + std::to_string(chunk) + ": " + e.what(),
                        chunk);
    }
    if (part.size() != len) {
      throw MetricError(name() + ": chunk " + std::to_string(chunk) + ": expected " +
                            std::to_string(len) + " scores, got " +
                            std::to_string(part.size()),
                        chunk);
    }
    for (std::size_t i = 0; i < len; ++i) {
      if (!std::isfinite(part[i])) {
        throw MetricError(name() + ": chunk " + std::to_string(chunk) +
                              ": non-finite score for request " +
                              std::to_string(start + i),
                          chunk);
      }
    }
    scores.insert(scores.end(), part.begin(), part.end());
  }
  return scores;
}

double Metric::Score(const MetricRequest& request) {
  return ScoreBatch(std::span<const MetricRequest>(&request, 1)).front();
}

std::vector<double> PointwiseMetric::ScoreChunk(std::span<const MetricRequest> chunk) {
  std::vector<double> out;
  out.reserve(chunk.size());
  for (const MetricRequest& r : chunk) out.push_back(ScoreOne(r));
  return out;
}

double TokenF1(const std::vector<Tokens>& ground_truths, const Tokens& hypothesis) {
  if (hypothesis.empty()) return 0.0;
  std::unordered_set<std::string> gt_vocab;
  for (const Tokens& gt : ground_truths) gt_vocab.insert(gt.begin(), gt.end());
  const std::unordered_set<std::string> hyp_vocab(hypothesis.begin(), hypothesis.end());

  std::size_t hits = 0;
  for (const std::string& t : hypothesis) hits += gt_vocab.count(t);
  const double precision = static_cast<double>(hits) / hypothesis.size();

  double recall = 0.0;
  for (const Tokens& gt : ground_truths) {
    if (gt.empty()) continue;
    std::size_t found = 0;
    for (const std::string& t : gt) found += hyp_vocab.count(t);
    recall = std::max(recall, static_cast<double>(found) / gt.size());
  }
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double AdditiveScore(const std::unordered_map<std::string, double>& table,
                     const Tokens& hypothesis) {
  double sum = 0.0;
  for (const std::string& t : hypothesis) {
    if (auto it = table.find(t); it != table.end()) sum += it->second;
  }
  return sum;
}

double OverlapWithLengthPenalty(const std::vector<Tokens>& ground_truths,
                                const Tokens& hypothesis) {
  if (hypothesis.empty()) return 0.0;
  std::unordered_set<std::string> gt_vocab;
  std::size_t ref_len = 0;
  bool have_ref = false;
  for (const Tokens& gt : ground_truths) {
    gt_vocab.insert(gt.begin(), gt.end());
    if (!gt.empty() && (!have_ref || gt.size() < ref_len)) {
      ref_len = gt.size();
      have_ref = true;
    }
  }
  std::size_t hits = 0;
  for (const std::string& t : hypothesis) hits += gt_vocab.count(t);
  const double precision = static_cast<double>(hits) / hypothesis.size();
  const double ratio = static_cast<double>(ref_len) / hypothesis.size();
  return precision * std::exp(std::min(0.0, 1.0 - ratio));
}

double MockScore(const std::vector<Tokens>& ground_truths, const Tokens& hypothesis) {
  std::string payload;
  for (const Tokens& gt : ground_truths) {
    payload += JoinTokens(gt);
    payload += '\n';
  }
  payload += JoinTokens(hypothesis);
  return static_cast<double>(Fnv1a64(payload) >> 11) * 0x1.0p-53;
}

std::unordered_map<std::string, double> LoadTokenTable(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open token table '" + path + "'");
  std::unordered_map<std::string, double> table;
  try {
    const nlohmann::json root = nlohmann::json::parse(in);
    for (auto it = root.begin(); it != root.end(); ++it) {
      table[it.key()] = it->get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed token table '" + path + "': " + e.what());
  }
  return table;
}

MetricHandle MakeBuiltinMetric(const std::string& descriptor) {
  const auto colon = descriptor.find(':');
  const std::string head = descriptor.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : descriptor.substr(colon + 1);
  if (head == "token_f1") return std::make_shared<TokenF1Metric>();
  if (head == "overlap_lp") return std::make_shared<OverlapLpMetric>();
  if (head == "mock") return std::make_shared<MockMetric>();
  if (head == "constant") {
    try {
      return std::make_shared<ConstantMetric>(std::stod(arg));
    } catch (const std::exception&) {
      throw UsageError("constant metric needs a value, e.g. constant:0.7");
    }
  }
  if (head == "additive") {
    if (arg.empty()) throw UsageError("additive metric needs a table: additive:<file.json>");
    return std::make_shared<AdditiveMetric>(LoadTokenTable(arg));
  }
  throw UsageError("unknown builtin metric '" + descriptor + "'");
}

}  // namespace bmx
