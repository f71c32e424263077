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

#ifndef BMX_CORPUS_HPP_
#define BMX_CORPUS_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bmx {

struct Token {
  std::string text;
  std::size_t offset = 0;  // byte offset into the source string

  bool operator==(const Token&) const = default;
};

// Splits on Unicode whitespace (UTF-8 input). Never yields empty tokens.
std::vector<Token> Tokenize(std::string_view text);

// A text plus its tokenization, computed once at construction.
class Segment {
 public:
  Segment() = default;
  explicit Segment(std::string text);

  const std::string& text() const { return text_; }
  const std::vector<Token>& tokens() const { return tokens_; }
  std::vector<std::string> words() const;
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

  // Tokens joined by single spaces: the whitespace-normalized text.
  std::string Normalized() const;

 private:
  std::string text_;
  std::vector<Token> tokens_;
};

// One hypothesis with its ground truths (sources and/or references) and
// human judgements keyed by aspect ("da", "mqm", "coherence", ...).
struct EvalInstance {
  std::string id;
  std::string system;
  std::string language_pair;  // empty for summarization
  std::vector<Segment> ground_truths;
  Segment hypothesis;
  std::map<std::string, double> human_scores;
};

enum class LevelHint { kSegment, kSystem, kBoth };

struct Dataset {
  std::string name;
  std::vector<EvalInstance> instances;
  LevelHint level_hint = LevelHint::kBoth;

  // Index of the instance with `id`, or size() when absent.
  std::size_t Find(std::string_view id) const;
  // Subset in the given id order. Unknown ids raise DataError.
  Dataset Subset(const std::vector<std::string>& ids) const;
};

enum class DatasetFormat { kJsonl, kTsv };

// Parses a dataset file. Errors (DataError) name the line and field.
Dataset LoadDataset(const std::string& path, DatasetFormat format);
Dataset ParseJsonl(std::string_view contents, std::string name = "");
Dataset ParseTsv(std::string_view contents, std::string name = "");

// JSONL in the same schema LoadDataset reads.
std::string SerializeJsonl(const Dataset& dataset);
void SaveDataset(const Dataset& dataset, const std::string& path);

DatasetFormat ParseDatasetFormat(std::string_view name);

struct Fold {
  std::vector<std::string> calibration_ids;
  std::vector<std::string> evaluation_ids;
};

struct SplitPlan {
  std::vector<Fold> folds;
};

// Key used to group instances by source: hash of the first ground truth.
std::uint64_t SourceKey(const EvalInstance& instance);

// Shuffles the source groups with `seed` and cuts them into n_folds
// calibration parts; each fold evaluates on the complement. Parts hold
// ceil(groups / n_folds) groups except the last, which takes the rest.
SplitPlan MakeSplits(const Dataset& dataset, std::size_t n_folds,
                     std::uint64_t seed);

std::string SerializeSplitPlan(const SplitPlan& plan);
SplitPlan ParseSplitPlan(std::string_view json_text);

}  // namespace bmx

#endif  // BMX_CORPUS_HPP_
