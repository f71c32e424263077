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

#include "bmx/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "bmx/common.hpp"
#include "json.hpp"

namespace bmx {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Decodes one UTF-8 code point at `pos`; returns its byte length. Invalid
// sequences decode as a single byte so tokenization never throws.
std::size_t DecodeUtf8(std::string_view s, std::size_t pos, char32_t* cp) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t i) {
    return pos + i < s.size() &&
           (static_cast<unsigned char>(s[pos + i]) & 0xC0) == 0x80;
  };
  auto bits = [&](std::size_t i) {
    return static_cast<char32_t>(static_cast<unsigned char>(s[pos + i]) & 0x3F);
  };
  if (b0 < 0x80) {
    *cp = b0;
    return 1;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    *cp = (static_cast<char32_t>(b0 & 0x1F) << 6) | bits(1);
    return 2;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    *cp = (static_cast<char32_t>(b0 & 0x0F) << 12) | (bits(1) << 6) | bits(2);
    return 3;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    *cp = (static_cast<char32_t>(b0 & 0x07) << 18) | (bits(1) << 12) |
          (bits(2) << 6) | bits(3);
    return 4;
  }
  *cp = 0xFFFD;
  return 1;
}

// White_Space property from the Unicode character database.
bool IsUnicodeSpace(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
         c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

[[noreturn]] void Fail(std::size_t line, std::string_view field,
                       std::string_view message) {
  std::ostringstream os;
  os << "line " << line;
  if (!field.empty()) os << ", field '" << field << "'";
  os << ": " << message;
  throw DataError(os.str());
}

std::string RequireString(const json& record, const char* field,
                          std::size_t line, bool required) {
  auto it = record.find(field);
  if (it == record.end()) {
    if (required) Fail(line, field, "missing");
    return {};
  }
  if (!it->is_string()) Fail(line, field, "expected a string");
  return it->get<std::string>();
}

void CheckInstance(const EvalInstance& inst, std::size_t line) {
  if (inst.id.empty()) Fail(line, "id", "empty id");
  if (inst.ground_truths.empty()) Fail(line, "gts", "at least one ground truth required");
  if (inst.hypothesis.empty()) Fail(line, "hyp", "hypothesis has no tokens");
}

void AddUnique(Dataset& ds, EvalInstance inst, std::size_t line,
               std::unordered_set<std::string>& seen) {
  if (!seen.insert(inst.id).second) {
    Fail(line, "id", "duplicate id '" + inst.id + "'");
  }
  ds.instances.push_back(std::move(inst));
}

std::vector<std::string_view> SplitLines(std::string_view contents) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

bool IsBlank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t'; });
}

}  // namespace

std::vector<Token> Tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t pos = 0;
  std::size_t start = std::string_view::npos;
  while (pos < text.size()) {
    char32_t cp;
    const std::size_t len = DecodeUtf8(text, pos, &cp);
    if (IsUnicodeSpace(cp)) {
      if (start != std::string_view::npos) {
        tokens.push_back({std::string(text.substr(start, pos - start)), start});
        start = std::string_view::npos;
      }
    } else if (start == std::string_view::npos) {
      start = pos;
    }
    pos += len;
  }
  if (start != std::string_view::npos) {
    tokens.push_back({std::string(text.substr(start)), start});
  }
  return tokens;
}

Segment::Segment(std::string text)
    : text_(std::move(text)), tokens_(Tokenize(text_)) {}

std::vector<std::string> Segment::words() const {
  std::vector<std::string> out;
  out.reserve(tokens_.size());
  for (const Token& t : tokens_) out.push_back(t.text);
  return out;
}

std::string Segment::Normalized() const {
  std::string out;
  for (const Token& t : tokens_) {
    if (!out.empty()) out += ' ';
    out += t.text;
  }
  return out;
}

std::size_t Dataset::Find(std::string_view id) const {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].id == id) return i;
  }
  return instances.size();
}

Dataset Dataset::Subset(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < instances.size(); ++i) index[instances[i].id] = i;
  Dataset out;
  out.name = name;
  out.level_hint = level_hint;
  out.instances.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("unknown instance id '" + id + "'");
    out.instances.push_back(instances[it->second]);
  }
  return out;
}

Dataset ParseJsonl(std::string_view contents, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  std::unordered_set<std::string> seen;
  const auto lines = SplitLines(contents);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (IsBlank(lines[i])) continue;
    json record;
    try {
      record = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      Fail(line_no, "", std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) Fail(line_no, "", "expected a JSON object");

    EvalInstance inst;
    inst.id = RequireString(record, "id", line_no, true);
    inst.system = RequireString(record, "system", line_no, false);
    inst.language_pair = RequireString(record, "lp", line_no, false);

    auto gts = record.find("gts");
    if (gts == record.end()) Fail(line_no, "gts", "missing");
    if (!gts->is_array()) Fail(line_no, "gts", "expected an array of strings");
    for (const json& gt : *gts) {
      if (!gt.is_string()) Fail(line_no, "gts", "expected an array of strings");
      inst.ground_truths.emplace_back(gt.get<std::string>());
    }
    inst.hypothesis = Segment(RequireString(record, "hyp", line_no, true));

    if (auto human = record.find("human"); human != record.end()) {
      if (!human->is_object()) Fail(line_no, "human", "expected an object");
      for (auto it = human->begin(); it != human->end(); ++it) {
        if (!it->is_number()) {
          Fail(line_no, "human", "aspect '" + it.key() + "' is not a number");
        }
        inst.human_scores[it.key()] = it->get<double>();
      }
    }
    CheckInstance(inst, line_no);
    AddUnique(ds, std::move(inst), line_no, seen);
  }
  return ds;
}

Dataset ParseTsv(std::string_view contents, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  std::unordered_set<std::string> seen;
  static constexpr const char* kColumns[] = {"id", "system", "lp", "gt", "hyp", "score"};
  const auto lines = SplitLines(contents);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (IsBlank(lines[i])) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = lines[i].find('\t', start);
      cols.emplace_back(lines[i].substr(start, tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (i == 0 && cols.size() == 6 && cols[0] == "id" && cols[5] == "score") {
      continue;  // header
    }
    if (cols.size() != 6) {
      Fail(line_no, "", "expected 6 tab-separated columns, got " +
                            std::to_string(cols.size()));
    }
    EvalInstance inst;
    inst.id = cols[0];
    inst.system = cols[1];
    inst.language_pair = cols[2];
    inst.ground_truths.emplace_back(cols[3]);
    inst.hypothesis = Segment(cols[4]);
    if (!cols[5].empty()) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cols[5], &used);
        if (used != cols[5].size()) throw std::invalid_argument("trailing");
        inst.human_scores["score"] = v;
      } catch (const std::exception&) {
        Fail(line_no, kColumns[5], "not a number: '" + cols[5] + "'");
      }
    }
    CheckInstance(inst, line_no);
    AddUnique(ds, std::move(inst), line_no, seen);
  }
  return ds;
}

Dataset LoadDataset(const std::string& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return format == DatasetFormat::kJsonl ? ParseJsonl(buf.str(), path)
                                           : ParseTsv(buf.str(), path);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string SerializeJsonl(const Dataset& dataset) {
  std::string out;
  for (const EvalInstance& inst : dataset.instances) {
    ordered_json record;
    record["id"] = inst.id;
    record["system"] = inst.system;
    record["lp"] = inst.language_pair;
    ordered_json gts = ordered_json::array();
    for (const Segment& gt : inst.ground_truths) gts.push_back(gt.text());
    record["gts"] = std::move(gts);
    record["hyp"] = inst.hypothesis.text();
    ordered_json human = ordered_json::object();
    for (const auto& [aspect, value] : inst.human_scores) human[aspect] = value;
    record["human"] = std::move(human);
    out += record.dump();
    out += '\n';
  }
  return out;
}

void SaveDataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << SerializeJsonl(dataset);
}

DatasetFormat ParseDatasetFormat(std::string_view name) {
  if (name == "jsonl") return DatasetFormat::kJsonl;
  if (name == "tsv") return DatasetFormat::kTsv;
  throw UsageError("unknown dataset format '" + std::string(name) +
                   "' (expected jsonl or tsv)");
}

std::uint64_t SourceKey(const EvalInstance& instance) {
  if (instance.ground_truths.empty()) return Fnv1a64("");
  return Fnv1a64(instance.ground_truths.front().text());
}

SplitPlan MakeSplits(const Dataset& dataset, std::size_t n_folds,
                     std::uint64_t seed) {
  if (n_folds < 2) throw UsageError("make_splits needs at least 2 folds");

  // Groups in order of first appearance, so the plan only depends on the
  // dataset contents and the seed.
  std::vector<std::uint64_t> keys;
  std::unordered_map<std::uint64_t, std::vector<std::string>> members;
  for (const EvalInstance& inst : dataset.instances) {
    const std::uint64_t key = SourceKey(inst);
    auto [it, inserted] = members.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second.push_back(inst.id);
  }
  const std::size_t groups = keys.size();
  if (groups < n_folds) {
    throw DataError("cannot split " + std::to_string(groups) +
                    " source groups into " + std::to_string(n_folds) + " folds");
  }
  Rng rng(seed);
  rng.Shuffle(keys);

  std::vector<std::size_t> sizes(n_folds);
  const std::size_t chunk = (groups + n_folds - 1) / n_folds;
  if ((n_folds - 1) * chunk < groups) {
    std::fill(sizes.begin(), sizes.end() - 1, chunk);
    sizes.back() = groups - (n_folds - 1) * chunk;
  } else {
    // Ceil-sized parts would leave trailing folds empty; balance instead.
    for (std::size_t f = 0; f < n_folds; ++f) {
      sizes[f] = groups / n_folds + (f < groups % n_folds ? 1 : 0);
    }
  }

  std::vector<std::size_t> fold_of(groups);
  for (std::size_t f = 0, g = 0; f < n_folds; ++f) {
    for (std::size_t k = 0; k < sizes[f]; ++k) fold_of[g++] = f;
  }
  std::unordered_map<std::uint64_t, std::size_t> key_fold;
  for (std::size_t g = 0; g < groups; ++g) key_fold[keys[g]] = fold_of[g];

  SplitPlan plan;
  plan.folds.resize(n_folds);
  for (const EvalInstance& inst : dataset.instances) {
    const std::size_t f = key_fold.at(SourceKey(inst));
    for (std::size_t k = 0; k < n_folds; ++k) {
      auto& ids = k == f ? plan.folds[k].calibration_ids
                         : plan.folds[k].evaluation_ids;
      ids.push_back(inst.id);
    }
  }
  return plan;
}

std::string SerializeSplitPlan(const SplitPlan& plan) {
  ordered_json folds = ordered_json::array();
  for (const Fold& fold : plan.folds) {
    ordered_json f;
    f["calibration"] = fold.calibration_ids;
    f["evaluation"] = fold.evaluation_ids;
    folds.push_back(std::move(f));
  }
  ordered_json root;
  root["folds"] = std::move(folds);
  return root.dump(1) + "\n";
}

SplitPlan ParseSplitPlan(std::string_view json_text) {
  SplitPlan plan;
  try {
    const json root = json::parse(json_text);
    for (const json& f : root.at("folds")) {
      Fold fold;
      fold.calibration_ids = f.at("calibration").get<std::vector<std::string>>();
      fold.evaluation_ids = f.at("evaluation").get<std::vector<std::string>>();
      plan.folds.push_back(std::move(fold));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed split plan: ") + e.what());
  }
  return plan;
}

}  // namespace bmx
