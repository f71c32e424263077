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

#include "bmx/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "bmx/common.hpp"
#include "json.hpp"

namespace bmx {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::size_t kMaxRedraws = 100;
constexpr double kTieTolerance = 1e-12;

struct Items {
  std::vector<double> a, b, human;
};

// Items at the spec's level for the instances in `indices`.
Items CollectItems(const Dataset& dataset, const std::vector<std::size_t>& indices,
                   std::span<const double> original, std::span<const double> boosted,
                   const CorrelationSpec& spec) {
  Items items;
  if (spec.level == Level::kSegment) {
    for (std::size_t i : indices) {
      items.a.push_back(original[i]);
      items.b.push_back(boosted[i]);
      items.human.push_back(dataset.instances[i].human_scores.at(spec.aspect));
    }
    return items;
  }
  struct Acc {
    double a = 0, b = 0, h = 0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> systems;
  for (std::size_t i : indices) {
    Acc& acc = systems[dataset.instances[i].system];
    acc.a += original[i];
    acc.b += boosted[i];
    acc.h += dataset.instances[i].human_scores.at(spec.aspect);
    ++acc.n;
  }
  for (const auto& [name, acc] : systems) {
    const auto n = static_cast<double>(acc.n);
    items.a.push_back(acc.a / n);
    items.b.push_back(acc.b / n);
    items.human.push_back(acc.h / n);
  }
  return items;
}

std::optional<double> TryCorrelate(Coefficient c, std::span<const double> x,
                                   std::span<const double> y) {
  try {
    return Correlate(c, x, y);
  } catch (const UndefinedCorrelation&) {
    return std::nullopt;
  }
}

void CheckAligned(std::span<const double> a, std::span<const double> b,
                  std::span<const double> human) {
  if (a.size() != b.size() || a.size() != human.size()) {
    throw UsageError("permute-both test: score vectors are not aligned");
  }
}

ordered_json OptionalJson(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::string Fixed(const std::optional<double>& v, int precision = 4) {
  if (!v) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, *v);
  return buf;
}

}  // namespace

std::string ToString(Level level) {
  return level == Level::kSegment ? "segment" : "system";
}

Level ParseLevel(std::string_view name) {
  if (name == "segment") return Level::kSegment;
  if (name == "system") return Level::kSystem;
  throw UsageError("unknown level '" + std::string(name) + "' (expected segment or system)");
}

CorrelationSpec CorrelationSpec::Parse(std::string_view text) {
  const auto first = text.find(':');
  const auto second = first == std::string_view::npos ? first : text.find(':', first + 1);
  if (second == std::string_view::npos) {
    throw UsageError("correlation spec must look like pearson:segment:da, got '" +
                     std::string(text) + "'");
  }
  CorrelationSpec spec;
  spec.coefficient = ParseCoefficient(text.substr(0, first));
  spec.level = ParseLevel(text.substr(first + 1, second - first - 1));
  spec.aspect = std::string(text.substr(second + 1));
  if (spec.aspect.empty()) throw UsageError("correlation spec needs an aspect");
  return spec;
}

std::string CorrelationSpec::ToString() const {
  return bmx::ToString(coefficient) + ":" + bmx::ToString(level) + ":" + aspect;
}

std::vector<double> HumanScores(const Dataset& dataset, const std::string& aspect) {
  std::vector<double> out;
  out.reserve(dataset.instances.size());
  for (const EvalInstance& inst : dataset.instances) {
    auto it = inst.human_scores.find(aspect);
    if (it == inst.human_scores.end()) {
      throw DataError("instance '" + inst.id + "' has no human score for aspect '" +
                      aspect + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

std::vector<SystemScore> SystemScores(const Dataset& dataset,
                                      std::span<const double> scores,
                                      const std::string& aspect) {
  if (scores.size() != dataset.instances.size()) {
    throw UsageError("system scores: one metric score per instance required");
  }
  const std::vector<double> human = HumanScores(dataset, aspect);
  std::map<std::string, SystemScore> systems;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    SystemScore& s = systems[dataset.instances[i].system];
    s.metric_mean += scores[i];
    s.human_mean += human[i];
    ++s.count;
  }
  std::vector<SystemScore> out;
  for (auto& [name, s] : systems) {
    s.system = name;
    s.metric_mean /= static_cast<double>(s.count);
    s.human_mean /= static_cast<double>(s.count);
    out.push_back(s);
  }
  return out;
}

double LevelCorrelation(const CorrelationSpec& spec, const Dataset& dataset,
                        std::span<const double> scores) {
  if (spec.level == Level::kSegment) {
    return Correlate(spec.coefficient, scores, HumanScores(dataset, spec.aspect));
  }
  std::vector<double> metric, human;
  for (const SystemScore& s : SystemScores(dataset, scores, spec.aspect)) {
    metric.push_back(s.metric_mean);
    human.push_back(s.human_mean);
  }
  return Correlate(spec.coefficient, metric, human);
}

PermutationTest PermuteBothTest(std::span<const double> a, std::span<const double> b,
                                std::span<const double> human, Coefficient coefficient,
                                std::size_t resamples, std::uint64_t seed,
                                std::size_t jobs) {
  CheckAligned(a, b, human);
  if (resamples == 0) throw UsageError("permute-both test needs at least one resample");
  PermutationTest result;
  result.delta = Correlate(coefficient, b, human) - Correlate(coefficient, a, human);
  result.resamples = resamples;

  const std::size_t n = a.size();
  std::atomic<std::size_t> at_least{0};
  ParallelFor(resamples, jobs, [&](std::size_t r) {
    Rng rng(DeriveSeed(seed, "permute-both", r));
    std::vector<double> sa(n), sb(n);
    for (std::size_t attempt = 0;; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) {
        const bool swap = rng.Coin();
        sa[i] = swap ? b[i] : a[i];
        sb[i] = swap ? a[i] : b[i];
      }
      try {
        const double delta =
            Correlate(coefficient, sb, human) - Correlate(coefficient, sa, human);
        if (delta >= result.delta - kTieTolerance) at_least.fetch_add(1);
        return;
      } catch (const UndefinedCorrelation&) {
        if (attempt + 1 >= kMaxRedraws) throw;
      }
    }
  });
  result.p_value = static_cast<double>(at_least.load() + 1) /
                   static_cast<double>(resamples + 1);
  return result;
}

PermutationTest PermuteBothExact(std::span<const double> a, std::span<const double> b,
                                 std::span<const double> human, Coefficient coefficient) {
  CheckAligned(a, b, human);
  const std::size_t n = a.size();
  if (n > 24) throw UsageError("exact permute-both enumeration is limited to 24 items");
  PermutationTest result;
  result.delta = Correlate(coefficient, b, human) - Correlate(coefficient, a, human);
  std::size_t valid = 0, at_least = 0;
  std::vector<double> sa(n), sb(n);
  for (std::uint64_t pattern = 0; pattern < (std::uint64_t{1} << n); ++pattern) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool swap = (pattern >> i) & 1U;
      sa[i] = swap ? b[i] : a[i];
      sb[i] = swap ? a[i] : b[i];
    }
    try {
      const double delta = Correlate(coefficient, sb, human) - Correlate(coefficient, sa, human);
      ++valid;
      if (delta >= result.delta - kTieTolerance) ++at_least;
    } catch (const UndefinedCorrelation&) {
    }
  }
  result.resamples = valid;
  result.p_value = static_cast<double>(at_least) / static_cast<double>(valid);
  return result;
}

std::vector<bool> Bonferroni(std::span<const double> p_values, std::size_t family_size,
                             double alpha) {
  if (family_size == 0 || family_size < p_values.size()) {
    throw UsageError("Bonferroni family size must cover every test in the family");
  }
  const double threshold = alpha / static_cast<double>(family_size);
  std::vector<bool> flags;
  flags.reserve(p_values.size());
  for (double p : p_values) flags.push_back(p <= threshold);
  return flags;
}

EvalReport BuildReport(const Dataset& dataset, std::span<const double> original,
                       std::span<const double> boosted,
                       const std::vector<CorrelationSpec>& specs,
                       const EvaluateOptions& options) {
  const std::size_t n = dataset.instances.size();
  if (original.size() != n || boosted.size() != n) {
    throw UsageError("report: one original and one boosted score per instance required");
  }
  for (const CorrelationSpec& spec : specs) HumanScores(dataset, spec.aspect);

  std::map<std::string, std::vector<std::size_t>> by_lp;
  for (std::size_t i = 0; i < n; ++i) by_lp[dataset.instances[i].language_pair].push_back(i);
  const bool has_lp = !(by_lp.size() == 1 && by_lp.begin()->first.empty());

  EvalReport report;
  for (const CorrelationSpec& spec : specs) {
    for (const auto& [lp, indices] : by_lp) {
      ReportRow row;
      row.group = has_lp ? (lp.empty() ? "(none)" : lp) : spec.aspect;
      row.spec = spec;
      const Items items = CollectItems(dataset, indices, original, boosted, spec);
      row.baseline = TryCorrelate(spec.coefficient, items.a, items.human);
      row.boosted = TryCorrelate(spec.coefficient, items.b, items.human);
      if (row.baseline && row.boosted) {
        row.delta = *row.boosted - *row.baseline;
        if (options.resamples > 0) {
          try {
            const std::uint64_t seed =
                DeriveSeed(options.seed, row.group + "|" + spec.ToString());
            row.p_value = PermuteBothTest(items.a, items.b, items.human, spec.coefficient,
                                          options.resamples, seed, options.jobs)
                              .p_value;
          } catch (const UndefinedCorrelation&) {
          }
        }
      }
      report.rows.push_back(std::move(row));
    }
  }

  // Family: rows sharing the correlation type (coefficient and level).
  for (ReportRow& row : report.rows) {
    std::size_t family = options.family_size;
    if (family == 0) {
      family = static_cast<std::size_t>(std::count_if(
          report.rows.begin(), report.rows.end(), [&](const ReportRow& other) {
            return other.spec.coefficient == row.spec.coefficient &&
                   other.spec.level == row.spec.level;
          }));
    }
    row.family_size = family;
    if (row.p_value) {
      row.significant = *row.p_value <= kSignificanceLevel;
      const double p = *row.p_value;
      row.significant_bonferroni = Bonferroni(std::span<const double>(&p, 1), family).front();
    }
    report.significant += row.significant ? 1 : 0;
    report.significant_bonferroni += row.significant_bonferroni ? 1 : 0;
  }
  return report;
}

EvalReport Evaluate(Metric& metric, const Dataset& dataset, const BmxParams& params,
                    const std::vector<CorrelationSpec>& specs,
                    const EvaluateOptions& options) {
  if (specs.empty()) throw UsageError("evaluate needs at least one correlation spec");
  for (const CorrelationSpec& spec : specs) HumanScores(dataset, spec.aspect);
  const std::vector<ScoredInstance> scored = BoostAll(metric, dataset, params, options.jobs);
  std::vector<double> original, boosted;
  for (const ScoredInstance& s : scored) {
    original.push_back(s.s0);
    boosted.push_back(s.s1);
  }
  EvalReport report = BuildReport(dataset, original, boosted, specs, options);
  report.metric = metric.name();
  report.params = params;
  return report;
}

std::string EvalReport::ToJson() const {
  ordered_json root;
  root["metric"] = metric;
  root["params"] = {{"p", params.p},
                    {"w", params.w},
                    {"iterations", params.iterations},
                    {"explainer", ToString(params.explainer.kind)},
                    {"permutations", params.explainer.permutations},
                    {"seed", params.explainer.seed}};
  ordered_json rows_json = ordered_json::array();
  for (const ReportRow& row : rows) {
    ordered_json r;
    r["group"] = row.group;
    r["correlation"] = row.spec.ToString();
    r["baseline"] = OptionalJson(row.baseline);
    r["boosted"] = OptionalJson(row.boosted);
    r["delta"] = OptionalJson(row.delta);
    r["p_value"] = OptionalJson(row.p_value);
    r["significant"] = row.significant;
    r["significant_bonferroni"] = row.significant_bonferroni;
    r["family_size"] = row.family_size;
    rows_json.push_back(std::move(r));
  }
  root["rows"] = std::move(rows_json);
  root["significant"] = significant;
  root["significant_bonferroni"] = significant_bonferroni;
  return root.dump(2) + "\n";
}

std::string EvalReport::ToText() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-14s %-26s %8s %8s %8s %8s\n", "group", "correlation",
                "ORIG", "BMX", "delta", "p");
  os << line;
  for (const ReportRow& row : rows) {
    std::string mark;
    if (row.delta && *row.delta > 0) mark += "+";
    if (row.significant_bonferroni) {
      mark += "**";
    } else if (row.significant) {
      mark += "*";
    }
    std::snprintf(line, sizeof(line), "%-14s %-26s %8s %8s %8s %8s %s\n", row.group.c_str(),
                  row.spec.ToString().c_str(), Fixed(row.baseline, 3).c_str(),
                  Fixed(row.boosted, 3).c_str(), Fixed(row.delta).c_str(),
                  Fixed(row.p_value).c_str(), mark.c_str());
    os << line;
  }
  os << "significant: " << significant << " (" << significant_bonferroni
     << " after Bonferroni)\n";
  return os.str();
}

StabilityResult StabilityCheck(Metric& metric, const Dataset& dataset,
                               const BmxParams& params,
                               const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
  if (seeds.size() < 2) throw UsageError("stability check needs at least two runs");
  std::vector<std::vector<double>> runs;
  for (std::uint64_t seed : seeds) {
    BmxParams run_params = params;
    run_params.explainer.seed = seed;
    std::vector<double> s1;
    for (const ScoredInstance& s : BoostAll(metric, dataset, run_params, jobs)) {
      s1.push_back(s.s1);
    }
    runs.push_back(std::move(s1));
  }
  StabilityResult result;
  double sum = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t j = i + 1; j < runs.size(); ++j) {
      result.pairwise.push_back(Pearson(runs[i], runs[j]));
      sum += result.pairwise.back();
    }
  }
  result.mean_pearson = sum / static_cast<double>(result.pairwise.size());
  return result;
}

}  // namespace bmx
