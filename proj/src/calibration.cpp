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

#include "bmx/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bmx/common.hpp"
#include "bmx/correlation.hpp"
#include "json.hpp"

namespace bmx {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct Group {
  std::string name;
  std::vector<std::size_t> indices;
};

std::vector<Group> GroupByLanguagePair(const Dataset& dataset, const std::string& aspect) {
  std::map<std::string, std::vector<std::size_t>> by_lp;
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    by_lp[dataset.instances[i].language_pair].push_back(i);
  }
  std::vector<Group> groups;
  const bool has_lp = !(by_lp.size() == 1 && by_lp.begin()->first.empty());
  for (auto& [lp, indices] : by_lp) {
    groups.push_back({has_lp ? (lp.empty() ? "(none)" : lp) : aspect, std::move(indices)});
  }
  return groups;
}

// Correlation of `scores` with the group's human scores at the objective's
// level; nullopt when undefined.
std::optional<double> GroupCorrelation(const Dataset& dataset, const Group& group,
                                       const std::vector<double>& scores,
                                       const CorrelationSpec& objective) {
  std::vector<double> metric, human;
  if (objective.level == Level::kSegment) {
    for (std::size_t i : group.indices) {
      metric.push_back(scores[i]);
      human.push_back(dataset.instances[i].human_scores.at(objective.aspect));
    }
  } else {
    std::map<std::string, std::pair<double, double>> sums;
    std::map<std::string, std::size_t> counts;
    for (std::size_t i : group.indices) {
      auto& s = sums[dataset.instances[i].system];
      s.first += scores[i];
      s.second += dataset.instances[i].human_scores.at(objective.aspect);
      ++counts[dataset.instances[i].system];
    }
    for (const auto& [system, s] : sums) {
      const auto n = static_cast<double>(counts[system]);
      metric.push_back(s.first / n);
      human.push_back(s.second / n);
    }
  }
  try {
    return Correlate(objective.coefficient, metric, human);
  } catch (const UndefinedCorrelation&) {
    return std::nullopt;
  }
}

ordered_json ExplainerJson(const ExplainerConfig& e) {
  ordered_json j;
  j["kind"] = ToString(e.kind);
  j["permutations"] = e.permutations;
  j["replacement_token"] = e.replacement_token;
  j["seed"] = e.seed;
  j["exact_shap_max_tokens"] = e.exact_shap_max_tokens;
  j["kernel_width"] = e.kernel_width;
  j["ridge_alpha"] = e.ridge_alpha;
  return j;
}

}  // namespace

void GridSpec::Validate() const {
  if (p_values.empty() || w_values.empty()) throw UsageError("grid axes must be nonempty");
  if (!std::is_sorted(p_values.begin(), p_values.end()) ||
      !std::is_sorted(w_values.begin(), w_values.end())) {
    throw UsageError("grid axes must be sorted ascending");
  }
  for (double p : p_values) {
    if (!std::isfinite(p) || std::abs(p) > kMaxAbsP) throw UsageError("grid p outside [-30, 30]");
  }
  for (double w : w_values) {
    if (!(w >= 0.0 && w <= 1.0)) throw UsageError("grid w outside [0, 1]");
  }
}

std::size_t GridSpec::non_baseline_cells() const {
  const auto ws = static_cast<std::size_t>(
      std::count_if(w_values.begin(), w_values.end(), [](double w) { return w != 1.0; }));
  return ws * p_values.size();
}

std::vector<PreparedInstance> PrepareInstances(Metric& metric, const Dataset& dataset,
                                               const ExplainerConfig& explainer,
                                               std::size_t jobs) {
  explainer.Validate();
  std::vector<PreparedInstance> prepared(dataset.instances.size());
  ParallelFor(prepared.size(), jobs, [&](std::size_t i) {
    const Attribution attribution = Explain(metric, dataset.instances[i], explainer);
    prepared[i].s0 = attribution.base_score;
    prepared[i].importances = RegularizedImportances(attribution);
  });
  return prepared;
}

CalibrationResult SweepGrid(const Dataset& dataset,
                            const std::vector<PreparedInstance>& prepared,
                            const GridSpec& grid, const CorrelationSpec& objective,
                            std::size_t jobs) {
  grid.Validate();
  if (prepared.size() != dataset.instances.size()) {
    throw UsageError("one prepared entry per instance required");
  }
  HumanScores(dataset, objective.aspect);

  const std::vector<Group> groups = GroupByLanguagePair(dataset, objective.aspect);
  std::vector<double> s0(prepared.size());
  for (std::size_t i = 0; i < prepared.size(); ++i) s0[i] = prepared[i].s0;

  CalibrationResult result;
  result.objective = objective;
  result.cells_evaluated = grid.cells();
  result.non_baseline_cells = grid.non_baseline_cells();
  std::vector<std::optional<double>> baseline;
  for (const Group& g : groups) {
    baseline.push_back(GroupCorrelation(dataset, g, s0, objective));
    result.baselines.push_back({g.name, baseline.back()});
  }

  std::vector<std::vector<ImprovingCell>> per_p(grid.p_values.size());
  ParallelFor(grid.p_values.size(), jobs, [&](std::size_t pi) {
    const double p = grid.p_values[pi];
    std::vector<double> s_hat(prepared.size());
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      s_hat[i] = PowerMean(prepared[i].importances, p);
    }
    std::vector<double> s1(prepared.size());
    for (double w : grid.w_values) {
      for (std::size_t i = 0; i < prepared.size(); ++i) s1[i] = Combine(s0[i], s_hat[i], w);
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (!baseline[g]) continue;
        const std::optional<double> corr = GroupCorrelation(dataset, groups[g], s1, objective);
        if (corr && *corr > *baseline[g]) {
          per_p[pi].push_back({groups[g].name, p, w, *corr - *baseline[g]});
        }
      }
    }
  });
  for (auto& cells : per_p) {
    result.improving.insert(result.improving.end(), cells.begin(), cells.end());
  }

  if (result.improving.empty()) {
    result.p = 1.0;
    result.w = 1.0;
    result.fallback_used = true;
  } else {
    std::tie(result.p, result.w) = SelectMedians(result.improving);
  }
  return result;
}

CalibrationResult GridSearch(Metric& metric, const Dataset& dataset,
                             const ExplainerConfig& explainer, const GridSpec& grid,
                             const CorrelationSpec& objective, std::size_t jobs) {
  grid.Validate();
  HumanScores(dataset, objective.aspect);
  if (metric.single_flight()) jobs = 1;
  CalibrationResult result =
      SweepGrid(dataset, PrepareInstances(metric, dataset, explainer, jobs), grid, objective, jobs);
  result.metric = metric.name();
  result.explainer = explainer;
  return result;
}

std::pair<double, double> SelectMedians(const std::vector<ImprovingCell>& cells) {
  if (cells.empty()) throw UsageError("no improving cells to select from");
  std::vector<double> ps, ws;
  ps.reserve(cells.size());
  ws.reserve(cells.size());
  for (const ImprovingCell& c : cells) {
    ps.push_back(c.p);
    ws.push_back(c.w);
  }
  return {Median(std::move(ps)), Median(std::move(ws))};
}

std::pair<double, double> MergeCalibrations(const std::vector<CalibrationResult>& results) {
  if (results.empty()) throw UsageError("nothing to merge");
  double p = 0.0, w = 0.0;
  for (const CalibrationResult& r : results) {
    p += r.p;
    w += r.w;
  }
  const auto n = static_cast<double>(results.size());
  return {p / n, w / n};
}

std::string ToProfileJson(const CalibrationResult& result, const std::string& created) {
  ordered_json root;
  root["p"] = result.p;
  root["w"] = result.w;
  root["explainer"] = ExplainerJson(result.explainer);
  root["metric"] = result.metric;
  root["objective"] = result.objective.ToString();
  root["created"] = created.empty() ? ordered_json(nullptr) : ordered_json(created);
  root["fallback_used"] = result.fallback_used;
  root["cells_evaluated"] = result.cells_evaluated;
  root["non_baseline_cells"] = result.non_baseline_cells;
  root["improving_cells"] = result.improving.size();
  ordered_json baselines = ordered_json::object();
  for (const GroupBaseline& b : result.baselines) {
    baselines[b.group] = b.correlation ? ordered_json(*b.correlation) : ordered_json(nullptr);
  }
  root["baselines"] = std::move(baselines);
  return root.dump(2) + "\n";
}

BmxParams ParseProfile(const std::string& json_text) {
  BmxParams params;
  try {
    const json root = json::parse(json_text);
    params.p = root.at("p").get<double>();
    params.w = root.at("w").get<double>();
    if (auto e = root.find("explainer"); e != root.end() && e->is_object()) {
      ExplainerConfig& cfg = params.explainer;
      cfg = ExplainerConfig::ForKind(ParseExplainerKind(e->at("kind").get<std::string>()));
      cfg.permutations = e->value("permutations", cfg.permutations);
      cfg.replacement_token = e->value("replacement_token", cfg.replacement_token);
      cfg.seed = e->value("seed", cfg.seed);
      cfg.exact_shap_max_tokens = e->value("exact_shap_max_tokens", cfg.exact_shap_max_tokens);
      cfg.kernel_width = e->value("kernel_width", cfg.kernel_width);
      cfg.ridge_alpha = e->value("ridge_alpha", cfg.ridge_alpha);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed profile: ") + e.what());
  }
  params.Validate();
  return params;
}

}  // namespace bmx
