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

#ifndef BMX_CALIBRATION_HPP_
#define BMX_CALIBRATION_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bmx/core.hpp"
#include "bmx/corpus.hpp"
#include "bmx/evaluation.hpp"
#include "bmx/explainers.hpp"
#include "bmx/metrics.hpp"

namespace bmx {

// Default grid: 600 values of p in [-30, 30] and 6 values of w in [0, 1].
struct GridSpec {
  std::vector<double> p_values = Linspace(-kMaxAbsP, kMaxAbsP, 600);
  std::vector<double> w_values = Linspace(0.0, 1.0, 6);

  void Validate() const;
  std::size_t cells() const { return p_values.size() * w_values.size(); }
  // Cells with w != 1.
  std::size_t non_baseline_cells() const;
};

struct ImprovingCell {
  std::string group;  // language pair, or the aspect when there is none
  double p = 0.0;
  double w = 0.0;
  double delta = 0.0;  // correlation gain over the w = 1 baseline
};

struct GroupBaseline {
  std::string group;
  std::optional<double> correlation;
};

struct CalibrationResult {
  double p = 1.0;
  double w = 1.0;
  bool fallback_used = false;
  std::vector<ImprovingCell> improving;
  std::vector<GroupBaseline> baselines;
  std::size_t cells_evaluated = 0;
  std::size_t non_baseline_cells = 0;

  // Provenance, written to the profile file.
  std::string metric;
  ExplainerConfig explainer;
  CorrelationSpec objective;
};

// What the sweep needs from one instance: s0 and the regularized
// concatenated attribution.
struct PreparedInstance {
  double s0 = 0.0;
  std::vector<double> importances;
};

// The single explanation pass: one Explain() per instance.
std::vector<PreparedInstance> PrepareInstances(Metric& metric, const Dataset& dataset,
                                               const ExplainerConfig& explainer,
                                               std::size_t jobs = 1);

// Sweeps every (p, w) cell over prepared instances. A cell improves a group
// when its correlation beats the group's w = 1 baseline; it is listed once
// per group it improves. The selected p and w are the medians of the
// improving cells' values, or (1, 1) when nothing improves.
CalibrationResult SweepGrid(const Dataset& dataset,
                            const std::vector<PreparedInstance>& prepared,
                            const GridSpec& grid, const CorrelationSpec& objective,
                            std::size_t jobs = 1);

CalibrationResult GridSearch(Metric& metric, const Dataset& dataset,
                             const ExplainerConfig& explainer, const GridSpec& grid,
                             const CorrelationSpec& objective, std::size_t jobs = 1);

// Median p and median w of the improving cells, taken independently.
std::pair<double, double> SelectMedians(const std::vector<ImprovingCell>& cells);

// Arithmetic mean of the selected p values and of the selected w values.
std::pair<double, double> MergeCalibrations(const std::vector<CalibrationResult>& results);

// Profile file: {p, w, explainer, metric, objective, created, ...}.
// `created` is written verbatim; pass an empty string for null.
std::string ToProfileJson(const CalibrationResult& result, const std::string& created);

// Parameters stored in a profile (p, w and the explainer settings).
BmxParams ParseProfile(const std::string& json_text);

}  // namespace bmx

#endif  // BMX_CALIBRATION_HPP_
