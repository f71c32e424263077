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

// bmx: boost a text-generation metric with explanations, calibrate the
// boost on labelled data, and meta-evaluate the result.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 metric/bridge error.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bmx/bridge.hpp"
#include "bmx/calibration.hpp"
#include "bmx/common.hpp"
#include "bmx/core.hpp"
#include "bmx/corpus.hpp"
#include "bmx/evaluation.hpp"
#include "bmx/explainers.hpp"
#include "bmx/metrics.hpp"
#include "json.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

struct RunConfig {
  std::string dataset;
  std::string format = "jsonl";
  std::string metric;
  std::string endpoint;
  long timeout_ms = 30000;
  std::size_t batch_size = 64;
  std::string explainer = "lime";
  std::optional<std::size_t> samples;
  std::string replacement_token = bmx::kDefaultReplacementToken;
  std::optional<double> p;
  std::optional<double> w;
  std::size_t iterations = 1;
  std::string profile;
  std::size_t folds = 8;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out = "-";

  // calibrate / evaluate
  std::string objective;
  std::string p_grid;
  std::string w_grid;
  std::vector<std::string> specs;
  std::size_t resamples = 1000;
  std::string plan;
  std::optional<std::size_t> fold;
  std::string table;

  // stability
  std::size_t repeats = 3;
};

void WriteOutput(const std::string& path, const std::string& contents) {
  if (path == "-" || path.empty()) {
    std::cout << contents;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bmx::DataError("cannot write '" + path + "'");
  out << contents;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw bmx::DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bmx::MetricHandle OpenMetric(const RunConfig& cfg) {
  if (cfg.metric.empty() == cfg.endpoint.empty()) {
    throw bmx::UsageError("give exactly one of --metric or --endpoint");
  }
  if (!cfg.metric.empty()) return bmx::MakeBuiltinMetric(cfg.metric);
  bmx::ExternalConfig ext;
  ext.endpoint = cfg.endpoint;
  ext.timeout = std::chrono::milliseconds(cfg.timeout_ms);
  ext.batch_capacity = cfg.batch_size;
  return bmx::ConnectExternalMetric(ext);
}

bmx::Dataset OpenDataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw bmx::UsageError("--dataset is required");
  return bmx::LoadDataset(cfg.dataset, bmx::ParseDatasetFormat(cfg.format));
}

// The dataset, restricted to one side of a fold when --plan is given.
bmx::Dataset OpenDatasetPart(const RunConfig& cfg, bool calibration_side) {
  bmx::Dataset dataset = OpenDataset(cfg);
  if (cfg.plan.empty()) return dataset;
  const bmx::SplitPlan plan = bmx::ParseSplitPlan(ReadFile(cfg.plan));
  const std::size_t k = cfg.fold.value_or(0);
  if (k >= plan.folds.size()) throw bmx::UsageError("--fold out of range for the plan");
  return dataset.Subset(calibration_side ? plan.folds[k].calibration_ids
                                         : plan.folds[k].evaluation_ids);
}

bmx::ExplainerConfig ExplainerFromFlags(const RunConfig& cfg) {
  bmx::ExplainerConfig e = bmx::ExplainerConfig::ForKind(bmx::ParseExplainerKind(cfg.explainer));
  if (cfg.samples) e.permutations = *cfg.samples;
  e.replacement_token = cfg.replacement_token;
  e.seed = cfg.seed;
  e.Validate();
  return e;
}

// Profile first, then explicit flags on top.
bmx::BmxParams ParamsFromFlags(const RunConfig& cfg, const CLI::App& sub) {
  bmx::BmxParams params;
  params.explainer = ExplainerFromFlags(cfg);
  if (!cfg.profile.empty()) {
    const bmx::BmxParams stored = bmx::ParseProfile(ReadFile(cfg.profile));
    params.p = stored.p;
    params.w = stored.w;
    if (sub.count("--explainer") == 0) {
      params.explainer = stored.explainer;
      params.explainer.seed = cfg.seed;
      if (cfg.samples) params.explainer.permutations = *cfg.samples;
      if (sub.count("--replacement-token")) {
        params.explainer.replacement_token = cfg.replacement_token;
      }
    }
  }
  if (cfg.p) params.p = *cfg.p;
  if (cfg.w) params.w = *cfg.w;
  params.iterations = cfg.iterations;
  params.Validate();
  return params;
}

std::vector<double> ParseAxis(const std::string& text, std::vector<double> fallback) {
  if (text.empty()) return fallback;
  // lo:hi:count
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  try {
    if (parts.size() == 3) {
      return bmx::Linspace(std::stod(parts[0]), std::stod(parts[1]),
                           static_cast<std::size_t>(std::stoul(parts[2])));
    }
  } catch (const std::exception&) {
  }
  throw bmx::UsageError("grid axis must be lo:hi:count, got '" + text + "'");
}

std::string CreatedStamp() {
  // Reproducible builds convention: only stamp when SOURCE_DATE_EPOCH is set.
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (epoch == nullptr) return "";
  const std::time_t t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int CmdScore(const RunConfig& cfg) {
  const bmx::Dataset dataset = OpenDataset(cfg);
  const bmx::MetricHandle metric = OpenMetric(cfg);
  std::string out;
  if (!dataset.instances.empty()) {
    std::vector<bmx::MetricRequest> batch;
    for (const auto& inst : dataset.instances) batch.push_back(bmx::MakeRequest(inst));
    const std::vector<double> scores = metric->ScoreBatch(batch);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      ordered_json rec;
      rec["id"] = dataset.instances[i].id;
      rec["s0"] = scores[i];
      out += rec.dump() + "\n";
    }
  }
  WriteOutput(cfg.out, out);
  std::cerr << "bmx: scored " << dataset.instances.size() << " instances\n";
  return 0;
}

int CmdExplain(const RunConfig& cfg) {
  const bmx::Dataset dataset = OpenDataset(cfg);
  const bmx::MetricHandle metric = OpenMetric(cfg);
  const bmx::ExplainerConfig explainer = ExplainerFromFlags(cfg);
  std::vector<bmx::Attribution> attributions(dataset.instances.size());
  const std::size_t jobs = metric->single_flight() ? 1 : cfg.jobs;
  bmx::ParallelFor(attributions.size(), jobs, [&](std::size_t i) {
    attributions[i] = bmx::Explain(*metric, dataset.instances[i], explainer);
  });
  std::string out;
  for (std::size_t i = 0; i < attributions.size(); ++i) {
    ordered_json rec;
    rec["id"] = dataset.instances[i].id;
    rec["base_score"] = attributions[i].base_score;
    rec["per_segment"] = attributions[i].per_segment;
    out += rec.dump() + "\n";
  }
  WriteOutput(cfg.out, out);
  std::cerr << "bmx: explained " << dataset.instances.size() << " instances with "
            << bmx::ToString(explainer.kind) << "\n";
  return 0;
}

int CmdBoost(const RunConfig& cfg, const CLI::App& sub) {
  const bmx::Dataset dataset = OpenDataset(cfg);
  const bmx::MetricHandle metric = OpenMetric(cfg);
  const bmx::BmxParams params = ParamsFromFlags(cfg, sub);
  std::string out;
  for (const bmx::ScoredInstance& s : bmx::BoostAll(*metric, dataset, params, cfg.jobs)) {
    ordered_json rec;
    rec["id"] = s.id;
    rec["s0"] = s.s0;
    rec["s_hat"] = s.s_hat;
    rec["s1"] = s.s1;
    out += rec.dump() + "\n";
  }
  WriteOutput(cfg.out, out);
  std::cerr << "bmx: boosted " << dataset.instances.size() << " instances (p=" << params.p
            << ", w=" << params.w << ")\n";
  return 0;
}

int CmdCalibrate(const RunConfig& cfg) {
  const bmx::Dataset dataset = OpenDatasetPart(cfg, /*calibration_side=*/true);
  const bmx::MetricHandle metric = OpenMetric(cfg);
  if (cfg.objective.empty()) throw bmx::UsageError("--objective is required");
  const bmx::CorrelationSpec objective = bmx::CorrelationSpec::Parse(cfg.objective);
  bmx::GridSpec grid;
  grid.p_values = ParseAxis(cfg.p_grid, grid.p_values);
  grid.w_values = ParseAxis(cfg.w_grid, grid.w_values);
  const bmx::CalibrationResult result =
      bmx::GridSearch(*metric, dataset, ExplainerFromFlags(cfg), grid, objective, cfg.jobs);
  WriteOutput(cfg.out, bmx::ToProfileJson(result, CreatedStamp()));
  std::cerr << "bmx: " << result.cells_evaluated << " cells, " << result.improving.size()
            << " improving; selected p=" << result.p << " w=" << result.w
            << (result.fallback_used ? " (fallback)" : "") << "\n";
  return 0;
}

int CmdEvaluate(const RunConfig& cfg, const CLI::App& sub) {
  const bmx::Dataset dataset = OpenDatasetPart(cfg, /*calibration_side=*/false);
  const bmx::MetricHandle metric = OpenMetric(cfg);
  if (cfg.specs.empty()) throw bmx::UsageError("at least one --spec is required");
  std::vector<bmx::CorrelationSpec> specs;
  for (const std::string& s : cfg.specs) specs.push_back(bmx::CorrelationSpec::Parse(s));
  bmx::EvaluateOptions options;
  options.resamples = cfg.resamples;
  options.seed = cfg.seed;
  options.jobs = cfg.jobs;
  const bmx::EvalReport report =
      bmx::Evaluate(*metric, dataset, ParamsFromFlags(cfg, sub), specs, options);
  WriteOutput(cfg.out, report.ToJson());
  if (!cfg.table.empty()) {
    WriteOutput(cfg.table, report.ToText());
  } else {
    std::cerr << report.ToText();
  }
  return 0;
}

int CmdStability(const RunConfig& cfg, const CLI::App& sub) {
  const bmx::Dataset dataset = OpenDataset(cfg);
  const bmx::MetricHandle metric = OpenMetric(cfg);
  const bmx::BmxParams params = ParamsFromFlags(cfg, sub);
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < cfg.repeats; ++r) seeds.push_back(cfg.seed + r);
  const bmx::StabilityResult result =
      bmx::StabilityCheck(*metric, dataset, params, seeds, cfg.jobs);
  ordered_json root;
  root["repeats"] = cfg.repeats;
  root["explainer"] = bmx::ToString(params.explainer.kind);
  root["permutations"] = params.explainer.permutations;
  root["mean_pearson"] = result.mean_pearson;
  root["pairwise"] = result.pairwise;
  WriteOutput(cfg.out, root.dump(2) + "\n");
  return 0;
}

int CmdSplit(const RunConfig& cfg) {
  const bmx::Dataset dataset = OpenDataset(cfg);
  const bmx::SplitPlan plan = bmx::MakeSplits(dataset, cfg.folds, cfg.seed);
  WriteOutput(cfg.out, bmx::SerializeSplitPlan(plan));
  std::cerr << "bmx: " << plan.folds.size() << " folds\n";
  return 0;
}

void AddDatasetFlags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--dataset", cfg.dataset, "Dataset file")->required();
  sub->add_option("--format", cfg.format, "Dataset format: jsonl or tsv");
  sub->add_option("--seed", cfg.seed, "Random seed");
  sub->add_option("--out", cfg.out, "Output file ('-' for stdout)");
}

void AddMetricFlags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--metric", cfg.metric,
                  "Builtin metric: token_f1, overlap_lp, mock, constant:<v>, additive:<table.json>");
  sub->add_option("--endpoint", cfg.endpoint, "External metric: exec:<command> or tcp:<host>:<port>");
  sub->add_option("--timeout-ms", cfg.timeout_ms, "Bridge response deadline");
  sub->add_option("--batch-size", cfg.batch_size, "Bridge batch capacity");
  sub->add_option("--jobs", cfg.jobs, "Instances processed in parallel");
}

void AddExplainerFlags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--explainer", cfg.explainer, "erasure, lime or shap");
  sub->add_option("--samples", cfg.samples, "LIME samples / SHAP permutations per segment");
  sub->add_option("--replacement-token", cfg.replacement_token, "Token used for masked words");
}

void AddBoostFlags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--p", cfg.p, "Power mean exponent in [-30, 30]");
  sub->add_option("--w", cfg.w, "Weight of the original score in [0, 1]");
  sub->add_option("--iterations", cfg.iterations, "Boost iterations");
  sub->add_option("--profile", cfg.profile, "Calibration profile (explicit --p/--w win)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boost text-generation metrics with explanations"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto* score = app.add_subcommand("score", "Score every instance with the metric");
  AddDatasetFlags(score, cfg);
  AddMetricFlags(score, cfg);

  auto* explain = app.add_subcommand("explain", "Token-level attributions per instance");
  AddDatasetFlags(explain, cfg);
  AddMetricFlags(explain, cfg);
  AddExplainerFlags(explain, cfg);

  auto* boost = app.add_subcommand("boost", "Boosted scores s0, s_hat, s1 per instance");
  AddDatasetFlags(boost, cfg);
  AddMetricFlags(boost, cfg);
  AddExplainerFlags(boost, cfg);
  AddBoostFlags(boost, cfg);

  auto* calibrate = app.add_subcommand("calibrate", "Grid search p and w; write a profile");
  AddDatasetFlags(calibrate, cfg);
  AddMetricFlags(calibrate, cfg);
  AddExplainerFlags(calibrate, cfg);
  calibrate->add_option("--objective", cfg.objective, "Correlation, e.g. pearson:segment:da")
      ->required();
  calibrate->add_option("--p-grid", cfg.p_grid, "p axis as lo:hi:count (default -30:30:600)");
  calibrate->add_option("--w-grid", cfg.w_grid, "w axis as lo:hi:count (default 0:1:6)");
  calibrate->add_option("--plan", cfg.plan, "Split plan; calibrate on a fold's calibration part");
  calibrate->add_option("--fold", cfg.fold, "Fold index within --plan");

  auto* evaluate = app.add_subcommand("evaluate", "Correlations with significance tests");
  AddDatasetFlags(evaluate, cfg);
  AddMetricFlags(evaluate, cfg);
  AddExplainerFlags(evaluate, cfg);
  AddBoostFlags(evaluate, cfg);
  evaluate->add_option("--spec", cfg.specs, "Correlation, e.g. kendall:system:coherence")
      ->required();
  evaluate->add_option("--resamples", cfg.resamples, "Permute-both resamples");
  evaluate->add_option("--plan", cfg.plan, "Split plan; evaluate on a fold's evaluation part");
  evaluate->add_option("--fold", cfg.fold, "Fold index within --plan");
  evaluate->add_option("--table", cfg.table, "Write the text table here");

  auto* stability = app.add_subcommand("stability", "Agreement of boosted scores across seeds");
  AddDatasetFlags(stability, cfg);
  AddMetricFlags(stability, cfg);
  AddExplainerFlags(stability, cfg);
  AddBoostFlags(stability, cfg);
  stability->add_option("--repeats", cfg.repeats, "Runs with seeds seed, seed+1, ...");

  auto* split = app.add_subcommand("split", "Source-disjoint calibration/evaluation folds");
  AddDatasetFlags(split, cfg);
  split->add_option("--folds", cfg.folds, "Number of folds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*score) return CmdScore(cfg);
    if (*explain) return CmdExplain(cfg);
    if (*boost) return CmdBoost(cfg, *boost);
    if (*calibrate) return CmdCalibrate(cfg);
    if (*evaluate) return CmdEvaluate(cfg, *evaluate);
    if (*stability) return CmdStability(cfg, *stability);
    if (*split) return CmdSplit(cfg);
  } catch (const bmx::UsageError& e) {
    std::cerr << "bmx: usage error: " << e.what() << "\n";
    return 1;
  } catch (const bmx::MetricError& e) {
    std::cerr << "bmx: metric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "bmx: data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
