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

// Runs the bmx binary end to end on small generated datasets.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bmx/corpus.hpp"
#include "bmx/metrics.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace bmx {
namespace {

using nlohmann::json;

// Per-test file names: ctest runs the cases of this suite in parallel.
std::string TmpPath(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  return std::string(BMX_TEST_TMPDIR) + "/cli_" + info->name() + "_" + name;
}

int RunCli(const std::string& args, const std::string& stdout_path = "/dev/null") {
  const std::string cmd = std::string(BMX_CLI_PATH) + " " + args + " >" + stdout_path +
                          " 2>" + TmpPath("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<json> ReadJsonl(const std::string& path) {
  std::vector<json> out;
  std::istringstream in(testing::ReadAll(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto fx = testing::MakeBoostFixture(40, 3, {.systems = 5});
    data_ = TmpPath("data.jsonl");
    SaveDataset(fx.dataset, data_);
    dataset_ = fx.dataset;
  }
  std::string data_;
  Dataset dataset_;
};

TEST_F(CliTest, ScoreMatchesLibrary) {
  const std::string out = TmpPath("score.jsonl");
  ASSERT_EQ(RunCli("score --dataset " + data_ + " --metric token_f1 --out " + out), 0);
  const auto rows = ReadJsonl(out);
  ASSERT_EQ(rows.size(), dataset_.instances.size());
  TokenF1Metric f1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i]["id"], dataset_.instances[i].id);
    EXPECT_EQ(rows[i]["s0"].get<double>(), f1.Score(MakeRequest(dataset_.instances[i])));
  }
}

TEST_F(CliTest, ExplainShapes) {
  const std::string out = TmpPath("explain.jsonl");
  ASSERT_EQ(RunCli("explain --dataset " + data_ + " --metric mock --explainer erasure --out " + out), 0);
  const auto rows = ReadJsonl(out);
  ASSERT_EQ(rows.size(), dataset_.instances.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i]["per_segment"].size(), 2u);
    EXPECT_EQ(rows[i]["per_segment"][1].size(), dataset_.instances[i].hypothesis.size());
  }
}

TEST_F(CliTest, BoostWithWeightOneKeepsScores) {
  const std::string out = TmpPath("boost.jsonl");
  ASSERT_EQ(RunCli("boost --dataset " + data_ + " --metric mock --w 1 --p -4 --out " + out), 0);
  for (const json& row : ReadJsonl(out)) EXPECT_EQ(row["s1"].get<double>(), row["s0"].get<double>());
}

TEST_F(CliTest, BoostIsReproducible) {
  const std::string a = TmpPath("boost_a.jsonl"), b = TmpPath("boost_b.jsonl");
  const std::string args = "boost --dataset " + data_ + " --metric token_f1 --w 0.3 --p 2 --seed 5 --out ";
  ASSERT_EQ(RunCli(args + a + " --jobs 1"), 0);
  ASSERT_EQ(RunCli(args + b + " --jobs 4"), 0);
  EXPECT_EQ(testing::ReadAll(a), testing::ReadAll(b));
}

TEST_F(CliTest, CalibrateThenEvaluateWithProfile) {
  const std::string profile = TmpPath("profile.json");
  ASSERT_EQ(RunCli("calibrate --dataset " + data_ +
                " --metric token_f1 --explainer erasure --objective pearson:segment:quality"
                " --p-grid -4:4:9 --out " + profile),
            0);
  const json prof = json::parse(testing::ReadAll(profile));
  EXPECT_EQ(prof["cells_evaluated"], 54);
  EXPECT_EQ(prof["non_baseline_cells"], 45);
  EXPECT_TRUE(prof["created"].is_null());

  const std::string report = TmpPath("report.json"), table = TmpPath("table.txt");
  ASSERT_EQ(RunCli("evaluate --dataset " + data_ + " --metric token_f1 --profile " + profile +
                " --spec pearson:segment:quality --spec kendall:system:quality --resamples 50"
                " --out " + report + " --table " + table),
            0);
  const json rep = json::parse(testing::ReadAll(report));
  EXPECT_EQ(rep["rows"].size(), 2u);
  EXPECT_NE(testing::ReadAll(table).find("kendall:system:quality"), std::string::npos);
}

TEST_F(CliTest, SplitAndFoldCalibration) {
  const std::string plan = TmpPath("plan.json");
  ASSERT_EQ(RunCli("split --dataset " + data_ + " --folds 4 --seed 2 --out " + plan), 0);
  const json p = json::parse(testing::ReadAll(plan));
  ASSERT_EQ(p["folds"].size(), 4u);
  EXPECT_EQ(p["folds"][0]["calibration"].size() + p["folds"][0]["evaluation"].size(),
            dataset_.instances.size());
  EXPECT_EQ(RunCli("calibrate --dataset " + data_ + " --metric mock --explainer erasure"
                " --objective pearson:segment:quality --p-grid -2:2:5 --plan " + plan +
                " --fold 1 --out " + TmpPath("fold_profile.json")),
            0);
}

TEST_F(CliTest, Stability) {
  const std::string out = TmpPath("stability.json");
  ASSERT_EQ(RunCli("stability --dataset " + data_ + " --metric token_f1 --explainer erasure --w 0"
                " --repeats 2 --out " + out),
            0);
  const json s = json::parse(testing::ReadAll(out));
  EXPECT_NEAR(s["mean_pearson"].get<double>(), 1.0, 1e-12);
}

TEST_F(CliTest, ExternalEndpointMatchesBuiltinMock) {
  const std::string a = TmpPath("ext.jsonl"), b = TmpPath("mock.jsonl");
  ASSERT_EQ(RunCli("boost --dataset " + data_ + " --endpoint 'exec:" + FAKE_BRIDGE_PATH +
                "' --w 0.5 --explainer shap --out " + a),
            0);
  ASSERT_EQ(RunCli("boost --dataset " + data_ + " --metric mock --w 0.5 --explainer shap --out " + b), 0);
  EXPECT_EQ(testing::ReadAll(a), testing::ReadAll(b));
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(RunCli("score"), 1);
  EXPECT_EQ(RunCli("score --dataset " + data_), 1);
  EXPECT_EQ(RunCli("boost --dataset " + data_ + " --metric mock --w 2"), 1);
  EXPECT_EQ(RunCli("score --dataset " + data_ + " --metric nonsense"), 1);
  EXPECT_EQ(RunCli("score --dataset /nonexistent.jsonl --metric mock"), 2);
  {
    std::ofstream bad(TmpPath("bad.jsonl"));
    bad << "{\"id\": \"x\", \"gts\": []}\n";
  }
  EXPECT_EQ(RunCli("score --dataset " + TmpPath("bad.jsonl") + " --metric mock"), 2);
  EXPECT_EQ(RunCli("evaluate --dataset " + data_ + " --metric mock --spec pearson:segment:missing"), 2);
  EXPECT_EQ(RunCli("score --dataset " + data_ + " --endpoint tcp:127.0.0.1:1 --timeout-ms 500"), 3);
  EXPECT_EQ(RunCli("score --dataset " + data_ + " --endpoint 'exec:" + FAKE_BRIDGE_PATH + " --nan'"), 3);
}

}  // namespace
}  // namespace bmx
