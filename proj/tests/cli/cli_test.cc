/*
 * Copyright 2026 The PHD Authors.
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


// Drives the phd binary as a subprocess. PHD_CLI_PATH is set by CMake.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include "phd/cohort_io.h"
#include "phd/data_model.h"

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;  // stdout and stderr together
};

RunResult Phd(const std::string& args) {
  const std::string cmd = std::string(PHD_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("phd_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = dir_ / "tiny.json";
    std::ofstream(config_) << R"({
  "cohort": {"synth": {"n_patients": 240, "dim": 8}},
  "model": {"model_dim": 8, "heads": 2, "layers": 1, "ffn_dim": 16,
            "predictor_hidden": 16},
  "train": {"epochs": 2},
  "eval": {"n_splits": 2, "repetitions": 5, "lambda_grid": [0.5]}
})";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Common(const fs::path& out) const {
    return "--config " + config_.string() + " --out " + out.string() + " -q";
  }

  fs::path dir_;
  fs::path config_;
};

TEST_F(CliTest, GenDataIsByteIdenticalPerSeed) {
  const fs::path a = dir_ / "a";
  const fs::path b = dir_ / "b";
  ASSERT_EQ(Phd("gen-data " + Common(a) + " --seed 7").code, 0);
  ASSERT_EQ(Phd("gen-data " + Common(b) + " --seed 7").code, 0);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path twin = b / entry.path().filename();
    ASSERT_TRUE(fs::exists(twin)) << twin;
    EXPECT_EQ(Slurp(entry.path()), Slurp(twin)) << entry.path().filename();
    ++files;
  }
  EXPECT_GE(files, 2);
  const RunResult again = Phd("gen-data " + Common(a) + " --seed 7");
  EXPECT_EQ(again.code, 6) << again.out;
  EXPECT_NE(again.out.find("--force"), std::string::npos);
}

TEST_F(CliTest, GenDataSummaryMatchesRecount) {
  const fs::path out = dir_ / "c";
  const RunResult r = Phd("gen-data " + Common(out) + " --seed 3");
  ASSERT_EQ(r.code, 0) << r.out;
  const phd::Cohort cohort = phd::LoadCohort(out / "cohort.jsonl");
  const auto prevalence = phd::HorizonPrevalence(cohort);
  std::ostringstream expect;
  expect << "prevalence:";
  for (std::size_t k = 0; k < prevalence.size(); ++k) {
    char cell[32];
    std::snprintf(cell, sizeof cell, " y%zu=%.4f", k + 1, prevalence[k]);
    expect << cell;
  }
  EXPECT_NE(r.out.find(expect.str()), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("patients: 240"), std::string::npos) << r.out;
}

TEST_F(CliTest, InvalidFieldIsNamed) {
  const fs::path bad = dir_ / "bad.json";
  std::ofstream(bad) << R"({"train": {"epochz": 3}})";
  const RunResult r = Phd("gen-data --config " + bad.string() + " --out " +
                          (dir_ / "x").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("train.epochz"), std::string::npos) << r.out;
}

TEST_F(CliTest, StudentStageNeedsTeachers) {
  const RunResult r = Phd("train --stage student " + Common(dir_ / "run"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("dependency error"), std::string::npos) << r.out;
  const RunResult s = Phd("train --stage single-teacher " + Common(dir_ / "run"));
  EXPECT_EQ(s.code, 3) << s.out;
}

TEST_F(CliTest, EvalNamesMissingCheckpoint) {
  const fs::path out = dir_ / "empty";
  const RunResult r = Phd("eval " + Common(out));
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.out.find("full_history"), std::string::npos) << r.out;
}

TEST_F(CliTest, StagesThenEvalWritesTableAndPredictions) {
  const fs::path out = dir_ / "stages";
  ASSERT_EQ(Phd("train --stage baseline " + Common(out)).code, 0);
  const RunResult t = Phd("train --stage teachers " + Common(out));
  ASSERT_EQ(t.code, 0) << t.out;
  int teachers = 0;
  for (const auto& e : fs::directory_iterator(out / "split_0")) {
    if (e.path().filename().string().rfind("teacher_h", 0) == 0) ++teachers;
  }
  EXPECT_EQ(teachers, 5);
  ASSERT_EQ(Phd("train --stage student " + Common(out)).code, 0);
  const RunResult e1 = Phd("eval " + Common(out));
  ASSERT_EQ(e1.code, 0) << e1.out;
  for (const char* row : {"teacher_full_history", "student_no_kd", "student_phd"}) {
    EXPECT_NE(e1.out.find(row), std::string::npos) << row;
  }
  const fs::path eval_dir = out / "eval_split_0";
  const std::string first = Slurp(eval_dir / "results.csv");
  const std::string pred = Slurp(eval_dir / "predictions_student_phd.csv");
  EXPECT_EQ(pred.rfind("patient_id,exam_year,P_1", 0), 0u);
  ASSERT_EQ(Phd("eval " + Common(out)).code, 0);
  EXPECT_EQ(Slurp(eval_dir / "results.csv"), first);

  // A checkpoint written under another config is refused unless allowed.
  const fs::path other = dir_ / "other.json";
  std::string text = Slurp(config_);
  text.replace(text.find("\"epochs\": 2"), 11, "\"epochs\": 3");
  std::ofstream(other) << text;
  const std::string other_common =
      "--config " + other.string() + " --out " + out.string() + " -q";
  const RunResult mismatch = Phd("eval " + other_common);
  EXPECT_EQ(mismatch.code, 2) << mismatch.out;
  EXPECT_EQ(Phd("eval --allow-mismatch " + other_common).code, 0);
}

TEST_F(CliTest, AblateEmitsLadderAndHistorySweep) {
  const fs::path out = dir_ / "ablate";
  const RunResult r = Phd("ablate " + Common(out));
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream ladder(Slurp(out / "curves" / "ladder.csv"));
  std::string line;
  std::getline(ladder, line);
  std::set<std::string> variants;
  while (std::getline(ladder, line)) variants.insert(line.substr(0, line.find(',')));
  EXPECT_EQ(variants.size(), 3u);
  std::istringstream history(Slurp(out / "curves" / "history.csv"));
  std::getline(history, line);
  std::set<std::string> n_values;
  while (std::getline(history, line)) {
    std::istringstream cells(line);
    std::string model, n;
    std::getline(cells, model, ',');
    std::getline(cells, n, ',');
    n_values.insert(n);
  }
  EXPECT_EQ(n_values, (std::set<std::string>{"0", "1", "2", "3", "4"}));
  for (const char* f : {"ladder", "history", "roc", "roc_lowfpr"}) {
    EXPECT_TRUE(fs::exists(out / "curves" / (std::string(f) + ".svg"))) << f;
  }
  EXPECT_EQ(Phd("ablate " + Common(out)).code, 6);
}

}  // namespace
