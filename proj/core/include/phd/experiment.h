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


#ifndef PHD_EXPERIMENT_H_
#define PHD_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "phd/data_model.h"
#include "phd/dataset.h"
#include "phd/distillation.h"
#include "phd/evaluation.h"
#include "phd/risk_model.h"

namespace phd {

struct CohortSource {
  std::string kind = "synthetic";  // "synthetic" or "file"
  std::string path;                // manifest path when kind == "file"
  SynthConfig synth;
};

struct EvalConfig {
  int n_splits = 5;
  int repetitions = 100;
  double fpr_max = 0.1;
  std::string pauc_normalization = "mcclish";  // or "raw"
  std::vector<double> lambda_grid{0.1, 0.5, 1.0, 2.0, 5.0};
  double train_frac = 0.8;
  double val_frac = 0.25;  // of the training portion
  std::vector<int> history_values{0, 1, 2, 3, 4};
  bool tune_single_teacher = true;
};

struct ExperimentConfig {
  CohortSource cohort;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir = "runs/phd";
  std::uint64_t seed = 0;
};

// Parses a JSON document; absent fields keep their defaults. Throws
// ConfigError naming the offending field (dotted path) for unknown keys,
// wrong types and out-of-range values.
ExperimentConfig ParseExperimentConfig(const std::string& json_text);
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);
// Canonical serialization (sorted keys, every field present).
std::string ExperimentConfigToJson(const ExperimentConfig& config);
// FNV-1a of the canonical JSON, 16 hex digits.
std::string ConfigHash(const ExperimentConfig& config);
// Throws ConfigError on the first invalid field.
void ValidateExperimentConfig(const ExperimentConfig& config);
EvalSettings MakeEvalSettings(const ExperimentConfig& config,
                              std::uint64_t seed);

Cohort LoadOrGenerateCohort(const ExperimentConfig& config);

// ---- Per-split stages -----------------------------------------------------

struct SplitData {
  int index = 0;
  CohortSplit split;
  SampleTable train;
  SampleTable val;
  SampleTable test;
  PosWeights pos_weights;
};

SplitData MakeSplitData(const Cohort& cohort, const ExperimentConfig& config,
                        int split_index);

// Receives every finished training run (model name, report).
using TrainLogSink =
    std::function<void(const std::string& model, const TrainReport& report)>;

struct TeacherStage {
  TeacherBundle teachers;                    // K uni-task experts
  std::unique_ptr<RiskModel> full_history;   // multi-task, full history
};

TeacherStage RunTeacherStage(const SplitData& data,
                             const ExperimentConfig& config,
                             const TrainLogSink& log = {});

struct StudentStage {
  std::unique_ptr<StudentModel> student;
  double lambda_logit = 0.0;
  std::vector<double> grid_metric;  // best val metric per grid entry
};

// No-KD student: lambda_logit = lambda_feature = 0.
StudentStage RunBaselineStage(const SplitData& data,
                              const ExperimentConfig& config,
                              const TrainLogSink& log = {});
// lambda_logit tuned over the grid on validation AUC.
StudentStage RunPhdStage(TeacherBundle& teachers, const SplitData& data,
                         const ExperimentConfig& config,
                         const TrainLogSink& log = {});
StudentStage RunSingleTeacherStage(RiskModel& teacher, const SplitData& data,
                                   const ExperimentConfig& config,
                                   const TrainLogSink& log = {});

// Model names used in results files.
inline constexpr const char* kFullHistoryModel = "teacher_full_history";
inline constexpr const char* kBaselineModel = "student_no_kd";
inline constexpr const char* kSingleTeacherModel = "student_single_teacher";
inline constexpr const char* kPhdModel = "student_phd";

struct SplitModels {
  RiskModel* full_history = nullptr;
  StudentModel* baseline = nullptr;
  StudentModel* single_teacher = nullptr;  // optional
  StudentModel* phd = nullptr;
};

struct SplitEvaluation {
  // Table rows: full history at #H = T_h, students at #H = 0.
  SplitMetrics table;
  // Model name -> metrics per #H value.
  std::map<std::string, std::vector<HistoryPoint>> history;
  // Model name -> 5-year (last horizon) ROC on the first single-exam draw.
  std::map<std::string, std::vector<RocPoint>> roc;
};

SplitEvaluation EvaluateSplit(const SplitData& data, const SplitModels& models,
                              const ExperimentConfig& config);

// ---- Model checkpoints ----------------------------------------------------

void SaveRiskModel(const std::filesystem::path& path, const std::string& module,
                   const std::string& config_hash, RiskModel& model,
                   const std::map<std::string, std::string>& metadata = {});
void SaveStudentModel(const std::filesystem::path& path,
                      const std::string& config_hash, StudentModel& model,
                      const std::map<std::string, std::string>& metadata = {});
// Rebuilds the architecture from `config` and the data shape, then restores
// the weights. Loaded risk models come back frozen.
std::unique_ptr<RiskModel> LoadRiskModel(const std::filesystem::path& path,
                                         const ExperimentConfig& config,
                                         const SampleTable& shape,
                                         bool allow_mismatch,
                                         std::map<std::string, std::string>*
                                             metadata = nullptr);
std::unique_ptr<StudentModel> LoadStudentModel(
    const std::filesystem::path& path, const ExperimentConfig& config,
    const SampleTable& shape, bool allow_mismatch,
    std::map<std::string, std::string>* metadata = nullptr);

// results.csv, summary.json and curves/ for a single split.
void WriteSplitEvaluation(const SplitEvaluation& eval,
                          const ExperimentConfig& config,
                          const std::string& config_hash,
                          const std::filesystem::path& dir);

// Prediction dump: patient_id, exam_year, P_1..P_K, y_1..y_K with one row
// per sample of `table` (y is -1 where unknown).
void WritePredictions(const std::filesystem::path& path,
                      const SampleTable& table, const ad::Matrix& cum_risk);

// ---- Whole experiment -----------------------------------------------------

struct ExperimentOptions {
  bool force = false;           // overwrite an existing output directory
  bool reuse_checkpoints = true;
  bool allow_mismatch = false;  // accept checkpoints from another config
  std::function<void(const std::string&)> progress;
};

struct SplitOutcome {
  SplitEvaluation eval;
  double phd_lambda = 0.0;
  double single_teacher_lambda = 0.0;
  bool teachers_unchanged = true;  // checksums before == after distillation
  double seconds = 0.0;
};

struct ExperimentResult {
  std::string config_hash;
  std::vector<std::optional<SplitOutcome>> splits;
  std::vector<std::string> failures;
  std::map<std::string, HorizonMetrics> aggregate;  // table rows
  // Model -> per #H aggregate (mean over splits) at every horizon.
  std::map<std::string, std::vector<HistoryPoint>> history;
  // Per horizon, Wilcoxon p-value of per-split pAUC, PHD vs no-KD.
  std::vector<double> p_phd_vs_baseline;
  std::vector<double> p_phd_vs_full;
};

// Trains and evaluates every model on each split, writing checkpoints,
// train_log.jsonl, results.csv, summary.json and curves/ under `out_dir`.
ExperimentResult RunExperiment(const ExperimentConfig& config,
                               const std::filesystem::path& out_dir,
                               const ExperimentOptions& options = {});

// Checkpoint locations for split `i` under `out_dir`.
std::filesystem::path SplitDir(const std::filesystem::path& out_dir, int split);
std::filesystem::path TeacherCheckpointPath(const std::filesystem::path& out_dir,
                                            int split, int horizon);
// "full_history", "baseline", "single_teacher" or "phd_student".
std::filesystem::path ModelCheckpointPath(const std::filesystem::path& out_dir,
                                          int split, const std::string& name);

// One JSON object per line for every epoch of `report`.
void AppendTrainLog(const std::filesystem::path& path, int split,
                    const std::string& model, const TrainReport& report);

}  // namespace phd

#endif  // PHD_EXPERIMENT_H_
