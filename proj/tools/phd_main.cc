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


// phd: synthetic cohort generation, teacher/student training, evaluation
// and ablations driven by one JSON experiment config.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "phd/cohort_io.h"
#include "phd/error.h"
#include "phd/experiment.h"

namespace fs = std::filesystem;

namespace {

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kConfigFailure = 2,
  kDependencyFailure = 3,
  kNumericFailure = 4,
  kIoFailure = 5,
  kRefused = 6,
};

class RefusedError : public phd::Error {
 public:
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool allow_mismatch = false;
  bool quiet = false;
};

phd::ExperimentConfig ResolveConfig(const Common& c) {
  phd::ExperimentConfig config;
  if (!c.config_path.empty()) config = phd::LoadExperimentConfig(c.config_path);
  if (const char* env = std::getenv("PHD_OUT"); env != nullptr && *env != '\0') {
    config.output_dir = env;
  }
  if (!c.out.empty()) config.output_dir = c.out;
  if (c.seed) {
    config.seed = *c.seed;
    config.cohort.synth.seed = *c.seed;
  }
  phd::ValidateExperimentConfig(config);
  return config;
}

void Say(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << msg << '\n';
}

int GenData(const Common& common) {
  const phd::ExperimentConfig config = ResolveConfig(common);
  if (config.cohort.kind != "synthetic") {
    throw phd::ConfigError("cohort.kind", "gen-data needs a synthetic cohort");
  }
  const fs::path dir = config.output_dir;
  const fs::path manifest = dir / "cohort.jsonl";
  if (fs::exists(manifest) && !common.force) {
    throw RefusedError(manifest.string() + " exists; pass --force to overwrite");
  }
  fs::create_directories(dir);
  const phd::Cohort cohort = phd::GenerateSyntheticCohort(config.cohort.synth);
  phd::SaveCohort(cohort, manifest);
  const auto prevalence = phd::HorizonPrevalence(cohort);
  std::cout << "cohort: " << manifest.string() << '\n'
            << "patients: " << cohort.patients.size() << '\n'
            << "exams: " << cohort.ExamCount() << '\n'
            << "prevalence:";
  for (std::size_t k = 0; k < prevalence.size(); ++k) {
    std::cout << " y" << k + 1 << '=' << std::fixed << std::setprecision(4)
              << prevalence[k];
  }
  std::cout << '\n';
  return kOk;
}

void RequireFile(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) {
    throw phd::DependencyError("stage '" + stage + "' needs " + path.string() +
                               "; run the teachers stage first");
  }
}

void RefuseExisting(const fs::path& path, const Common& common) {
  if (fs::exists(path) && !common.force) {
    throw RefusedError(path.string() + " exists; pass --force to overwrite");
  }
}

int Train(const Common& common, const std::string& stage, int split) {
  const phd::ExperimentConfig config = ResolveConfig(common);
  const fs::path out = config.output_dir;
  const std::string hash = phd::ConfigHash(config);
  const phd::Cohort cohort = phd::LoadOrGenerateCohort(config);
  const phd::SplitData data = phd::MakeSplitData(cohort, config, split);
  const fs::path log_path = out / "train_log.jsonl";
  const phd::TrainLogSink log = [&](const std::string& model,
                                    const phd::TrainReport& r) {
    phd::AppendTrainLog(log_path, split, model, r);
    Say(common, "trained " + model + " (best epoch " +
                    std::to_string(r.best_epoch) + ")");
  };
  auto save_student = [&](const std::string& name, phd::StudentStage& s) {
    std::ostringstream lambda;
    lambda << std::setprecision(17) << s.lambda_logit;
    phd::SaveStudentModel(phd::ModelCheckpointPath(out, split, name), hash,
                          *s.student,
                          {{"variant", name}, {"lambda_logit", lambda.str()}});
  };

  if (stage == "teachers") {
    RefuseExisting(phd::ModelCheckpointPath(out, split, "full_history"), common);
    phd::TeacherStage t = phd::RunTeacherStage(data, config, log);
    for (int k = 1; k <= data.train.horizons(); ++k) {
      phd::SaveRiskModel(phd::TeacherCheckpointPath(out, split, k), "teacher", hash,
                         *t.teachers.experts[k - 1],
                         {{"horizon", std::to_string(k)}});
    }
    phd::SaveRiskModel(phd::ModelCheckpointPath(out, split, "full_history"),
                       "full_history", hash, *t.full_history);
  } else if (stage == "baseline") {
    RefuseExisting(phd::ModelCheckpointPath(out, split, "baseline"), common);
    phd::StudentStage s = phd::RunBaselineStage(data, config, log);
    save_student("baseline", s);
  } else if (stage == "student") {
    RefuseExisting(phd::ModelCheckpointPath(out, split, "phd_student"), common);
    phd::TeacherBundle teachers;
    for (int k = 1; k <= data.train.horizons(); ++k) {
      const fs::path p = phd::TeacherCheckpointPath(out, split, k);
      RequireFile(p, stage);
      teachers.experts.push_back(
          phd::LoadRiskModel(p, config, data.train, common.allow_mismatch));
    }
    phd::StudentStage s = phd::RunPhdStage(teachers, data, config, log);
    save_student("phd_student", s);
    Say(common, "selected lambda_logit " + std::to_string(s.lambda_logit));
  } else if (stage == "single-teacher") {
    RefuseExisting(phd::ModelCheckpointPath(out, split, "single_teacher"), common);
    const fs::path p = phd::ModelCheckpointPath(out, split, "full_history");
    RequireFile(p, stage);
    auto teacher = phd::LoadRiskModel(p, config, data.train, common.allow_mismatch);
    phd::StudentStage s = phd::RunSingleTeacherStage(*teacher, data, config, log);
    save_student("single_teacher", s);
  }
  std::cout << "checkpoints: " << phd::SplitDir(out, split).string() << '\n';
  return kOk;
}

int Eval(const Common& common, int split, const std::string& checkpoints) {
  const phd::ExperimentConfig config = ResolveConfig(common);
  const fs::path out = config.output_dir;
  const fs::path ckpt_root = checkpoints.empty() ? out : fs::path(checkpoints);
  const phd::Cohort cohort = phd::LoadOrGenerateCohort(config);
  const phd::SplitData data = phd::MakeSplitData(cohort, config, split);
  auto need = [&](const std::string& name) {
    const fs::path p = phd::ModelCheckpointPath(ckpt_root, split, name);
    if (!fs::exists(p)) throw phd::IoError("missing checkpoint: " + p.string());
    return p;
  };
  auto full = phd::LoadRiskModel(need("full_history"), config, data.train,
                                 common.allow_mismatch);
  auto baseline = phd::LoadStudentModel(need("baseline"), config, data.train,
                                        common.allow_mismatch);
  auto student = phd::LoadStudentModel(need("phd_student"), config, data.train,
                                       common.allow_mismatch);
  std::unique_ptr<phd::StudentModel> single;
  const fs::path single_path =
      phd::ModelCheckpointPath(ckpt_root, split, "single_teacher");
  if (fs::exists(single_path)) {
    single = phd::LoadStudentModel(single_path, config, data.train,
                                   common.allow_mismatch);
  }
  const phd::SplitEvaluation eval = phd::EvaluateSplit(
      data, {full.get(), baseline.get(), single.get(), student.get()}, config);
  const fs::path dir = out / ("eval_split_" + std::to_string(split));
  phd::WriteSplitEvaluation(eval, config, phd::ConfigHash(config), dir);
  phd::WritePredictions(dir / "predictions_teacher_full_history.csv", data.test,
                        phd::PredictCumRisk(*full, data.test, data.test.max_priors()));
  phd::WritePredictions(dir / "predictions_student_no_kd.csv", data.test,
                        phd::PredictCumRisk(*baseline, data.test));
  phd::WritePredictions(dir / "predictions_student_phd.csv", data.test,
                        phd::PredictCumRisk(*student, data.test));
  if (single) {
    phd::WritePredictions(dir / "predictions_student_single_teacher.csv",
                          data.test, phd::PredictCumRisk(*single, data.test));
  }

  std::cout << std::fixed << std::setprecision(3) << "model";
  for (int k = 1; k <= data.test.horizons(); ++k) {
    std::cout << "  y" << k << " AUC / pAUC   ";
  }
  std::cout << '\n';
  for (const auto& [name, m] : eval.table) {
    std::cout << name;
    for (int k = 0; k < m.horizons(); ++k) {
      std::cout << "  " << m.auc[k].mean << " / " << m.pauc[k].mean;
    }
    std::cout << '\n';
  }
  std::cout << "results: " << dir.string() << '\n';
  return kOk;
}

int Ablate(const Common& common) {
  const phd::ExperimentConfig config = ResolveConfig(common);
  const fs::path summary = fs::path(config.output_dir) / "summary.json";
  if (fs::exists(summary) && !common.force) {
    throw RefusedError(summary.string() + " exists; pass --force to overwrite");
  }
  phd::ExperimentOptions options;
  options.force = common.force;
  options.allow_mismatch = common.allow_mismatch;
  options.progress = [&](const std::string& msg) { Say(common, msg); };
  const phd::ExperimentResult r =
      phd::RunExperiment(config, config.output_dir, options);
  for (const std::string& f : r.failures) std::cerr << "warning: " << f << '\n';
  const int last = config.cohort.synth.horizons - 1;
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& [name, m] : r.aggregate) {
    if (!m.defined[last]) continue;
    std::cout << name << ": " << last + 1 << "-year pAUC " << m.pauc[last].mean
              << " +- " << m.pauc[last].std << '\n';
  }
  std::cout << "results: " << config.output_dir << '\n';
  return r.failures.size() == r.splits.size() ? kFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privileged-history distillation for multi-horizon risk models"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "Experiment config (JSON)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", common.out, "Output directory (overrides PHD_OUT)");
    cmd->add_option("--seed", common.seed, "Master seed (also the cohort seed)");
    cmd->add_flag("--force", common.force, "Overwrite existing outputs");
    cmd->add_flag("--allow-mismatch", common.allow_mismatch,
                  "Accept checkpoints written under a different config");
    cmd->add_flag("-q,--quiet", common.quiet, "No progress output");
  };

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic cohort");
  add_common(gen);

  std::string stage;
  int split = 0;
  auto* train = app.add_subcommand("train", "Train one stage on one split");
  add_common(train);
  train->add_option("--stage", stage, "Stage to train")
      ->required()
      ->check(CLI::IsMember({"teachers", "student", "baseline", "single-teacher"}));
  train->add_option("--split", split, "Split index")->check(CLI::NonNegativeNumber);

  std::string checkpoints;
  auto* eval = app.add_subcommand("eval", "Evaluate trained checkpoints");
  add_common(eval);
  eval->add_option("--split", split, "Split index")->check(CLI::NonNegativeNumber);
  eval->add_option("--checkpoints", checkpoints,
                   "Directory holding split_<i>/ checkpoints");

  auto* ablate = app.add_subcommand(
      "ablate", "Repeated splits: every model, ablation ladder and #H sweep");
  add_common(ablate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return GenData(common);
    if (train->parsed()) return Train(common, stage, split);
    if (eval->parsed()) return Eval(common, split, checkpoints);
    if (ablate->parsed()) return Ablate(common);
  } catch (const phd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const phd::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return kDependencyFailure;
  } catch (const phd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const RefusedError& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return kRefused;
  } catch (const phd::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const phd::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
