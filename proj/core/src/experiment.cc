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


#include "phd/experiment.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "phd/checkpoint.h"
#include "phd/cohort_io.h"
#include "phd/error.h"
#include "phd/random.h"

namespace phd {

using json = nlohmann::json;

namespace {

// Walks one JSON object, type-checking known keys and rejecting the rest.
class Fields {
 public:
  Fields(const json& obj, std::string prefix)
      : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj.is_object()) throw ConfigError(Name(""), "expected an object");
  }

  std::string Name(const std::string& key) const {
    if (prefix_.empty()) return key.empty() ? "<root>" : key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  const json* Find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void Int(const std::string& key, int& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number_integer()) throw ConfigError(Name(key), "expected an integer");
      const auto raw = v->get<long long>();
      if (raw < INT32_MIN || raw > INT32_MAX) throw ConfigError(Name(key), "out of range");
      out = static_cast<int>(raw);
    }
  }
  void U64(const std::string& key, std::uint64_t& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number_unsigned()) {
        throw ConfigError(Name(key), "expected a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void Double(const std::string& key, double& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number()) throw ConfigError(Name(key), "expected a number");
      out = v->get<double>();
    }
  }
  void Bool(const std::string& key, bool& out) {
    if (const json* v = Find(key)) {
      if (!v->is_boolean()) throw ConfigError(Name(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void String(const std::string& key, std::string& out) {
    if (const json* v = Find(key)) {
      if (!v->is_string()) throw ConfigError(Name(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void Doubles(const std::string& key, std::vector<double>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array()) throw ConfigError(Name(key), "expected an array");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError(Name(key), "expected numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void Ints(const std::string& key, std::vector<int>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array()) throw ConfigError(Name(key), "expected an array");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) throw ConfigError(Name(key), "expected integers");
        out.push_back(e.get<int>());
      }
    }
  }

  void Finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(Name(it.key()), "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void ReadSynth(const json& j, SynthConfig& s) {
  Fields f(j, "cohort.synth");
  f.Int("n_patients", s.n_patients);
  f.Int("dim", s.dim);
  f.Int("max_priors", s.max_priors);
  f.Int("horizons", s.horizons);
  f.Double("signal_strength", s.signal_strength);
  f.Double("noise_sigma", s.noise_sigma);
  f.U64("seed", s.seed);
  f.Int("max_exams", s.max_exams);
  f.Int("nuisance_dim", s.nuisance_dim);
  f.Double("slope_scale", s.slope_scale);
  f.Double("level_noise", s.level_noise);
  f.Double("slope_proxy_noise", s.slope_proxy_noise);
  f.Double("base_logit", s.base_logit);
  f.Double("risk_coef", s.risk_coef);
  f.Double("gap_probability", s.gap_probability);
  f.Double("short_followup_probability", s.short_followup_probability);
  f.Int("max_followup", s.max_followup);
  f.Finish();
}

json SynthToJson(const SynthConfig& s) {
  return {{"n_patients", s.n_patients},
          {"dim", s.dim},
          {"max_priors", s.max_priors},
          {"horizons", s.horizons},
          {"signal_strength", s.signal_strength},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed},
          {"max_exams", s.max_exams},
          {"nuisance_dim", s.nuisance_dim},
          {"slope_scale", s.slope_scale},
          {"level_noise", s.level_noise},
          {"slope_proxy_noise", s.slope_proxy_noise},
          {"base_logit", s.base_logit},
          {"risk_coef", s.risk_coef},
          {"gap_probability", s.gap_probability},
          {"short_followup_probability", s.short_followup_probability},
          {"max_followup", s.max_followup}};
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Fields root(doc, "");
  if (const json* cohort = root.Find("cohort")) {
    Fields f(*cohort, "cohort");
    f.String("kind", c.cohort.kind);
    f.String("path", c.cohort.path);
    if (const json* synth = f.Find("synth")) ReadSynth(*synth, c.cohort.synth);
    f.Finish();
  }
  if (const json* model = root.Find("model")) {
    Fields f(*model, "model");
    f.String("aggregator", c.model.aggregator);
    f.Int("model_dim", c.model.model_dim);
    f.Int("heads", c.model.heads);
    f.Int("layers", c.model.layers);
    f.Int("ffn_dim", c.model.ffn_dim);
    f.Double("dropout", c.model.dropout);
    f.Int("predictor_hidden", c.model.predictor_hidden);
    f.Bool("shared_trunk", c.model.shared_trunk);
    f.Finish();
  }
  if (const json* train = root.Find("train")) {
    Fields f(*train, "train");
    f.Double("lambda_logit", c.train.lambda_logit);
    f.Double("lambda_feature", c.train.lambda_feature);
    f.Double("learning_rate", c.train.learning_rate);
    f.Int("epochs", c.train.epochs);
    f.Int("patience", c.train.patience);
    f.Int("batch_size", c.train.batch_size);
    f.U64("seed", c.train.seed);
    f.Double("temperature", c.train.temperature);
    f.Bool("pretrain_predictor", c.train.pretrain_predictor);
    f.Int("pretrain_epochs", c.train.pretrain_epochs);
    f.Double("max_pos_weight", c.train.max_pos_weight);
    f.Double("weight_decay", c.train.weight_decay);
    f.Finish();
  }
  if (const json* eval = root.Find("eval")) {
    Fields f(*eval, "eval");
    f.Int("n_splits", c.eval.n_splits);
    f.Int("repetitions", c.eval.repetitions);
    f.Double("fpr_max", c.eval.fpr_max);
    f.String("pauc_normalization", c.eval.pauc_normalization);
    f.Doubles("lambda_grid", c.eval.lambda_grid);
    f.Double("train_frac", c.eval.train_frac);
    f.Double("val_frac", c.eval.val_frac);
    f.Ints("history_values", c.eval.history_values);
    f.Bool("tune_single_teacher", c.eval.tune_single_teacher);
    f.Finish();
  }
  root.String("output_dir", c.output_dir);
  root.U64("seed", c.seed);
  root.Finish();
  ValidateExperimentConfig(c);
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseExperimentConfig(buffer.str());
}

std::string ExperimentConfigToJson(const ExperimentConfig& c) {
  json doc = {
      {"cohort",
       {{"kind", c.cohort.kind},
        {"path", c.cohort.path},
        {"synth", SynthToJson(c.cohort.synth)}}},
      {"model",
       {{"aggregator", c.model.aggregator},
        {"model_dim", c.model.model_dim},
        {"heads", c.model.heads},
        {"layers", c.model.layers},
        {"ffn_dim", c.model.ffn_dim},
        {"dropout", c.model.dropout},
        {"predictor_hidden", c.model.predictor_hidden},
        {"shared_trunk", c.model.shared_trunk}}},
      {"train",
       {{"lambda_logit", c.train.lambda_logit},
        {"lambda_feature", c.train.lambda_feature},
        {"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"patience", c.train.patience},
        {"batch_size", c.train.batch_size},
        {"seed", c.train.seed},
        {"temperature", c.train.temperature},
        {"pretrain_predictor", c.train.pretrain_predictor},
        {"pretrain_epochs", c.train.pretrain_epochs},
        {"max_pos_weight", c.train.max_pos_weight},
        {"weight_decay", c.train.weight_decay}}},
      {"eval",
       {{"n_splits", c.eval.n_splits},
        {"repetitions", c.eval.repetitions},
        {"fpr_max", c.eval.fpr_max},
        {"pauc_normalization", c.eval.pauc_normalization},
        {"lambda_grid", c.eval.lambda_grid},
        {"train_frac", c.eval.train_frac},
        {"val_frac", c.eval.val_frac},
        {"history_values", c.eval.history_values},
        {"tune_single_teacher", c.eval.tune_single_teacher}}},
      {"output_dir", c.output_dir},
      {"seed", c.seed}};
  return doc.dump(2);
}

std::string ConfigHash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const json doc = json::parse(ExperimentConfigToJson(config));
  // The output location does not change any result.
  json hashed = doc;
  hashed.erase("output_dir");
  for (unsigned char ch : hashed.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ValidateExperimentConfig(const ExperimentConfig& c) {
  if (c.cohort.kind != "synthetic" && c.cohort.kind != "file") {
    throw ConfigError("cohort.kind", "must be \"synthetic\" or \"file\"");
  }
  if (c.cohort.kind == "file" && c.cohort.path.empty()) {
    throw ConfigError("cohort.path", "required when cohort.kind is \"file\"");
  }
  try {
    ValidateSynthConfig(c.cohort.synth);
  } catch (const InvalidArgumentError& e) {
    throw ConfigError("cohort.synth", e.what());
  }
  try {
    ValidateTrainConfig(c.train);
  } catch (const InvalidArgumentError& e) {
    throw ConfigError("train", e.what());
  }
  if (c.model.aggregator != "transformer") {
    throw ConfigError("model.aggregator", "only \"transformer\" is available");
  }
  if (c.model.model_dim <= 0 || c.model.heads <= 0 ||
      c.model.model_dim % c.model.heads != 0) {
    throw ConfigError("model.heads", "must be positive and divide model_dim");
  }
  if (c.model.layers < 1) throw ConfigError("model.layers", "must be >= 1");
  if (c.model.ffn_dim < 1) throw ConfigError("model.ffn_dim", "must be >= 1");
  if (c.model.predictor_hidden < 1) {
    throw ConfigError("model.predictor_hidden", "must be >= 1");
  }
  if (!(c.model.dropout >= 0.0 && c.model.dropout < 1.0)) {
    throw ConfigError("model.dropout", "must lie in [0, 1)");
  }
  if (c.eval.n_splits < 1) throw ConfigError("eval.n_splits", "must be >= 1");
  if (c.eval.repetitions < 1) throw ConfigError("eval.repetitions", "must be >= 1");
  if (!(c.eval.fpr_max > 0.0 && c.eval.fpr_max <= 1.0)) {
    throw ConfigError("eval.fpr_max", "must lie in (0, 1]");
  }
  if (c.eval.pauc_normalization != "mcclish" && c.eval.pauc_normalization != "raw") {
    throw ConfigError("eval.pauc_normalization", "must be \"mcclish\" or \"raw\"");
  }
  if (c.eval.lambda_grid.empty()) {
    throw ConfigError("eval.lambda_grid", "must not be empty");
  }
  for (double l : c.eval.lambda_grid) {
    if (!(l >= 0.0)) throw ConfigError("eval.lambda_grid", "entries must be >= 0");
  }
  if (!(c.eval.train_frac > 0.0 && c.eval.train_frac < 1.0)) {
    throw ConfigError("eval.train_frac", "must lie in (0, 1)");
  }
  if (!(c.eval.val_frac > 0.0 && c.eval.val_frac < 1.0)) {
    throw ConfigError("eval.val_frac", "must lie in (0, 1)");
  }
  for (int h : c.eval.history_values) {
    if (h < 0 || h > c.cohort.synth.max_priors) {
      throw ConfigError("eval.history_values", "entries must lie in [0, max_priors]");
    }
  }
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
}

EvalSettings MakeEvalSettings(const ExperimentConfig& config, std::uint64_t seed) {
  EvalSettings s;
  s.repetitions = config.eval.repetitions;
  s.seed = seed;
  s.fpr_max = config.eval.fpr_max;
  s.normalization = config.eval.pauc_normalization == "raw"
                        ? PaucNormalization::kRaw
                        : PaucNormalization::kMcClish;
  return s;
}

Cohort LoadOrGenerateCohort(const ExperimentConfig& config) {
  if (config.cohort.kind == "file") return LoadCohort(config.cohort.path);
  return GenerateSyntheticCohort(config.cohort.synth);
}

// ---- Stages ---------------------------------------------------------------

SplitData MakeSplitData(const Cohort& cohort, const ExperimentConfig& config,
                        int split_index) {
  SplitData d;
  d.index = split_index;
  d.split = PatientLevelSplit(cohort, config.eval.train_frac, config.eval.val_frac,
                              MixSeed(config.seed, 1000 + split_index));
  d.train = SampleTable(cohort, d.split.train_ids);
  d.val = SampleTable(cohort, d.split.val_ids);
  d.test = SampleTable(cohort, d.split.test_ids);
  std::vector<LabelVector> labels;
  labels.reserve(d.train.size());
  for (int r = 0; r < d.train.size(); ++r) labels.push_back(d.train.Labels(r));
  d.pos_weights =
      ComputePosWeights(labels, d.train.horizons(), config.train.max_pos_weight);
  return d;
}

namespace {

// Training seed for one model on one split.
TrainConfig SeededTrain(const ExperimentConfig& config, int split,
                        std::uint64_t stream) {
  TrainConfig t = config.train;
  t.seed = MixSeed(MixSeed(config.seed ^ config.train.seed, 2000 + split), stream);
  return t;
}

void Emit(const TrainLogSink& log, const std::string& name,
          const TrainReport& report) {
  if (log) log(name, report);
}

std::string LambdaName(const std::string& base, double lambda) {
  std::ostringstream s;
  s << base << "[lambda=" << lambda << "]";
  return s.str();
}

// Trains one student per grid value and keeps the best on validation.
template <typename TrainFn>
StudentStage TuneLambda(const std::vector<double>& grid, const std::string& name,
                        const TrainLogSink& log, TrainFn&& train_one) {
  StudentStage best;
  double best_metric = -INFINITY;
  for (double lambda : grid) {
    TrainReport report;
    std::unique_ptr<StudentModel> student = train_one(lambda, &report);
    Emit(log, LambdaName(name, lambda), report);
    best.grid_metric.push_back(report.best_metric);
    if (report.best_metric > best_metric) {
      best_metric = report.best_metric;
      best.student = std::move(student);
      best.lambda_logit = lambda;
    }
  }
  return best;
}

}  // namespace

TeacherStage RunTeacherStage(const SplitData& data, const ExperimentConfig& config,
                             const TrainLogSink& log) {
  TeacherStage stage;
  for (int k = 1; k <= data.train.horizons(); ++k) {
    TrainReport report;
    stage.teachers.experts.push_back(TrainTeacher(
        k, data.train, data.val, config.model, SeededTrain(config, data.index, 10 + k),
        data.pos_weights.weights, &report));
    Emit(log, "teacher_h" + std::to_string(k), report);
  }
  const TrainConfig t = SeededTrain(config, data.index, 20);
  stage.full_history =
      MakeRiskModel(config.model, data.train.dim(), data.train.horizons(),
                    data.train.max_priors(), MixSeed(t.seed, 1));
  TrainReport report = TrainRiskModel(*stage.full_history, data.train, data.val, t,
                                      data.pos_weights.weights);
  for (ad::Parameter* p : stage.full_history->Parameters()) p->frozen = true;
  Emit(log, kFullHistoryModel, report);
  return stage;
}

StudentStage RunBaselineStage(const SplitData& data, const ExperimentConfig& config,
                              const TrainLogSink& log) {
  TrainConfig t = SeededTrain(config, data.index, 30);
  t.lambda_logit = 0.0;
  t.lambda_feature = 0.0;
  StudentStage stage;
  stage.student = std::make_unique<StudentModel>(
      config.model, data.train.dim(), data.train.horizons(),
      data.train.max_priors(), MixSeed(t.seed, 1));
  TrainReport report = TrainStudentWithLogits(*stage.student, nullptr, data.train,
                                              data.val, t, data.pos_weights.weights);
  stage.grid_metric.push_back(report.best_metric);
  Emit(log, kBaselineModel, report);
  return stage;
}

StudentStage RunPhdStage(TeacherBundle& teachers, const SplitData& data,
                         const ExperimentConfig& config, const TrainLogSink& log) {
  return TuneLambda(config.eval.lambda_grid, kPhdModel, log,
                    [&](double lambda, TrainReport* report) {
                      TrainConfig t = SeededTrain(config, data.index, 40);
                      t.lambda_logit = lambda;
                      return TrainStudent(teachers, data.train, data.val,
                                          config.model, t,
                                          data.pos_weights.weights, report);
                    });
}

StudentStage RunSingleTeacherStage(RiskModel& teacher, const SplitData& data,
                                   const ExperimentConfig& config,
                                   const TrainLogSink& log) {
  std::vector<double> grid = config.eval.lambda_grid;
  if (!config.eval.tune_single_teacher) grid = {config.train.lambda_logit};
  return TuneLambda(grid, kSingleTeacherModel, log,
                    [&](double lambda, TrainReport* report) {
                      TrainConfig t = SeededTrain(config, data.index, 40);
                      t.lambda_logit = lambda;
                      return TrainSingleTeacherStudent(
                          teacher, data.train, data.val, config.model, t,
                          data.pos_weights.weights, report);
                    });
}

// ---- Evaluation -----------------------------------------------------------

SplitEvaluation EvaluateSplit(const SplitData& data, const SplitModels& models,
                              const ExperimentConfig& config) {
  const EvalSettings settings =
      MakeEvalSettings(config, MixSeed(config.seed, 3000 + data.index));
  const SampleTable& test = data.test;
  const int last = test.horizons() - 1;
  const auto first_draw = SingleExamDraws(test, 1, settings.seed).front();
  SplitEvaluation out;

  auto roc_of = [&](const ad::Matrix& scores) {
    std::vector<double> s;
    std::vector<int> y;
    for (int row : first_draw) {
      s.push_back(scores(row, last));
      y.push_back(test.labels()(row, last));
    }
    return RocCurve(s, y);
  };

  if (models.full_history != nullptr) {
    RiskModel& m = *models.full_history;
    std::vector<HistoryPoint> curve = HistoryAblation(
        [&](int h) { return PredictCumRisk(m, test, h); }, test,
        config.eval.history_values, settings);
    const ad::Matrix full = PredictCumRisk(m, test, test.max_priors());
    out.table[kFullHistoryModel] = SampleSingleExam(full, test, settings);
    out.roc[kFullHistoryModel] = roc_of(full);
    out.history[kFullHistoryModel] = std::move(curve);
  }
  auto student = [&](StudentModel* m, const char* name) {
    if (m == nullptr) return;
    const ad::Matrix scores = PredictCumRisk(*m, test);
    out.table[name] = SampleSingleExam(scores, test, settings);
    out.roc[name] = roc_of(scores);
    // Student scores never depend on the priors, so every #H sees the same
    // matrix; it is still routed through the ablation to keep the code path
    // identical to the full-history model.
    out.history[name] = HistoryAblation([&](int) { return PredictCumRisk(*m, test); },
                                        test, config.eval.history_values, settings);
  };
  student(models.baseline, kBaselineModel);
  student(models.single_teacher, kSingleTeacherModel);
  student(models.phd, kPhdModel);
  return out;
}

// ---- Checkpoints ----------------------------------------------------------

std::filesystem::path SplitDir(const std::filesystem::path& out_dir, int split) {
  return out_dir / ("split_" + std::to_string(split));
}

std::filesystem::path TeacherCheckpointPath(const std::filesystem::path& out_dir,
                                            int split, int horizon) {
  return SplitDir(out_dir, split) / ("teacher_h" + std::to_string(horizon) + ".phdm");
}

std::filesystem::path ModelCheckpointPath(const std::filesystem::path& out_dir,
                                          int split, const std::string& name) {
  return SplitDir(out_dir, split) / (name + ".phdm");
}

void SaveRiskModel(const std::filesystem::path& path, const std::string& module,
                   const std::string& config_hash, RiskModel& model,
                   const std::map<std::string, std::string>& metadata) {
  SaveCheckpoint(path, module, config_hash, metadata, model.Parameters());
}

void SaveStudentModel(const std::filesystem::path& path,
                      const std::string& config_hash, StudentModel& model,
                      const std::map<std::string, std::string>& metadata) {
  SaveCheckpoint(path, "student", config_hash, metadata, model.Parameters());
}

std::unique_ptr<RiskModel> LoadRiskModel(const std::filesystem::path& path,
                                         const ExperimentConfig& config,
                                         const SampleTable& shape,
                                         bool allow_mismatch,
                                         std::map<std::string, std::string>* metadata) {
  const Checkpoint ckpt = ReadCheckpoint(path);
  CheckConfigHash(ckpt, ConfigHash(config), path, allow_mismatch);
  auto model = MakeRiskModel(config.model, shape.dim(), shape.horizons(),
                             shape.max_priors(), 0);
  RestoreParameters(ckpt, model->Parameters());
  for (ad::Parameter* p : model->Parameters()) p->frozen = true;
  if (metadata != nullptr) *metadata = ckpt.metadata;
  return model;
}

std::unique_ptr<StudentModel> LoadStudentModel(
    const std::filesystem::path& path, const ExperimentConfig& config,
    const SampleTable& shape, bool allow_mismatch,
    std::map<std::string, std::string>* metadata) {
  const Checkpoint ckpt = ReadCheckpoint(path);
  CheckConfigHash(ckpt, ConfigHash(config), path, allow_mismatch);
  auto model = std::make_unique<StudentModel>(config.model, shape.dim(),
                                              shape.horizons(), shape.max_priors(), 0);
  RestoreParameters(ckpt, model->Parameters());
  if (metadata != nullptr) *metadata = ckpt.metadata;
  return model;
}

void AppendTrainLog(const std::filesystem::path& path, int split,
                    const std::string& model, const TrainReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(); };
  for (const EpochLog& e : report.epochs) {
    json aucs = json::array();
    for (double a : e.val_auc) aucs.push_back(finite_or_null(a));
    json line = {{"split", split},
                 {"model", model},
                 {"phase", e.phase},
                 {"epoch", e.epoch},
                 {"lr", e.learning_rate},
                 {"loss", e.loss},
                 {"rce", e.rce},
                 {"kd_logit", e.kd_logit},
                 {"kd_feature", e.kd_feature},
                 {"skipped_samples", e.skipped_samples},
                 {"val_auc", aucs},
                 {"val_metric", finite_or_null(e.val_metric)}};
    out << line.dump() << '\n';
  }
  out << json{{"split", split},
              {"model", model},
              {"event", "best"},
              {"best_epoch", report.best_epoch},
              {"best_metric", finite_or_null(report.best_metric)},
              {"stopped_early", report.stopped_early}}
             .dump()
      << '\n';
}

// ---- Whole experiment -----------------------------------------------------

namespace {

json SummaryJson(const Summary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"n", s.values.size()}};
}

json MetricsJson(const HorizonMetrics& m) {
  json rows = json::array();
  for (int k = 0; k < m.horizons(); ++k) {
    json row = {{"horizon", k + 1}, {"n_pos", m.n_pos[k]}, {"n_neg", m.n_neg[k]}};
    if (m.defined[k]) {
      row["auc"] = SummaryJson(m.auc[k]);
      row["pauc"] = SummaryJson(m.pauc[k]);
    } else {
      row["auc"] = nullptr;
      row["pauc"] = nullptr;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void WriteTableCsv(std::ofstream& csv, const std::string& name, int split,
                   const HorizonMetrics& m) {
  for (int k = 0; k < m.horizons(); ++k) {
    for (std::size_t r = 0; r < m.auc[k].values.size(); ++r) {
      csv << name << ',' << split << ',' << r << ',' << k + 1 << ','
          << m.auc[k].values[r] << ',' << m.pauc[k].values[r] << '\n';
    }
  }
}

json TableJson(const std::map<std::string, HorizonMetrics>& metrics,
               int max_priors) {
  const std::vector<std::pair<const char*, int>> rows = {
      {kFullHistoryModel, max_priors},
      {kBaselineModel, 0},
      {kSingleTeacherModel, 0},
      {kPhdModel, 0}};
  json table = json::array();
  for (const auto& [name, h] : rows) {
    const auto it = metrics.find(name);
    if (it == metrics.end()) continue;
    table.push_back(
        {{"model", name}, {"n_history", h}, {"horizons", MetricsJson(it->second)}});
  }
  return table;
}

struct TrainedSplit {
  TeacherStage teachers;
  StudentStage baseline, single, phd;
};

bool Exists(const std::filesystem::path& p) { return std::filesystem::exists(p); }

}  // namespace

void WritePredictions(const std::filesystem::path& path,
                      const SampleTable& table, const ad::Matrix& cum_risk) {
  if (cum_risk.rows() != table.size() || cum_risk.cols() != table.horizons()) {
    throw InvalidArgumentError("prediction matrix does not match the table");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const int k_count = table.horizons();
  out << "patient_id,exam_year";
  for (int k = 1; k <= k_count; ++k) out << ",P_" << k;
  for (int k = 1; k <= k_count; ++k) out << ",y_" << k;
  out << '\n' << std::setprecision(17);
  for (int i = 0; i < table.size(); ++i) {
    out << table.PatientId(i) << ',' << table.ExamYear(i);
    for (int k = 0; k < k_count; ++k) out << ',' << cum_risk(i, k);
    for (int k = 0; k < k_count; ++k) out << ',' << table.labels()(i, k);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void WriteSplitEvaluation(const SplitEvaluation& eval,
                          const ExperimentConfig& config,
                          const std::string& config_hash,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "results.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (dir / "results.csv").string());
  csv << std::setprecision(10) << "model,split,repetition,horizon,auc,pauc\n";
  std::map<std::string, HorizonMetrics> table(eval.table.begin(), eval.table.end());
  for (const auto& [name, m] : table) WriteTableCsv(csv, name, 0, m);
  json history = json::object();
  for (const auto& [name, curve] : eval.history) {
    for (const HistoryPoint& p : curve) {
      history[name].push_back(
          {{"n_history", p.n_available}, {"horizons", MetricsJson(p.metrics)}});
    }
  }
  const json summary = {{"config_hash", config_hash},
                        {"table", TableJson(table, config.cohort.synth.max_priors)},
                        {"history", history}};
  std::ofstream out(dir / "summary.json", std::ios::trunc);
  out << summary.dump(2) << '\n';

  CurveSet curves;
  const int last = config.cohort.synth.horizons - 1;
  for (const auto& [name, pts] : eval.roc) curves.roc.push_back({name, pts});
  for (const auto& [name, curve] : eval.history) {
    LineSeries line;
    line.name = name;
    for (const HistoryPoint& p : curve) {
      if (!p.metrics.defined[last]) continue;
      line.x.push_back(p.n_available);
      line.y.push_back(p.metrics.pauc[last].mean);
      line.err.push_back(p.metrics.pauc[last].std);
    }
    curves.history.push_back(std::move(line));
  }
  EmitCurves(curves, dir / "curves");
}

ExperimentResult RunExperiment(const ExperimentConfig& config,
                               const std::filesystem::path& out_dir,
                               const ExperimentOptions& options) {
  ValidateExperimentConfig(config);
  if (Exists(out_dir / "summary.json") && !options.force) {
    throw InvalidArgumentError(out_dir.string() +
                               " already holds results; pass --force to overwrite");
  }
  std::filesystem::create_directories(out_dir);
  const std::string hash = ConfigHash(config);
  {
    std::ofstream cfg(out_dir / "config.json", std::ios::trunc);
    cfg << ExperimentConfigToJson(config) << '\n';
  }
  const std::filesystem::path log_path = out_dir / "train_log.jsonl";
  std::filesystem::remove(log_path);
  auto progress = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };

  const Cohort cohort = LoadOrGenerateCohort(config);
  ExperimentResult result;
  result.config_hash = hash;

  for (int s = 0; s < config.eval.n_splits; ++s) {
    const auto start = std::chrono::steady_clock::now();
    try {
      SplitData data = MakeSplitData(cohort, config, s);
      const TrainLogSink log = [&](const std::string& model, const TrainReport& r) {
        AppendTrainLog(log_path, s, model, r);
        progress("split " + std::to_string(s) + ": trained " + model);
      };
      const int k_count = data.train.horizons();
      TrainedSplit t;

      // Teachers and the full-history model.
      bool have_teachers = options.reuse_checkpoints;
      for (int k = 1; k <= k_count && have_teachers; ++k) {
        have_teachers = Exists(TeacherCheckpointPath(out_dir, s, k));
      }
      have_teachers = have_teachers &&
                      Exists(ModelCheckpointPath(out_dir, s, "full_history"));
      if (have_teachers) {
        for (int k = 1; k <= k_count; ++k) {
          t.teachers.teachers.experts.push_back(
              LoadRiskModel(TeacherCheckpointPath(out_dir, s, k), config, data.train,
                            options.allow_mismatch));
        }
        t.teachers.full_history =
            LoadRiskModel(ModelCheckpointPath(out_dir, s, "full_history"), config,
                          data.train, options.allow_mismatch);
        progress("split " + std::to_string(s) + ": loaded teachers");
      } else {
        t.teachers = RunTeacherStage(data, config, log);
        for (int k = 1; k <= k_count; ++k) {
          SaveRiskModel(TeacherCheckpointPath(out_dir, s, k), "teacher", hash,
                        *t.teachers.teachers.experts[k - 1],
                        {{"horizon", std::to_string(k)}});
        }
        SaveRiskModel(ModelCheckpointPath(out_dir, s, "full_history"),
                      "full_history", hash, *t.teachers.full_history);
      }
      const auto checksums_before = t.teachers.teachers.Checksums();
      const std::uint64_t full_before =
          ad::Checksum(t.teachers.full_history->Parameters());

      auto student_stage = [&](const std::string& file, auto&& train) {
        const auto path = ModelCheckpointPath(out_dir, s, file);
        StudentStage stage;
        if (options.reuse_checkpoints && Exists(path)) {
          std::map<std::string, std::string> meta;
          stage.student =
              LoadStudentModel(path, config, data.train, options.allow_mismatch, &meta);
          if (meta.count("lambda_logit")) {
            stage.lambda_logit = std::stod(meta.at("lambda_logit"));
          }
          return stage;
        }
        stage = train();
        std::ostringstream lambda;
        lambda << std::setprecision(17) << stage.lambda_logit;
        SaveStudentModel(path, hash, *stage.student,
                         {{"variant", file}, {"lambda_logit", lambda.str()}});
        return stage;
      };
      t.baseline = student_stage("baseline",
                                 [&] { return RunBaselineStage(data, config, log); });
      t.single = student_stage("single_teacher", [&] {
        return RunSingleTeacherStage(*t.teachers.full_history, data, config, log);
      });
      t.phd = student_stage("phd_student", [&] {
        return RunPhdStage(t.teachers.teachers, data, config, log);
      });

      SplitOutcome outcome;
      outcome.teachers_unchanged =
          t.teachers.teachers.Checksums() == checksums_before &&
          ad::Checksum(t.teachers.full_history->Parameters()) == full_before;
      outcome.phd_lambda = t.phd.lambda_logit;
      outcome.single_teacher_lambda = t.single.lambda_logit;
      outcome.eval = EvaluateSplit(
          data,
          {t.teachers.full_history.get(), t.baseline.student.get(),
           t.single.student.get(), t.phd.student.get()},
          config);
      outcome.seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
      progress("split " + std::to_string(s) + ": done in " +
               std::to_string(static_cast<int>(outcome.seconds)) + " s");
      result.splits.emplace_back(std::move(outcome));
    } catch (const Error& e) {
      result.splits.emplace_back(std::nullopt);
      result.failures.push_back("split " + std::to_string(s) + ": " + e.what());
      progress(result.failures.back());
    }
  }

  // Aggregates over completed splits.
  std::vector<std::optional<SplitMetrics>> tables;
  for (const auto& s : result.splits) {
    tables.push_back(s ? std::optional<SplitMetrics>(s->eval.table) : std::nullopt);
  }
  result.aggregate = AggregateSplits(tables);
  for (std::size_t i = 0; i < config.eval.history_values.size(); ++i) {
    std::vector<std::optional<SplitMetrics>> at_h;
    for (const auto& s : result.splits) {
      if (!s) continue;
      SplitMetrics m;
      for (const auto& [name, curve] : s->eval.history) m[name] = curve[i].metrics;
      at_h.emplace_back(std::move(m));
    }
    for (auto& [name, metrics] : AggregateSplits(at_h)) {
      result.history[name].push_back({config.eval.history_values[i], metrics});
    }
  }

  // Paired tests on per-split pAUC.
  const int k_count = config.cohort.synth.horizons;
  auto per_split = [&](const char* model, int k) {
    std::vector<double> v;
    for (const auto& s : result.splits) {
      if (!s) continue;
      const auto it = s->eval.table.find(model);
      if (it == s->eval.table.end() || !it->second.defined[k]) return std::vector<double>{};
      v.push_back(it->second.pauc[k].mean);
    }
    return v;
  };
  auto test = [&](const char* a, const char* b, int k) {
    const auto x = per_split(a, k), y = per_split(b, k);
    if (x.size() < 5 || x.size() != y.size()) return std::nan("");
    return PairedSignificance(x, y);
  };
  for (int k = 0; k < k_count; ++k) {
    result.p_phd_vs_baseline.push_back(test(kPhdModel, kBaselineModel, k));
    result.p_phd_vs_full.push_back(test(kPhdModel, kFullHistoryModel, k));
  }

  // results.csv: one line per (model, split, repetition, horizon).
  {
    std::ofstream csv(out_dir / "results.csv", std::ios::trunc);
    csv << std::setprecision(10) << "model,split,repetition,horizon,auc,pauc\n";
    for (std::size_t s = 0; s < result.splits.size(); ++s) {
      if (!result.splits[s]) continue;
      for (const auto& [name, m] : result.splits[s]->eval.table) {
        WriteTableCsv(csv, name, static_cast<int>(s), m);
      }
    }
    std::ofstream hcsv(out_dir / "history_results.csv", std::ios::trunc);
    hcsv << std::setprecision(10) << "model,split,n_available,horizon,auc,pauc\n";
    for (std::size_t s = 0; s < result.splits.size(); ++s) {
      if (!result.splits[s]) continue;
      for (const auto& [name, curve] : result.splits[s]->eval.history) {
        for (const HistoryPoint& p : curve) {
          for (int k = 0; k < p.metrics.horizons(); ++k) {
            if (!p.metrics.defined[k]) continue;
            hcsv << name << ',' << s << ',' << p.n_available << ',' << k + 1 << ','
                 << p.metrics.auc[k].mean << ',' << p.metrics.pauc[k].mean << '\n';
          }
        }
      }
    }
  }

  // summary.json in the layout of the main results table.
  {
    const json table = TableJson(result.aggregate, config.cohort.synth.max_priors);
    json history = json::object();
    for (const auto& [name, curve] : result.history) {
      for (const HistoryPoint& p : curve) {
        history[name].push_back(
            {{"n_history", p.n_available}, {"horizons", MetricsJson(p.metrics)}});
      }
    }
    auto nan_null = [](const std::vector<double>& v) {
      json a = json::array();
      for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json());
      return a;
    };
    json splits = json::array();
    for (std::size_t s = 0; s < result.splits.size(); ++s) {
      if (!result.splits[s]) continue;
      const SplitOutcome& o = *result.splits[s];
      splits.push_back({{"split", s},
                        {"phd_lambda_logit", o.phd_lambda},
                        {"single_teacher_lambda_logit", o.single_teacher_lambda},
                        {"teachers_unchanged", o.teachers_unchanged},
                        {"seconds", o.seconds}});
    }
    const json summary = {{"config_hash", hash},
                          {"table", table},
                          {"history", history},
                          {"p_value_phd_vs_no_kd", nan_null(result.p_phd_vs_baseline)},
                          {"p_value_phd_vs_full_history", nan_null(result.p_phd_vs_full)},
                          {"splits", splits},
                          {"failures", result.failures}};
    std::ofstream out(out_dir / "summary.json", std::ios::trunc);
    out << summary.dump(2) << '\n';
  }

  // Figures.
  CurveSet curves;
  const int last = k_count - 1;
  for (const auto& s : result.splits) {
    if (!s) continue;
    curves.roc_title = std::to_string(k_count) + "-year ROC (split " +
                       std::to_string(&s - &result.splits.front()) + ")";
    for (const auto& [name, pts] : s->eval.roc) curves.roc.push_back({name, pts});
    break;
  }
  curves.history_title = std::to_string(k_count) + "-year pAUC vs available history";
  for (const auto& [name, curve] : result.history) {
    LineSeries line;
    line.name = name;
    for (const HistoryPoint& p : curve) {
      if (!p.metrics.defined[last]) continue;
      line.x.push_back(p.n_available);
      line.y.push_back(p.metrics.pauc[last].mean);
      line.err.push_back(p.metrics.pauc[last].std);
    }
    curves.history.push_back(std::move(line));
  }
  curves.ladder_title = std::to_string(k_count) + "-year pAUC by distillation variant";
  for (const char* name : {kBaselineModel, kSingleTeacherModel, kPhdModel}) {
    const auto it = result.aggregate.find(name);
    if (it == result.aggregate.end() || !it->second.defined[last]) continue;
    curves.ladder.push_back(
        {name, it->second.pauc[last].mean, it->second.pauc[last].std});
  }
  EmitCurves(curves, out_dir / "curves");
  return result;
}

}  // namespace phd
