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


#include "phd/distillation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "phd/error.h"
#include "phd/metrics.h"
#include "phd/random.h"

namespace phd {

void ValidateTrainConfig(const TrainConfig& c) {
  auto require = [](bool ok, const char* field) {
    if (!ok) {
      throw InvalidArgumentError(std::string("train config field '") + field +
                                 "' is out of range");
    }
  };
  require(c.lambda_logit >= 0.0, "lambda_logit");
  require(c.lambda_feature >= 0.0, "lambda_feature");
  require(c.learning_rate > 0.0, "learning_rate");
  require(c.epochs > 0, "epochs");
  require(c.patience > 0, "patience");
  require(c.batch_size > 0, "batch_size");
  require(c.temperature > 0.0, "temperature");
  require(c.pretrain_epochs >= 0, "pretrain_epochs");
  require(c.max_pos_weight > 0.0, "max_pos_weight");
  require(c.weight_decay >= 0.0, "weight_decay");
}

namespace {

// ln sigmoid(x) and ln(1 - sigmoid(x)) without overflow.
double LogSigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}
double LogOneMinusSigmoid(double x) { return LogSigmoid(-x); }
double Sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

double BernoulliKl(double teacher_logit, double student_logit) {
  const double p = Sigmoid(teacher_logit);
  double kl = 0.0;
  if (p > 0.0) kl += p * (LogSigmoid(teacher_logit) - LogSigmoid(student_logit));
  if (p < 1.0) {
    kl += (1.0 - p) * (LogOneMinusSigmoid(teacher_logit) -
                       LogOneMinusSigmoid(student_logit));
  }
  // Exact value is non-negative; rounding can leave a few ulps below zero.
  return std::max(kl, 0.0);
}

int CheckKdArgs(std::span<const double> tea, std::span<const double> stu,
                std::span<const char> mask, double temperature) {
  if (tea.size() != stu.size() || tea.size() != mask.size()) {
    throw InvalidArgumentError("logit KD inputs differ in length");
  }
  if (!(temperature > 0.0)) {
    throw InvalidArgumentError("temperature must be positive");
  }
  const int n = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
  if (n == 0) throw DegenerateSampleError("every horizon is masked");
  return n;
}

}  // namespace

double LogitKdLoss(std::span<const double> teacher_logits,
                   std::span<const double> student_logits,
                   std::span<const char> mask, double temperature) {
  const int n = CheckKdArgs(teacher_logits, student_logits, mask, temperature);
  double sum = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    sum += BernoulliKl(teacher_logits[k] / temperature,
                       student_logits[k] / temperature);
  }
  return sum / n;
}

std::vector<double> LogitKdGradient(std::span<const double> teacher_logits,
                                    std::span<const double> student_logits,
                                    std::span<const char> mask,
                                    double temperature) {
  const int n = CheckKdArgs(teacher_logits, student_logits, mask, temperature);
  std::vector<double> grad(mask.size(), 0.0);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    const double p = Sigmoid(teacher_logits[k] / temperature);
    const double q = Sigmoid(student_logits[k] / temperature);
    grad[k] = (q - p) / (temperature * n);
  }
  return grad;
}

ad::Var LogitKdLossBatch(ad::Var student_logits,
                         const ad::Matrix& teacher_logits,
                         const ad::Matrix& mask, double temperature) {
  const ad::Matrix& zs = student_logits.value();
  if (zs.rows() != teacher_logits.rows() || zs.cols() != teacher_logits.cols() ||
      zs.rows() != mask.rows() || zs.cols() != mask.cols()) {
    throw InvalidArgumentError("logit KD batch: shape mismatch");
  }
  const Eigen::VectorXd per_row = mask.rowwise().sum();
  const double used = (per_row.array() > 0.0).cast<double>().sum();
  ad::Matrix weight = ad::Matrix::Zero(zs.rows(), zs.cols());
  double total = 0.0;
  if (used > 0.0) {
    for (Eigen::Index b = 0; b < zs.rows(); ++b) {
      if (per_row(b) == 0.0) continue;
      for (Eigen::Index k = 0; k < zs.cols(); ++k) {
        if (mask(b, k) == 0.0) continue;
        weight(b, k) = 1.0 / (per_row(b) * used);
        total += weight(b, k) * BernoulliKl(teacher_logits(b, k) / temperature,
                                            zs(b, k) / temperature);
      }
    }
  }
  ad::Tape* t = student_logits.tape();
  ad::Matrix value(1, 1);
  value(0, 0) = total;
  return t->Record(
      std::move(value), {student_logits},
      [t, student_logits, teacher_logits, weight,
       temperature](const ad::Matrix& g) {
        const ad::Matrix& zs = student_logits.value();
        ad::Matrix gz(zs.rows(), zs.cols());
        for (Eigen::Index i = 0; i < zs.size(); ++i) {
          const double p = Sigmoid(teacher_logits.data()[i] / temperature);
          const double q = Sigmoid(zs.data()[i] / temperature);
          gz.data()[i] = g(0, 0) * weight.data()[i] * (q - p) / temperature;
        }
        t->Accumulate(student_logits, gz);
      });
}

double TotalLoss(double rce, double kd_logit, double kd_feature,
                 double lambda_logit, double lambda_feature) {
  if (lambda_logit < 0.0 || lambda_feature < 0.0) {
    throw InvalidArgumentError("loss coefficients must be non-negative");
  }
  if (!std::isfinite(rce) || !std::isfinite(kd_logit) ||
      !std::isfinite(kd_feature)) {
    throw NumericError("non-finite loss component");
  }
  double total = rce;
  if (lambda_logit != 0.0) total += lambda_logit * kd_logit;
  if (lambda_feature != 0.0) total += lambda_feature * kd_feature;
  return total;
}

ad::Var TotalLoss(ad::Var rce, std::optional<ad::Var> kd_logit,
                  std::optional<ad::Var> kd_feature, double lambda_logit,
                  double lambda_feature) {
  if (lambda_logit < 0.0 || lambda_feature < 0.0) {
    throw InvalidArgumentError("loss coefficients must be non-negative");
  }
  auto finite = [](const ad::Var& v) { return std::isfinite(v.scalar()); };
  if (!finite(rce) || (kd_logit && !finite(*kd_logit)) ||
      (kd_feature && !finite(*kd_feature))) {
    throw NumericError("non-finite loss component");
  }
  ad::Var total = rce;
  if (lambda_logit != 0.0 && kd_logit) {
    total = ad::Add(total, ad::Scale(*kd_logit, lambda_logit));
  }
  if (lambda_feature != 0.0 && kd_feature) {
    total = ad::Add(total, ad::Scale(*kd_feature, lambda_feature));
  }
  return total;
}

std::unique_ptr<RiskModel> MakeRiskModel(const ModelConfig& config, int dim,
                                         int horizons, int max_priors,
                                         std::uint64_t seed) {
  if (config.aggregator != "transformer") {
    throw InvalidArgumentError("unknown aggregator '" + config.aggregator + "'");
  }
  Rng rng(seed);
  TransformerAggregatorConfig agg;
  agg.input_dim = dim;
  agg.model_dim = config.model_dim;
  agg.heads = config.heads;
  agg.layers = config.layers;
  agg.ffn_dim = config.ffn_dim;
  agg.max_priors = max_priors;
  agg.dropout = config.dropout;
  return std::make_unique<RiskModel>(
      std::make_unique<TransformerAggregator>(agg, rng), horizons, rng);
}

namespace {

HistoryPredictorConfig PredictorConfig(const ModelConfig& config, int dim,
                                       int max_priors) {
  HistoryPredictorConfig out;
  out.dim = dim;
  out.hidden = config.predictor_hidden;
  out.max_priors = max_priors;
  out.dropout = config.dropout;
  out.shared_trunk = config.shared_trunk;
  return out;
}

}  // namespace

StudentModel::StudentModel(const ModelConfig& config, int dim, int horizons,
                           int max_priors, std::uint64_t seed)
    : predictor_([&] {
        Rng rng(MixSeed(seed, 1));
        return HistoryPredictor(PredictorConfig(config, dim, max_priors), rng);
      }()),
      risk_(MakeRiskModel(config, dim, horizons, max_priors, MixSeed(seed, 2))),
      max_priors_(max_priors) {}

HazardOutput StudentModel::Forward(const ad::Context& ctx, ad::Var current,
                                   std::vector<ad::Var>* reconstructed) {
  std::vector<ad::Var> slots{current};
  std::vector<ad::Var> recon = predictor_.Forward(ctx, current);
  slots.insert(slots.end(), recon.begin(), recon.end());
  const auto batch = static_cast<std::size_t>(current.rows());
  SequenceInput input;
  input.tokens = ad::InterleaveRows(slots);
  input.slots = 1 + max_priors_;
  input.absent.assign(batch * input.slots, 0);
  input.source.assign(batch * input.slots, kSourceReconstructed);
  for (std::size_t b = 0; b < batch; ++b) {
    input.source[b * input.slots] = kSourceCurrent;
  }
  if (reconstructed != nullptr) *reconstructed = std::move(recon);
  return risk_->Forward(ctx, input);
}

RiskOutput StudentModel::Predict(const VisitEmbedding& current) {
  ad::Tape tape;
  ad::Context ctx{&tape, false, nullptr};
  HazardOutput out = Forward(ctx, tape.Constant(current.vector.transpose()));
  return DecodeRisk(out.pre.value().row(0));
}

nn::ParameterRefs StudentModel::Parameters() {
  nn::ParameterRefs out = PredictorParameters();
  nn::ParameterRefs risk = risk_->Parameters();
  out.insert(out.end(), risk.begin(), risk.end());
  return out;
}

nn::ParameterRefs StudentModel::PredictorParameters() {
  nn::ParameterRefs out;
  predictor_.CollectParameters(out);
  return out;
}

void TeacherBundle::Freeze() {
  for (auto& expert : experts) {
    for (ad::Parameter* p : expert->Parameters()) p->frozen = true;
  }
}

bool TeacherBundle::IsFrozen() {
  for (auto& expert : experts) {
    for (ad::Parameter* p : expert->Parameters()) {
      if (!p->frozen) return false;
    }
  }
  return true;
}

std::vector<std::uint64_t> TeacherBundle::Checksums() {
  std::vector<std::uint64_t> out;
  for (auto& expert : experts) {
    const nn::ParameterRefs params = expert->Parameters();
    out.push_back(ad::Checksum(params));
  }
  return out;
}

namespace {

constexpr int kEvalChunk = 512;

std::vector<int> Range(int begin, int end) {
  std::vector<int> out(end - begin);
  std::iota(out.begin(), out.end(), begin);
  return out;
}

template <typename Fn>
ad::Matrix ChunkedRows(int n, int cols, Fn&& fn) {
  ad::Matrix out(n, cols);
  for (int begin = 0; begin < n; begin += kEvalChunk) {
    const int end = std::min(n, begin + kEvalChunk);
    const std::vector<int> rows = Range(begin, end);
    out.middleRows(begin, end - begin) = fn(std::span<const int>(rows));
  }
  return out;
}

}  // namespace

ad::Matrix PredictCumRisk(RiskModel& model, const SampleTable& table,
                          int n_available) {
  return ChunkedRows(table.size(), model.horizons(), [&](std::span<const int> rows) {
    ad::Tape tape;
    ad::Context ctx{&tape, false, nullptr};
    return model.Forward(ctx, table.Sequences(rows, n_available).ToInput(tape))
        .cum_risk.value();
  });
}

ad::Matrix PredictLogits(RiskModel& model, const SampleTable& table,
                         int n_available) {
  return ChunkedRows(table.size(), model.horizons(), [&](std::span<const int> rows) {
    ad::Tape tape;
    ad::Context ctx{&tape, false, nullptr};
    return model.Forward(ctx, table.Sequences(rows, n_available).ToInput(tape))
        .logits.value();
  });
}

ad::Matrix PredictCumRisk(StudentModel& model, const SampleTable& table) {
  return ChunkedRows(table.size(), model.horizons(), [&](std::span<const int> rows) {
    ad::Tape tape;
    ad::Context ctx{&tape, false, nullptr};
    return model.Forward(ctx, tape.Constant(table.CurrentRows(rows)))
        .cum_risk.value();
  });
}

ad::Matrix TeacherLogits(TeacherBundle& teachers, const SampleTable& table) {
  ad::Matrix out(table.size(), teachers.size());
  for (int k = 0; k < teachers.size(); ++k) {
    out.col(k) =
        PredictLogits(*teachers.experts[k], table, table.max_priors()).col(k);
  }
  return out;
}

ad::Matrix SingleTeacherLogits(RiskModel& teacher, const SampleTable& table) {
  return PredictLogits(teacher, table, table.max_priors());
}

std::vector<double> HorizonAucs(const ad::Matrix& cum_risk,
                                const Eigen::MatrixXi& labels) {
  std::vector<double> out;
  std::vector<double> scores(cum_risk.rows());
  std::vector<int> y(cum_risk.rows());
  for (Eigen::Index k = 0; k < cum_risk.cols(); ++k) {
    for (Eigen::Index i = 0; i < cum_risk.rows(); ++i) {
      scores[i] = cum_risk(i, k);
      y[i] = labels(i, k);
    }
    try {
      out.push_back(Auc(scores, y));
    } catch (const UndefinedMetricError&) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

namespace {

struct LossParts {
  double rce = 0.0;
  double kd_logit = 0.0;
  double kd_feature = 0.0;
};

struct LoopSpec {
  nn::ParameterRefs params;
  std::vector<int> rows;  // trainable sample rows
  int skipped = 0;
  std::function<ad::Var(const ad::Context&, std::span<const int>, LossParts*)>
      loss;
  std::function<std::vector<double>()> validate;  // per-horizon AUCs
  std::vector<char> selection;                     // horizons used for model selection
  std::vector<int> val_positives;                  // per horizon
  bool early_stopping = true;
  std::string phase = "train";
  int epochs = 0;
};

// Horizons with very few validation positives give AUCs that are mostly
// noise; they are left out unless nothing else is selected.
constexpr int kMinSelectionPositives = 10;

double SelectionMetric(const std::vector<double>& aucs,
                       const std::vector<char>& selection,
                       const std::vector<int>& positives) {
  for (int min_pos : {kMinSelectionPositives, 0}) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < aucs.size(); ++k) {
      if (!selection[k] || std::isnan(aucs[k])) continue;
      if (k < positives.size() && positives[k] < min_pos) continue;
      sum += aucs[k];
      ++n;
    }
    if (n > 0) return sum / n;
  }
  return -std::numeric_limits<double>::infinity();
}

std::vector<int> CountPositives(const Eigen::MatrixXi& labels) {
  std::vector<int> out;
  for (Eigen::Index k = 0; k < labels.cols(); ++k) {
    out.push_back(static_cast<int>((labels.col(k).array() == 1).count()));
  }
  return out;
}

void RunLoop(const LoopSpec& spec, const TrainConfig& config, Rng& rng,
             TrainReport& report) {
  nn::Adam adam(spec.params, 0.9, 0.999, 1e-8, config.weight_decay);
  std::vector<ad::Matrix> best;
  auto snapshot = [&] {
    best.clear();
    for (const ad::Parameter* p : spec.params) best.push_back(p->value);
  };
  snapshot();
  double best_metric = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<int> order = spec.rows;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const double lr =
        spec.early_stopping
            ? nn::CosineLearningRate(config.learning_rate, epoch, spec.epochs)
            : config.learning_rate;
    rng.Shuffle(order);
    EpochLog log;
    log.epoch = epoch;
    log.phase = spec.phase;
    log.learning_rate = lr;
    log.skipped_samples = spec.skipped;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const std::span<const int> rows(order.data() + begin, end - begin);
      ad::Tape tape;
      ad::Context ctx{&tape, true, &rng};
      LossParts parts;
      ad::Var loss = spec.loss(ctx, rows, &parts);
      if (!std::isfinite(loss.scalar())) {
        throw NumericError("non-finite training loss at epoch " +
                           std::to_string(epoch));
      }
      adam.ZeroGrad();
      tape.Backward(loss);
      adam.Step(lr);
      log.loss += loss.scalar();
      log.rce += parts.rce;
      log.kd_logit += parts.kd_logit;
      log.kd_feature += parts.kd_feature;
      ++batches;
    }
    if (batches > 0) {
      log.loss /= batches;
      log.rce /= batches;
      log.kd_logit /= batches;
      log.kd_feature /= batches;
    }
    if (spec.validate) {
      log.val_auc = spec.validate();
      log.val_metric = SelectionMetric(log.val_auc, spec.selection, spec.val_positives);
    }
    report.epochs.push_back(log);
    if (!spec.early_stopping) continue;
    if (log.val_metric > best_metric) {
      best_metric = log.val_metric;
      report.best_epoch = epoch;
      report.best_metric = best_metric;
      since_best = 0;
      snapshot();
    } else if (++since_best >= config.patience) {
      report.stopped_early = true;
      break;
    }
  }
  if (spec.early_stopping) {
    for (std::size_t i = 0; i < spec.params.size(); ++i) {
      spec.params[i]->value = best[i];
    }
  }
  for (ad::Parameter* p : spec.params) p->ZeroGrad();
}

// Rows with at least one unmasked, enabled horizon.
std::vector<int> UsableRows(const SampleTable& table,
                            const std::vector<char>& enabled, int* skipped) {
  std::vector<int> rows;
  for (int r = 0; r < table.size(); ++r) {
    bool any = false;
    for (int k = 0; k < table.horizons(); ++k) {
      any |= enabled[k] && table.labels()(r, k) != kMasked;
    }
    if (any) rows.push_back(r);
  }
  *skipped = table.size() - static_cast<int>(rows.size());
  return rows;
}

ad::Matrix LabelMask(const Eigen::MatrixXi& labels) {
  return (labels.array() != kMasked).cast<double>().matrix();
}

}  // namespace

TrainReport TrainRiskModel(RiskModel& model, const SampleTable& train,
                           const SampleTable& val, const TrainConfig& config,
                           std::span<const double> pos_weights,
                           std::optional<int> horizon) {
  ValidateTrainConfig(config);
  const int k_count = train.horizons();
  std::vector<char> enabled(k_count, horizon ? 0 : 1);
  if (horizon) {
    if (*horizon < 1 || *horizon > k_count) {
      throw InvalidArgumentError("horizon out of range");
    }
    enabled[*horizon - 1] = 1;
  }
  const std::vector<double> weights(pos_weights.begin(), pos_weights.end());
  LoopSpec spec;
  spec.params = model.Parameters();
  spec.rows = UsableRows(train, enabled, &spec.skipped);
  spec.selection = enabled;
  spec.val_positives = CountPositives(val.labels());
  spec.epochs = config.epochs;
  spec.loss = [&](const ad::Context& ctx, std::span<const int> rows,
                  LossParts* parts) {
    HazardOutput out = model.Forward(
        ctx, train.Sequences(rows, train.max_priors()).ToInput(*ctx.tape));
    ad::Var rce = RceLossBatch(out.cum_risk, train.LabelRows(rows), weights,
                               enabled);
    parts->rce = rce.scalar();
    return rce;
  };
  spec.validate = [&] {
    return HorizonAucs(PredictCumRisk(model, val, val.max_priors()),
                       val.labels());
  };
  Rng rng(config.seed);
  TrainReport report;
  RunLoop(spec, config, rng, report);
  return report;
}

std::unique_ptr<RiskModel> TrainTeacher(int horizon, const SampleTable& train,
                                        const SampleTable& val,
                                        const ModelConfig& model_config,
                                        const TrainConfig& config,
                                        std::span<const double> pos_weights,
                                        TrainReport* report) {
  if (horizon < 1 || horizon > train.horizons()) {
    throw InvalidArgumentError("teacher horizon out of range");
  }
  if ((train.labels().col(horizon - 1).array() == kPositive).count() == 0) {
    throw InvalidArgumentError("no positive training labels at horizon " +
                               std::to_string(horizon) +
                               "; cannot train its teacher");
  }
  auto model = MakeRiskModel(model_config, train.dim(), train.horizons(),
                             train.max_priors(), MixSeed(config.seed, 100 + horizon));
  TrainConfig c = config;
  c.seed = MixSeed(config.seed, 200 + horizon);
  TrainReport r = TrainRiskModel(*model, train, val, c, pos_weights, horizon);
  for (ad::Parameter* p : model->Parameters()) p->frozen = true;
  if (report != nullptr) *report = std::move(r);
  return model;
}

TeacherBundle TrainTeachers(const SampleTable& train, const SampleTable& val,
                            const ModelConfig& model_config,
                            const TrainConfig& config,
                            std::span<const double> pos_weights,
                            std::vector<TrainReport>* reports) {
  TeacherBundle bundle;
  for (int k = 1; k <= train.horizons(); ++k) {
    TrainReport r;
    bundle.experts.push_back(
        TrainTeacher(k, train, val, model_config, config, pos_weights, &r));
    if (reports != nullptr) reports->push_back(std::move(r));
  }
  return bundle;
}

TrainReport TrainStudentWithLogits(StudentModel& student,
                                   const ad::Matrix* teacher_logits,
                                   const SampleTable& train,
                                   const SampleTable& val,
                                   const TrainConfig& config,
                                   std::span<const double> pos_weights) {
  ValidateTrainConfig(config);
  const int k_count = train.horizons();
  if (config.lambda_logit > 0.0) {
    if (teacher_logits == nullptr) {
      throw InvalidArgumentError("lambda_logit > 0 requires teacher logits");
    }
    if (teacher_logits->rows() != train.size() ||
        teacher_logits->cols() != k_count) {
      throw InvalidArgumentError("teacher logits shape does not match train set");
    }
  }
  if (student.horizons() != k_count) {
    throw InvalidArgumentError("student horizon count differs from data");
  }
  const std::vector<double> weights(pos_weights.begin(), pos_weights.end());
  const std::vector<char> all(k_count, 1);
  Rng rng(config.seed);
  TrainReport report;

  if (config.pretrain_predictor && config.pretrain_epochs > 0) {
    LoopSpec pre;
    pre.params = student.PredictorParameters();
    for (int r = 0; r < train.size(); ++r) pre.rows.push_back(r);
    pre.selection = all;
    pre.early_stopping = false;
    pre.phase = "pretrain";
    pre.epochs = config.pretrain_epochs;
    pre.loss = [&](const ad::Context& ctx, std::span<const int> rows,
                   LossParts* parts) {
      std::vector<ad::Var> recon = student.predictor().Forward(
          ctx, ctx.tape->Constant(train.CurrentRows(rows)));
      ad::Var feat = FeatureKdLossBatch(recon, train.PriorRows(rows),
                                        train.Availability(rows, train.max_priors()));
      parts->kd_feature = feat.scalar();
      return feat;
    };
    RunLoop(pre, config, rng, report);
  }

  LoopSpec spec;
  spec.params = student.Parameters();
  spec.rows = UsableRows(train, all, &spec.skipped);
  spec.selection = all;
  spec.val_positives = CountPositives(val.labels());
  spec.epochs = config.epochs;
  spec.loss = [&](const ad::Context& ctx, std::span<const int> rows,
                  LossParts* parts) {
    std::vector<ad::Var> recon;
    HazardOutput out = student.Forward(
        ctx, ctx.tape->Constant(train.CurrentRows(rows)), &recon);
    const Eigen::MatrixXi labels = train.LabelRows(rows);
    ad::Var rce = RceLossBatch(out.cum_risk, labels, weights, all);
    parts->rce = rce.scalar();
    std::optional<ad::Var> kd_logit, kd_feature;
    if (config.lambda_logit > 0.0) {
      ad::Matrix tea(rows.size(), k_count);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        tea.row(i) = teacher_logits->row(rows[i]);
      }
      kd_logit = LogitKdLossBatch(out.logits, tea, LabelMask(labels),
                                  config.temperature);
      parts->kd_logit = kd_logit->scalar();
    }
    if (config.lambda_feature > 0.0) {
      kd_feature = FeatureKdLossBatch(
          recon, train.PriorRows(rows),
          train.Availability(rows, train.max_priors()));
      parts->kd_feature = kd_feature->scalar();
    }
    return TotalLoss(rce, kd_logit, kd_feature, config.lambda_logit,
                     config.lambda_feature);
  };
  spec.validate = [&] {
    return HorizonAucs(PredictCumRisk(student, val), val.labels());
  };
  RunLoop(spec, config, rng, report);
  return report;
}

std::unique_ptr<StudentModel> TrainStudent(TeacherBundle& teachers,
                                           const SampleTable& train,
                                           const SampleTable& val,
                                           const ModelConfig& model_config,
                                           const TrainConfig& config,
                                           std::span<const double> pos_weights,
                                           TrainReport* report) {
  if (teachers.size() != train.horizons()) {
    throw InvalidArgumentError(
        "teacher bundle has " + std::to_string(teachers.size()) +
        " experts but the data has " + std::to_string(train.horizons()) +
        " horizons");
  }
  if (!teachers.IsFrozen()) {
    throw InvalidArgumentError("teachers must be frozen before distillation");
  }
  auto student = std::make_unique<StudentModel>(
      model_config, train.dim(), train.horizons(), train.max_priors(),
      MixSeed(config.seed, 300));
  ad::Matrix logits;
  if (config.lambda_logit > 0.0) logits = TeacherLogits(teachers, train);
  TrainReport r = TrainStudentWithLogits(
      *student, config.lambda_logit > 0.0 ? &logits : nullptr, train, val,
      config, pos_weights);
  if (report != nullptr) *report = std::move(r);
  return student;
}

std::unique_ptr<StudentModel> TrainSingleTeacherStudent(
    RiskModel& teacher, const SampleTable& train, const SampleTable& val,
    const ModelConfig& model_config, const TrainConfig& config,
    std::span<const double> pos_weights, TrainReport* report) {
  if (teacher.horizons() != train.horizons()) {
    throw InvalidArgumentError("teacher horizon count differs from data");
  }
  auto student = std::make_unique<StudentModel>(
      model_config, train.dim(), train.horizons(), train.max_priors(),
      MixSeed(config.seed, 300));
  ad::Matrix logits;
  if (config.lambda_logit > 0.0) logits = SingleTeacherLogits(teacher, train);
  TrainReport r = TrainStudentWithLogits(
      *student, config.lambda_logit > 0.0 ? &logits : nullptr, train, val,
      config, pos_weights);
  if (report != nullptr) *report = std::move(r);
  return student;
}

}  // namespace phd
