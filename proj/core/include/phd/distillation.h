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


#ifndef PHD_DISTILLATION_H_
#define PHD_DISTILLATION_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phd/autodiff.h"
#include "phd/dataset.h"
#include "phd/history_reconstruction.h"
#include "phd/nn.h"
#include "phd/risk_model.h"

namespace phd {

struct ModelConfig {
  std::string aggregator = "transformer";
  int model_dim = 32;
  int heads = 4;
  int layers = 2;
  int ffn_dim = 64;
  double dropout = 0.1;
  int predictor_hidden = 64;
  bool shared_trunk = true;
};

struct TrainConfig {
  double lambda_logit = 1.0;    // weight of the per-horizon logit KD term
  double lambda_feature = 0.1;  // weight of the history reconstruction term
  double learning_rate = 1e-3;
  int epochs = 30;
  int patience = 5;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  // Fit the history predictor alone on the reconstruction loss first.
  bool pretrain_predictor = false;
  int pretrain_epochs = 10;
  double max_pos_weight = 100.0;
  double weight_decay = 0.0;
};

// Throws InvalidArgumentError naming the offending field.
void ValidateTrainConfig(const TrainConfig& config);

// ---- Losses ---------------------------------------------------------------

// (1 / sum m) sum_k m_k KL(Bern(sigmoid(z_tea/T)) || Bern(sigmoid(z_stu/T))).
// Throws DegenerateSampleError when every horizon is masked.
double LogitKdLoss(std::span<const double> teacher_logits,
                   std::span<const double> student_logits,
                   std::span<const char> mask, double temperature = 1.0);
// d/dz_stu: m_k (q_k - p_k) / (T sum m).
std::vector<double> LogitKdGradient(std::span<const double> teacher_logits,
                                    std::span<const double> student_logits,
                                    std::span<const char> mask,
                                    double temperature = 1.0);
// Batched form averaged over rows with at least one unmasked horizon.
// Teacher logits enter as constants.
ad::Var LogitKdLossBatch(ad::Var student_logits,
                         const ad::Matrix& teacher_logits,
                         const ad::Matrix& mask, double temperature = 1.0);

// rce + lambda_logit * kd_logit + lambda_feature * kd_feature. Zero
// coefficients drop their term entirely. Throws InvalidArgumentError on
// negative coefficients and NumericError on non-finite components.
double TotalLoss(double rce, double kd_logit, double kd_feature,
                 double lambda_logit, double lambda_feature);
ad::Var TotalLoss(ad::Var rce, std::optional<ad::Var> kd_logit,
                  std::optional<ad::Var> kd_feature, double lambda_logit,
                  double lambda_feature);

// ---- Models ---------------------------------------------------------------

std::unique_ptr<RiskModel> MakeRiskModel(const ModelConfig& config, int dim,
                                         int horizons, int max_priors,
                                         std::uint64_t seed);

// History predictor followed by its own aggregator and hazard head. Only
// ever reads the current embedding.
class StudentModel {
 public:
  StudentModel(const ModelConfig& config, int dim, int horizons,
               int max_priors, std::uint64_t seed);

  // current: B x dim. Reconstructions are returned through `reconstructed`.
  HazardOutput Forward(const ad::Context& ctx, ad::Var current,
                       std::vector<ad::Var>* reconstructed = nullptr);
  RiskOutput Predict(const VisitEmbedding& current);

  nn::ParameterRefs Parameters();
  nn::ParameterRefs PredictorParameters();
  HistoryPredictor& predictor() { return predictor_; }
  RiskModel& risk() { return *risk_; }
  int horizons() const { return risk_->horizons(); }

 private:
  HistoryPredictor predictor_;
  std::unique_ptr<RiskModel> risk_;
  int max_priors_;
};

// K uni-task experts; experts[k-1] supervises horizon k.
struct TeacherBundle {
  std::vector<std::unique_ptr<RiskModel>> experts;

  int size() const { return static_cast<int>(experts.size()); }
  void Freeze();
  bool IsFrozen();
  std::vector<std::uint64_t> Checksums();
};

// ---- Batched inference ----------------------------------------------------

// N x K outputs for every sample of `table`.
ad::Matrix PredictCumRisk(RiskModel& model, const SampleTable& table,
                          int n_available);
ad::Matrix PredictLogits(RiskModel& model, const SampleTable& table,
                         int n_available);
// Student scores depend on table.current() only.
ad::Matrix PredictCumRisk(StudentModel& model, const SampleTable& table);

// Column k holds expert k's logit for horizon k on full true history.
ad::Matrix TeacherLogits(TeacherBundle& teachers, const SampleTable& table);
// All K logits from one multi-task model on full true history.
ad::Matrix SingleTeacherLogits(RiskModel& teacher, const SampleTable& table);

// ---- Training -------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  std::string phase;  // "pretrain" or "train"
  double learning_rate = 0.0;
  double loss = 0.0;
  double rce = 0.0;
  double kd_logit = 0.0;
  double kd_feature = 0.0;
  int skipped_samples = 0;
  std::vector<double> val_auc;  // per horizon, NaN when undefined
  double val_metric = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_metric = 0.0;
  bool stopped_early = false;
};

// Per-horizon validation AUC (NaN where undefined).
std::vector<double> HorizonAucs(const ad::Matrix& cum_risk,
                                const Eigen::MatrixXi& labels);

// Trains `model` on full true history. With `horizon` set only that horizon
// contributes to the loss and to model selection (uni-task teacher);
// otherwise all horizons do.
TrainReport TrainRiskModel(RiskModel& model, const SampleTable& train,
                           const SampleTable& val, const TrainConfig& config,
                           std::span<const double> pos_weights,
                           std::optional<int> horizon = std::nullopt);

// Uni-task expert for horizon k (1-based), returned frozen.
// Throws InvalidArgumentError when train has no positive at horizon k.
std::unique_ptr<RiskModel> TrainTeacher(int horizon, const SampleTable& train,
                                        const SampleTable& val,
                                        const ModelConfig& model_config,
                                        const TrainConfig& config,
                                        std::span<const double> pos_weights,
                                        TrainReport* report = nullptr);
TeacherBundle TrainTeachers(const SampleTable& train, const SampleTable& val,
                            const ModelConfig& model_config,
                            const TrainConfig& config,
                            std::span<const double> pos_weights,
                            std::vector<TrainReport>* reports = nullptr);

// Student trained against precomputed teacher logits for the train table
// (N x K). `teacher_logits` may be null only when lambda_logit == 0.
TrainReport TrainStudentWithLogits(StudentModel& student,
                                   const ad::Matrix* teacher_logits,
                                   const SampleTable& train,
                                   const SampleTable& val,
                                   const TrainConfig& config,
                                   std::span<const double> pos_weights);

// Multi-teacher distillation. Throws InvalidArgumentError when the bundle
// size differs from the number of horizons or a teacher is not frozen.
std::unique_ptr<StudentModel> TrainStudent(TeacherBundle& teachers,
                                           const SampleTable& train,
                                           const SampleTable& val,
                                           const ModelConfig& model_config,
                                           const TrainConfig& config,
                                           std::span<const double> pos_weights,
                                           TrainReport* report = nullptr);

// Ablation: one multi-task full-history teacher supplies every horizon.
std::unique_ptr<StudentModel> TrainSingleTeacherStudent(
    RiskModel& teacher, const SampleTable& train, const SampleTable& val,
    const ModelConfig& model_config, const TrainConfig& config,
    std::span<const double> pos_weights, TrainReport* report = nullptr);

}  // namespace phd

#endif  // PHD_DISTILLATION_H_
