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


#ifndef PHD_RISK_MODEL_H_
#define PHD_RISK_MODEL_H_

#include <Eigen/Core>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "phd/autodiff.h"
#include "phd/data_model.h"
#include "phd/embedding.h"
#include "phd/nn.h"

namespace phd {

inline constexpr double kRiskEpsilon = 1e-6;

// Source tag of a token; absent slots are replaced by learned tokens.
enum TokenSource : int { kSourceCurrent = 0, kSourceTrue = 1,
                         kSourceReconstructed = 2 };

// A batch of sequences laid out as (batch * slots) x dim token rows, slot 0
// the current exam and slot t the prior at year -t.
struct SequenceInput {
  ad::Var tokens;
  int slots = 0;
  std::vector<char> absent;  // per token row
  std::vector<int> source;   // per token row, a TokenSource
};

// Plain-matrix form of a batch, built from HistorySequences.
struct SequenceBatch {
  ad::Matrix tokens;
  int slots = 0;
  std::vector<char> absent;
  std::vector<int> source;

  SequenceInput ToInput(ad::Tape& tape) const;
};
SequenceBatch MakeSequenceBatch(std::span<const HistorySequence> sequences);

// Maps a sequence batch to a B x output_dim history representation.
class LongitudinalAggregator {
 public:
  virtual ~LongitudinalAggregator() = default;
  virtual ad::Var Forward(const ad::Context& ctx,
                          const SequenceInput& input) = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual void CollectParameters(nn::ParameterRefs& out) = 0;
};

struct TransformerAggregatorConfig {
  int input_dim = 128;
  int model_dim = 32;
  int heads = 4;
  int layers = 2;
  int ffn_dim = 64;
  int max_priors = kDefaultMaxPriors;
  double dropout = 0.1;
};

// Pre-norm self-attention stack over the slots with learned slot (relative
// year) and source embeddings and one learned "absent" token per slot; the
// representation is the layer-normed output at the current-exam slot.
class TransformerAggregator final : public LongitudinalAggregator {
 public:
  TransformerAggregator(const TransformerAggregatorConfig& config, Rng& rng);

  ad::Var Forward(const ad::Context& ctx, const SequenceInput& input) override;
  int input_dim() const override { return config_.input_dim; }
  int output_dim() const override { return config_.model_dim; }
  void CollectParameters(nn::ParameterRefs& out) override;

 private:
  struct Block {
    nn::LayerNorm attn_norm;
    nn::Linear qkv;
    nn::Linear attn_out;
    nn::LayerNorm ffn_norm;
    nn::Linear ffn_in;
    nn::Linear ffn_out;
  };

  TransformerAggregatorConfig config_;
  nn::Linear input_proj_;
  ad::Parameter slot_embedding_;    // slots x model_dim
  ad::Parameter source_embedding_;  // 3 x model_dim
  ad::Parameter absent_token_;      // slots x model_dim
  std::vector<Block> blocks_;
  nn::LayerNorm final_norm_;
};

// Per-sample view of a hazard head evaluation.
struct RiskOutput {
  double baseline = 0.0;
  std::vector<double> increments;  // H_0 .. H_{K-1}
  std::vector<double> cum_risk;    // P_1 .. P_K
  std::vector<double> logits;      // logit(P_k)
};

// Tape outputs of the hazard head for a batch.
struct HazardOutput {
  ad::Var pre;       // B x (1 + K) pre-activations
  ad::Var cum_risk;  // B x K
  ad::Var logits;    // B x K
};

// P_k = clamp(sigmoid(pre_0) + sum_{i<k} softplus(pre_{i+1}), eps, 1 - eps).
// Throws NumericError on non-finite input.
ad::Var AdditiveHazard(ad::Var pre, double eps = kRiskEpsilon);
// z = ln(P / (1 - P)).
ad::Var Logit(ad::Var probabilities);

// Decodes one row of pre-activations into the per-sample output.
RiskOutput DecodeRisk(const Eigen::RowVectorXd& pre, double eps = kRiskEpsilon);

class HazardHead {
 public:
  HazardHead() = default;
  HazardHead(int input_dim, int horizons, Rng& rng);

  HazardOutput Forward(const ad::Context& ctx, ad::Var q);
  void CollectParameters(nn::ParameterRefs& out);
  int horizons() const { return horizons_; }
  nn::Linear& linear() { return linear_; }

 private:
  nn::Linear linear_;
  int horizons_ = 0;
};

// Aggregator + hazard head. Used for teachers and full-history baselines and
// as the risk path of a student.
class RiskModel {
 public:
  RiskModel(std::unique_ptr<LongitudinalAggregator> aggregator, int horizons,
            Rng& rng);

  HazardOutput Forward(const ad::Context& ctx, const SequenceInput& input);
  // Eval-mode evaluation of one sequence.
  RiskOutput Predict(const HistorySequence& sequence);

  nn::ParameterRefs Parameters();
  int horizons() const { return head_.horizons(); }
  LongitudinalAggregator& aggregator() { return *aggregator_; }

 private:
  std::unique_ptr<LongitudinalAggregator> aggregator_;
  HazardHead head_;
};

// Masked re-weighted cross entropy for one sample:
// (1/sum m) sum_k m_k [-w_k y_k ln P_k - (1-y_k) ln(1-P_k)], m_k = [y_k != -1].
// Throws DegenerateSampleError when every horizon is masked and
// InvalidArgumentError on length mismatch or P outside (0, 1).
double RceLoss(std::span<const double> cum_risk, std::span<const int> labels,
               std::span<const double> pos_weights);
std::vector<double> RceGradient(std::span<const double> cum_risk,
                                std::span<const int> labels,
                                std::span<const double> pos_weights);

// Batched RCE on the tape, averaged over non-degenerate rows. `labels` is
// B x K; only horizons with `horizon_enabled[k]` contribute (uni-task
// training). Rows with no contributing horizon are skipped and counted.
ad::Var RceLossBatch(ad::Var cum_risk, const Eigen::MatrixXi& labels,
                     std::span<const double> pos_weights,
                     std::span<const char> horizon_enabled,
                     int* skipped = nullptr);

struct PosWeights {
  std::vector<double> weights;
  std::vector<int> capped_horizons;  // horizons (1-based) with no positives
};

// w_k = negatives_k / positives_k over unmasked labels; horizons without
// positives get `max_weight`.
PosWeights ComputePosWeights(std::span<const LabelVector> train_labels,
                             int horizons, double max_weight = 100.0);

}  // namespace phd

#endif  // PHD_RISK_MODEL_H_
