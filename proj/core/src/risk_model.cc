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


#include "phd/risk_model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "phd/error.h"
#include "phd/random.h"

namespace phd {

SequenceInput SequenceBatch::ToInput(ad::Tape& tape) const {
  return {tape.Constant(tokens), slots, absent, source};
}

SequenceBatch MakeSequenceBatch(std::span<const HistorySequence> sequences) {
  if (sequences.empty()) throw InvalidArgumentError("empty sequence batch");
  SequenceBatch batch;
  batch.slots = 1 + sequences.front().max_priors();
  const Eigen::Index dim = sequences.front().current.vector.size();
  const auto n = static_cast<Eigen::Index>(sequences.size());
  batch.tokens = ad::Matrix::Zero(n * batch.slots, dim);
  batch.absent.assign(n * batch.slots, 0);
  batch.source.assign(n * batch.slots, kSourceCurrent);
  for (Eigen::Index b = 0; b < n; ++b) {
    const HistorySequence& seq = sequences[b];
    if (1 + seq.max_priors() != batch.slots) {
      throw InvalidArgumentError("sequences differ in max_priors");
    }
    const Eigen::Index row0 = b * batch.slots;
    batch.tokens.row(row0) = seq.current.vector.transpose();
    for (int t = 0; t < seq.max_priors(); ++t) {
      const Eigen::Index row = row0 + 1 + t;
      switch (seq.sources[t]) {
        case SlotSource::kAbsent:
          batch.absent[row] = 1;
          batch.source[row] = kSourceTrue;
          break;
        case SlotSource::kTrue:
          batch.tokens.row(row) = seq.priors[t]->vector.transpose();
          batch.source[row] = kSourceTrue;
          break;
        case SlotSource::kReconstructed:
          batch.tokens.row(row) = seq.priors[t]->vector.transpose();
          batch.source[row] = kSourceReconstructed;
          break;
      }
    }
  }
  return batch;
}

TransformerAggregator::TransformerAggregator(
    const TransformerAggregatorConfig& config, Rng& rng)
    : config_(config) {
  if (config.model_dim % config.heads != 0) {
    throw InvalidArgumentError("model_dim must be divisible by heads");
  }
  const int slots = 1 + config.max_priors;
  const int d = config.model_dim;
  input_proj_ = nn::Linear("agg.input", config.input_dim, d, rng);
  auto small = [&rng](int rows, int cols) {
    ad::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.02 * rng.Normal();
    return m;
  };
  slot_embedding_ = ad::Parameter("agg.slot_embedding", small(slots, d));
  source_embedding_ = ad::Parameter("agg.source_embedding", small(3, d));
  absent_token_ = ad::Parameter("agg.absent_token", small(slots, d));
  for (int l = 0; l < config.layers; ++l) {
    const std::string name = "agg.block" + std::to_string(l);
    blocks_.push_back({nn::LayerNorm(name + ".attn_norm", d),
                       nn::Linear(name + ".qkv", d, 3 * d, rng),
                       nn::Linear(name + ".attn_out", d, d, rng),
                       nn::LayerNorm(name + ".ffn_norm", d),
                       nn::Linear(name + ".ffn_in", d, config.ffn_dim, rng),
                       nn::Linear(name + ".ffn_out", config.ffn_dim, d, rng)});
  }
  final_norm_ = nn::LayerNorm("agg.final_norm", d);
}

ad::Var TransformerAggregator::Forward(const ad::Context& ctx,
                                       const SequenceInput& input) {
  if (input.slots != 1 + config_.max_priors) {
    throw InvalidArgumentError("aggregator expects " +
                               std::to_string(1 + config_.max_priors) +
                               " slots, got " + std::to_string(input.slots));
  }
  if (input.tokens.cols() != config_.input_dim) {
    throw InvalidArgumentError("aggregator expects token dim " +
                               std::to_string(config_.input_dim));
  }
  ad::Tape& tape = *ctx.tape;
  const int d = config_.model_dim;
  const auto rows = static_cast<std::size_t>(input.tokens.rows());
  std::vector<int> slot(rows);
  for (std::size_t i = 0; i < rows; ++i) slot[i] = static_cast<int>(i % input.slots);

  ad::Var h = input_proj_.Forward(ctx, input.tokens);
  h = ad::AddRows(h, tape.Param(source_embedding_), input.source);
  h = ad::ReplaceRows(h, tape.Param(absent_token_), slot, input.absent);
  h = ad::AddRows(h, tape.Param(slot_embedding_), slot);

  for (Block& block : blocks_) {
    ad::Var x = block.attn_norm.Forward(ctx, h);
    ad::Var qkv = block.qkv.Forward(ctx, x);
    ad::Var attn = ad::MultiHeadAttention(
        ad::SliceCols(qkv, 0, d), ad::SliceCols(qkv, d, d),
        ad::SliceCols(qkv, 2 * d, d), input.slots, config_.heads);
    attn = ad::Dropout(ctx, block.attn_out.Forward(ctx, attn), config_.dropout);
    h = ad::Add(h, attn);
    x = block.ffn_norm.Forward(ctx, h);
    x = ad::Relu(block.ffn_in.Forward(ctx, x));
    x = ad::Dropout(ctx, block.ffn_out.Forward(ctx, x), config_.dropout);
    h = ad::Add(h, x);
  }
  // Read out the current exam token, which has attended to the priors.
  return final_norm_.Forward(ctx, ad::TakeSlot(h, input.slots, 0));
}

void TransformerAggregator::CollectParameters(nn::ParameterRefs& out) {
  input_proj_.CollectParameters(out);
  out.push_back(&slot_embedding_);
  out.push_back(&source_embedding_);
  out.push_back(&absent_token_);
  for (Block& block : blocks_) {
    block.attn_norm.CollectParameters(out);
    block.qkv.CollectParameters(out);
    block.attn_out.CollectParameters(out);
    block.ffn_norm.CollectParameters(out);
    block.ffn_in.CollectParameters(out);
    block.ffn_out.CollectParameters(out);
  }
  final_norm_.CollectParameters(out);
}

namespace {

double StableSigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

double StableSoftplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

ad::Var AdditiveHazard(ad::Var pre, double eps) {
  ad::Tape* t = pre.tape();
  const ad::Matrix& x = pre.value();
  if (!x.allFinite()) {
    throw NumericError("non-finite hazard head pre-activation");
  }
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols() - 1;
  ad::Matrix value(n, k);
  // 1 where the clamp was inactive, so the gradient passes.
  auto open = std::make_shared<ad::Matrix>(n, k);
  for (Eigen::Index b = 0; b < n; ++b) {
    double running = StableSigmoid(x(b, 0));
    for (Eigen::Index j = 0; j < k; ++j) {
      running += StableSoftplus(x(b, j + 1));
      const double clamped = std::clamp(running, eps, 1.0 - eps);
      (*open)(b, j) = clamped == running ? 1.0 : 0.0;
      value(b, j) = clamped;
    }
  }
  return t->Record(std::move(value), {pre}, [t, pre, open](const ad::Matrix& g) {
    const ad::Matrix& x = pre.value();
    const Eigen::Index k = x.cols() - 1;
    ad::Matrix gx(x.rows(), x.cols());
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
      // suffix[j] = sum_{m >= j} g(b, m) * open(b, m)
      double suffix = 0.0;
      for (Eigen::Index j = k - 1; j >= 0; --j) {
        suffix += g(b, j) * (*open)(b, j);
        gx(b, j + 1) = suffix * StableSigmoid(x(b, j + 1));
      }
      const double s = StableSigmoid(x(b, 0));
      gx(b, 0) = suffix * s * (1.0 - s);
    }
    t->Accumulate(pre, gx);
  });
}

ad::Var Logit(ad::Var probabilities) {
  ad::Tape* t = probabilities.tape();
  const ad::Matrix& p = probabilities.value();
  ad::Matrix value = (p.array() / (1.0 - p.array())).log().matrix();
  return t->Record(std::move(value), {probabilities},
                   [t, probabilities](const ad::Matrix& g) {
                     const auto p = probabilities.value().array();
                     t->Accumulate(probabilities,
                                   (g.array() / (p * (1.0 - p))).matrix());
                   });
}

RiskOutput DecodeRisk(const Eigen::RowVectorXd& pre, double eps) {
  if (!pre.allFinite()) throw NumericError("non-finite hazard pre-activation");
  RiskOutput out;
  out.baseline = StableSigmoid(pre(0));
  double running = out.baseline;
  for (Eigen::Index j = 1; j < pre.size(); ++j) {
    const double h = StableSoftplus(pre(j));
    out.increments.push_back(h);
    running += h;
    const double p = std::clamp(running, eps, 1.0 - eps);
    out.cum_risk.push_back(p);
    out.logits.push_back(std::log(p / (1.0 - p)));
  }
  return out;
}

HazardHead::HazardHead(int input_dim, int horizons, Rng& rng)
    : linear_("head", input_dim, 1 + horizons, rng), horizons_(horizons) {
  if (horizons <= 0) throw InvalidArgumentError("horizons must be positive");
  // Start from a low baseline and small increments, as in screening cohorts.
  linear_.bias().value(0, 0) = -3.0;
  for (int j = 1; j <= horizons; ++j) linear_.bias().value(0, j) = -4.0;
}

HazardOutput HazardHead::Forward(const ad::Context& ctx, ad::Var q) {
  HazardOutput out;
  out.pre = linear_.Forward(ctx, q);
  out.cum_risk = AdditiveHazard(out.pre);
  out.logits = Logit(out.cum_risk);
  return out;
}

void HazardHead::CollectParameters(nn::ParameterRefs& out) {
  linear_.CollectParameters(out);
}

RiskModel::RiskModel(std::unique_ptr<LongitudinalAggregator> aggregator,
                     int horizons, Rng& rng)
    : aggregator_(std::move(aggregator)),
      head_(aggregator_->output_dim(), horizons, rng) {}

HazardOutput RiskModel::Forward(const ad::Context& ctx,
                                const SequenceInput& input) {
  return head_.Forward(ctx, aggregator_->Forward(ctx, input));
}

RiskOutput RiskModel::Predict(const HistorySequence& sequence) {
  ad::Tape tape;
  ad::Context ctx{&tape, false, nullptr};
  const SequenceBatch batch =
      MakeSequenceBatch(std::span<const HistorySequence>(&sequence, 1));
  HazardOutput out = Forward(ctx, batch.ToInput(tape));
  return DecodeRisk(out.pre.value().row(0));
}

nn::ParameterRefs RiskModel::Parameters() {
  nn::ParameterRefs out;
  aggregator_->CollectParameters(out);
  head_.CollectParameters(out);
  return out;
}

namespace {

int CheckRceArgs(std::span<const double> p, std::span<const int> y,
                 std::span<const double> w) {
  if (p.size() != y.size() || p.size() != w.size()) {
    throw InvalidArgumentError("RCE inputs differ in length");
  }
  int unmasked = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (y[k] == kMasked) continue;
    if (!(p[k] > 0.0 && p[k] < 1.0)) {
      throw InvalidArgumentError("RCE probability outside (0, 1)");
    }
    ++unmasked;
  }
  if (unmasked == 0) {
    throw DegenerateSampleError("every horizon is masked");
  }
  return unmasked;
}

}  // namespace

double RceLoss(std::span<const double> cum_risk, std::span<const int> labels,
               std::span<const double> pos_weights) {
  const int n = CheckRceArgs(cum_risk, labels, pos_weights);
  double sum = 0.0;
  for (std::size_t k = 0; k < cum_risk.size(); ++k) {
    if (labels[k] == kMasked) continue;
    const double y = labels[k];
    sum += -pos_weights[k] * y * std::log(cum_risk[k]) -
           (1.0 - y) * std::log(1.0 - cum_risk[k]);
  }
  return sum / n;
}

std::vector<double> RceGradient(std::span<const double> cum_risk,
                                std::span<const int> labels,
                                std::span<const double> pos_weights) {
  const int n = CheckRceArgs(cum_risk, labels, pos_weights);
  std::vector<double> grad(cum_risk.size(), 0.0);
  for (std::size_t k = 0; k < cum_risk.size(); ++k) {
    if (labels[k] == kMasked) continue;
    const double y = labels[k];
    grad[k] = (-pos_weights[k] * y / cum_risk[k] +
               (1.0 - y) / (1.0 - cum_risk[k])) /
              n;
  }
  return grad;
}

ad::Var RceLossBatch(ad::Var cum_risk, const Eigen::MatrixXi& labels,
                     std::span<const double> pos_weights,
                     std::span<const char> horizon_enabled, int* skipped) {
  const ad::Matrix& p = cum_risk.value();
  const Eigen::Index n = p.rows();
  const Eigen::Index k = p.cols();
  if (labels.rows() != n || labels.cols() != k ||
      static_cast<Eigen::Index>(pos_weights.size()) != k ||
      static_cast<Eigen::Index>(horizon_enabled.size()) != k) {
    throw InvalidArgumentError("RCE batch: shape mismatch");
  }
  // Per-entry coefficients of -ln P and -ln(1-P), already normalized.
  ad::Matrix a = ad::Matrix::Zero(n, k);
  ad::Matrix c = ad::Matrix::Zero(n, k);
  int used = 0;
  std::vector<int> row_count(n, 0);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (horizon_enabled[j] && labels(b, j) != kMasked) ++row_count[b];
    }
    used += row_count[b] > 0 ? 1 : 0;
  }
  if (skipped != nullptr) *skipped = static_cast<int>(n) - used;
  double total = 0.0;
  if (used > 0) {
    for (Eigen::Index b = 0; b < n; ++b) {
      if (row_count[b] == 0) continue;
      const double norm = 1.0 / (static_cast<double>(row_count[b]) * used);
      for (Eigen::Index j = 0; j < k; ++j) {
        if (!horizon_enabled[j] || labels(b, j) == kMasked) continue;
        const double y = labels(b, j);
        a(b, j) = norm * pos_weights[j] * y;
        c(b, j) = norm * (1.0 - y);
        total += -a(b, j) * std::log(p(b, j)) - c(b, j) * std::log1p(-p(b, j));
      }
    }
  }
  ad::Tape* t = cum_risk.tape();
  ad::Matrix value(1, 1);
  value(0, 0) = total;
  return t->Record(std::move(value), {cum_risk},
                   [t, cum_risk, a, c](const ad::Matrix& g) {
                     const auto p = cum_risk.value().array();
                     ad::Matrix gp =
                         (g(0, 0) * (-a.array() / p + c.array() / (1.0 - p)))
                             .matrix();
                     t->Accumulate(cum_risk, gp);
                   });
}

PosWeights ComputePosWeights(std::span<const LabelVector> train_labels,
                             int horizons, double max_weight) {
  std::vector<double> pos(horizons, 0.0), neg(horizons, 0.0);
  for (const LabelVector& y : train_labels) {
    if (static_cast<int>(y.size()) != horizons) {
      throw InvalidArgumentError("label vector length != horizons");
    }
    for (int k = 0; k < horizons; ++k) {
      if (y[k] == kPositive) pos[k] += 1.0;
      if (y[k] == kNegative) neg[k] += 1.0;
    }
  }
  PosWeights out;
  for (int k = 0; k < horizons; ++k) {
    if (pos[k] + neg[k] == 0.0) {
      throw InvalidArgumentError("horizon " + std::to_string(k + 1) +
                                 " has no unmasked training labels");
    }
    if (pos[k] == 0.0) {
      out.weights.push_back(max_weight);
      out.capped_horizons.push_back(k + 1);
    } else {
      out.weights.push_back(std::min(neg[k] / pos[k], max_weight));
    }
  }
  return out;
}

}  // namespace phd
