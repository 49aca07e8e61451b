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


#include "phd/history_reconstruction.h"

#include <string>

#include "phd/error.h"
#include "phd/random.h"

namespace phd {

HistoryPredictor::HistoryPredictor(const HistoryPredictorConfig& config,
                                   Rng& rng)
    : config_(config) {
  if (config.dim <= 0 || config.hidden <= 0 || config.max_priors <= 0) {
    throw InvalidArgumentError("history predictor dimensions must be positive");
  }
  const int n_trunks = config.shared_trunk ? 1 : config.max_priors;
  for (int i = 0; i < n_trunks; ++i) {
    const std::string name = "history.trunk" + std::to_string(i);
    trunks_.push_back({nn::Linear(name + ".fc1", config.dim, config.hidden, rng),
                       nn::Linear(name + ".fc2", config.hidden, config.hidden,
                                  rng)});
  }
  for (int t = 1; t <= config.max_priors; ++t) {
    heads_.emplace_back("history.head" + std::to_string(t), config.hidden,
                        config.dim, rng);
    // Start at the identity map: the first guess for a prior is x0 itself.
    heads_.back().weight().value.setZero();
  }
}

ad::Var HistoryPredictor::RunTrunk(const ad::Context& ctx, Trunk& trunk,
                                   ad::Var x) {
  ad::Var h = ad::Relu(trunk.first.Forward(ctx, x));
  h = ad::Dropout(ctx, h, config_.dropout);
  h = ad::Relu(trunk.second.Forward(ctx, h));
  return ad::Dropout(ctx, h, config_.dropout);
}

std::vector<ad::Var> HistoryPredictor::Forward(const ad::Context& ctx,
                                               ad::Var x0) {
  if (x0.cols() != config_.dim) {
    throw InvalidArgumentError("history predictor expects dim " +
                               std::to_string(config_.dim) + ", got " +
                               std::to_string(x0.cols()));
  }
  std::vector<ad::Var> out;
  out.reserve(config_.max_priors);
  ad::Var shared;
  if (config_.shared_trunk) shared = RunTrunk(ctx, trunks_[0], x0);
  for (int t = 0; t < config_.max_priors; ++t) {
    ad::Var h = config_.shared_trunk ? shared : RunTrunk(ctx, trunks_[t], x0);
    out.push_back(ad::Add(x0, heads_[t].Forward(ctx, h)));
  }
  return out;
}

std::vector<VisitEmbedding> HistoryPredictor::Reconstruct(
    const VisitEmbedding& x0) {
  if (x0.vector.size() != config_.dim) {
    throw InvalidArgumentError("history predictor expects dim " +
                               std::to_string(config_.dim) + ", got " +
                               std::to_string(x0.vector.size()));
  }
  if (!x0.vector.allFinite()) {
    throw InvalidArgumentError("current embedding has non-finite entries");
  }
  ad::Tape tape;
  ad::Context ctx{&tape, false, nullptr};
  ad::Var x = tape.Constant(x0.vector.transpose());
  std::vector<ad::Var> pred = Forward(ctx, x);
  std::vector<VisitEmbedding> out;
  for (int t = 0; t < config_.max_priors; ++t) {
    out.push_back({pred[t].value().row(0).transpose(), -(t + 1)});
  }
  return out;
}

void HistoryPredictor::CollectParameters(nn::ParameterRefs& out) {
  for (Trunk& trunk : trunks_) {
    trunk.first.CollectParameters(out);
    trunk.second.CollectParameters(out);
  }
  for (nn::Linear& head : heads_) head.CollectParameters(out);
}

namespace {

int CheckFeatureKdArgs(std::span<const Eigen::VectorXd> truth,
                       std::span<const Eigen::VectorXd> predicted,
                       std::span<const char> available) {
  if (truth.size() != predicted.size() || truth.size() != available.size()) {
    throw InvalidArgumentError("feature KD inputs differ in length");
  }
  int n = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (!available[t]) continue;
    if (truth[t].size() != predicted[t].size()) {
      throw InvalidArgumentError("feature KD slot dimensions differ");
    }
    ++n;
  }
  return n;
}

}  // namespace

FeatureKdValue FeatureKdLoss(std::span<const Eigen::VectorXd> truth,
                             std::span<const Eigen::VectorXd> predicted,
                             std::span<const char> available) {
  const int n = CheckFeatureKdArgs(truth, predicted, available);
  if (n == 0) return {0.0, true};
  double sum = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (available[t]) sum += (truth[t] - predicted[t]).squaredNorm();
  }
  return {sum / n, false};
}

std::vector<Eigen::VectorXd> FeatureKdGradient(
    std::span<const Eigen::VectorXd> truth,
    std::span<const Eigen::VectorXd> predicted,
    std::span<const char> available) {
  const int n = CheckFeatureKdArgs(truth, predicted, available);
  std::vector<Eigen::VectorXd> grad;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (n > 0 && available[t]) {
      grad.push_back(2.0 * (predicted[t] - truth[t]) / n);
    } else {
      grad.push_back(Eigen::VectorXd::Zero(predicted[t].size()));
    }
  }
  return grad;
}

ad::Var FeatureKdLossBatch(std::span<const ad::Var> predicted,
                           std::span<const ad::Matrix> truth,
                           const ad::Matrix& available) {
  if (predicted.size() != truth.size() ||
      static_cast<Eigen::Index>(predicted.size()) != available.cols()) {
    throw InvalidArgumentError("feature KD batch: slot count mismatch");
  }
  ad::Tape* t = predicted.front().tape();
  const Eigen::Index batch = available.rows();
  // Per-sample weight 1 / (T_eff * n_supervised); zero for empty histories.
  const Eigen::VectorXd t_eff = available.rowwise().sum();
  double n_supervised = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) n_supervised += t_eff(b) > 0 ? 1 : 0;
  ad::Matrix weight = ad::Matrix::Zero(batch, available.cols());
  if (n_supervised > 0) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (t_eff(b) > 0) {
        weight.row(b) = available.row(b) / (t_eff(b) * n_supervised);
      }
    }
  }
  double total = 0.0;
  std::vector<ad::Matrix> diffs;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    ad::Matrix diff = predicted[s].value() - truth[s];
    total += (diff.rowwise().squaredNorm().array() * weight.col(s).array()).sum();
    diffs.push_back(std::move(diff));
  }
  ad::Matrix value(1, 1);
  value(0, 0) = total;
  std::vector<ad::Var> inputs(predicted.begin(), predicted.end());
  return t->Record(std::move(value), predicted,
                   [t, inputs, diffs = std::move(diffs),
                    weight](const ad::Matrix& g) {
                     for (std::size_t s = 0; s < inputs.size(); ++s) {
                       ad::Matrix gs = diffs[s].array().colwise() *
                                       (2.0 * g(0, 0) * weight.col(s).array());
                       t->Accumulate(inputs[s], gs);
                     }
                   });
}

}  // namespace phd
