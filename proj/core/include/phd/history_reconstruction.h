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


#ifndef PHD_HISTORY_RECONSTRUCTION_H_
#define PHD_HISTORY_RECONSTRUCTION_H_

#include <Eigen/Core>
#include <span>
#include <vector>

#include "phd/autodiff.h"
#include "phd/embedding.h"
#include "phd/nn.h"

namespace phd {

struct HistoryPredictorConfig {
  int dim = 128;
  int hidden = 64;
  int max_priors = kDefaultMaxPriors;
  double dropout = 0.1;
  // One trunk shared by every offset head; false gives each offset its own
  // three-layer network.
  bool shared_trunk = true;
};

// Maps the current visit embedding to predicted embeddings for prior years
// -1..-max_priors. Each path is three fully connected layers (two ReLU
// trunk layers, one linear head) added to the input embedding.
class HistoryPredictor {
 public:
  HistoryPredictor(const HistoryPredictorConfig& config, Rng& rng);

  // x0 is B x dim; returns max_priors matrices of B x dim, slot t-1 holding
  // the prediction for year -t.
  std::vector<ad::Var> Forward(const ad::Context& ctx, ad::Var x0);

  // Eval-mode reconstruction of a single embedding.
  std::vector<VisitEmbedding> Reconstruct(const VisitEmbedding& x0);

  void CollectParameters(nn::ParameterRefs& out);
  const HistoryPredictorConfig& config() const { return config_; }

 private:
  struct Trunk {
    nn::Linear first;
    nn::Linear second;
  };
  ad::Var RunTrunk(const ad::Context& ctx, Trunk& trunk, ad::Var x);

  HistoryPredictorConfig config_;
  std::vector<Trunk> trunks_;  // 1 if shared, else max_priors
  std::vector<nn::Linear> heads_;
};

struct FeatureKdValue {
  double loss = 0.0;
  // Set when no slot was available; the loss is then defined as 0.
  bool no_history = false;
};

// (1 / T_eff) * sum over available t of ||truth_t - predicted_t||^2.
// Throws InvalidArgumentError on length or dimension mismatch.
FeatureKdValue FeatureKdLoss(std::span<const Eigen::VectorXd> truth,
                             std::span<const Eigen::VectorXd> predicted,
                             std::span<const char> available);

// d loss / d predicted_t = 2 (predicted_t - truth_t) / T_eff on available
// slots, zero elsewhere.
std::vector<Eigen::VectorXd> FeatureKdGradient(
    std::span<const Eigen::VectorXd> truth,
    std::span<const Eigen::VectorXd> predicted,
    std::span<const char> available);

// Batched loss on the tape: per-sample feature KD averaged over the samples
// that have at least one available prior. `truth[t]` is B x dim and
// `available` is B x max_priors (1 = supervised). Returns a 1x1 node.
ad::Var FeatureKdLossBatch(std::span<const ad::Var> predicted,
                           std::span<const ad::Matrix> truth,
                           const ad::Matrix& available);

}  // namespace phd

#endif  // PHD_HISTORY_RECONSTRUCTION_H_
