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


#ifndef PHD_EMBEDDING_H_
#define PHD_EMBEDDING_H_

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "phd/autodiff.h"
#include "phd/data_model.h"
#include "phd/nn.h"

namespace phd {

struct VisitEmbedding {
  Eigen::VectorXd vector;
  int relative_year = 0;
};

enum class SlotSource { kTrue, kReconstructed, kAbsent };

// The current exam plus one slot per prior year -1..-max_priors.
struct HistorySequence {
  VisitEmbedding current;
  std::vector<std::optional<VisitEmbedding>> priors;
  std::vector<SlotSource> sources;

  int max_priors() const { return static_cast<int>(priors.size()); }
  int CountTrue() const;
};

// Frozen per-view feature extractor. Implementations never change their
// parameters after construction.
class ViewEncoder {
 public:
  virtual ~ViewEncoder() = default;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  // Throws InvalidArgumentError when payload.size() != input_dim().
  virtual Eigen::VectorXd Encode(std::span<const float> payload) const = 0;
  virtual std::uint64_t ParameterChecksum() const = 0;
};

// Views that already are feature vectors.
class IdentityViewEncoder final : public ViewEncoder {
 public:
  explicit IdentityViewEncoder(int dim) : dim_(dim) {}
  int input_dim() const override { return dim_; }
  int output_dim() const override { return dim_; }
  Eigen::VectorXd Encode(std::span<const float> payload) const override;
  std::uint64_t ParameterChecksum() const override { return 0; }

 private:
  int dim_;
};

// Fixed random projection followed by tanh; a stand-in for a pretrained
// image encoder whose weights are loaded once and never trained.
class FrozenProjectionEncoder final : public ViewEncoder {
 public:
  FrozenProjectionEncoder(int input_dim, int output_dim, std::uint64_t seed);
  int input_dim() const override {
    return static_cast<int>(weights_.value.rows());
  }
  int output_dim() const override {
    return static_cast<int>(weights_.value.cols());
  }
  Eigen::VectorXd Encode(std::span<const float> payload) const override;
  std::uint64_t ParameterChecksum() const override;

 private:
  ad::Parameter weights_;
};

class ViewAggregator {
 public:
  virtual ~ViewAggregator() = default;
  // Throws InvalidArgumentError on an empty view list.
  virtual Eigen::VectorXd Aggregate(
      std::span<const Eigen::VectorXd> views) const = 0;
};

class MeanPoolingAggregator final : public ViewAggregator {
 public:
  Eigen::VectorXd Aggregate(
      std::span<const Eigen::VectorXd> views) const override;
};

// score_i = u . tanh(W^T z_i); output = sum_i softmax(score)_i z_i.
// Invariant to the order of the views.
class AttentionPoolingAggregator final : public ViewAggregator {
 public:
  AttentionPoolingAggregator(int dim, int attention_dim, Rng& rng);
  Eigen::VectorXd Aggregate(
      std::span<const Eigen::VectorXd> views) const override;
  // Differentiable form; views is n_views x dim.
  ad::Var Forward(const ad::Context& ctx, ad::Var views);
  void CollectParameters(nn::ParameterRefs& out);

 private:
  ad::Parameter projection_;  // dim x attention_dim
  ad::Parameter query_;       // attention_dim x 1
};

// Produces visit embeddings from exam records: precomputed embeddings pass
// through, raw views go through encoder then aggregator.
class ExamEmbedder {
 public:
  ExamEmbedder() = default;
  ExamEmbedder(std::shared_ptr<const ViewEncoder> encoder,
               std::shared_ptr<const ViewAggregator> aggregator)
      : encoder_(std::move(encoder)), aggregator_(std::move(aggregator)) {}

  VisitEmbedding Embed(const ExamRecord& exam, int relative_year) const;

 private:
  std::shared_ptr<const ViewEncoder> encoder_;
  std::shared_ptr<const ViewAggregator> aggregator_;
};

// Sequence with the current exam at `current_exam_index` and up to
// `n_available` of the most recent available priors inside the
// max_priors-year window marked kTrue. Exams after the current one are
// never read.
HistorySequence BuildHistorySequence(const PatientRecord& patient,
                                     int current_exam_index, int max_priors,
                                     int n_available,
                                     const ExamEmbedder& embedder = {});

}  // namespace phd

#endif  // PHD_EMBEDDING_H_
