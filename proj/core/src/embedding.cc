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


#include "phd/embedding.h"

#include <cmath>
#include <string>

#include "phd/error.h"
#include "phd/random.h"

namespace phd {

int HistorySequence::CountTrue() const {
  int n = 0;
  for (SlotSource s : sources) n += s == SlotSource::kTrue ? 1 : 0;
  return n;
}

Eigen::VectorXd IdentityViewEncoder::Encode(
    std::span<const float> payload) const {
  if (static_cast<int>(payload.size()) != dim_) {
    throw InvalidArgumentError("view payload has " +
                               std::to_string(payload.size()) +
                               " entries, encoder expects " +
                               std::to_string(dim_));
  }
  Eigen::VectorXd out(dim_);
  for (int i = 0; i < dim_; ++i) out(i) = payload[i];
  return out;
}

FrozenProjectionEncoder::FrozenProjectionEncoder(int input_dim, int output_dim,
                                                 std::uint64_t seed) {
  if (input_dim <= 0 || output_dim <= 0) {
    throw InvalidArgumentError("encoder dimensions must be positive");
  }
  Rng rng(seed);
  weights_ = ad::Parameter("view_encoder.weight",
                           ad::GlorotUniform(input_dim, output_dim, rng));
  weights_.frozen = true;
}

Eigen::VectorXd FrozenProjectionEncoder::Encode(
    std::span<const float> payload) const {
  if (static_cast<int>(payload.size()) != input_dim()) {
    throw InvalidArgumentError("view payload has " +
                               std::to_string(payload.size()) +
                               " entries, encoder expects " +
                               std::to_string(input_dim()));
  }
  Eigen::RowVectorXd x(payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i) x(i) = payload[i];
  return (x * weights_.value).array().tanh().transpose();
}

std::uint64_t FrozenProjectionEncoder::ParameterChecksum() const {
  const ad::Parameter* p = &weights_;
  return ad::Checksum(std::span<const ad::Parameter* const>(&p, 1));
}

Eigen::VectorXd MeanPoolingAggregator::Aggregate(
    std::span<const Eigen::VectorXd> views) const {
  if (views.empty()) throw InvalidArgumentError("no views to aggregate");
  Eigen::VectorXd sum = views.front();
  for (std::size_t i = 1; i < views.size(); ++i) {
    if (views[i].size() != sum.size()) {
      throw InvalidArgumentError("view feature sizes differ");
    }
    sum += views[i];
  }
  return sum / static_cast<double>(views.size());
}

AttentionPoolingAggregator::AttentionPoolingAggregator(int dim,
                                                       int attention_dim,
                                                       Rng& rng)
    : projection_("view_pool.projection",
                  ad::GlorotUniform(dim, attention_dim, rng)),
      query_("view_pool.query", ad::GlorotUniform(attention_dim, 1, rng)) {}

Eigen::VectorXd AttentionPoolingAggregator::Aggregate(
    std::span<const Eigen::VectorXd> views) const {
  if (views.empty()) throw InvalidArgumentError("no views to aggregate");
  const auto n = static_cast<Eigen::Index>(views.size());
  ad::Matrix z(n, views.front().size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (views[i].size() != z.cols()) {
      throw InvalidArgumentError("view feature sizes differ");
    }
    z.row(i) = views[i].transpose();
  }
  Eigen::VectorXd scores =
      (z * projection_.value).array().tanh().matrix() * query_.value;
  scores = (scores.array() - scores.maxCoeff()).exp();
  scores /= scores.sum();
  return z.transpose() * scores;
}

ad::Var AttentionPoolingAggregator::Forward(const ad::Context& ctx,
                                            ad::Var views) {
  if (views.rows() == 0) throw InvalidArgumentError("no views to aggregate");
  ad::Tape& tape = *ctx.tape;
  // scores: n x 1
  ad::Var scores = ad::MatMul(
      ad::Tanh(ad::MatMul(views, tape.Param(projection_))), tape.Param(query_));
  // Softmax over the view axis.
  const ad::Matrix& s = scores.value();
  ad::Matrix w = (s.array() - s.maxCoeff()).exp().matrix();
  w /= w.sum();
  ad::Tape* t = ctx.tape;
  ad::Var weights = t->Record(w, {scores}, [t, scores, w](const ad::Matrix& g) {
    const double dot = g.cwiseProduct(w).sum();
    t->Accumulate(scores, (w.array() * (g.array() - dot)).matrix());
  });
  // (1 x n) * (n x d)
  ad::Var weights_t = t->Record(
      weights.value().transpose(), {weights},
      [t, weights](const ad::Matrix& g) {
        t->Accumulate(weights, g.transpose());
      });
  return ad::MatMul(weights_t, views);
}

void AttentionPoolingAggregator::CollectParameters(nn::ParameterRefs& out) {
  out.push_back(&projection_);
  out.push_back(&query_);
}

VisitEmbedding ExamEmbedder::Embed(const ExamRecord& exam,
                                   int relative_year) const {
  VisitEmbedding out;
  out.relative_year = relative_year;
  if (!exam.embedding.empty()) {
    out.vector.resize(static_cast<Eigen::Index>(exam.embedding.size()));
    for (std::size_t i = 0; i < exam.embedding.size(); ++i) {
      out.vector(static_cast<Eigen::Index>(i)) = exam.embedding[i];
    }
    return out;
  }
  if (!encoder_ || !aggregator_) {
    throw InvalidArgumentError(
        "exam has no precomputed embedding and no view encoder is configured");
  }
  std::vector<Eigen::VectorXd> features;
  features.reserve(exam.views.size());
  for (const auto& view : exam.views) features.push_back(encoder_->Encode(view));
  out.vector = aggregator_->Aggregate(features);
  return out;
}

HistorySequence BuildHistorySequence(const PatientRecord& patient,
                                     int current_exam_index, int max_priors,
                                     int n_available,
                                     const ExamEmbedder& embedder) {
  if (current_exam_index < 0 ||
      current_exam_index >= static_cast<int>(patient.exams.size())) {
    throw InvalidArgumentError("current exam index " +
                               std::to_string(current_exam_index) +
                               " out of range for patient " + patient.id);
  }
  if (max_priors < 0 || n_available < 0 || n_available > max_priors) {
    throw InvalidArgumentError("n_available must be in [0, max_priors]");
  }
  const int current_year = patient.exams[current_exam_index].year;
  HistorySequence seq;
  seq.current = embedder.Embed(patient.exams[current_exam_index], 0);
  seq.priors.assign(max_priors, std::nullopt);
  seq.sources.assign(max_priors, SlotSource::kAbsent);

  int kept = 0;
  for (int i = current_exam_index - 1; i >= 0 && kept < n_available; --i) {
    const ExamRecord& exam = patient.exams[i];
    const int offset = current_year - exam.year;  // >= 1
    if (offset > max_priors) break;
    if (!exam.available) continue;
    seq.priors[offset - 1] = embedder.Embed(exam, -offset);
    seq.sources[offset - 1] = SlotSource::kTrue;
    ++kept;
  }
  return seq;
}

}  // namespace phd
