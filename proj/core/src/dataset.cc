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


#include "phd/dataset.h"

#include "phd/error.h"

namespace phd {

SampleTable::SampleTable(const Cohort& cohort,
                         std::span<const std::string> patient_ids,
                         const ExamEmbedder& embedder)
    : dim_(cohort.dim),
      horizons_(cohort.horizons),
      max_priors_(cohort.max_priors) {
  std::vector<std::pair<const PatientRecord*, int>> rows;
  for (const std::string& id : patient_ids) {
    const PatientRecord* p = cohort.Find(id);
    if (p == nullptr) throw InvalidArgumentError("unknown patient id " + id);
    const int pi = static_cast<int>(patients_.size());
    patients_.push_back(id);
    patient_samples_.emplace_back();
    for (int e = 0; e < static_cast<int>(p->exams.size()); ++e) {
      patient_samples_.back().push_back(static_cast<int>(rows.size()));
      patient_of_.push_back(pi);
      rows.emplace_back(p, e);
    }
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  current_ = ad::Matrix::Zero(n, dim_);
  priors_.assign(max_priors_, ad::Matrix::Zero(n, dim_));
  prior_rank_ = Eigen::MatrixXi::Zero(n, max_priors_);
  labels_ = Eigen::MatrixXi::Zero(n, horizons_);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& [patient, e] = rows[r];
    exam_index_.push_back(e);
    exam_year_.push_back(patient->exams[e].year);
    const HistorySequence seq =
        BuildHistorySequence(*patient, e, max_priors_, max_priors_, embedder);
    current_.row(r) = seq.current.vector.transpose();
    int rank = 0;
    for (int t = 0; t < max_priors_; ++t) {
      if (seq.sources[t] != SlotSource::kTrue) continue;
      priors_[t].row(r) = seq.priors[t]->vector.transpose();
      prior_rank_(r, t) = ++rank;
    }
    const LabelVector y = patient->LabelsForExam(e, horizons_);
    for (int k = 0; k < horizons_; ++k) labels_(r, k) = y[k];
  }
}

LabelVector SampleTable::Labels(int row) const {
  LabelVector y(horizons_);
  for (int k = 0; k < horizons_; ++k) y[k] = labels_(row, k);
  return y;
}

ad::Matrix SampleTable::CurrentRows(std::span<const int> rows) const {
  ad::Matrix out(static_cast<Eigen::Index>(rows.size()), dim_);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = current_.row(rows[i]);
  return out;
}

Eigen::MatrixXi SampleTable::LabelRows(std::span<const int> rows) const {
  Eigen::MatrixXi out(static_cast<Eigen::Index>(rows.size()), horizons_);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = labels_.row(rows[i]);
  return out;
}

ad::Matrix SampleTable::Availability(std::span<const int> rows,
                                     int n_available) const {
  ad::Matrix out(static_cast<Eigen::Index>(rows.size()), max_priors_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int t = 0; t < max_priors_; ++t) {
      const int rank = prior_rank_(rows[i], t);
      out(i, t) = rank > 0 && rank <= n_available ? 1.0 : 0.0;
    }
  }
  return out;
}

std::vector<ad::Matrix> SampleTable::PriorRows(std::span<const int> rows) const {
  std::vector<ad::Matrix> out;
  for (int t = 0; t < max_priors_; ++t) {
    ad::Matrix m(static_cast<Eigen::Index>(rows.size()), dim_);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(i) = priors_[t].row(rows[i]);
    out.push_back(std::move(m));
  }
  return out;
}

SequenceBatch SampleTable::Sequences(std::span<const int> rows,
                                     int n_available) const {
  if (n_available < 0 || n_available > max_priors_) {
    throw InvalidArgumentError("n_available must be in [0, max_priors]");
  }
  const int slots = 1 + max_priors_;
  const auto n = static_cast<Eigen::Index>(rows.size());
  SequenceBatch batch;
  batch.slots = slots;
  batch.tokens = ad::Matrix::Zero(n * slots, dim_);
  batch.absent.assign(n * slots, 0);
  batch.source.assign(n * slots, kSourceTrue);
  for (Eigen::Index b = 0; b < n; ++b) {
    const int r = rows[b];
    batch.tokens.row(b * slots) = current_.row(r);
    batch.source[b * slots] = kSourceCurrent;
    for (int t = 0; t < max_priors_; ++t) {
      const Eigen::Index row = b * slots + 1 + t;
      const int rank = prior_rank_(r, t);
      if (rank > 0 && rank <= n_available) {
        batch.tokens.row(row) = priors_[t].row(r);
      } else {
        batch.absent[row] = 1;
      }
    }
  }
  return batch;
}

void SampleTable::PoisonPriorsForTesting(double value) {
  for (ad::Matrix& m : priors_) m.setConstant(value);
}

}  // namespace phd
