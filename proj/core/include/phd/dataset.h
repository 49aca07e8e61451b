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


#ifndef PHD_DATASET_H_
#define PHD_DATASET_H_

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "phd/autodiff.h"
#include "phd/data_model.h"
#include "phd/embedding.h"
#include "phd/risk_model.h"

namespace phd {

// Every exam of a set of patients as a training/evaluation sample, with the
// current embedding, the full true history window and the labels seen from
// that exam. Immutable once built.
class SampleTable {
 public:
  SampleTable() = default;
  SampleTable(const Cohort& cohort, std::span<const std::string> patient_ids,
              const ExamEmbedder& embedder = {});

  int size() const { return static_cast<int>(exam_index_.size()); }
  int dim() const { return dim_; }
  int horizons() const { return horizons_; }
  int max_priors() const { return max_priors_; }

  const std::vector<std::string>& patients() const { return patients_; }
  // Sample rows belonging to patient `p` (index into patients()).
  const std::vector<int>& PatientSamples(int p) const {
    return patient_samples_[p];
  }
  const std::string& PatientId(int row) const {
    return patients_[patient_of_[row]];
  }
  int ExamIndex(int row) const { return exam_index_[row]; }
  int ExamYear(int row) const { return exam_year_[row]; }

  const ad::Matrix& current() const { return current_; }
  const ad::Matrix& prior(int slot) const { return priors_[slot]; }
  const Eigen::MatrixXi& labels() const { return labels_; }
  LabelVector Labels(int row) const;

  // Rows of `current` for the given samples.
  ad::Matrix CurrentRows(std::span<const int> rows) const;
  Eigen::MatrixXi LabelRows(std::span<const int> rows) const;
  // rows x max_priors, 1 where a true prior is visible with `n_available`
  // priors allowed (the n most recent available ones).
  ad::Matrix Availability(std::span<const int> rows, int n_available) const;
  // True-history sequences with at most `n_available` priors visible.
  SequenceBatch Sequences(std::span<const int> rows, int n_available) const;
  std::vector<ad::Matrix> PriorRows(std::span<const int> rows) const;

  // Overwrites every stored prior embedding; only for leakage tests.
  void PoisonPriorsForTesting(double value);

 private:
  int dim_ = 0;
  int horizons_ = 0;
  int max_priors_ = 0;
  std::vector<std::string> patients_;
  std::vector<std::vector<int>> patient_samples_;
  std::vector<int> patient_of_;
  std::vector<int> exam_index_;
  std::vector<int> exam_year_;
  ad::Matrix current_;
  std::vector<ad::Matrix> priors_;
  // 0 = absent, r = r-th most recent available prior.
  Eigen::MatrixXi prior_rank_;
  Eigen::MatrixXi labels_;
};

}  // namespace phd

#endif  // PHD_DATASET_H_
