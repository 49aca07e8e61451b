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


#ifndef PHD_DATA_MODEL_H_
#define PHD_DATA_MODEL_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace phd {

inline constexpr int kDefaultHorizons = 5;
inline constexpr int kDefaultMaxPriors = 4;

// Multi-horizon label vector. Entry k-1 is the status at horizon k years:
// 1 diagnosed within k years, 0 known cancer-free at k, -1 unknown (censored).
using LabelVector = std::vector<int>;

inline constexpr int kPositive = 1;
inline constexpr int kNegative = 0;
inline constexpr int kMasked = -1;

struct ExamRecord {
  // Screening year relative to the patient's most recent exam (always <= 0).
  int year = 0;
  // Precomputed visit embedding. Empty when the exam carries raw views only.
  std::vector<float> embedding;
  // Optional per-view feature vectors (up to 4: L/R x CC/MLO).
  std::vector<std::vector<float>> views;
  bool available = true;

  bool operator==(const ExamRecord&) const = default;
};

struct PatientRecord {
  std::string id;
  std::vector<ExamRecord> exams;  // ordered by year, last one is year 0
  // Years after the most recent exam; absent when no diagnosis was observed.
  std::optional<int> diagnosis_year;
  // Last year (after the most recent exam) with known outcome.
  int censor_year = 0;
  LabelVector labels;  // labels as seen from the most recent exam

  bool operator==(const PatientRecord&) const = default;

  // Labels when exam `exam_index` plays the role of the current exam.
  LabelVector LabelsForExam(int exam_index, int horizons) const;
};

struct Cohort {
  int dim = 0;
  int horizons = kDefaultHorizons;
  int max_priors = kDefaultMaxPriors;
  std::vector<PatientRecord> patients;

  bool operator==(const Cohort&) const = default;

  const PatientRecord* Find(const std::string& id) const;
  std::size_t ExamCount() const;
};

struct CohortSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
};

// Derives the masked label vector for horizons 1..horizons.
//  - diagnosis known: y_k = 1 iff diagnosis_year <= k, else 0; censoring is
//    irrelevant because the status is known at every horizon.
//  - no diagnosis: y_k = 0 iff censor_year >= k, else -1.
// Throws InvalidArgumentError on horizons <= 0, censor_year < 0 or
// diagnosis_year < 1.
LabelVector DeriveLabels(std::optional<int> diagnosis_year, int censor_year,
                         int horizons);

// True when `labels` satisfies the monotone-once-positive and
// censoring-suffix invariants and has only {-1, 0, 1} entries.
bool IsValidLabelVector(const LabelVector& labels);

// Throws InvalidArgumentError describing the first violated invariant.
void ValidatePatient(const PatientRecord& patient, int dim);
void ValidateCohort(const Cohort& cohort);

// Random patient-level partition. `train_frac` of the cohort goes to
// train+val, the rest to test; `val_frac_of_train` of that goes to val.
CohortSplit PatientLevelSplit(const Cohort& cohort, double train_frac,
                              double val_frac_of_train, std::uint64_t seed);

struct SynthConfig {
  int n_patients = 2000;
  int dim = 128;
  int max_priors = kDefaultMaxPriors;
  int horizons = kDefaultHorizons;
  // Scales the temporal slope of the latent risk process; 0 removes any
  // information that history carries beyond the current exam.
  double signal_strength = 1.0;
  // Isotropic embedding noise per dimension.
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  int max_exams = 7;
  int nuisance_dim = 0;
  double slope_scale = 0.5;        // latent drift per year per unit slope
  double level_noise = 0.1;        // transient noise on the level readout
  double slope_proxy_noise = 2.0;  // noise on the current-exam slope cue
  double base_logit = -5.0;        // yearly hazard intercept
  double risk_coef = 1.0;          // yearly hazard slope on latent level
  double gap_probability = 0.15;   // chance of a skipped screening year
  double short_followup_probability = 0.3;
  int max_followup = 10;

  bool operator==(const SynthConfig&) const = default;
};

// Throws InvalidArgumentError naming the first invalid field.
void ValidateSynthConfig(const SynthConfig& config);

// Latent directions the generator writes into the embedding space. Column 0
// carries the latent level, column 1 the noisy slope cue, the remaining
// columns per-exam nuisance. Exposed for oracle checks.
struct SynthBasis {
  int dim = 0;
  int factors = 0;
  std::vector<double> columns;  // column-major dim x factors, orthonormal
};
SynthBasis MakeSynthBasis(const SynthConfig& config);

// Pure function of `config`: each patient has a latent level a and slope b,
// risk at future year t follows a + slope_scale * s * b * t, and exam
// embeddings encode the (noisy) level at the exam year and a noisy slope cue.
Cohort GenerateSyntheticCohort(const SynthConfig& config);

// Per-horizon fraction of positives among unmasked reference-exam labels.
std::vector<double> HorizonPrevalence(const Cohort& cohort);

}  // namespace phd

#endif  // PHD_DATA_MODEL_H_
