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


#include "phd/data_model.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <unordered_set>

#include "phd/error.h"
#include "phd/random.h"

namespace phd {

LabelVector DeriveLabels(std::optional<int> diagnosis_year, int censor_year,
                         int horizons) {
  if (horizons <= 0) {
    throw InvalidArgumentError("horizons must be positive, got " +
                               std::to_string(horizons));
  }
  if (censor_year < 0) {
    throw InvalidArgumentError("censor_year must be >= 0, got " +
                               std::to_string(censor_year));
  }
  if (diagnosis_year && *diagnosis_year < 1) {
    throw InvalidArgumentError("diagnosis_year must be >= 1, got " +
                               std::to_string(*diagnosis_year));
  }
  LabelVector labels(horizons);
  for (int k = 1; k <= horizons; ++k) {
    if (diagnosis_year) {
      labels[k - 1] = *diagnosis_year <= k ? kPositive : kNegative;
    } else {
      labels[k - 1] = censor_year >= k ? kNegative : kMasked;
    }
  }
  return labels;
}

bool IsValidLabelVector(const LabelVector& labels) {
  bool seen_positive = false;
  bool seen_masked = false;
  for (int y : labels) {
    if (y != kPositive && y != kNegative && y != kMasked) return false;
    if (seen_masked && y != kMasked) return false;
    if (seen_positive && y == kNegative) return false;
    seen_positive |= y == kPositive;
    seen_masked |= y == kMasked;
  }
  return true;
}

LabelVector PatientRecord::LabelsForExam(int exam_index, int horizons) const {
  if (exam_index < 0 || exam_index >= static_cast<int>(exams.size())) {
    throw InvalidArgumentError("exam index " + std::to_string(exam_index) +
                               " out of range for patient " + id);
  }
  const int offset = -exams[exam_index].year;
  std::optional<int> diagnosis;
  if (diagnosis_year) diagnosis = *diagnosis_year + offset;
  return DeriveLabels(diagnosis, censor_year + offset, horizons);
}

const PatientRecord* Cohort::Find(const std::string& id) const {
  for (const auto& p : patients) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

std::size_t Cohort::ExamCount() const {
  std::size_t n = 0;
  for (const auto& p : patients) n += p.exams.size();
  return n;
}

void ValidatePatient(const PatientRecord& patient, int dim) {
  const std::string where = "patient '" + patient.id + "': ";
  if (patient.id.empty()) throw InvalidArgumentError("empty patient id");
  if (patient.exams.empty()) {
    throw InvalidArgumentError(where + "no exams");
  }
  for (std::size_t i = 0; i < patient.exams.size(); ++i) {
    const ExamRecord& exam = patient.exams[i];
    if (exam.year > 0) {
      throw InvalidArgumentError(where + "exam year must be <= 0");
    }
    if (i > 0 && exam.year <= patient.exams[i - 1].year) {
      throw InvalidArgumentError(where + "exam years must strictly increase");
    }
    if (!exam.embedding.empty() &&
        static_cast<int>(exam.embedding.size()) != dim) {
      throw InvalidArgumentError(where + "embedding dimension " +
                                 std::to_string(exam.embedding.size()) +
                                 " != " + std::to_string(dim));
    }
    for (const auto& view : exam.views) {
      if (view.size() != exam.views.front().size()) {
        throw InvalidArgumentError(where + "view feature sizes differ");
      }
    }
    for (float v : exam.embedding) {
      if (!std::isfinite(v)) {
        throw InvalidArgumentError(where + "non-finite embedding entry");
      }
    }
  }
  if (patient.exams.back().year != 0) {
    throw InvalidArgumentError(where + "most recent exam must be year 0");
  }
  if (patient.censor_year < 0) {
    throw InvalidArgumentError(where + "censor_year must be >= 0");
  }
  if (patient.diagnosis_year && *patient.diagnosis_year < 1) {
    throw InvalidArgumentError(where + "diagnosis_year must be >= 1");
  }
  if (!IsValidLabelVector(patient.labels)) {
    throw InvalidArgumentError(where + "label vector violates invariants");
  }
}

void ValidateCohort(const Cohort& cohort) {
  if (cohort.dim <= 0) throw InvalidArgumentError("cohort dim must be > 0");
  if (cohort.horizons <= 0) {
    throw InvalidArgumentError("cohort horizons must be > 0");
  }
  if (cohort.max_priors < 0) {
    throw InvalidArgumentError("cohort max_priors must be >= 0");
  }
  std::unordered_set<std::string> ids;
  for (const auto& p : cohort.patients) {
    ValidatePatient(p, cohort.dim);
    if (static_cast<int>(p.labels.size()) != cohort.horizons) {
      throw InvalidArgumentError("patient '" + p.id +
                                 "': label vector length != horizons");
    }
    if (!ids.insert(p.id).second) {
      throw InvalidArgumentError("duplicate patient id '" + p.id + "'");
    }
  }
}

CohortSplit PatientLevelSplit(const Cohort& cohort, double train_frac,
                              double val_frac_of_train, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw InvalidArgumentError("train_frac must be in (0, 1)");
  }
  if (!(val_frac_of_train > 0.0 && val_frac_of_train < 1.0)) {
    throw InvalidArgumentError("val_frac_of_train must be in (0, 1)");
  }
  const auto n = static_cast<long long>(cohort.patients.size());
  if (n < 3) {
    throw InvalidArgumentError("need at least 3 patients to split, got " +
                               std::to_string(n));
  }
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& p : cohort.patients) ids.push_back(p.id);
  // Sort first so the split depends on the id set, not on file order.
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.Shuffle(ids);

  long long n_trainval = std::llround(static_cast<double>(n) * train_frac);
  n_trainval = std::clamp(n_trainval, 2LL, n - 1);
  long long n_val =
      std::llround(static_cast<double>(n_trainval) * val_frac_of_train);
  n_val = std::clamp(n_val, 1LL, n_trainval - 1);

  CohortSplit split;
  split.seed = seed;
  const auto train_end = ids.begin() + (n_trainval - n_val);
  const auto val_end = ids.begin() + n_trainval;
  split.train_ids.assign(ids.begin(), train_end);
  split.val_ids.assign(train_end, val_end);
  split.test_ids.assign(val_end, ids.end());
  return split;
}

void ValidateSynthConfig(const SynthConfig& c) {
  auto require = [](bool ok, const char* field) {
    if (!ok) {
      throw InvalidArgumentError(std::string("synthetic config field '") +
                                 field + "' is out of range");
    }
  };
  require(c.n_patients > 0, "n_patients");
  require(c.dim > 0, "dim");
  require(c.max_priors >= 0, "max_priors");
  require(c.horizons > 0, "horizons");
  require(c.signal_strength >= 0.0 && c.signal_strength <= 1.0,
          "signal_strength");
  require(c.noise_sigma >= 0.0, "noise_sigma");
  require(c.max_exams > 0, "max_exams");
  require(c.nuisance_dim >= 0, "nuisance_dim");
  require(c.dim >= c.nuisance_dim + 2, "dim");
  require(c.slope_scale >= 0.0, "slope_scale");
  require(c.level_noise >= 0.0, "level_noise");
  require(c.slope_proxy_noise >= 0.0, "slope_proxy_noise");
  require(c.gap_probability >= 0.0 && c.gap_probability < 1.0,
          "gap_probability");
  require(c.short_followup_probability >= 0.0 &&
              c.short_followup_probability <= 1.0,
          "short_followup_probability");
  require(c.max_followup >= 1, "max_followup");
}

SynthBasis MakeSynthBasis(const SynthConfig& config) {
  ValidateSynthConfig(config);
  SynthBasis basis;
  basis.dim = config.dim;
  basis.factors = 2 + config.nuisance_dim;
  const int d = basis.dim;
  basis.columns.assign(static_cast<std::size_t>(d) * basis.factors, 0.0);
  Rng rng(MixSeed(config.seed, 0xba515));
  // Modified Gram-Schmidt on Gaussian columns.
  for (int j = 0; j < basis.factors; ++j) {
    double* col = &basis.columns[static_cast<std::size_t>(j) * d];
    for (int i = 0; i < d; ++i) col[i] = rng.Normal();
    for (int p = 0; p < j; ++p) {
      const double* prev = &basis.columns[static_cast<std::size_t>(p) * d];
      double dot = 0.0;
      for (int i = 0; i < d; ++i) dot += col[i] * prev[i];
      for (int i = 0; i < d; ++i) col[i] -= dot * prev[i];
    }
    double norm = 0.0;
    for (int i = 0; i < d; ++i) norm += col[i] * col[i];
    norm = std::sqrt(norm);
    for (int i = 0; i < d; ++i) col[i] /= norm;
  }
  return basis;
}

namespace {

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string PatientId(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "P%06d", index);
  return buf;
}

}  // namespace

Cohort GenerateSyntheticCohort(const SynthConfig& config) {
  const SynthBasis basis = MakeSynthBasis(config);
  Rng rng(MixSeed(config.seed, 0xc0407));
  const double s = config.signal_strength;
  const double drift = config.slope_scale * s;
  const int d = config.dim;

  Cohort cohort;
  cohort.dim = d;
  cohort.horizons = config.horizons;
  cohort.max_priors = config.max_priors;
  cohort.patients.reserve(config.n_patients);

  std::vector<double> factors(basis.factors);
  for (int p = 0; p < config.n_patients; ++p) {
    PatientRecord patient;
    patient.id = PatientId(p);
    const double level = rng.Normal();
    const double slope = rng.Normal();

    // Screening years walking back from the most recent exam.
    const int n_exams = rng.Int(1, config.max_exams);
    std::vector<int> years{0};
    while (static_cast<int>(years.size()) < n_exams) {
      const int gap = rng.Bernoulli(config.gap_probability) ? 2 : 1;
      years.push_back(years.back() - gap);
    }
    std::reverse(years.begin(), years.end());

    for (int year : years) {
      factors[0] = level + drift * slope * year + config.level_noise * rng.Normal();
      factors[1] = s * slope + config.slope_proxy_noise * rng.Normal();
      // Acquisition-level variation, redrawn for every exam.
      for (int j = 0; j < config.nuisance_dim; ++j) factors[2 + j] = rng.Normal();
      ExamRecord exam;
      exam.year = year;
      exam.embedding.resize(d);
      for (int i = 0; i < d; ++i) {
        double v = config.noise_sigma * rng.Normal();
        for (int j = 0; j < basis.factors; ++j) {
          v += basis.columns[static_cast<std::size_t>(j) * d + i] * factors[j];
        }
        exam.embedding[i] = static_cast<float>(v);
      }
      patient.exams.push_back(std::move(exam));
    }

    // Discrete-time event process after the most recent exam.
    std::optional<int> event_year;
    for (int t = 1; t <= config.max_followup + config.horizons; ++t) {
      const double latent = level + drift * slope * t;
      if (rng.Bernoulli(Sigmoid(config.base_logit +
                                config.risk_coef * latent))) {
        event_year = t;
        break;
      }
    }
    int censor = 0;
    if (rng.Bernoulli(config.short_followup_probability)) {
      censor = rng.Int(0, std::max(0, config.horizons - 1));
    } else {
      censor = rng.Int(std::min(config.horizons, config.max_followup),
                       config.max_followup);
    }
    patient.censor_year = censor;
    if (event_year && *event_year <= censor) {
      patient.diagnosis_year = event_year;
    }
    patient.labels =
        DeriveLabels(patient.diagnosis_year, censor, config.horizons);
    cohort.patients.push_back(std::move(patient));
  }
  return cohort;
}

std::vector<double> HorizonPrevalence(const Cohort& cohort) {
  std::vector<double> pos(cohort.horizons, 0.0);
  std::vector<double> known(cohort.horizons, 0.0);
  for (const auto& p : cohort.patients) {
    for (int k = 0; k < cohort.horizons; ++k) {
      if (p.labels[k] == kMasked) continue;
      known[k] += 1.0;
      pos[k] += p.labels[k] == kPositive ? 1.0 : 0.0;
    }
  }
  for (int k = 0; k < cohort.horizons; ++k) {
    pos[k] = known[k] > 0.0 ? pos[k] / known[k] : 0.0;
  }
  return pos;
}

}  // namespace phd
