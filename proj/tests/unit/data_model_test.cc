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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "phd/data_model.h"
#include "phd/error.h"
#include "phd/random.h"

namespace phd {
namespace {

// Label oracle written straight from the horizon definition: at horizon k
// the patient is positive if diagnosed by year k, negative if known to be
// cancer-free through year k, unknown otherwise.
LabelVector OracleLabels(std::optional<int> d, int c, int k_max) {
  LabelVector out;
  for (int k = 1; k <= k_max; ++k) {
    bool diagnosed_by_k = d.has_value() && *d <= k;
    bool known_free_at_k = !diagnosed_by_k && (d.has_value() || c >= k);
    out.push_back(diagnosed_by_k ? 1 : (known_free_at_k ? 0 : -1));
  }
  return out;
}

TEST(DeriveLabelsTest, Examples) {
  EXPECT_EQ(DeriveLabels(3, 5, 5), (LabelVector{0, 0, 1, 1, 1}));
  EXPECT_EQ(DeriveLabels(std::nullopt, 2, 5), (LabelVector{0, 0, -1, -1, -1}));
  EXPECT_EQ(DeriveLabels(1, 0, 5), (LabelVector{1, 1, 1, 1, 1}));
}

TEST(DeriveLabelsTest, MatchesBruteForceOracle) {
  for (int k = 1; k <= 6; ++k) {
    for (int c = 0; c <= 6; ++c) {
      EXPECT_EQ(DeriveLabels(std::nullopt, c, k), OracleLabels(std::nullopt, c, k));
      for (int d = 1; d <= 6; ++d) {
        const LabelVector got = DeriveLabels(d, c, k);
        EXPECT_EQ(got, OracleLabels(d, c, k)) << "d=" << d << " c=" << c;
        EXPECT_TRUE(IsValidLabelVector(got));
      }
    }
  }
}

TEST(DeriveLabelsTest, RejectsBadArguments) {
  EXPECT_THROW(DeriveLabels(1, 0, 0), InvalidArgumentError);
  EXPECT_THROW(DeriveLabels(std::nullopt, -1, 5), InvalidArgumentError);
  EXPECT_THROW(DeriveLabels(0, 3, 5), InvalidArgumentError);
}

TEST(LabelVectorTest, Validity) {
  EXPECT_TRUE(IsValidLabelVector({0, 0, 1, 1, 1}));
  EXPECT_TRUE(IsValidLabelVector({0, -1, -1}));
  EXPECT_FALSE(IsValidLabelVector({1, 0}));    // positive must persist
  EXPECT_FALSE(IsValidLabelVector({-1, 0}));   // censoring is a suffix
  EXPECT_FALSE(IsValidLabelVector({0, 2}));
}

TEST(LabelsForExamTest, OlderExamsShiftTheHorizon) {
  PatientRecord p;
  p.id = "p";
  p.exams = {{-2, {0.f}, {}, true}, {0, {0.f}, {}, true}};
  p.diagnosis_year = 2;
  p.censor_year = 4;
  p.labels = DeriveLabels(2, 4, 5);
  EXPECT_EQ(p.LabelsForExam(1, 5), (LabelVector{0, 1, 1, 1, 1}));
  EXPECT_EQ(p.LabelsForExam(0, 5), (LabelVector{0, 0, 0, 1, 1}));
  EXPECT_THROW(p.LabelsForExam(2, 5), InvalidArgumentError);
}

Cohort TinyCohort(int n) {
  Cohort c;
  c.dim = 1;
  for (int i = 0; i < n; ++i) {
    PatientRecord p;
    p.id = "id" + std::to_string(i);
    p.exams = {{0, {0.f}, {}, true}};
    p.censor_year = 5;
    p.labels = DeriveLabels(std::nullopt, 5, 5);
    c.patients.push_back(p);
  }
  return c;
}

TEST(PatientLevelSplitTest, SizesFollowFractions) {
  const CohortSplit s = PatientLevelSplit(TinyCohort(100), 0.8, 0.25, 7);
  EXPECT_EQ(s.test_ids.size(), 20u);
  EXPECT_EQ(s.val_ids.size(), 20u);
  EXPECT_EQ(s.train_ids.size(), 60u);
}

TEST(PatientLevelSplitTest, DisjointExhaustiveAndDeterministic) {
  const Cohort c = TinyCohort(137);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const CohortSplit a = PatientLevelSplit(c, 0.8, 0.25, seed);
    const CohortSplit b = PatientLevelSplit(c, 0.8, 0.25, seed);
    EXPECT_EQ(a.train_ids, b.train_ids);
    EXPECT_EQ(a.val_ids, b.val_ids);
    EXPECT_EQ(a.test_ids, b.test_ids);
    std::set<std::string> all;
    for (const auto* part : {&a.train_ids, &a.val_ids, &a.test_ids}) {
      for (const auto& id : *part) EXPECT_TRUE(all.insert(id).second) << id;
    }
    EXPECT_EQ(all.size(), c.patients.size());
  }
}

TEST(PatientLevelSplitTest, RejectsTinyCohortsAndBadFractions) {
  EXPECT_THROW(PatientLevelSplit(TinyCohort(2), 0.8, 0.25, 0), InvalidArgumentError);
  EXPECT_THROW(PatientLevelSplit(TinyCohort(10), 1.0, 0.25, 0), InvalidArgumentError);
  EXPECT_THROW(PatientLevelSplit(TinyCohort(10), 0.8, 0.0, 0), InvalidArgumentError);
}

SynthConfig SmallSynth(std::uint64_t seed) {
  SynthConfig c;
  c.n_patients = 300;
  c.dim = 32;
  c.seed = seed;
  return c;
}

TEST(SyntheticCohortTest, DeterministicAndValid) {
  const Cohort a = GenerateSyntheticCohort(SmallSynth(3));
  const Cohort b = GenerateSyntheticCohort(SmallSynth(3));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, GenerateSyntheticCohort(SmallSynth(4)));
  EXPECT_NO_THROW(ValidateCohort(a));
  for (const auto& p : a.patients) {
    ASSERT_FALSE(p.exams.empty());
    EXPECT_EQ(p.exams.back().year, 0);
    EXPECT_TRUE(IsValidLabelVector(p.labels));
  }
}

TEST(SyntheticCohortTest, FiveYearPrevalenceInBand) {
  SynthConfig c;  // the default 2000-patient cohort
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    c.seed = seed;
    const auto prevalence = HorizonPrevalence(GenerateSyntheticCohort(c));
    EXPECT_GE(prevalence.back(), 0.05) << "seed " << seed;
    EXPECT_LE(prevalence.back(), 0.15) << "seed " << seed;
    EXPECT_TRUE(std::is_sorted(prevalence.begin(), prevalence.end()));
  }
}

TEST(SyntheticCohortTest, BasisIsOrthonormal) {
  const SynthConfig c = SmallSynth(0);
  const SynthBasis b = MakeSynthBasis(c);
  for (int i = 0; i < b.factors; ++i) {
    for (int j = 0; j < b.factors; ++j) {
      double dot = 0.0;
      for (int r = 0; r < b.dim; ++r) dot += b.columns[i * b.dim + r] * b.columns[j * b.dim + r];
      EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(SyntheticCohortTest, RejectsBadConfig) {
  SynthConfig c = SmallSynth(0);
  c.dim = 0;
  EXPECT_THROW(GenerateSyntheticCohort(c), InvalidArgumentError);
  c = SmallSynth(0);
  c.n_patients = -1;
  EXPECT_THROW(GenerateSyntheticCohort(c), InvalidArgumentError);
}

TEST(ValidatePatientTest, CatchesBrokenRecords) {
  PatientRecord p;
  p.id = "x";
  p.exams = {{0, {0.f, 0.f}, {}, true}};
  p.censor_year = 3;
  p.labels = DeriveLabels(std::nullopt, 3, 5);
  EXPECT_NO_THROW(ValidatePatient(p, 2));
  EXPECT_THROW(ValidatePatient(p, 3), InvalidArgumentError);  // wrong dim
  PatientRecord q = p;
  q.exams.front().year = 1;
  EXPECT_THROW(ValidatePatient(q, 2), InvalidArgumentError);
  q = p;
  q.labels = {1, 0, 0, 0, 0};
  EXPECT_THROW(ValidatePatient(q, 2), InvalidArgumentError);
}

}  // namespace
}  // namespace phd
