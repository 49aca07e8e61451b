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
#include <limits>
#include <memory>
#include <vector>

#include "grad_check.h"
#include "phd/data_model.h"
#include "phd/dataset.h"
#include "phd/distillation.h"
#include "phd/error.h"
#include "phd/random.h"

namespace phd {
namespace {

double Logit(double p) { return std::log(p / (1.0 - p)); }

// KL(Bern(p) || Bern(q)) written out directly.
double BernoulliKl(double p, double q) {
  return p * std::log(p / q) + (1 - p) * std::log((1 - p) / (1 - q));
}

TEST(LogitKdTest, HandValue) {
  const std::vector<double> t{Logit(0.5)}, s{Logit(0.75)};
  const std::vector<char> m{1};
  EXPECT_NEAR(LogitKdLoss(t, s, m), 0.143841, 1e-6);
  EXPECT_NEAR(LogitKdLoss(t, s, m), BernoulliKl(0.5, 0.75), 1e-14);
}

TEST(LogitKdTest, IdenticalLogitsGiveZero) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> z(5);
    for (double& v : z) v = rng.Normal(0.0, 5.0);
    std::vector<char> m(5, 1);
    EXPECT_EQ(LogitKdLoss(z, z, m), 0.0);
  }
}

TEST(LogitKdTest, NonNegativeAndMatchesOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> t(5), s(5);
    std::vector<char> m(5);
    double sum = 0.0;
    int n = 0;
    for (int k = 0; k < 5; ++k) {
      t[k] = rng.Normal(0.0, 3.0);
      s[k] = rng.Normal(0.0, 3.0);
      m[k] = rng.Bernoulli(0.7);
    }
    m[rng.Index(5)] = 1;
    for (int k = 0; k < 5; ++k) {
      if (!m[k]) continue;
      sum += BernoulliKl(1 / (1 + std::exp(-t[k])), 1 / (1 + std::exp(-s[k])));
      ++n;
    }
    const double got = LogitKdLoss(t, s, m);
    ASSERT_GE(got, 0.0);
    ASSERT_NEAR(got, sum / n, 1e-9);
  }
}

TEST(LogitKdTest, TemperatureScalesLogits) {
  const std::vector<double> t{1.0, -2.0}, s{0.5, 1.0};
  const std::vector<char> m{1, 1};
  const std::vector<double> t2{0.5, -1.0}, s2{0.25, 0.5};
  EXPECT_NEAR(LogitKdLoss(t, s, m, 2.0), LogitKdLoss(t2, s2, m, 1.0), 1e-14);
}

TEST(LogitKdTest, MaskedHorizonsAreInert) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> t(5), s(5);
    std::vector<char> m(5);
    for (int k = 0; k < 5; ++k) {
      t[k] = rng.Normal(0.0, 2.0);
      s[k] = rng.Normal(0.0, 2.0);
      m[k] = rng.Bernoulli(0.5);
    }
    m[0] = 1;
    const double ref = LogitKdLoss(t, s, m);
    auto s2 = s;
    for (int k = 0; k < 5; ++k) {
      if (!m[k]) s2[k] = rng.Normal(0.0, 10.0);
    }
    EXPECT_LT(std::fabs(LogitKdLoss(t, s2, m) - ref), 1e-12);
  }
  EXPECT_THROW(LogitKdLoss(std::vector<double>{0.0}, std::vector<double>{1.0},
                           std::vector<char>{0}),
               DegenerateSampleError);
}

TEST(LogitKdTest, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  const double h = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> t(5), s(5);
    std::vector<char> m(5);
    for (int k = 0; k < 5; ++k) {
      t[k] = rng.Normal(0.0, 2.0);
      s[k] = rng.Normal(0.0, 2.0);
      m[k] = rng.Bernoulli(0.7);
    }
    m[2] = 1;
    const double temp = 0.5 + 2.0 * rng.Uniform();
    const auto g = LogitKdGradient(t, s, m, temp);
    for (int k = 0; k < 5; ++k) {
      auto up = s, down = s;
      up[k] += h;
      down[k] -= h;
      const double numeric =
          (LogitKdLoss(t, up, m, temp) - LogitKdLoss(t, down, m, temp)) /
          (2 * h);
      const double denom = std::max({std::fabs(numeric), std::fabs(g[k]), 1e-4});
      EXPECT_LT(std::fabs(numeric - g[k]) / denom, 1e-4) << trial << "/" << k;
    }
  }
}

TEST(LogitKdTest, BatchMatchesPerSampleAndGradient) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5, k = 4;
    ad::Parameter z("z", ad::Matrix(n, k));
    ad::Matrix teacher(n, k), mask(n, k);
    for (Eigen::Index i = 0; i < z.value.size(); ++i) {
      z.value.data()[i] = rng.Normal(0.0, 2.0);
      teacher.data()[i] = rng.Normal(0.0, 2.0);
      mask.data()[i] = rng.Bernoulli(0.6);
    }
    mask.row(0).setZero();
    for (int b = 1; b < n; ++b) mask(b, 0) = 1;
    ad::Tape tape;
    const double batch =
        LogitKdLossBatch(tape.Param(z), teacher, mask).scalar();
    double sum = 0.0;
    for (int b = 1; b < n; ++b) {
      std::vector<double> t(k), s(k);
      std::vector<char> m(k);
      for (int j = 0; j < k; ++j) {
        t[j] = teacher(b, j);
        s[j] = z.value(b, j);
        m[j] = mask(b, j) > 0;
      }
      sum += LogitKdLoss(t, s, m);
    }
    EXPECT_NEAR(batch, sum / (n - 1), 1e-12);
    auto fn = [&](ad::Tape& t) {
      return LogitKdLossBatch(t.Param(z), teacher, mask);
    };
    EXPECT_LT(testing::CheckGradients({&z}, fn, rng, 20).max_rel_error, 1e-4);
  }
}

TEST(TotalLossTest, Combination) {
  EXPECT_DOUBLE_EQ(TotalLoss(1.0, 2.0, 3.0, 0.5, 2.0), 1.0 + 1.0 + 6.0);
  EXPECT_EQ(TotalLoss(0.7, 2.0, 3.0, 0.0, 0.0), 0.7);
  EXPECT_THROW(TotalLoss(1.0, 2.0, 3.0, -0.1, 1.0), InvalidArgumentError);
  EXPECT_THROW(TotalLoss(1.0, 2.0, 3.0, 1.0, -1.0), InvalidArgumentError);
  EXPECT_THROW(TotalLoss(std::numeric_limits<double>::quiet_NaN(), 0, 0, 1, 1),
               NumericError);

  ad::Tape tape;
  ad::Var rce = tape.Constant(ad::Matrix::Constant(1, 1, 0.7));
  ad::Var kd = tape.Constant(ad::Matrix::Constant(1, 1, 2.0));
  EXPECT_EQ(TotalLoss(rce, std::nullopt, std::nullopt, 0.0, 0.0).scalar(), 0.7);
  EXPECT_DOUBLE_EQ(TotalLoss(rce, kd, kd, 1.0, 0.5).scalar(), 3.7);
  EXPECT_THROW(TotalLoss(rce, kd, std::nullopt, -1.0, 0.0),
               InvalidArgumentError);
}

TEST(TrainConfigTest, RejectsBadFields) {
  TrainConfig c;
  EXPECT_NO_THROW(ValidateTrainConfig(c));
  c.lambda_logit = -1;
  EXPECT_THROW(ValidateTrainConfig(c), InvalidArgumentError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(ValidateTrainConfig(c), InvalidArgumentError);
  c = TrainConfig{};
  c.temperature = 0;
  EXPECT_THROW(ValidateTrainConfig(c), InvalidArgumentError);
}

// Small cohort and models shared by the training tests below.
class DistillationTrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SynthConfig sc;
    sc.n_patients = 240;
    sc.dim = 8;
    sc.nuisance_dim = 2;
    sc.seed = 5;
    cohort_ = new Cohort(GenerateSyntheticCohort(sc));
    const CohortSplit split = PatientLevelSplit(*cohort_, 0.8, 0.25, 1);
    train_ = new SampleTable(*cohort_, split.train_ids);
    val_ = new SampleTable(*cohort_, split.val_ids);
    std::vector<LabelVector> labels;
    for (int i = 0; i < train_->size(); ++i) labels.push_back(train_->Labels(i));
    weights_ = new std::vector<double>(
        ComputePosWeights(labels, train_->horizons()).weights);
    teachers_ = new TeacherBundle(
        TrainTeachers(*train_, *val_, Model(), Train(), *weights_));
  }
  static void TearDownTestSuite() {
    delete teachers_;
    delete weights_;
    delete val_;
    delete train_;
    delete cohort_;
  }

  static ModelConfig Model() {
    ModelConfig mc;
    mc.model_dim = 8;
    mc.heads = 2;
    mc.layers = 1;
    mc.ffn_dim = 8;
    mc.predictor_hidden = 8;
    return mc;
  }
  static TrainConfig Train() {
    TrainConfig tc;
    tc.epochs = 2;
    tc.patience = 2;
    tc.batch_size = 32;
    tc.seed = 3;
    return tc;
  }
  static std::uint64_t StudentChecksum(StudentModel& s) {
    return ad::Checksum(s.Parameters());
  }

  static Cohort* cohort_;
  static SampleTable* train_;
  static SampleTable* val_;
  static std::vector<double>* weights_;
  static TeacherBundle* teachers_;
};

Cohort* DistillationTrainingTest::cohort_ = nullptr;
SampleTable* DistillationTrainingTest::train_ = nullptr;
SampleTable* DistillationTrainingTest::val_ = nullptr;
std::vector<double>* DistillationTrainingTest::weights_ = nullptr;
TeacherBundle* DistillationTrainingTest::teachers_ = nullptr;

TEST_F(DistillationTrainingTest, TeachersAreFrozenAndUntouchedByStudent) {
  ASSERT_EQ(teachers_->size(), train_->horizons());
  EXPECT_TRUE(teachers_->IsFrozen());
  const auto before = teachers_->Checksums();
  for (auto& expert : teachers_->experts) {
    for (ad::Parameter* p : expert->Parameters()) p->ZeroGrad();
  }
  TrainStudent(*teachers_, *train_, *val_, Model(), Train(), *weights_);
  EXPECT_EQ(teachers_->Checksums(), before);
  for (auto& expert : teachers_->experts) {
    for (ad::Parameter* p : expert->Parameters()) {
      EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
    }
  }
}

TEST_F(DistillationTrainingTest, BadBundlesAreRejected) {
  TeacherBundle partial;
  partial.experts.push_back(
      MakeRiskModel(Model(), train_->dim(), train_->horizons(),
                    train_->max_priors(), 1));
  partial.Freeze();
  EXPECT_THROW(
      TrainStudent(partial, *train_, *val_, Model(), Train(), *weights_),
      InvalidArgumentError);

  TeacherBundle unfrozen;
  for (int k = 0; k < train_->horizons(); ++k) {
    unfrozen.experts.push_back(MakeRiskModel(
        Model(), train_->dim(), train_->horizons(), train_->max_priors(), k));
  }
  EXPECT_FALSE(unfrozen.IsFrozen());
  EXPECT_THROW(
      TrainStudent(unfrozen, *train_, *val_, Model(), Train(), *weights_),
      InvalidArgumentError);
}

TEST_F(DistillationTrainingTest, NegativeLambdaIsRejected) {
  TrainConfig tc = Train();
  tc.lambda_logit = -0.5;
  EXPECT_THROW(TrainStudent(*teachers_, *train_, *val_, Model(), tc, *weights_),
               InvalidArgumentError);
}

TEST_F(DistillationTrainingTest, ZeroLambdaIgnoresTeacherLogits) {
  TrainConfig tc = Train();
  tc.lambda_logit = 0.0;
  tc.lambda_feature = 0.0;
  const ad::Matrix logits = TeacherLogits(*teachers_, *train_);
  ad::Matrix other = logits;
  other.array() += 3.0;
  StudentModel a(Model(), train_->dim(), train_->horizons(),
                 train_->max_priors(), 7);
  StudentModel b(Model(), train_->dim(), train_->horizons(),
                 train_->max_priors(), 7);
  StudentModel c(Model(), train_->dim(), train_->horizons(),
                 train_->max_priors(), 7);
  TrainStudentWithLogits(a, nullptr, *train_, *val_, tc, *weights_);
  TrainStudentWithLogits(b, &logits, *train_, *val_, tc, *weights_);
  TrainStudentWithLogits(c, &other, *train_, *val_, tc, *weights_);
  EXPECT_EQ(StudentChecksum(a), StudentChecksum(b));
  EXPECT_EQ(StudentChecksum(a), StudentChecksum(c));
}

TEST_F(DistillationTrainingTest, TrainingIsDeterministic) {
  auto a = TrainStudent(*teachers_, *train_, *val_, Model(), Train(), *weights_);
  auto b = TrainStudent(*teachers_, *train_, *val_, Model(), Train(), *weights_);
  EXPECT_EQ(StudentChecksum(*a), StudentChecksum(*b));
  TrainConfig other = Train();
  other.seed = 4;
  auto c = TrainStudent(*teachers_, *train_, *val_, Model(), other, *weights_);
  EXPECT_NE(StudentChecksum(*a), StudentChecksum(*c));
}

TEST_F(DistillationTrainingTest, StudentNeverReadsPriors) {
  auto student =
      TrainStudent(*teachers_, *train_, *val_, Model(), Train(), *weights_);
  const ad::Matrix ref = PredictCumRisk(*student, *val_);
  SampleTable poisoned = *val_;
  poisoned.PoisonPriorsForTesting(std::numeric_limits<double>::quiet_NaN());
  EXPECT_EQ(PredictCumRisk(*student, poisoned), ref);
  // A history model does read them.
  const ad::Matrix teacher_ref = PredictCumRisk(*teachers_->experts[0], *val_,
                                                val_->max_priors());
  poisoned.PoisonPriorsForTesting(5.0);
  EXPECT_NE(PredictCumRisk(*teachers_->experts[0], poisoned,
                           val_->max_priors()),
            teacher_ref);
}

TEST_F(DistillationTrainingTest, TeacherLogitsComeFromMatchingExpert) {
  const ad::Matrix logits = TeacherLogits(*teachers_, *val_);
  for (int k = 0; k < teachers_->size(); ++k) {
    const ad::Matrix own =
        PredictLogits(*teachers_->experts[k], *val_, val_->max_priors());
    EXPECT_EQ(logits.col(k), own.col(k)) << "horizon " << k + 1;
  }
}

TEST_F(DistillationTrainingTest, TeacherWithoutPositivesThrows) {
  std::vector<std::string> ids;
  for (const auto& p : cohort_->patients) {
    if (p.labels[0] != kPositive &&
        std::find(train_->patients().begin(), train_->patients().end(),
                  p.id) != train_->patients().end()) {
      bool any = false;
      for (int e = 0; e < static_cast<int>(p.exams.size()); ++e) {
        any |= p.LabelsForExam(e, cohort_->horizons)[0] == kPositive;
      }
      if (!any) ids.push_back(p.id);
    }
  }
  const SampleTable clean(*cohort_, ids);
  EXPECT_THROW(
      TrainTeacher(1, clean, *val_, Model(), Train(), *weights_),
      InvalidArgumentError);
}

}  // namespace
}  // namespace phd
