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
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "phd/data_model.h"
#include "phd/dataset.h"
#include "phd/error.h"
#include "phd/evaluation.h"
#include "phd/random.h"

namespace phd {
namespace {

namespace fs = std::filesystem;

SampleTable SmallTable(int patients = 60, std::uint64_t seed = 2) {
  SynthConfig sc;
  sc.n_patients = patients;
  sc.dim = 4;
  sc.seed = seed;
  const Cohort c = GenerateSyntheticCohort(sc);
  std::vector<std::string> ids;
  for (const auto& p : c.patients) ids.push_back(p.id);
  return SampleTable(c, ids);
}

TEST(SummarizeTest, MeanAndSampleStd) {
  const Summary s = Summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(s.values.size(), 4u);
  EXPECT_EQ(Summarize({7.0}).std, 0.0);
}

TEST(SingleExamDrawsTest, OneExamPerPatientPerRepetition) {
  const SampleTable t = SmallTable();
  const auto draws = SingleExamDraws(t, 100, 9);
  ASSERT_EQ(draws.size(), 100u);
  bool varied = false;
  for (const auto& draw : draws) {
    ASSERT_EQ(draw.size(), t.patients().size());
    std::set<std::string> seen;
    for (std::size_t p = 0; p < draw.size(); ++p) {
      const int row = draw[p];
      EXPECT_EQ(t.PatientId(row), t.patients()[p]);
      seen.insert(t.PatientId(row));
    }
    EXPECT_EQ(seen.size(), draw.size());
    varied |= draw != draws.front();
  }
  EXPECT_TRUE(varied);
  EXPECT_EQ(SingleExamDraws(t, 100, 9), draws);
  EXPECT_NE(SingleExamDraws(t, 100, 10), draws);
  EXPECT_THROW(SingleExamDraws(SampleTable(), 10, 1), InvalidArgumentError);
}

TEST(SampleSingleExamTest, ReportsEveryRepetition) {
  const SampleTable t = SmallTable(300);
  Rng rng(3);
  ad::Matrix scores(t.size(), t.horizons());
  for (Eigen::Index i = 0; i < scores.size(); ++i) scores.data()[i] = rng.Uniform();
  EvalSettings es;
  es.seed = 4;
  const HorizonMetrics m = SampleSingleExam(scores, t, es);
  ASSERT_EQ(m.horizons(), t.horizons());
  const int k = t.horizons() - 1;
  ASSERT_TRUE(m.defined[k]);
  EXPECT_EQ(m.auc[k].values.size(), 100u);
  EXPECT_NEAR(m.auc[k].mean, 0.5, 0.1);
  EXPECT_EQ(SampleSingleExam(scores, t, es).pauc[k].values, m.pauc[k].values);
  EXPECT_THROW(SampleSingleExam(ad::Matrix(2, 2), t, es), InvalidArgumentError);
}

TEST(AggregateSplitsTest, MeanOfSplitMeans) {
  auto metrics = [](double auc) {
    HorizonMetrics m;
    m.auc = {Summarize({auc, auc + 0.2})};
    m.pauc = {Summarize({auc / 2})};
    m.n_pos = {1};
    m.n_neg = {3};
    m.defined = {1};
    return m;
  };
  std::vector<std::optional<SplitMetrics>> splits;
  splits.push_back(SplitMetrics{{"a", metrics(0.5)}});
  splits.push_back(std::nullopt);
  splits.push_back(SplitMetrics{{"a", metrics(0.7)}});
  const auto agg = AggregateSplits(splits);
  ASSERT_EQ(agg.count("a"), 1u);
  EXPECT_NEAR(agg.at("a").auc[0].mean, (0.6 + 0.8) / 2, 1e-15);
  EXPECT_NEAR(agg.at("a").pauc[0].mean, (0.25 + 0.35) / 2, 1e-15);
  EXPECT_EQ(agg.at("a").auc[0].values.size(), 2u);
}

TEST(RepeatedSplitEvalTest, RecordsFailuresAndContinues) {
  SynthConfig sc;
  sc.n_patients = 50;
  sc.dim = 4;
  const Cohort c = GenerateSyntheticCohort(sc);
  std::vector<CohortSplit> seen;
  auto pipeline = [&](const CohortSplit& split, int i) -> SplitMetrics {
    seen.push_back(split);
    if (i == 1) throw NumericError("diverged");
    HorizonMetrics m;
    m.auc = {Summarize({0.6})};
    m.pauc = {Summarize({0.55})};
    m.n_pos = {1};
    m.n_neg = {1};
    m.defined = {1};
    return {{"model", m}};
  };
  const auto r = RepeatedSplitEval(c, 3, 0.8, 0.25, 11, pipeline);
  ASSERT_EQ(r.per_split.size(), 3u);
  EXPECT_FALSE(r.per_split[1].has_value());
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_NE(r.failures[0].find("split 1"), std::string::npos);
  EXPECT_EQ(r.aggregate.at("model").auc[0].values.size(), 2u);
  // Different seeds per split, and splits are disjoint partitions.
  EXPECT_NE(seen[0].test_ids, seen[1].test_ids);
  for (const auto& s : seen) {
    std::set<std::string> all;
    for (const auto* ids : {&s.train_ids, &s.val_ids, &s.test_ids}) {
      for (const auto& id : *ids) EXPECT_TRUE(all.insert(id).second);
    }
    EXPECT_EQ(all.size(), c.patients.size());
  }
}

TEST(HistoryAblationTest, RangeAndCalls) {
  const SampleTable t = SmallTable(200);
  std::vector<int> calls;
  auto scorer = [&](int h) {
    calls.push_back(h);
    return ad::Matrix(ad::Matrix::Constant(t.size(), t.horizons(), 0.5));
  };
  EvalSettings es;
  es.repetitions = 3;
  const std::vector<int> hs{0, 2, 4};
  const auto points = HistoryAblation(scorer, t, hs, es);
  EXPECT_EQ(calls, hs);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[1].n_available, 2);
  const std::vector<int> bad{5};
  EXPECT_THROW(HistoryAblation(scorer, t, bad, es), InvalidArgumentError);
}

// Enumerates every sign assignment of the observed |d| ranks.
double EnumeratedWilcoxon(const std::vector<double>& d_all) {
  std::vector<double> d;
  for (double v : d_all) {
    if (v != 0.0) d.push_back(v);
  }
  const int n = static_cast<int>(d.size());
  if (n == 0) return 1.0;
  std::vector<double> rank(n);
  for (int i = 0; i < n; ++i) {
    double below = 0, equal = 0;
    for (int j = 0; j < n; ++j) {
      below += std::fabs(d[j]) < std::fabs(d[i]);
      equal += std::fabs(d[j]) == std::fabs(d[i]);
    }
    rank[i] = below + (equal + 1) / 2;
  }
  double w = 0;
  for (int i = 0; i < n; ++i) w += d[i] > 0 ? rank[i] : 0;
  double le = 0, ge = 0;
  for (long mask = 0; mask < (1L << n); ++mask) {
    double s = 0;
    for (int i = 0; i < n; ++i) s += (mask >> i) & 1 ? rank[i] : 0;
    le += s <= w + 1e-9;
    ge += s >= w - 1e-9;
  }
  return std::min(1.0, 2 * std::min(le, ge) / std::ldexp(1.0, n));
}

TEST(WilcoxonTest, ExactValues) {
  std::vector<double> a(10), b(10);
  for (int i = 0; i < 10; ++i) {
    a[i] = 0.7 + 0.01 * i;
    b[i] = 0.6 + 0.005 * i;
  }
  EXPECT_DOUBLE_EQ(PairedSignificance(a, b), 2.0 / 1024.0);
  EXPECT_DOUBLE_EQ(PairedSignificance(b, a), 2.0 / 1024.0);
  EXPECT_EQ(PairedSignificance(a, a), 1.0);
}

TEST(WilcoxonTest, MatchesEnumeration) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.Int(5, 14);
    std::vector<double> a(n), b(n), d(n);
    for (int i = 0; i < n; ++i) {
      // Coarse values give ties in |d| and some zero differences.
      a[i] = std::round(rng.Normal() * 3) / 4;
      b[i] = std::round(rng.Normal() * 3) / 4;
      d[i] = a[i] - b[i];
    }
    EXPECT_NEAR(PairedSignificance(a, b), EnumeratedWilcoxon(d), 1e-12)
        << "trial " << trial;
  }
}

TEST(WilcoxonTest, LargeSamplesUseNormalApproximation) {
  Rng rng(6);
  std::vector<double> a(40), b(40);
  for (int i = 0; i < 40; ++i) {
    a[i] = rng.Normal(0.3, 1.0);
    b[i] = rng.Normal(0.0, 1.0);
  }
  const double p = PairedSignificance(a, b);
  EXPECT_GT(p, 0.0);
  EXPECT_LE(p, 1.0);
  EXPECT_DOUBLE_EQ(PairedSignificance(b, a), p);
  std::vector<double> all_pos(40);
  for (int i = 0; i < 40; ++i) all_pos[i] = b[i] + 1.0 + i;
  EXPECT_LT(PairedSignificance(all_pos, b), 1e-6);
}

TEST(WilcoxonTest, RejectsBadInput) {
  const std::vector<double> four(4, 1.0), five(5, 1.0);
  EXPECT_THROW(PairedSignificance(four, four), InvalidArgumentError);
  EXPECT_THROW(PairedSignificance(five, four), InvalidArgumentError);
}

TEST(ClipRocTest, InterpolatesAtBoundary) {
  const std::vector<RocPoint> pts{{0.0, 0.0, 9}, {0.05, 0.5, 3},
                                  {0.2, 0.9, 2}, {1.0, 1.0, 1}};
  const auto c = ClipRoc(pts, 0.1);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_DOUBLE_EQ(c[2].fpr, 0.1);
  EXPECT_NEAR(c[2].tpr, 0.5 + 0.4 / 3, 1e-15);
  EXPECT_EQ(ClipRoc(pts, 1.0).size(), 4u);
}

class EmitCurvesTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("phd_curves_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(EmitCurvesTest, EveryImageHasCsvTwin) {
  Rng rng(7);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    y.push_back(rng.Int(0, 1));
    s.push_back(y.back() + rng.Normal());
  }
  CurveSet cs;
  cs.roc.push_back({"model a", RocCurve(s, y)});
  cs.history.push_back({"full", {0, 1, 2, 3, 4}, {0.5, 0.52, 0.55, 0.56, 0.6}, {}});
  cs.ladder = {{"no KD", 0.5, 0.01}, {"PHD", 0.6, 0.02}};
  EmitCurves(cs, dir_);
  for (const char* stem : {"roc", "roc_lowfpr", "history", "ladder"}) {
    EXPECT_TRUE(fs::exists(dir_ / (std::string(stem) + ".csv"))) << stem;
    EXPECT_TRUE(fs::exists(dir_ / (std::string(stem) + ".svg"))) << stem;
  }
  // ROC CSV rows are monotone and the low-FPR copy stops at 0.1.
  for (const char* name : {"roc.csv", "roc_lowfpr.csv"}) {
    std::ifstream in(dir_ / name);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "model,fpr,tpr,threshold");
    double last_f = -1, last_t = -1;
    int rows = 0;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string model, f, t;
      std::getline(ss, model, ',');
      std::getline(ss, f, ',');
      std::getline(ss, t, ',');
      EXPECT_GE(std::stod(f), last_f);
      EXPECT_GE(std::stod(t), last_t);
      last_f = std::stod(f);
      last_t = std::stod(t);
      ++rows;
    }
    EXPECT_GT(rows, 2);
    EXPECT_LE(last_f, std::string(name) == "roc.csv" ? 1.0 : 0.1 + 1e-12);
  }
}

TEST_F(EmitCurvesTest, EmptyGroupsAreSkipped) {
  CurveSet cs;
  cs.ladder = {{"x", 0.5, 0.0}};
  EmitCurves(cs, dir_);
  EXPECT_TRUE(fs::exists(dir_ / "ladder.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "roc.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "history.svg"));
}

}  // namespace
}  // namespace phd
