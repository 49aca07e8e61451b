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
#include <set>
#include <vector>

#include "phd/error.h"
#include "phd/metrics.h"
#include "phd/random.h"

namespace phd {
namespace {

// Pairwise count, ties 1/2.
double BruteAuc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      ++pairs;
    }
  }
  return wins / pairs;
}

// ROC vertices from every candidate threshold counted from scratch, then
// the trapezoid area over [0, f] and the chosen normalization.
double BrutePauc(const std::vector<double>& s, const std::vector<int>& y,
                 double f, bool mcclish) {
  std::set<double> thresholds(s.begin(), s.end());
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  double np = 0, nn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    np += y[i] == 1;
    nn += y[i] == 0;
  }
  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (y[i] == -1 || s[i] < *it) continue;
      (y[i] == 1 ? tp : fp) += 1;
    }
    pts.push_back({fp / nn, tp / np});
  }
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    auto [x0, y0] = pts[i - 1];
    auto [x1, y1] = pts[i];
    if (x0 >= f) break;
    if (x1 > f) {
      y1 = y0 + (y1 - y0) * (f - x0) / (x1 - x0);
      x1 = f;
    }
    area += (x1 - x0) * (y0 + y1) / 2;
  }
  if (!mcclish) return area / f;
  const double lo = f * f / 2;
  return 0.5 * (1 + (area - lo) / (f - lo));
}

struct Instance {
  std::vector<double> s;
  std::vector<int> y;
};

Instance RandomInstance(Rng& rng, bool ties) {
  Instance in;
  const int n = rng.Int(2, 50);
  for (int i = 0; i < n; ++i) {
    // Coarse scores produce ties, including ties across classes.
    in.s.push_back(ties ? std::round(rng.Normal() * 3) : rng.Normal());
    in.y.push_back(rng.Int(-1, 1));
  }
  in.y[0] = 1;
  in.y[1] = 0;
  return in;
}

TEST(MetricsTest, Examples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(Auc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(Auc(std::vector<double>{1, 2}, std::vector<int>{0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(Auc(std::vector<double>{2, 1}, std::vector<int>{0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(Auc(std::vector<double>{1, 1}, std::vector<int>{0, 1}), 0.5);
  // Perfect ranking: pAUC 1 under either normalization.
  EXPECT_DOUBLE_EQ(PartialAuc(std::vector<double>{1, 2, 3},
                              std::vector<int>{0, 1, 1}),
                   1.0);
  EXPECT_DOUBLE_EQ(PartialAuc(std::vector<double>{1, 2, 3},
                              std::vector<int>{0, 1, 1}, 0.1,
                              PaucNormalization::kRaw),
                   1.0);
}

TEST(MetricsTest, ChanceLevelPartialAuc) {
  // All scores tied: the ROC is the diagonal.
  std::vector<double> s(20, 0.5);
  std::vector<int> y(20, 0);
  for (int i = 0; i < 10; ++i) y[i] = 1;
  EXPECT_NEAR(PartialAuc(s, y), 0.5, 1e-15);
  EXPECT_NEAR(PartialAuc(s, y, 0.1, PaucNormalization::kRaw), 0.05, 1e-15);
  EXPECT_NEAR(PartialAreaRaw(s, y, 0.1), 0.005, 1e-15);
}

TEST(MetricsTest, MatchesBruteForce) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance in = RandomInstance(rng, trial % 2 == 0);
    const double f = trial % 3 == 0 ? 0.1 : 0.05 + 0.9 * rng.Uniform();
    EXPECT_NEAR(Auc(in.s, in.y), BruteAuc(in.s, in.y), 1e-12) << trial;
    EXPECT_NEAR(PartialAuc(in.s, in.y, f),
                BrutePauc(in.s, in.y, f, true), 1e-12) << trial;
    EXPECT_NEAR(PartialAuc(in.s, in.y, f, PaucNormalization::kRaw),
                BrutePauc(in.s, in.y, f, false), 1e-12) << trial;
  }
}

TEST(MetricsTest, FullRangePartialAucIsAuc) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance in = RandomInstance(rng, trial % 2 == 0);
    EXPECT_EQ(PartialAuc(in.s, in.y, 1.0), Auc(in.s, in.y));
    EXPECT_NEAR(PartialAuc(in.s, in.y, 1.0, PaucNormalization::kRaw),
                Auc(in.s, in.y), 1e-12);
  }
}

TEST(MetricsTest, StrictlyIncreasingTransformsChangeNothing) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance in = RandomInstance(rng, trial % 2 == 0);
    std::vector<double> a, b;
    for (double v : in.s) {
      a.push_back(std::exp(v / 4));
      b.push_back(v * v * v + 3 * v - 7);
    }
    const double auc = Auc(in.s, in.y), pauc = PartialAuc(in.s, in.y);
    EXPECT_EQ(Auc(a, in.y), auc);
    EXPECT_EQ(Auc(b, in.y), auc);
    EXPECT_EQ(PartialAuc(a, in.y), pauc);
    EXPECT_EQ(PartialAuc(b, in.y), pauc);
  }
}

TEST(MetricsTest, MaskedScoresAreInert) {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    Instance in = RandomInstance(rng, trial % 2 == 0);
    const double auc = Auc(in.s, in.y), pauc = PartialAuc(in.s, in.y);
    for (std::size_t i = 0; i < in.s.size(); ++i) {
      if (in.y[i] == -1) in.s[i] = rng.Normal(0.0, 100.0);
    }
    EXPECT_EQ(Auc(in.s, in.y), auc);
    EXPECT_EQ(PartialAuc(in.s, in.y), pauc);
  }
}

TEST(MetricsTest, RocCurveShape) {
  const std::vector<double> s{0.1, 0.4, 0.4, 0.8, 0.3};
  const std::vector<int> y{0, 0, 1, 1, -1};
  const auto roc = RocCurve(s, y);
  ASSERT_EQ(roc.size(), 4u);  // +inf, 0.8, 0.4, 0.1
  EXPECT_TRUE(std::isinf(roc.front().threshold));
  EXPECT_EQ(roc.front().fpr, 0.0);
  EXPECT_EQ(roc.front().tpr, 0.0);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_EQ(roc.back().tpr, 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    EXPECT_GE(roc[i].fpr, roc[i - 1].fpr);
    EXPECT_GE(roc[i].tpr, roc[i - 1].tpr);
  }
}

TEST(MetricsTest, SingleClassThrows) {
  const std::vector<double> s{0.1, 0.2, 0.3};
  EXPECT_THROW(Auc(s, std::vector<int>{1, 1, -1}), UndefinedMetricError);
  EXPECT_THROW(PartialAuc(s, std::vector<int>{0, 0, 0}), UndefinedMetricError);
  EXPECT_THROW(Auc(s, std::vector<int>{-1, -1, -1}), UndefinedMetricError);
  EXPECT_THROW(PartialAuc(s, std::vector<int>{0, 1, 1}, 0.0),
               InvalidArgumentError);
  EXPECT_THROW(Auc(s, std::vector<int>{0, 1}), InvalidArgumentError);
}

}  // namespace
}  // namespace phd
