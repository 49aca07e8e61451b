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


#ifndef PHD_METRICS_H_
#define PHD_METRICS_H_

#include <span>
#include <vector>

namespace phd {

// Labels follow the LabelVector convention: 1 positive, 0 negative, -1
// masked. Masked entries are dropped before any computation, so their
// scores never influence a metric.

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predicted positive when score >= threshold
};

// Empirical ROC from (0,0) to (1,1): one point per distinct score, tied
// scores grouped. The first point has threshold +inf.
std::vector<RocPoint> RocCurve(std::span<const double> scores,
                               std::span<const int> labels);

// Mann-Whitney U / (n_pos * n_neg), ties counted 1/2.
// Throws UndefinedMetricError with a single class after masking.
double Auc(std::span<const double> scores, std::span<const int> labels);

enum class PaucNormalization {
  // 0.5 * (1 + (A - A_chance) / (A_perfect - A_chance)): chance 0.5,
  // perfect 1.0, comparable to full AUC.
  kMcClish,
  // A / fpr_max: perfect 1.0, chance fpr_max / 2.
  kRaw,
};

// Area under the empirical ROC for FPR in [0, fpr_max] (trapezoidal, with
// linear interpolation at fpr_max), then normalized. fpr_max == 1 returns
// exactly Auc().
double PartialAuc(std::span<const double> scores, std::span<const int> labels,
                  double fpr_max = 0.1,
                  PaucNormalization normalization = PaucNormalization::kMcClish);

// Unnormalized restricted area; exposed for the normalization tests.
double PartialAreaRaw(std::span<const double> scores,
                      std::span<const int> labels, double fpr_max);

}  // namespace phd

#endif  // PHD_METRICS_H_
