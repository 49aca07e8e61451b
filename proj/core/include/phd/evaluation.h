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


#ifndef PHD_EVALUATION_H_
#define PHD_EVALUATION_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phd/autodiff.h"
#include "phd/data_model.h"
#include "phd/dataset.h"
#include "phd/metrics.h"

namespace phd {

struct Summary {
  double mean = 0.0;
  double std = 0.0;             // sample standard deviation (n - 1)
  std::vector<double> values;   // the raw draws
};

Summary Summarize(std::vector<double> values);

// Per-horizon AUC and pAUC with their dispersion over repetitions or splits.
// Horizons where every draw was single-class hold an empty Summary and
// `defined` = false.
struct HorizonMetrics {
  std::vector<Summary> auc;
  std::vector<Summary> pauc;
  std::vector<double> n_pos;  // mean count per draw
  std::vector<double> n_neg;
  std::vector<char> defined;

  int horizons() const { return static_cast<int>(auc.size()); }
};

struct EvalSettings {
  int repetitions = 100;
  std::uint64_t seed = 0;
  double fpr_max = 0.1;
  PaucNormalization normalization = PaucNormalization::kMcClish;
};

// One uniformly drawn sample row per test patient, for each repetition.
// Throws InvalidArgumentError on an empty table.
std::vector<std::vector<int>> SingleExamDraws(const SampleTable& test,
                                              int repetitions,
                                              std::uint64_t seed);

// Scores every draw with the N x K matrix `cum_risk` (row-aligned with
// `test`) and reports mean and std across repetitions. A draw that is
// single-class at horizon k is left out of that horizon's summary.
HorizonMetrics SampleSingleExam(const ad::Matrix& cum_risk,
                                const SampleTable& test,
                                const EvalSettings& settings);

// ---- Repeated splits ------------------------------------------------------

// Model name -> metrics for one split.
using SplitMetrics = std::map<std::string, HorizonMetrics>;
using SplitPipeline =
    std::function<SplitMetrics(const CohortSplit& split, int split_index)>;

struct RepeatedSplitResult {
  std::vector<std::optional<SplitMetrics>> per_split;
  std::vector<std::string> failures;  // "split i: message"
  // Mean +- std across completed splits of each split's repetition mean.
  std::map<std::string, HorizonMetrics> aggregate;
};

// Split seeds derive from `master_seed`. A split whose pipeline throws is
// recorded in `failures` and left out of the aggregate.
RepeatedSplitResult RepeatedSplitEval(const Cohort& cohort, int n_splits,
                                      double train_frac, double val_frac,
                                      std::uint64_t master_seed,
                                      const SplitPipeline& pipeline);

// Collapses per-split metrics into mean +- std across splits.
std::map<std::string, HorizonMetrics> AggregateSplits(
    std::span<const std::optional<SplitMetrics>> per_split);

// ---- History ablation -----------------------------------------------------

// Scores of a model for the whole test table given #H visible priors.
using HistoryScorer = std::function<ad::Matrix(int n_available)>;

struct HistoryPoint {
  int n_available = 0;
  HorizonMetrics metrics;
};

std::vector<HistoryPoint> HistoryAblation(const HistoryScorer& scorer,
                                          const SampleTable& test,
                                          std::span<const int> h_values,
                                          const EvalSettings& settings);

// ---- Significance ---------------------------------------------------------

// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
// are dropped; the p-value is exact for up to 25 non-zero pairs and uses
// the tie-corrected normal approximation beyond. All-zero differences give
// 1.0. Throws InvalidArgumentError for unequal lengths or n < 5.
double PairedSignificance(std::span<const double> a, std::span<const double> b);

// ---- Artifacts ------------------------------------------------------------

struct RocSeries {
  std::string name;
  std::vector<RocPoint> points;
};

struct LineSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional, same length as y
};

struct BarItem {
  std::string name;
  double value = 0.0;
  double err = 0.0;
};

struct CurveSet {
  std::string roc_title = "ROC";
  std::vector<RocSeries> roc;              // e.g. 5-year curves per model
  std::string history_title = "Metric vs #H";
  std::vector<LineSeries> history;         // metric against #H per model
  std::string ladder_title = "Ablation";
  std::vector<BarItem> ladder;
};

// Writes roc.csv/.svg, roc_lowfpr.csv/.svg (FPR in [0, 0.1]),
// history.csv/.svg and ladder.csv/.svg under `out_dir`, skipping empty
// groups. Every image has a CSV twin. Throws IoError if unwritable.
void EmitCurves(const CurveSet& curves, const std::filesystem::path& out_dir);

// ROC points clipped to FPR <= fpr_max, interpolating the last point.
std::vector<RocPoint> ClipRoc(std::span<const RocPoint> points, double fpr_max);

}  // namespace phd

#endif  // PHD_EVALUATION_H_
