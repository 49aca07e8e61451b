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


#include "phd/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "phd/error.h"

namespace phd {

namespace {

// Distinct-score groups in descending score order.
struct Group {
  double score;
  std::int64_t pos;
  std::int64_t neg;
};

struct Grouped {
  std::vector<Group> groups;
  std::int64_t pos = 0;
  std::int64_t neg = 0;
};

Grouped GroupScores(std::span<const double> scores,
                    std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw InvalidArgumentError("scores and labels differ in length");
  }
  std::vector<std::pair<double, int>> kept;
  kept.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == -1) continue;
    if (labels[i] != 0 && labels[i] != 1) {
      throw InvalidArgumentError("label must be in {-1, 0, 1}");
    }
    if (std::isnan(scores[i])) throw NumericError("NaN score");
    kept.emplace_back(scores[i], labels[i]);
  }
  std::sort(kept.begin(), kept.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  Grouped out;
  for (const auto& [score, label] : kept) {
    if (out.groups.empty() || out.groups.back().score != score) {
      out.groups.push_back({score, 0, 0});
    }
    if (label == 1) {
      ++out.groups.back().pos;
      ++out.pos;
    } else {
      ++out.groups.back().neg;
      ++out.neg;
    }
  }
  if (out.pos == 0 || out.neg == 0) {
    throw UndefinedMetricError(
        "AUC undefined: need both classes after masking (positives=" +
        std::to_string(out.pos) + ", negatives=" + std::to_string(out.neg) +
        ")");
  }
  return out;
}

}  // namespace

std::vector<RocPoint> RocCurve(std::span<const double> scores,
                               std::span<const int> labels) {
  const Grouped g = GroupScores(scores, labels);
  std::vector<RocPoint> curve;
  curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::int64_t tp = 0, fp = 0;
  for (const Group& group : g.groups) {
    tp += group.pos;
    fp += group.neg;
    curve.push_back({static_cast<double>(fp) / g.neg,
                     static_cast<double>(tp) / g.pos, group.score});
  }
  return curve;
}

double Auc(std::span<const double> scores, std::span<const int> labels) {
  const Grouped g = GroupScores(scores, labels);
  // 2U accumulated in integers, walking groups from the lowest score up.
  std::int64_t twice_u = 0;
  std::int64_t neg_below = 0;
  for (auto it = g.groups.rbegin(); it != g.groups.rend(); ++it) {
    twice_u += it->pos * (2 * neg_below + it->neg);
    neg_below += it->neg;
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(g.pos) * static_cast<double>(g.neg));
}

double PartialAreaRaw(std::span<const double> scores,
                      std::span<const int> labels, double fpr_max) {
  if (!(fpr_max > 0.0 && fpr_max <= 1.0)) {
    throw InvalidArgumentError("fpr_max must be in (0, 1]");
  }
  const Grouped g = GroupScores(scores, labels);
  const double limit = fpr_max * static_cast<double>(g.neg);
  // Whole trapezoids in integer units of 1 / (2 * pos * neg).
  std::int64_t twice_area = 0;
  double fractional = 0.0;
  std::int64_t tp = 0, fp = 0;
  for (const Group& group : g.groups) {
    const std::int64_t tp_next = tp + group.pos;
    const std::int64_t fp_next = fp + group.neg;
    if (static_cast<double>(fp_next) <= limit) {
      twice_area += (fp_next - fp) * (tp_next + tp);
    } else {
      // Segment crosses fpr_max: interpolate TPR at the boundary.
      const double run = limit - static_cast<double>(fp);
      if (run > 0.0) {
        const double frac = run / static_cast<double>(fp_next - fp);
        const double tp_at = tp + frac * static_cast<double>(tp_next - tp);
        fractional = run * (static_cast<double>(tp) + tp_at);
      }
      break;
    }
    tp = tp_next;
    fp = fp_next;
  }
  const double denom =
      2.0 * static_cast<double>(g.pos) * static_cast<double>(g.neg);
  return static_cast<double>(twice_area) / denom + fractional / denom;
}

double PartialAuc(std::span<const double> scores, std::span<const int> labels,
                  double fpr_max, PaucNormalization normalization) {
  const double area = PartialAreaRaw(scores, labels, fpr_max);
  if (fpr_max == 1.0) return area;
  switch (normalization) {
    case PaucNormalization::kRaw:
      return area / fpr_max;
    case PaucNormalization::kMcClish: {
      const double chance = 0.5 * fpr_max * fpr_max;
      return 0.5 * (1.0 + (area - chance) / (fpr_max - chance));
    }
  }
  return area;
}

}  // namespace phd
