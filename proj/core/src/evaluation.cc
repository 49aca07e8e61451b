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


#include "phd/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "phd/error.h"
#include "phd/random.h"

namespace phd {

Summary Summarize(std::vector<double> values) {
  Summary s;
  s.values = std::move(values);
  const auto n = static_cast<double>(s.values.size());
  if (s.values.empty()) return s;
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  if (s.values.size() > 1) {
    double ss = 0.0;
    for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

std::vector<std::vector<int>> SingleExamDraws(const SampleTable& test,
                                              int repetitions,
                                              std::uint64_t seed) {
  if (test.size() == 0 || test.patients().empty()) {
    throw InvalidArgumentError("empty test set");
  }
  if (repetitions < 1) throw InvalidArgumentError("repetitions must be >= 1");
  Rng rng(MixSeed(seed, 0x5e1ec7));
  const int n_patients = static_cast<int>(test.patients().size());
  std::vector<std::vector<int>> draws(repetitions);
  for (auto& draw : draws) {
    draw.reserve(n_patients);
    for (int p = 0; p < n_patients; ++p) {
      const auto& rows = test.PatientSamples(p);
      if (rows.empty()) {
        throw InvalidArgumentError("test patient " + test.patients()[p] +
                                   " has no exams");
      }
      draw.push_back(rows[rng.Index(rows.size())]);
    }
  }
  return draws;
}

HorizonMetrics SampleSingleExam(const ad::Matrix& cum_risk,
                                const SampleTable& test,
                                const EvalSettings& settings) {
  if (cum_risk.rows() != test.size() || cum_risk.cols() != test.horizons()) {
    throw InvalidArgumentError("score matrix does not match the test table");
  }
  const auto draws = SingleExamDraws(test, settings.repetitions, settings.seed);
  const int k_count = test.horizons();
  HorizonMetrics out;
  out.n_pos.assign(k_count, 0.0);
  out.n_neg.assign(k_count, 0.0);
  out.defined.assign(k_count, 0);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int k = 0; k < k_count; ++k) {
    std::vector<double> aucs, paucs;
    for (const auto& draw : draws) {
      scores.clear();
      labels.clear();
      for (int row : draw) {
        scores.push_back(cum_risk(row, k));
        labels.push_back(test.labels()(row, k));
      }
      out.n_pos[k] += static_cast<double>(std::count(labels.begin(), labels.end(), kPositive));
      out.n_neg[k] += static_cast<double>(std::count(labels.begin(), labels.end(), kNegative));
      try {
        aucs.push_back(Auc(scores, labels));
        paucs.push_back(PartialAuc(scores, labels, settings.fpr_max,
                                   settings.normalization));
      } catch (const UndefinedMetricError&) {
      }
    }
    out.n_pos[k] /= static_cast<double>(draws.size());
    out.n_neg[k] /= static_cast<double>(draws.size());
    out.defined[k] = aucs.empty() ? 0 : 1;
    out.auc.push_back(Summarize(std::move(aucs)));
    out.pauc.push_back(Summarize(std::move(paucs)));
  }
  return out;
}

std::map<std::string, HorizonMetrics> AggregateSplits(
    std::span<const std::optional<SplitMetrics>> per_split) {
  std::map<std::string, std::vector<const HorizonMetrics*>> by_model;
  for (const auto& split : per_split) {
    if (!split) continue;
    for (const auto& [name, m] : *split) by_model[name].push_back(&m);
  }
  std::map<std::string, HorizonMetrics> out;
  for (const auto& [name, list] : by_model) {
    const int k_count = list.front()->horizons();
    HorizonMetrics agg;
    agg.n_pos.assign(k_count, 0.0);
    agg.n_neg.assign(k_count, 0.0);
    agg.defined.assign(k_count, 0);
    for (int k = 0; k < k_count; ++k) {
      std::vector<double> aucs, paucs;
      for (const HorizonMetrics* m : list) {
        agg.n_pos[k] += m->n_pos[k] / static_cast<double>(list.size());
        agg.n_neg[k] += m->n_neg[k] / static_cast<double>(list.size());
        if (!m->defined[k]) continue;
        aucs.push_back(m->auc[k].mean);
        paucs.push_back(m->pauc[k].mean);
      }
      agg.defined[k] = aucs.empty() ? 0 : 1;
      agg.auc.push_back(Summarize(std::move(aucs)));
      agg.pauc.push_back(Summarize(std::move(paucs)));
    }
    out.emplace(name, std::move(agg));
  }
  return out;
}

RepeatedSplitResult RepeatedSplitEval(const Cohort& cohort, int n_splits,
                                      double train_frac, double val_frac,
                                      std::uint64_t master_seed,
                                      const SplitPipeline& pipeline) {
  if (n_splits < 1) throw InvalidArgumentError("n_splits must be >= 1");
  RepeatedSplitResult result;
  for (int i = 0; i < n_splits; ++i) {
    try {
      const CohortSplit split = PatientLevelSplit(
          cohort, train_frac, val_frac, MixSeed(master_seed, 1000 + i));
      result.per_split.emplace_back(pipeline(split, i));
    } catch (const Error& e) {
      result.per_split.emplace_back(std::nullopt);
      result.failures.push_back("split " + std::to_string(i) + ": " + e.what());
    }
  }
  result.aggregate = AggregateSplits(result.per_split);
  return result;
}

std::vector<HistoryPoint> HistoryAblation(const HistoryScorer& scorer,
                                          const SampleTable& test,
                                          std::span<const int> h_values,
                                          const EvalSettings& settings) {
  std::vector<HistoryPoint> out;
  for (int h : h_values) {
    if (h < 0 || h > test.max_priors()) {
      throw InvalidArgumentError("#H out of range: " + std::to_string(h));
    }
    out.push_back({h, SampleSingleExam(scorer(h), test, settings)});
  }
  return out;
}

double PairedSignificance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidArgumentError("paired samples differ in length");
  }
  if (a.size() < 5) throw InvalidArgumentError("need at least 5 pairs");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  const int n = static_cast<int>(d.size());
  if (n == 0) return 1.0;

  // Mid-ranks of |d|, doubled so they stay integral.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::fabs(d[i]) < std::fabs(d[j]);
  });
  std::vector<int> rank2(n);
  double tie_term = 0.0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]])) ++j;
    const int doubled = (i + 1) + (j + 1);  // 2 * mean rank
    for (int t = i; t <= j; ++t) rank2[order[t]] = doubled;
    const double size = j - i + 1;
    tie_term += size * size * size - size;
    i = j + 1;
  }
  int w2 = 0;  // doubled W+
  for (int i = 0; i < n; ++i) {
    if (d[i] > 0.0) w2 += rank2[i];
  }
  const int total2 = std::accumulate(rank2.begin(), rank2.end(), 0);

  if (n <= 25) {
    std::vector<double> ways(total2 + 1, 0.0);
    ways[0] = 1.0;
    for (int r : rank2) {
      for (int s = total2; s >= r; --s) ways[s] += ways[s - r];
    }
    const double all = std::ldexp(1.0, n);
    double lower = 0.0, upper = 0.0;
    for (int s = 0; s <= total2; ++s) {
      if (s <= w2) lower += ways[s];
      if (s >= w2) upper += ways[s];
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / all);
  }
  const double nn = n;
  const double w = w2 / 2.0;
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) return 1.0;
  const double z = std::max(0.0, std::fabs(w - mean) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

std::vector<RocPoint> ClipRoc(std::span<const RocPoint> points, double fpr_max) {
  std::vector<RocPoint> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].fpr <= fpr_max) {
      out.push_back(points[i]);
      continue;
    }
    if (i > 0 && points[i - 1].fpr < fpr_max) {
      const RocPoint& a = points[i - 1];
      const RocPoint& b = points[i];
      const double t = (fpr_max - a.fpr) / (b.fpr - a.fpr);
      out.push_back({fpr_max, a.tpr + t * (b.tpr - a.tpr), b.threshold});
    }
    break;
  }
  return out;
}

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::ofstream OpenOrThrow(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// Minimal SVG canvas mapping data coordinates onto a fixed plot area.
class Svg {
 public:
  Svg(std::string title, double x0, double x1, double y0, double y1,
      std::string x_label, std::string y_label)
      : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    body_ << std::setprecision(6);
    body_ << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' "
          << "font-size='15'>" << Escape(title) << "</text>\n";
    body_ << "<rect x='" << kL << "' y='" << kT << "' width='" << kPw
          << "' height='" << kPh << "' fill='none' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = x0 + (x1 - x0) * i / 5.0;
      const double fy = y0 + (y1 - y0) * i / 5.0;
      body_ << "<text x='" << X(fx) << "' y='" << kT + kPh + 16
            << "' text-anchor='middle' font-size='11'>" << fx << "</text>\n";
      body_ << "<text x='" << kL - 6 << "' y='" << Y(fy) + 4
            << "' text-anchor='end' font-size='11'>" << fy << "</text>\n";
    }
    body_ << "<text x='" << kL + kPw / 2 << "' y='" << kH - 8
          << "' text-anchor='middle' font-size='12'>" << Escape(x_label)
          << "</text>\n";
    body_ << "<text transform='translate(16," << kT + kPh / 2
          << ") rotate(-90)' text-anchor='middle' font-size='12'>"
          << Escape(y_label) << "</text>\n";
  }

  double X(double x) const { return kL + (x - x0_) / (x1_ - x0_) * kPw; }
  double Y(double y) const { return kT + kPh - (y - y0_) / (y1_ - y0_) * kPh; }

  void Polyline(const std::vector<std::pair<double, double>>& pts,
                const char* color, bool dashed = false) {
    body_ << "<polyline fill='none' stroke='" << color << "' stroke-width='1.6'"
          << (dashed ? " stroke-dasharray='4,3'" : "") << " points='";
    for (const auto& [x, y] : pts) body_ << X(x) << ',' << Y(y) << ' ';
    body_ << "'/>\n";
  }

  void Rect(double x, double y, double w, double h, const char* color) {
    body_ << "<rect x='" << x << "' y='" << y << "' width='" << w
          << "' height='" << h << "' fill='" << color << "'/>\n";
  }

  void Line(double xa, double ya, double xb, double yb) {
    body_ << "<line x1='" << X(xa) << "' y1='" << Y(ya) << "' x2='" << X(xb)
          << "' y2='" << Y(yb) << "' stroke='black'/>\n";
  }

  void Legend(int i, const std::string& text, const char* color) {
    const double y = kT + 14 + 16 * i;
    body_ << "<rect x='" << kL + 10 << "' y='" << y - 9 << "' width='12' "
          << "height='3' fill='" << color << "'/>\n";
    body_ << "<text x='" << kL + 28 << "' y='" << y << "' font-size='11'>"
          << Escape(text) << "</text>\n";
  }

  void Text(double x, double y, const std::string& text) {
    body_ << "<text x='" << x << "' y='" << y << "' text-anchor='middle' "
          << "font-size='11'>" << Escape(text) << "</text>\n";
  }

  void Save(const std::filesystem::path& path) const {
    std::ofstream out = OpenOrThrow(path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW
        << "' height='" << kH << "'>\n<rect width='100%' height='100%' "
        << "fill='white'/>\n"
        << body_.str() << "</svg>\n";
  }

  static constexpr double kW = 560, kH = 420, kL = 64, kT = 34, kPw = 470,
                          kPh = 330;

 private:
  double x0_, x1_, y0_, y1_;
  std::ostringstream body_;
};

void WriteRoc(const std::vector<RocSeries>& series, const std::string& title,
              double fpr_max, const std::filesystem::path& csv,
              const std::filesystem::path& svg) {
  std::ofstream out = OpenOrThrow(csv);
  out << "model,fpr,tpr,threshold\n";
  double y_top = 0.0;
  std::vector<std::vector<RocPoint>> clipped;
  for (const auto& s : series) {
    clipped.push_back(fpr_max < 1.0 ? ClipRoc(s.points, fpr_max) : s.points);
    for (const RocPoint& p : clipped.back()) {
      out << s.name << ',' << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
      y_top = std::max(y_top, p.tpr);
    }
  }
  y_top = fpr_max < 1.0 ? std::min(1.0, std::ceil(y_top * 10.0 + 1e-9) / 10.0) : 1.0;
  Svg plot(title, 0.0, fpr_max, 0.0, std::max(y_top, 0.1),
           "False positive rate", "True positive rate");
  if (fpr_max >= 1.0) plot.Polyline({{0.0, 0.0}, {1.0, 1.0}}, "#999999", true);
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    for (const RocPoint& p : clipped[i]) pts.emplace_back(p.fpr, p.tpr);
    const char* color = kPalette[i % std::size(kPalette)];
    plot.Polyline(pts, color);
    plot.Legend(static_cast<int>(i), series[i].name, color);
  }
  plot.Save(svg);
}

void WriteHistory(const std::vector<LineSeries>& series, const std::string& title,
                  const std::filesystem::path& dir) {
  std::ofstream out = OpenOrThrow(dir / "history.csv");
  out << "model,n_available,mean,std\n";
  double lo = 1.0, hi = 0.0, x_max = 1.0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      out << s.name << ',' << s.x[i] << ',' << s.y[i] << ',' << e << '\n';
      lo = std::min(lo, s.y[i] - e);
      hi = std::max(hi, s.y[i] + e);
      x_max = std::max(x_max, s.x[i]);
    }
  }
  lo = std::floor(lo * 20.0) / 20.0;
  hi = std::max(lo + 0.05, std::ceil(hi * 20.0) / 20.0);
  Svg plot(title, 0.0, x_max, lo, hi, "#H (prior exams available)", "metric");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      pts.emplace_back(s.x[j], s.y[j]);
      if (j < s.err.size()) plot.Line(s.x[j], s.y[j] - s.err[j], s.x[j], s.y[j] + s.err[j]);
    }
    const char* color = kPalette[i % std::size(kPalette)];
    plot.Polyline(pts, color);
    plot.Legend(static_cast<int>(i), s.name, color);
  }
  plot.Save(dir / "history.svg");
}

void WriteLadder(const std::vector<BarItem>& bars, const std::string& title,
                 const std::filesystem::path& dir) {
  std::ofstream out = OpenOrThrow(dir / "ladder.csv");
  out << "model,mean,std\n";
  double lo = 1.0, hi = 0.0;
  for (const auto& b : bars) {
    out << b.name << ',' << b.value << ',' << b.err << '\n';
    lo = std::min(lo, b.value - b.err);
    hi = std::max(hi, b.value + b.err);
  }
  lo = std::max(0.0, std::floor(lo * 20.0) / 20.0 - 0.05);
  hi = std::max(lo + 0.05, std::ceil(hi * 20.0) / 20.0);
  const double n = static_cast<double>(bars.size());
  Svg plot(title, 0.0, n, lo, hi, "", "metric");
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double xc = static_cast<double>(i) + 0.5;
    const double top = plot.Y(bars[i].value);
    plot.Rect(plot.X(xc - 0.3), top, plot.X(xc + 0.3) - plot.X(xc - 0.3),
              plot.Y(lo) - top, kPalette[i % std::size(kPalette)]);
    plot.Line(xc, bars[i].value - bars[i].err, xc, bars[i].value + bars[i].err);
    plot.Text(plot.X(xc), Svg::kT + Svg::kPh + 30, bars[i].name);
  }
  plot.Save(dir / "ladder.svg");
}

}  // namespace

void EmitCurves(const CurveSet& curves, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  if (!curves.roc.empty()) {
    WriteRoc(curves.roc, curves.roc_title, 1.0, out_dir / "roc.csv",
             out_dir / "roc.svg");
    WriteRoc(curves.roc, curves.roc_title + " (FPR <= 0.1)", 0.1,
             out_dir / "roc_lowfpr.csv", out_dir / "roc_lowfpr.svg");
  }
  if (!curves.history.empty()) {
    WriteHistory(curves.history, curves.history_title, out_dir);
  }
  if (!curves.ladder.empty()) {
    WriteLadder(curves.ladder, curves.ladder_title, out_dir);
  }
}

}  // namespace phd
