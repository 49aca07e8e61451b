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


#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "phd/autodiff.h"
#include "phd/dataset.h"
#include "phd/distillation.h"
#include "phd/evaluation.h"
#include "phd/metrics.h"
#include "phd/risk_model.h"

namespace {

struct ScoredSample {
  std::vector<double> scores;
  std::vector<int> labels;
};

ScoredSample RandomScores(int n) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> noise;
  std::bernoulli_distribution positive(0.1);
  ScoredSample s;
  for (int i = 0; i < n; ++i) {
    const int y = positive(rng) ? 1 : 0;
    s.labels.push_back(y);
    s.scores.push_back(noise(rng) + y);
  }
  return s;
}

void BM_Auc(benchmark::State& state) {
  const ScoredSample s = RandomScores(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(phd::Auc(s.scores, s.labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Auc)->Arg(400)->Arg(4000)->Arg(40000);

void BM_PartialAuc(benchmark::State& state) {
  const ScoredSample s = RandomScores(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(phd::PartialAuc(s.scores, s.labels, 0.1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PartialAuc)->Arg(400)->Arg(4000)->Arg(40000);

void BM_PairedSignificance(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = noise(rng);
    b[i] = noise(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(phd::PairedSignificance(a, b));
}
BENCHMARK(BM_PairedSignificance)->Arg(10)->Arg(25)->Arg(100);

void BM_HazardHeadForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  phd::ad::Matrix pre = phd::ad::Matrix::Random(batch, 5);
  for (auto _ : state) {
    phd::ad::Tape tape;
    phd::ad::Var x = tape.Constant(pre);
    phd::ad::Var p = phd::AdditiveHazard(x);
    tape.Backward(phd::ad::Sum(p));
    benchmark::DoNotOptimize(p.value().data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_HazardHeadForwardBackward)->Arg(64)->Arg(1024);

void BM_LogitKdLoss(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise;
  std::vector<double> t(5), s(5);
  for (int k = 0; k < 5; ++k) {
    t[k] = noise(rng);
    s[k] = noise(rng);
  }
  const std::vector<char> mask(5, 1);
  for (auto _ : state) benchmark::DoNotOptimize(phd::LogitKdLoss(t, s, mask, 2.0));
}
BENCHMARK(BM_LogitKdLoss);

class ModelFixture : public benchmark::Fixture {
 public:
  void SetUp(const benchmark::State&) override {
    if (model_) return;
    phd::SynthConfig synth;
    synth.n_patients = 300;
    cohort_ = phd::GenerateSyntheticCohort(synth);
    std::vector<std::string> ids;
    for (const auto& p : cohort_.patients) ids.push_back(p.id);
    table_ = phd::SampleTable(cohort_, ids);
    model_ = phd::MakeRiskModel(phd::ModelConfig{}, table_.dim(),
                                table_.horizons(), table_.max_priors(), 1);
  }

 protected:
  phd::Cohort cohort_;
  phd::SampleTable table_;
  std::unique_ptr<phd::RiskModel> model_;
};

BENCHMARK_DEFINE_F(ModelFixture, PredictFullHistory)(benchmark::State& state) {
  for (auto _ : state) {
    const phd::ad::Matrix risk =
        phd::PredictCumRisk(*model_, table_, table_.max_priors());
    benchmark::DoNotOptimize(risk.data());
  }
  state.SetItemsProcessed(state.iterations() * table_.size());
}
BENCHMARK_REGISTER_F(ModelFixture, PredictFullHistory)->Unit(benchmark::kMillisecond);

BENCHMARK_DEFINE_F(ModelFixture, PredictCurrentOnly)(benchmark::State& state) {
  for (auto _ : state) {
    const phd::ad::Matrix risk = phd::PredictCumRisk(*model_, table_, 0);
    benchmark::DoNotOptimize(risk.data());
  }
  state.SetItemsProcessed(state.iterations() * table_.size());
}
BENCHMARK_REGISTER_F(ModelFixture, PredictCurrentOnly)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
