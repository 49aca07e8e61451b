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


#include "phd/nn.h"

#include <cmath>
#include <numbers>

#include "phd/error.h"
#include "phd/random.h"

namespace phd::nn {

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight_(name + ".weight", ad::GlorotUniform(in, out, rng)),
      bias_(name + ".bias", Matrix::Zero(1, out)) {}

Var Linear::Forward(const Context& ctx, Var x) {
  ad::Tape& tape = *ctx.tape;
  return ad::AddBias(ad::MatMul(x, tape.Param(weight_)), tape.Param(bias_));
}

void Linear::CollectParameters(ParameterRefs& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

LayerNorm::LayerNorm(const std::string& name, int width)
    : gain_(name + ".gain", Matrix::Ones(1, width)),
      bias_(name + ".bias", Matrix::Zero(1, width)) {}

Var LayerNorm::Forward(const Context& ctx, Var x) {
  ad::Tape& tape = *ctx.tape;
  return ad::LayerNorm(x, tape.Param(gain_), tape.Param(bias_));
}

void LayerNorm::CollectParameters(ParameterRefs& out) {
  out.push_back(&gain_);
  out.push_back(&bias_);
}

Adam::Adam(ParameterRefs params, double beta1, double beta2, double eps,
           double weight_decay)
    : params_(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay) {
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::ZeroGrad() {
  for (Parameter* p : params_) p->ZeroGrad();
}

void Adam::Step(double lr) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.frozen) {
      throw InvalidArgumentError("optimizer asked to update frozen parameter " +
                                 p.name);
    }
    Matrix g = p.grad;
    if (weight_decay_ > 0.0) g += weight_decay_ * p.value;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    p.value.array() -= lr * (m_[i].array() / c1) /
                       ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double CosineLearningRate(double base_lr, int epoch, int total) {
  if (total <= 0) return base_lr;
  return 0.5 * base_lr *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / total));
}

}  // namespace phd::nn
