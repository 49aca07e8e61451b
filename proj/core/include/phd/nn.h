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


#ifndef PHD_NN_H_
#define PHD_NN_H_

#include <string>
#include <vector>

#include "phd/autodiff.h"

namespace phd::nn {

using ad::Context;
using ad::Matrix;
using ad::Parameter;
using ad::Var;

using ParameterRefs = std::vector<Parameter*>;

// x W + b with W stored as in x out.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);

  Var Forward(const Context& ctx, Var x);
  void CollectParameters(ParameterRefs& out);
  int in_features() const { return static_cast<int>(weight_.value.rows()); }
  int out_features() const { return static_cast<int>(weight_.value.cols()); }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int width);

  Var Forward(const Context& ctx, Var x);
  void CollectParameters(ParameterRefs& out);

 private:
  Parameter gain_;
  Parameter bias_;
};

// Adam with bias correction. The learning rate is passed per step so the
// schedule lives with the training loop.
class Adam {
 public:
  explicit Adam(ParameterRefs params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8, double weight_decay = 0.0);

  void ZeroGrad();
  // Throws InvalidArgumentError if any parameter is frozen.
  void Step(double lr);
  long long steps() const { return step_; }

 private:
  ParameterRefs params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double beta1_, beta2_, eps_, weight_decay_;
  long long step_ = 0;
};

// Cosine decay from base_lr to 0 across `total` epochs.
double CosineLearningRate(double base_lr, int epoch, int total);

}  // namespace phd::nn

#endif  // PHD_NN_H_
