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


#ifndef PHD_AUTODIFF_H_
#define PHD_AUTODIFF_H_

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace phd {

class Rng;

namespace ad {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

// Trainable tensor owned by a model. Gradients from Tape::Backward are
// accumulated into `grad`; frozen parameters enter the tape as constants.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())) {}

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records a computation as a list of nodes in creation order; Backward walks
// it in reverse. One tape per forward pass.
class Tape {
 public:
  // Receives the gradient of the output node.
  using BackwardFn = std::function<void(const Matrix& out_grad)>;

  Var Constant(Matrix value);
  Var Param(Parameter& param);
  // Adds a derived node. `backward` runs only if some input needs a gradient.
  Var Record(Matrix value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var Record(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void Backward(Var root);

  // Adds `g` into the gradient of `v` (no-op for constants).
  void Accumulate(Var v, const Matrix& g);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* sink = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Forward-pass switches shared by every module.
struct Context {
  Tape* tape = nullptr;
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

Var MatMul(Var a, Var b);
Var AddBias(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double c);
Var Relu(Var a);
Var Sigmoid(Var a);
Var Softplus(Var a);
Var Tanh(Var a);
Var Dropout(const Context& ctx, Var a, double p);
Var Sum(Var a);
Var Mean(Var a);
Var SliceCols(Var a, Eigen::Index start, Eigen::Index count);
Var ConcatCols(std::span<const Var> parts);
// Row-wise layer normalization with learned gain and bias (1 x cols).
Var LayerNorm(Var a, Var gain, Var bias, double eps = 1e-5);
// blocks[s] is B x D; output row b*S + s is blocks[s].row(b).
Var InterleaveRows(std::span<const Var> blocks);
// Inverse of InterleaveRows for one slot.
Var TakeSlot(Var a, int slots, int slot);
// out.row(i) = a.row(i) + table.row(index[i]).
Var AddRows(Var a, Var table, std::span<const int> index);
// out.row(i) = replace[i] ? table.row(index[i]) : a.row(i).
Var ReplaceRows(Var a, Var table, std::span<const int> index,
                std::span<const char> replace);
// Mean over consecutive groups of `group` rows.
Var MeanPoolGroups(Var a, int group);
// Scaled dot-product self-attention over sequences of `seq_len` rows with
// `heads` heads; q, k, v are (B*seq_len) x d_model.
Var MultiHeadAttention(Var q, Var k, Var v, int seq_len, int heads);

// Glorot-uniform initialization.
Matrix GlorotUniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// FNV-1a over the raw bytes of the parameter values, in order.
std::uint64_t Checksum(std::span<const Parameter* const> params);
double GradNorm(std::span<const Parameter* const> params);

}  // namespace ad
}  // namespace phd

#endif  // PHD_AUTODIFF_H_
