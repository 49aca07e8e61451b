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


#include "phd/autodiff.h"

#include <cmath>
#include <cstring>

#include "phd/error.h"
#include "phd/random.h"

namespace phd::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::Constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Param(Parameter& param) {
  Node node;
  node.value = param.value;
  node.requires_grad = !param.frozen;
  node.sink = param.frozen ? nullptr : &param;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Record(Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return Record(std::move(value),
                std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::Record(Matrix value, std::span<const Var> inputs,
                 BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    node.requires_grad |= nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::Accumulate(Var v, const Matrix& g) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::Backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw InvalidArgumentError("Backward needs a scalar root");
  }
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (int i = root.id(); i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(node.grad);
    if (node.sink != nullptr) node.sink->grad += node.grad;
  }
}

namespace {

void RequireSameShape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgumentError(std::string(op) + ": shape mismatch " +
                               std::to_string(a.rows()) + "x" +
                               std::to_string(a.cols()) + " vs " +
                               std::to_string(b.rows()) + "x" +
                               std::to_string(b.cols()));
  }
}

// Id the next recorded node will get; lets a backward closure read its own
// output value without copying it.
Var NextVar(Tape* t) { return Var(t, static_cast<int>(t->size())); }

}  // namespace

Var MatMul(Var a, Var b) {
  Tape* t = a.tape();
  if (a.cols() != b.rows()) throw InvalidArgumentError("MatMul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return t->Record(std::move(out), {a, b}, [t, a, b](const Matrix& g) {
    if (a.requires_grad()) t->Accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t->Accumulate(b, a.value().transpose() * g);
  });
}

Var AddBias(Var a, Var bias) {
  Tape* t = a.tape();
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw InvalidArgumentError("AddBias: bias must be 1 x cols");
  }
  Matrix out = a.value().rowwise() + RowVector(bias.value().row(0));
  return t->Record(std::move(out), {a, bias}, [t, a, bias](const Matrix& g) {
    t->Accumulate(a, g);
    if (bias.requires_grad()) t->Accumulate(bias, g.colwise().sum());
  });
}

Var Add(Var a, Var b) {
  Tape* t = a.tape();
  RequireSameShape(a, b, "Add");
  return t->Record(a.value() + b.value(), {a, b}, [t, a, b](const Matrix& g) {
    t->Accumulate(a, g);
    t->Accumulate(b, g);
  });
}

Var Sub(Var a, Var b) {
  Tape* t = a.tape();
  RequireSameShape(a, b, "Sub");
  return t->Record(a.value() - b.value(), {a, b}, [t, a, b](const Matrix& g) {
    t->Accumulate(a, g);
    if (b.requires_grad()) t->Accumulate(b, -g);
  });
}

Var Mul(Var a, Var b) {
  Tape* t = a.tape();
  RequireSameShape(a, b, "Mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return t->Record(std::move(out), {a, b}, [t, a, b](const Matrix& g) {
    if (a.requires_grad()) t->Accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t->Accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var Scale(Var a, double c) {
  Tape* t = a.tape();
  return t->Record(a.value() * c, {a},
                   [t, a, c](const Matrix& g) { t->Accumulate(a, g * c); });
}

Var Relu(Var a) {
  Tape* t = a.tape();
  Matrix out = a.value().cwiseMax(0.0);
  return t->Record(std::move(out), {a}, [t, a](const Matrix& g) {
    t->Accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var Sigmoid(Var a) {
  Tape* t = a.tape();
  const Var out = NextVar(t);
  Matrix value = a.value().unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  });
  return t->Record(std::move(value), {a}, [t, a, out](const Matrix& g) {
    const auto& s = out.value().array();
    t->Accumulate(a, (g.array() * s * (1.0 - s)).matrix());
  });
}

Var Softplus(Var a) {
  Tape* t = a.tape();
  Matrix value = a.value().unaryExpr([](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return t->Record(std::move(value), {a}, [t, a](const Matrix& g) {
    Matrix d = a.value().unaryExpr([](double x) {
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
    });
    t->Accumulate(a, g.cwiseProduct(d));
  });
}

Var Tanh(Var a) {
  Tape* t = a.tape();
  const Var out = NextVar(t);
  Matrix value = a.value().array().tanh().matrix();
  return t->Record(std::move(value), {a}, [t, a, out](const Matrix& g) {
    const auto& y = out.value().array();
    t->Accumulate(a, (g.array() * (1.0 - y * y)).matrix());
  });
}

Var Dropout(const Context& ctx, Var a, double p) {
  if (!ctx.training || p <= 0.0) return a;
  if (ctx.rng == nullptr) {
    throw InvalidArgumentError("dropout in training mode needs an Rng");
  }
  Tape* t = a.tape();
  const double keep = 1.0 - p;
  auto mask = std::make_shared<Matrix>(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask->size(); ++i) {
    mask->data()[i] = ctx.rng->Uniform() < keep ? 1.0 / keep : 0.0;
  }
  Matrix value = a.value().cwiseProduct(*mask);
  return t->Record(std::move(value), {a}, [t, a, mask](const Matrix& g) {
    t->Accumulate(a, g.cwiseProduct(*mask));
  });
}

Var Sum(Var a) {
  Tape* t = a.tape();
  Matrix value(1, 1);
  value(0, 0) = a.value().sum();
  return t->Record(std::move(value), {a}, [t, a](const Matrix& g) {
    t->Accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var Mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return Scale(Sum(a), 1.0 / n);
}

Var SliceCols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape* t = a.tape();
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw InvalidArgumentError("SliceCols: range out of bounds");
  }
  Matrix value = a.value().middleCols(start, count);
  return t->Record(std::move(value), {a},
                   [t, a, start, count](const Matrix& g) {
                     Matrix full = Matrix::Zero(a.rows(), a.cols());
                     full.middleCols(start, count) = g;
                     t->Accumulate(a, full);
                   });
}

Var ConcatCols(std::span<const Var> parts) {
  Tape* t = parts.front().tape();
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) cols += p.cols();
  Matrix value(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    value.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t->Record(std::move(value), parts, [t, inputs](const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : inputs) {
      if (p.requires_grad()) t->Accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var LayerNorm(Var a, Var gain, Var bias, double eps) {
  Tape* t = a.tape();
  const Eigen::Index n = a.rows();
  const Eigen::Index d = a.cols();
  auto normed = std::make_shared<Matrix>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = a.value().row(i);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    (*inv_std)(i) = 1.0 / std::sqrt(var + eps);
    normed->row(i) = (row.array() - mean) * (*inv_std)(i);
  }
  Matrix value = (normed->array().rowwise() * gain.value().row(0).array())
                     .rowwise() +
                 bias.value().row(0).array();
  return t->Record(
      std::move(value), {a, gain, bias},
      [t, a, gain, bias, normed, inv_std, d](const Matrix& g) {
        if (gain.requires_grad()) {
          t->Accumulate(gain, g.cwiseProduct(*normed).colwise().sum());
        }
        if (bias.requires_grad()) t->Accumulate(bias, g.colwise().sum());
        if (!a.requires_grad()) return;
        Matrix gx = g.array().rowwise() * gain.value().row(0).array();
        Matrix da(gx.rows(), d);
        for (Eigen::Index i = 0; i < gx.rows(); ++i) {
          const double mean_g = gx.row(i).mean();
          const double mean_gx = gx.row(i).dot(normed->row(i)) / d;
          da.row(i) = (*inv_std)(i) *
                      (gx.row(i).array() - mean_g -
                       normed->row(i).array() * mean_gx);
        }
        t->Accumulate(a, da);
      });
}

Var InterleaveRows(std::span<const Var> blocks) {
  Tape* t = blocks.front().tape();
  const auto slots = static_cast<Eigen::Index>(blocks.size());
  const Eigen::Index batch = blocks.front().rows();
  const Eigen::Index d = blocks.front().cols();
  Matrix value(batch * slots, d);
  for (Eigen::Index s = 0; s < slots; ++s) {
    const Matrix& src = blocks[s].value();
    for (Eigen::Index b = 0; b < batch; ++b) {
      value.row(b * slots + s) = src.row(b);
    }
  }
  std::vector<Var> inputs(blocks.begin(), blocks.end());
  return t->Record(std::move(value), blocks,
                   [t, inputs, batch, slots, d](const Matrix& g) {
                     for (Eigen::Index s = 0; s < slots; ++s) {
                       if (!inputs[s].requires_grad()) continue;
                       Matrix gs(batch, d);
                       for (Eigen::Index b = 0; b < batch; ++b) {
                         gs.row(b) = g.row(b * slots + s);
                       }
                       t->Accumulate(inputs[s], gs);
                     }
                   });
}

Var TakeSlot(Var a, int slots, int slot) {
  Tape* t = a.tape();
  const Eigen::Index batch = a.rows() / slots;
  Matrix value(batch, a.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    value.row(b) = a.value().row(b * slots + slot);
  }
  return t->Record(std::move(value), {a},
                   [t, a, slots, slot, batch](const Matrix& g) {
                     Matrix full = Matrix::Zero(a.rows(), a.cols());
                     for (Eigen::Index b = 0; b < batch; ++b) {
                       full.row(b * slots + slot) = g.row(b);
                     }
                     t->Accumulate(a, full);
                   });
}

Var AddRows(Var a, Var table, std::span<const int> index) {
  Tape* t = a.tape();
  Matrix value = a.value();
  for (Eigen::Index i = 0; i < value.rows(); ++i) {
    value.row(i) += table.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return t->Record(std::move(value), {a, table},
                   [t, a, table, idx](const Matrix& g) {
                     t->Accumulate(a, g);
                     if (!table.requires_grad()) return;
                     Matrix gt = Matrix::Zero(table.rows(), table.cols());
                     for (std::size_t i = 0; i < idx.size(); ++i) {
                       gt.row(idx[i]) += g.row(i);
                     }
                     t->Accumulate(table, gt);
                   });
}

Var ReplaceRows(Var a, Var table, std::span<const int> index,
                std::span<const char> replace) {
  Tape* t = a.tape();
  Matrix value = a.value();
  for (Eigen::Index i = 0; i < value.rows(); ++i) {
    if (replace[i]) value.row(i) = table.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  std::vector<char> rep(replace.begin(), replace.end());
  return t->Record(std::move(value), {a, table},
                   [t, a, table, idx, rep](const Matrix& g) {
                     if (a.requires_grad()) {
                       Matrix ga = g;
                       for (std::size_t i = 0; i < rep.size(); ++i) {
                         if (rep[i]) ga.row(i).setZero();
                       }
                       t->Accumulate(a, ga);
                     }
                     if (table.requires_grad()) {
                       Matrix gt = Matrix::Zero(table.rows(), table.cols());
                       for (std::size_t i = 0; i < rep.size(); ++i) {
                         if (rep[i]) gt.row(idx[i]) += g.row(i);
                       }
                       t->Accumulate(table, gt);
                     }
                   });
}

Var MeanPoolGroups(Var a, int group) {
  Tape* t = a.tape();
  const Eigen::Index n = a.rows() / group;
  Matrix value(n, a.cols());
  for (Eigen::Index b = 0; b < n; ++b) {
    value.row(b) = a.value().middleRows(b * group, group).colwise().mean();
  }
  return t->Record(std::move(value), {a}, [t, a, group, n](const Matrix& g) {
    Matrix full(a.rows(), a.cols());
    for (Eigen::Index b = 0; b < n; ++b) {
      for (int s = 0; s < group; ++s) full.row(b * group + s) = g.row(b) / group;
    }
    t->Accumulate(a, full);
  });
}

Var MultiHeadAttention(Var q, Var k, Var v, int seq_len, int heads) {
  Tape* t = q.tape();
  const Eigen::Index d = q.cols();
  if (d % heads != 0) {
    throw InvalidArgumentError("model width must be divisible by heads");
  }
  const Eigen::Index dh = d / heads;
  const Eigen::Index batch = q.rows() / seq_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index S = seq_len;
  // Attention weights per (batch, head), S x S each, stacked.
  auto weights = std::make_shared<Matrix>(batch * heads * S, S);
  Matrix out(q.rows(), d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto qb = q.value().block(b * S, h * dh, S, dh);
      const auto kb = k.value().block(b * S, h * dh, S, dh);
      const auto vb = v.value().block(b * S, h * dh, S, dh);
      Matrix scores = (qb * kb.transpose()) * scale;
      for (Eigen::Index i = 0; i < S; ++i) {
        const double mx = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - mx).exp().matrix();
        scores.row(i) /= scores.row(i).sum();
      }
      weights->middleRows((b * heads + h) * S, S) = scores;
      out.block(b * S, h * dh, S, dh) = scores * vb;
    }
  }
  return t->Record(
      std::move(out), {q, k, v},
      [t, q, k, v, weights, batch, heads, S, dh, scale](const Matrix& g) {
        Matrix gq = Matrix::Zero(q.rows(), q.cols());
        Matrix gk = Matrix::Zero(k.rows(), k.cols());
        Matrix gv = Matrix::Zero(v.rows(), v.cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
          for (Eigen::Index h = 0; h < heads; ++h) {
            const auto a = weights->middleRows((b * heads + h) * S, S);
            const auto qb = q.value().block(b * S, h * dh, S, dh);
            const auto kb = k.value().block(b * S, h * dh, S, dh);
            const auto vb = v.value().block(b * S, h * dh, S, dh);
            const auto gb = g.block(b * S, h * dh, S, dh);
            gv.block(b * S, h * dh, S, dh) = a.transpose() * gb;
            Matrix ga = gb * vb.transpose();
            Matrix gs(S, S);
            for (Eigen::Index i = 0; i < S; ++i) {
              const double dot = ga.row(i).dot(a.row(i));
              gs.row(i) = a.row(i).array() * (ga.row(i).array() - dot);
            }
            gs *= scale;
            gq.block(b * S, h * dh, S, dh) = gs * kb;
            gk.block(b * S, h * dh, S, dh) = gs.transpose() * qb;
          }
        }
        t->Accumulate(q, gq);
        t->Accumulate(k, gk);
        t->Accumulate(v, gv);
      });
}

Matrix GlorotUniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = (2.0 * rng.Uniform() - 1.0) * limit;
  }
  return m;
}

std::uint64_t Checksum(std::span<const Parameter* const> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t n = p->value.size() * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

double GradNorm(std::span<const Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace phd::ad
