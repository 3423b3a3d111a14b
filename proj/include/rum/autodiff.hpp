// Copyright 2026 The RUM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Tape-based reverse-mode differentiation over the tensor primitives.
//
// A Tape is an append-only list of nodes in topological order. Each node keeps
// its forward value, so backward() only needs the tape and a seed gradient.
// Build a fresh tape for every training step.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rum/tensor.hpp"

namespace rum::ad {

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Neg,
  OneMinus,
  Sigmoid,
  Relu,
  Tanh,
  AddRow,
  SliceCols,
  ConcatRows,
  Sum,
  Dot,
  L2Norm,
  Rotate,         // rows of (a, b, h) -> R(a_i, b_i) h_i
  ComposeRight,   // (P, a, b) -> P_i R(a_i, b_i), P of shape (batch, n, n)
  BatchedMatVec,  // (R, h) -> R_i h_i
  NormalizeRows,  // h -> eta h / |h| per row
  SoftmaxCrossEntropy,
};

const char* op_name(Op op);

using NodeId = std::size_t;

struct Node {
  Op op = Op::Leaf;
  std::vector<NodeId> inputs;
  Tensor value;
  bool requires_grad = false;
  double scalar = 0.0;  // Scale factor, NormalizeRows eta, cross-entropy normalizer
  Index begin = 0;      // SliceCols range
  Index end = 0;
  std::shared_ptr<const ClassTargets> targets;
  std::string name;
};

/// Forward value of a non-leaf node given its inputs' values.
Tensor evaluate(const Node& node, std::span<const Tensor* const> inputs);

class Tape {
 public:
  NodeId leaf(Tensor value, bool requires_grad, std::string name = {});

  /// Appends `node` after computing its value from already-recorded inputs.
  NodeId record(Node node);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  std::size_t size() const { return nodes_.size(); }

  /// Recomputes every node from the leaves; entry i is node i's value.
  std::vector<Tensor> replay() const;

 private:
  std::vector<Node> nodes_;
};

class GradMap {
 public:
  explicit GradMap(std::size_t n = 0) : grads_(n) {}

  bool contains(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }
  const Tensor& at(NodeId id) const;
  std::size_t size() const { return grads_.size(); }

  void accumulate(NodeId id, Tensor g);
  std::optional<Tensor> take(NodeId id);

 private:
  std::vector<std::optional<Tensor>> grads_;
};

struct BackwardOptions {
  // When false, only leaf gradients survive; intermediate ones are released as
  // soon as they have been propagated.
  bool keep_intermediate = false;
};

GradMap backward(const Tape& tape, NodeId output, const Tensor& seed, BackwardOptions opts = {});

/// Seeds a scalar output with 1.
GradMap backward(const Tape& tape, NodeId output, BackwardOptions opts = {});

// ---------------------------------------------------------------------------
// Expression handles

class Var {
 public:
  Var() = default;
  Var(Tape& tape, NodeId id) : tape_(&tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

Var parameter(Tape& tape, Tensor value, std::string name = {});
Var constant(Tape& tape, Tensor value, std::string name = {});

Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var scale(Var a, double s);
Var one_minus(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var tanh(Var a);
Var add_row(Var a, Var row);
Var slice_cols(Var a, Index begin, Index end);
Var concat_rows(std::span<const Var> parts);
Var sum(Var a);
Var dot(Var a, Var b);
Var l2norm(Var a);
Var rotate(Var a, Var b, Var h);
Var compose_right(Var prev, Var a, Var b);
Var batched_matvec(Var r, Var h);
Var normalize_rows(Var h, double eta);
Var softmax_cross_entropy(Var logits, std::shared_ptr<const ClassTargets> targets,
                          double normalizer = 0.0);

// ---------------------------------------------------------------------------
// Finite-difference checking

/// Builds a scalar loss on `tape` from parameter handles.
using ScalarFunction = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error uses max(|analytic|, |numeric|, abs_floor) as denominator.
  double abs_floor = 1e-6;
  // Above this many coordinates, compare directional derivatives along seeded
  // random probe directions instead of every coordinate.
  Index probe_threshold = 1000;
  int probes = 16;
  std::uint64_t seed = 0x5eedULL;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  Index checks = 0;
  bool nan_encountered = false;
  std::string worst;  // "param[index]" or "probe k"
};

GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Tensor>& params,
                           GradCheckOptions opts = {});

}  // namespace rum::ad
