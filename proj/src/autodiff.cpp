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

#include "rum/autodiff.hpp"

#include <cmath>
#include <limits>

#include "rum/rotation.hpp"

namespace rum::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Neg: return "neg";
    case Op::OneMinus: return "one_minus";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::AddRow: return "add_row";
    case Op::SliceCols: return "slice_cols";
    case Op::ConcatRows: return "concat_rows";
    case Op::Sum: return "sum";
    case Op::Dot: return "dot";
    case Op::L2Norm: return "l2norm";
    case Op::Rotate: return "rotate";
    case Op::ComposeRight: return "compose_right";
    case Op::BatchedMatVec: return "batched_matvec";
    case Op::NormalizeRows: return "normalize_rows";
    case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

namespace {

void require_arity(const Node& node, std::size_t n) {
  if (node.inputs.size() != n)
    throw std::invalid_argument(std::string(op_name(node.op)) + ": expected " +
                                std::to_string(n) + " inputs");
}

Tensor slice_cols_value(const Tensor& a, Index begin, Index end) {
  if (a.rank() != 2 || begin < 0 || end > a.shape().cols() || begin >= end)
    throw ShapeError("slice_cols: invalid range for " + a.shape().str());
  Tensor out(Shape{a.shape().rows(), end - begin}, uninitialized);
  out.matrix() = a.matrix().middleCols(begin, end - begin);
  return out;
}

}  // namespace

Tensor evaluate(const Node& node, std::span<const Tensor* const> in) {
  switch (node.op) {
    case Op::Leaf:
      throw std::logic_error("evaluate: leaves carry their own value");
    case Op::MatMul:
      require_arity(node, 2);
      return matmul_fast(*in[0], *in[1]);
    case Op::Add:
      require_arity(node, 2);
      return add(*in[0], *in[1]);
    case Op::Sub:
      require_arity(node, 2);
      return sub(*in[0], *in[1]);
    case Op::Mul:
      require_arity(node, 2);
      return mul(*in[0], *in[1]);
    case Op::Scale:
      require_arity(node, 1);
      return scale(*in[0], node.scalar);
    case Op::Neg:
      require_arity(node, 1);
      return neg(*in[0]);
    case Op::OneMinus:
      require_arity(node, 1);
      return one_minus(*in[0]);
    case Op::Sigmoid:
      require_arity(node, 1);
      return sigmoid(*in[0]);
    case Op::Relu:
      require_arity(node, 1);
      return relu(*in[0]);
    case Op::Tanh:
      require_arity(node, 1);
      return rum::tanh(*in[0]);
    case Op::AddRow:
      require_arity(node, 2);
      return add_row(*in[0], *in[1]);
    case Op::SliceCols:
      require_arity(node, 1);
      return slice_cols_value(*in[0], node.begin, node.end);
    case Op::ConcatRows: {
      if (in.empty()) throw std::invalid_argument("concat_rows: no inputs");
      const Index cols = in[0]->shape().cols();
      Index rows = 0;
      for (const Tensor* t : in) {
        if (t->rank() != 2 || t->shape().cols() != cols)
          throw ShapeError("concat_rows: column mismatch");
        rows += t->shape().rows();
      }
      Tensor out(Shape{rows, cols}, uninitialized);
      Index r = 0;
      for (const Tensor* t : in) {
        out.matrix().middleRows(r, t->shape().rows()) = t->matrix();
        r += t->shape().rows();
      }
      return out;
    }
    case Op::Sum:
      require_arity(node, 1);
      return Tensor::scalar(sum(*in[0]));
    case Op::Dot:
      require_arity(node, 2);
      return Tensor::scalar(dot(*in[0], *in[1]));
    case Op::L2Norm:
      require_arity(node, 1);
      return Tensor::scalar(l2norm(*in[0]));
    case Op::Rotate:
      require_arity(node, 3);
      return rotate_batch(*in[0], *in[1], *in[2]);
    case Op::ComposeRight:
      require_arity(node, 3);
      return compose_right_batch(*in[0], *in[1], *in[2]);
    case Op::BatchedMatVec:
      require_arity(node, 2);
      return rum::batched_matvec(*in[0], *in[1]);
    case Op::NormalizeRows:
      require_arity(node, 1);
      return rum::normalize_rows(*in[0], node.scalar);
    case Op::SoftmaxCrossEntropy:
      require_arity(node, 1);
      return Tensor::scalar(softmax_cross_entropy(*in[0], *node.targets, node.scalar).loss);
  }
  throw std::logic_error("evaluate: unknown op");
}

NodeId Tape::leaf(Tensor value, bool requires_grad, std::string name) {
  value.ensure_finite(name.empty() ? "leaf" : name);
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

NodeId Tape::record(Node node) {
  std::vector<const Tensor*> in;
  in.reserve(node.inputs.size());
  node.requires_grad = false;
  for (NodeId id : node.inputs) {
    if (id >= nodes_.size()) throw std::out_of_range("record: input not on tape");
    in.push_back(&nodes_[id].value);
    node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  node.value = evaluate(node, in);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  std::vector<const Tensor*> in;
  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf) {
      values.push_back(n.value);
      continue;
    }
    in.clear();
    for (NodeId id : n.inputs) in.push_back(&values[id]);
    values.push_back(evaluate(n, in));
  }
  return values;
}

const Tensor& GradMap::at(NodeId id) const {
  if (!contains(id)) throw std::out_of_range("no gradient for node " + std::to_string(id));
  return *grads_[id];
}

void GradMap::accumulate(NodeId id, Tensor g) {
  auto& slot = grads_.at(id);
  if (!slot) {
    slot = std::move(g);
    return;
  }
  if (!(slot->shape() == g.shape())) throw ShapeError("gradient shape mismatch");
  slot->flat() += g.flat();
}

std::optional<Tensor> GradMap::take(NodeId id) {
  std::optional<Tensor> out;
  std::swap(out, grads_.at(id));
  return out;
}

namespace {

// Buffer of the same shape for kernels that overwrite every entry.
Tensor like(const Tensor& t) { return Tensor(t.shape(), uninitialized); }

// Vector-Jacobian products of `node` for upstream gradient `g`; results are
// handed to `emit(input_slot, grad)` only for inputs that need them.
template <typename Emit>
void vjp(const Tape& tape, const Node& node, const Tensor& g, Emit&& emit) {
  auto needs = [&](std::size_t k) { return tape.node(node.inputs[k]).requires_grad; };
  auto in = [&](std::size_t k) -> const Tensor& { return tape.value(node.inputs[k]); };

  switch (node.op) {
    case Op::Leaf:
      return;
    case Op::MatMul: {
      if (needs(0)) {
        Tensor ga = like(in(0));
        ga.matrix().noalias() = g.matrix() * in(1).matrix().transpose();
        emit(0, std::move(ga));
      }
      if (needs(1)) {
        Tensor gb = like(in(1));
        gb.matrix().noalias() = in(0).matrix().transpose() * g.matrix();
        emit(1, std::move(gb));
      }
      return;
    }
    case Op::Add:
      if (needs(0)) emit(0, g);
      if (needs(1)) emit(1, g);
      return;
    case Op::Sub:
      if (needs(0)) emit(0, g);
      if (needs(1)) emit(1, rum::neg(g));
      return;
    case Op::Mul:
      if (needs(0)) emit(0, rum::mul(g, in(1)));
      if (needs(1)) emit(1, rum::mul(g, in(0)));
      return;
    case Op::Scale:
      emit(0, rum::scale(g, node.scalar));
      return;
    case Op::Neg:
      emit(0, rum::neg(g));
      return;
    case Op::OneMinus:
      emit(0, rum::neg(g));
      return;
    case Op::Sigmoid: {
      Tensor ga = like(g);
      ga.flat() = g.flat().array() * node.value.flat().array() * (1.0 - node.value.flat().array());
      emit(0, std::move(ga));
      return;
    }
    case Op::Relu: {
      // Subgradient 0 at the kink.
      Tensor ga = like(g);
      ga.flat() = (in(0).flat().array() > 0.0).select(g.flat(), 0.0);
      emit(0, std::move(ga));
      return;
    }
    case Op::Tanh: {
      Tensor ga = like(g);
      ga.flat() = g.flat().array() * (1.0 - node.value.flat().array().square());
      emit(0, std::move(ga));
      return;
    }
    case Op::AddRow: {
      if (needs(0)) emit(0, g);
      if (needs(1)) {
        Tensor gr = like(in(1));
        gr.flat() = g.matrix().colwise().sum().transpose();
        emit(1, std::move(gr));
      }
      return;
    }
    case Op::SliceCols: {
      Tensor ga(in(0).shape());
      ga.matrix().middleCols(node.begin, node.end - node.begin) = g.matrix();
      emit(0, std::move(ga));
      return;
    }
    case Op::ConcatRows: {
      Index r = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Index rows = in(k).shape().rows();
        if (needs(k)) {
          Tensor gk = like(in(k));
          gk.matrix() = g.matrix().middleRows(r, rows);
          emit(k, std::move(gk));
        }
        r += rows;
      }
      return;
    }
    case Op::Sum: {
      emit(0, Tensor(in(0).shape(), g.item()));
      return;
    }
    case Op::Dot:
      if (needs(0)) emit(0, rum::scale(in(1), g.item()));
      if (needs(1)) emit(1, rum::scale(in(0), g.item()));
      return;
    case Op::L2Norm: {
      const double norm = node.value.item();
      if (norm == 0.0) {
        emit(0, Tensor(in(0).shape()));
      } else {
        emit(0, rum::scale(in(0), g.item() / norm));
      }
      return;
    }
    case Op::Rotate: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Tensor& h = in(2);
      Tensor ga = like(a), gb = like(b), gh = like(h);
      for (Index i = 0; i < h.shape().rows(); ++i) {
        auto r = rotate_backward<double>(a.matrix().row(i), b.matrix().row(i), h.matrix().row(i),
                                         g.matrix().row(i));
        ga.matrix().row(i) = r.a.transpose();
        gb.matrix().row(i) = r.b.transpose();
        gh.matrix().row(i) = r.h.transpose();
      }
      if (needs(0)) emit(0, std::move(ga));
      if (needs(1)) emit(1, std::move(gb));
      if (needs(2)) emit(2, std::move(gh));
      return;
    }
    case Op::ComposeRight: {
      const Tensor& prev = in(0);
      const Tensor& a = in(1);
      const Tensor& b = in(2);
      Tensor gp = like(prev), ga = like(a), gb = like(b);
      for (Index i = 0; i < a.shape().rows(); ++i) {
        auto r = detail::compose_right_backward_into<double>(
            prev.slice(i), a.matrix().row(i), b.matrix().row(i), g.slice(i), gp.slice(i));
        ga.matrix().row(i) = r.a.transpose();
        gb.matrix().row(i) = r.b.transpose();
      }
      if (needs(0)) emit(0, std::move(gp));
      if (needs(1)) emit(1, std::move(ga));
      if (needs(2)) emit(2, std::move(gb));
      return;
    }
    case Op::BatchedMatVec: {
      const Tensor& r = in(0);
      const Tensor& h = in(1);
      if (needs(0)) {
        Tensor gr = like(r);
        for (Index i = 0; i < h.shape().rows(); ++i)
          gr.slice(i).noalias() = g.matrix().row(i).transpose() * h.matrix().row(i);
        emit(0, std::move(gr));
      }
      if (needs(1)) {
        Tensor gh = like(h);
        for (Index i = 0; i < h.shape().rows(); ++i)
          gh.matrix().row(i).noalias() = g.matrix().row(i) * r.slice(i);
        emit(1, std::move(gh));
      }
      return;
    }
    case Op::NormalizeRows: {
      const Tensor& h = in(0);
      Tensor gh = g;
      for (Index i = 0; i < h.shape().rows(); ++i) {
        const double norm = h.matrix().row(i).norm();
        if (norm < 1e-12) continue;
        const auto unit = h.matrix().row(i) / norm;
        const double proj = unit.dot(g.matrix().row(i));
        gh.matrix().row(i) = (node.scalar / norm) * (g.matrix().row(i) - proj * unit);
      }
      emit(0, std::move(gh));
      return;
    }
    case Op::SoftmaxCrossEntropy: {
      const Tensor& logits = in(0);
      const ClassTargets& t = *node.targets;
      Tensor gl = softmax_rows(logits);
      const double denom = node.scalar > 0 ? node.scalar : static_cast<double>(t.active());
      const double s = denom > 0 ? g.item() / denom : 0.0;
      for (Index i = 0; i < logits.shape().rows(); ++i) {
        if (!t.counts(static_cast<std::size_t>(i))) {
          gl.matrix().row(i).setZero();
          continue;
        }
        gl(i, t.ids[static_cast<std::size_t>(i)]) -= 1.0;
        gl.matrix().row(i) *= s;
      }
      emit(0, std::move(gl));
      return;
    }
  }
}

}  // namespace

GradMap backward(const Tape& tape, NodeId output, const Tensor& seed, BackwardOptions opts) {
  if (output >= tape.size()) throw std::out_of_range("backward: output not on tape");
  if (!(seed.shape() == tape.value(output).shape()))
    throw ShapeError("backward: seed shape " + seed.shape().str() + " does not match output " +
                     tape.value(output).shape().str());
  GradMap grads(tape.size());
  if (!tape.node(output).requires_grad) return grads;
  grads.accumulate(output, seed);
  for (NodeId id = output + 1; id-- > 0;) {
    const Node& node = tape.node(id);
    if (node.op == Op::Leaf || !grads.contains(id)) continue;
    std::optional<Tensor> held;
    const Tensor* g = &grads.at(id);
    if (!opts.keep_intermediate) {
      held = grads.take(id);
      g = &*held;
    }
    vjp(tape, node, *g, [&](std::size_t k, Tensor gk) {
      grads.accumulate(node.inputs[k], std::move(gk));
    });
  }
  return grads;
}

GradMap backward(const Tape& tape, NodeId output, BackwardOptions opts) {
  return backward(tape, output, Tensor(tape.value(output).shape(), 1.0), opts);
}

// ---------------------------------------------------------------------------

namespace {

Var unary(Var a, Op op, double scalar = 0.0) {
  Node n;
  n.op = op;
  n.inputs = {a.id()};
  n.scalar = scalar;
  return {a.tape(), a.tape().record(std::move(n))};
}

Var binary(Var a, Var b, Op op) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
  Node n;
  n.op = op;
  n.inputs = {a.id(), b.id()};
  return {a.tape(), a.tape().record(std::move(n))};
}

}  // namespace

Var parameter(Tape& tape, Tensor value, std::string name) {
  return {tape, tape.leaf(std::move(value), true, std::move(name))};
}

Var constant(Tape& tape, Tensor value, std::string name) {
  return {tape, tape.leaf(std::move(value), false, std::move(name))};
}

Var matmul(Var a, Var b) { return binary(a, b, Op::MatMul); }
Var operator+(Var a, Var b) { return binary(a, b, Op::Add); }
Var operator-(Var a, Var b) { return binary(a, b, Op::Sub); }
Var operator*(Var a, Var b) { return binary(a, b, Op::Mul); }
Var operator-(Var a) { return unary(a, Op::Neg); }
Var scale(Var a, double s) { return unary(a, Op::Scale, s); }
Var one_minus(Var a) { return unary(a, Op::OneMinus); }
Var sigmoid(Var a) { return unary(a, Op::Sigmoid); }
Var relu(Var a) { return unary(a, Op::Relu); }
Var tanh(Var a) { return unary(a, Op::Tanh); }
Var add_row(Var a, Var row) { return binary(a, row, Op::AddRow); }
Var sum(Var a) { return unary(a, Op::Sum); }
Var dot(Var a, Var b) { return binary(a, b, Op::Dot); }
Var l2norm(Var a) { return unary(a, Op::L2Norm); }
Var batched_matvec(Var r, Var h) { return binary(r, h, Op::BatchedMatVec); }
Var normalize_rows(Var h, double eta) { return unary(h, Op::NormalizeRows, eta); }

Var slice_cols(Var a, Index begin, Index end) {
  Node n;
  n.op = Op::SliceCols;
  n.inputs = {a.id()};
  n.begin = begin;
  n.end = end;
  return {a.tape(), a.tape().record(std::move(n))};
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Node n;
  n.op = Op::ConcatRows;
  for (const Var& v : parts) n.inputs.push_back(v.id());
  Tape& tape = parts.front().tape();
  return {tape, tape.record(std::move(n))};
}

Var rotate(Var a, Var b, Var h) {
  Node n;
  n.op = Op::Rotate;
  n.inputs = {a.id(), b.id(), h.id()};
  return {a.tape(), a.tape().record(std::move(n))};
}

Var compose_right(Var prev, Var a, Var b) {
  Node n;
  n.op = Op::ComposeRight;
  n.inputs = {prev.id(), a.id(), b.id()};
  return {a.tape(), a.tape().record(std::move(n))};
}

Var softmax_cross_entropy(Var logits, std::shared_ptr<const ClassTargets> targets,
                          double normalizer) {
  Node n;
  n.op = Op::SoftmaxCrossEntropy;
  n.inputs = {logits.id()};
  n.targets = std::move(targets);
  n.scalar = normalizer;
  return {logits.tape(), logits.tape().record(std::move(n))};
}

// ---------------------------------------------------------------------------

namespace {

double evaluate_loss(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(constant(tape, p));
  return f(tape, vars).value().item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFunction& f, const std::vector<Tensor>& params,
                           GradCheckOptions opts) {
  Tape tape;
  std::vector<Var> vars;
  for (std::size_t k = 0; k < params.size(); ++k)
    vars.push_back(parameter(tape, params[k], "p" + std::to_string(k)));
  const Var out = f(tape, vars);
  if (out.value().size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  const GradMap grads = backward(tape, out.id());

  auto analytic = [&](std::size_t k) {
    return grads.contains(vars[k].id()) ? grads.at(vars[k].id()) : Tensor(params[k].shape());
  };

  GradCheckResult result;
  auto compare = [&](double a, double n, const std::string& where) {
    ++result.checks;
    if (!std::isfinite(a) || !std::isfinite(n)) {
      result.nan_encountered = true;
      return;
    }
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), opts.abs_floor});
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = where;
    }
  };

  Index total = 0;
  for (const Tensor& p : params) total += p.size();

  std::vector<Tensor> probe = params;
  try {
    if (total <= opts.probe_threshold) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        const Tensor g = analytic(k);
        for (Index i = 0; i < params[k].size(); ++i) {
          const double x = params[k][i];
          probe[k][i] = x + opts.eps;
          const double up = evaluate_loss(f, probe);
          probe[k][i] = x - opts.eps;
          const double down = evaluate_loss(f, probe);
          probe[k][i] = x;
          compare(g[i], (up - down) / (2.0 * opts.eps),
                  "p" + std::to_string(k) + "[" + std::to_string(i) + "]");
        }
      }
    } else {
      Rng rng(opts.seed);
      std::vector<Tensor> grad(params.size());
      for (std::size_t k = 0; k < params.size(); ++k) grad[k] = analytic(k);
      for (int j = 0; j < opts.probes; ++j) {
        std::vector<Tensor> dir;
        double norm2 = 0.0;
        for (const Tensor& p : params) {
          dir.push_back(random_normal(p.shape(), rng));
          norm2 += dir.back().flat().squaredNorm();
        }
        const double inv = 1.0 / std::sqrt(norm2);
        double directional = 0.0;
        for (std::size_t k = 0; k < params.size(); ++k) {
          dir[k].flat() *= inv;
          directional += grad[k].flat().dot(dir[k].flat());
        }
        for (std::size_t k = 0; k < params.size(); ++k)
          probe[k].flat() = params[k].flat() + opts.eps * dir[k].flat();
        const double up = evaluate_loss(f, probe);
        for (std::size_t k = 0; k < params.size(); ++k)
          probe[k].flat() = params[k].flat() - opts.eps * dir[k].flat();
        const double down = evaluate_loss(f, probe);
        compare(directional, (up - down) / (2.0 * opts.eps), "probe " + std::to_string(j));
      }
    }
  } catch (const NonFiniteError&) {
    result.nan_encountered = true;
  }
  return result;
}

}  // namespace rum::ad
