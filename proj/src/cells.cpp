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

#include "rum/cells.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rum/rotation.hpp"

namespace rum {

void CellConfig::validate() const {
  if (input_size < 1 || hidden_size < 1)
    throw std::invalid_argument("cell sizes must be at least 1");
  if (lambda != 0 && lambda != 1) throw std::invalid_argument("lambda must be 0 or 1");
  if (eta && !(*eta > 0.0)) throw std::invalid_argument("eta must be positive when enabled");
  if (orthogonality_every < 0) throw std::invalid_argument("orthogonality_every must be >= 0");
}

double orthogonality_error(const Tensor& r) {
  if (r.rank() != 3 || r.shape()[1] != r.shape()[2])
    throw ShapeError("orthogonality_error: expected (batch, n, n), got " + r.shape().str());
  const Index n = r.shape()[1];
  double worst = 0.0;
  for (Index i = 0; i < r.shape()[0]; ++i) {
    const auto m = r.slice(i);
    const Eigen::MatrixXd gram = m.transpose() * m - Eigen::MatrixXd::Identity(n, n);
    worst = std::max(worst, gram.cwiseAbs().maxCoeff());
  }
  return worst;
}

namespace {

// Kernel sets shared by the plain and tape forms of each step.
struct TensorOps {
  using T = Tensor;
  static T matmul(const T& a, const T& b) { return matmul_fast(a, b); }
  static T add(const T& a, const T& b) { return rum::add(a, b); }
  static T mul(const T& a, const T& b) { return rum::mul(a, b); }
  static T add_row(const T& a, const T& b) { return rum::add_row(a, b); }
  static T slice(const T& a, Index begin, Index end) {
    Tensor out(Shape{a.shape().rows(), end - begin}, uninitialized);
    out.matrix() = a.matrix().middleCols(begin, end - begin);
    return out;
  }
  static T sigmoid(const T& a) { return rum::sigmoid(a); }
  static T relu(const T& a) { return rum::relu(a); }
  static T tanh(const T& a) { return rum::tanh(a); }
  static T one_minus(const T& a) { return rum::one_minus(a); }
  static T rotate(const T& a, const T& b, const T& h) { return rotate_batch(a, b, h); }
  static T compose(const T& p, const T& a, const T& b) { return compose_right_batch(p, a, b); }
  static T matvec(const T& r, const T& h) { return rum::batched_matvec(r, h); }
  static T normalize(const T& h, double eta) { return normalize_rows(h, eta); }
};

struct VarOps {
  using T = ad::Var;
  static T matmul(T a, T b) { return ad::matmul(a, b); }
  static T add(T a, T b) { return a + b; }
  static T mul(T a, T b) { return a * b; }
  static T add_row(T a, T b) { return ad::add_row(a, b); }
  static T slice(T a, Index begin, Index end) { return ad::slice_cols(a, begin, end); }
  static T sigmoid(T a) { return ad::sigmoid(a); }
  static T relu(T a) { return ad::relu(a); }
  static T tanh(T a) { return ad::tanh(a); }
  static T one_minus(T a) { return ad::one_minus(a); }
  static T rotate(T a, T b, T h) { return ad::rotate(a, b, h); }
  static T compose(T p, T a, T b) { return ad::compose_right(p, a, b); }
  static T matvec(T r, T h) { return ad::batched_matvec(r, h); }
  static T normalize(T h, double eta) { return ad::normalize_rows(h, eta); }
};

template <typename Ops, typename T>
struct RumStep {
  T h;
  std::optional<T> r;
};

template <typename Ops, typename T>
RumStep<Ops, T> rum_step_impl(const T& w_xh, const T& w_hh, const T& b, const T& w_xh_tilde,
                              const T& b_tilde, const CellConfig& config, const T& h,
                              const std::optional<T>& r, const T& x) {
  const Index n = config.hidden_size;
  const T pre = Ops::add_row(Ops::add(Ops::matmul(x, w_xh), Ops::matmul(h, w_hh)), b);
  const T u = Ops::sigmoid(Ops::slice(pre, 0, n));
  const T target = Ops::slice(pre, n, 2 * n);
  const T embedded = Ops::add_row(Ops::matmul(x, w_xh_tilde), b_tilde);

  RumStep<Ops, T> out;
  T rotated = h;
  if (config.lambda == 0) {
    rotated = Ops::rotate(embedded, target, h);
  } else {
    out.r = Ops::compose(*r, embedded, target);
    rotated = Ops::matvec(*out.r, h);
  }
  const T candidate = Ops::relu(Ops::add(embedded, rotated));
  const T mixed = Ops::add(Ops::mul(u, h), Ops::mul(Ops::one_minus(u), candidate));
  out.h = config.eta ? Ops::normalize(mixed, *config.eta) : mixed;
  return out;
}

template <typename Ops, typename T>
std::pair<T, T> lstm_step_impl(const T& w_x, const T& w_h, const T& b, const T& h, const T& c,
                               const T& x) {
  const Index n = h.shape().cols();
  const T gates = Ops::add_row(Ops::add(Ops::matmul(x, w_x), Ops::matmul(h, w_h)), b);
  const T i = Ops::sigmoid(Ops::slice(gates, 0, n));
  const T f = Ops::sigmoid(Ops::slice(gates, n, 2 * n));
  const T g = Ops::tanh(Ops::slice(gates, 2 * n, 3 * n));
  const T o = Ops::sigmoid(Ops::slice(gates, 3 * n, 4 * n));
  const T c_next = Ops::add(Ops::mul(f, c), Ops::mul(i, g));
  const T h_next = Ops::mul(o, Ops::tanh(c_next));
  return {h_next, c_next};
}

template <typename Ops, typename T>
T gru_step_impl(const T& w_x, const T& w_h, const T& w_hn, const T& b, const T& h, const T& x) {
  const Index n = h.shape().cols();
  const T xs = Ops::add_row(Ops::matmul(x, w_x), b);
  const T hs = Ops::matmul(h, w_h);
  const T z = Ops::sigmoid(Ops::add(Ops::slice(xs, 0, n), Ops::slice(hs, 0, n)));
  const T r = Ops::sigmoid(Ops::add(Ops::slice(xs, n, 2 * n), Ops::slice(hs, n, 2 * n)));
  const T cand =
      Ops::tanh(Ops::add(Ops::slice(xs, 2 * n, 3 * n), Ops::matmul(Ops::mul(r, h), w_hn)));
  return Ops::add(Ops::mul(z, h), Ops::mul(Ops::one_minus(z), cand));
}

void require_shape(const Tensor& t, const Shape& s, const char* name) {
  if (!(t.shape() == s))
    throw ShapeError(std::string(name) + ": expected " + s.str() + ", got " + t.shape().str());
}

Tensor glorot(Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return random_uniform(Shape{fan_in, fan_out}, rng, -limit, limit);
}

// Q factor of a seeded Gaussian, sign-fixed so diag(R) > 0.
Tensor orthogonal(Index n, Rng& rng) {
  const Tensor g = random_normal(Shape{n, n}, rng);
  const Eigen::MatrixXd a = g.matrix();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return Tensor::from_matrix(q);
}

// Concatenates `blocks` orthogonal (n, n) matrices side by side.
Tensor orthogonal_blocks(Index n, int blocks, Rng& rng) {
  Tensor out(Shape{n, blocks * n});
  for (int k = 0; k < blocks; ++k) out.matrix().middleCols(k * n, n) = orthogonal(n, rng).matrix();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

RumParams RumParams::zeros(const CellConfig& c) {
  c.validate();
  const Index nx = c.input_size, nh = c.hidden_size;
  return {Tensor(Shape{nx, 2 * nh}), Tensor(Shape{nh, 2 * nh}), Tensor(Shape{2 * nh}),
          Tensor(Shape{nx, nh}), Tensor(Shape{nh})};
}

RumParams RumParams::initialize(const CellConfig& c, Rng& rng) {
  RumParams p = zeros(c);
  const Index nx = c.input_size, nh = c.hidden_size;
  p.w_xh = glorot(nx, 2 * nh, rng);
  p.w_hh = orthogonal_blocks(nh, 2, rng);
  p.w_xh_tilde = glorot(nx, nh, rng);
  return p;
}

Index RumParams::count() const {
  return w_xh.size() + w_hh.size() + b.size() + w_xh_tilde.size() + b_tilde.size();
}

void RumParams::validate(const CellConfig& c) const {
  const Index nx = c.input_size, nh = c.hidden_size;
  require_shape(w_xh, Shape{nx, 2 * nh}, "W_xh");
  require_shape(w_hh, Shape{nh, 2 * nh}, "W_hh");
  require_shape(b, Shape{2 * nh}, "b");
  require_shape(w_xh_tilde, Shape{nx, nh}, "W_xh_tilde");
  require_shape(b_tilde, Shape{nh}, "b_tilde");
}

Index rum_param_count(Index nx, Index nh) {
  return 2 * nx * nh + 2 * nh * nh + 2 * nh + nx * nh + nh;
}

RumState RumState::initial(const CellConfig& c, Index batch) {
  c.validate();
  RumState s{Tensor(Shape{batch, c.hidden_size}), std::nullopt};
  if (c.lambda == 1) {
    Tensor r(Shape{batch, c.hidden_size, c.hidden_size});
    for (Index i = 0; i < batch; ++i) r.slice(i).setIdentity();
    s.r = std::move(r);
  }
  return s;
}

RumState rum_step(const RumParams& p, const CellConfig& c, const RumState& state,
                  const Tensor& x) {
  c.validate();
  p.validate(c);
  if (x.rank() != 2 || x.shape().cols() != c.input_size)
    throw ShapeError("rum_step: input shape " + x.shape().str());
  if (state.h.rank() != 2 || state.h.shape().cols() != c.hidden_size ||
      state.h.shape().rows() != x.shape().rows())
    throw ShapeError("rum_step: hidden state shape " + state.h.shape().str());
  if (state.r.has_value() != (c.lambda == 1))
    throw std::invalid_argument("rum_step: rotational memory present iff lambda == 1");
  auto out = rum_step_impl<TensorOps, Tensor>(p.w_xh, p.w_hh, p.b, p.w_xh_tilde, p.b_tilde, c,
                                              state.h, state.r, x);
  return {std::move(out.h), std::move(out.r)};
}

RumStateVars rum_step(const RumVars& p, const CellConfig& c, const RumStateVars& state,
                      ad::Var x) {
  c.validate();
  if (state.r.has_value() != (c.lambda == 1))
    throw std::invalid_argument("rum_step: rotational memory present iff lambda == 1");
  auto out = rum_step_impl<VarOps, ad::Var>(p.w_xh, p.w_hh, p.b, p.w_xh_tilde, p.b_tilde, c,
                                            state.h, state.r, x);
  return {out.h, out.r};
}

Tensor time_normalize(const Tensor& h, double eta) { return normalize_rows(h, eta); }

// ---------------------------------------------------------------------------

LstmParams LstmParams::zeros(const CellConfig& c) {
  const Index nx = c.input_size, nh = c.hidden_size;
  return {Tensor(Shape{nx, 4 * nh}), Tensor(Shape{nh, 4 * nh}), Tensor(Shape{4 * nh})};
}

LstmParams LstmParams::initialize(const CellConfig& c, Rng& rng) {
  const Index nx = c.input_size, nh = c.hidden_size;
  LstmParams p = zeros(c);
  p.w_x = glorot(nx, 4 * nh, rng);
  p.w_h = orthogonal_blocks(nh, 4, rng);
  for (Index j = nh; j < 2 * nh; ++j) p.b[j] = 1.0;
  return p;
}

LstmState LstmState::initial(const CellConfig& c, Index batch) {
  return {Tensor(Shape{batch, c.hidden_size}), Tensor(Shape{batch, c.hidden_size})};
}

LstmState lstm_step(const LstmParams& p, const LstmState& s, const Tensor& x) {
  auto [h, c] = lstm_step_impl<TensorOps, Tensor>(p.w_x, p.w_h, p.b, s.h, s.c, x);
  return {std::move(h), std::move(c)};
}

LstmStateVars lstm_step(const LstmVars& p, const LstmStateVars& s, ad::Var x) {
  auto [h, c] = lstm_step_impl<VarOps, ad::Var>(p.w_x, p.w_h, p.b, s.h, s.c, x);
  return {h, c};
}

GruParams GruParams::zeros(const CellConfig& c) {
  const Index nx = c.input_size, nh = c.hidden_size;
  return {Tensor(Shape{nx, 3 * nh}), Tensor(Shape{nh, 2 * nh}), Tensor(Shape{nh, nh}),
          Tensor(Shape{3 * nh})};
}

GruParams GruParams::initialize(const CellConfig& c, Rng& rng) {
  const Index nx = c.input_size, nh = c.hidden_size;
  GruParams p = zeros(c);
  p.w_x = glorot(nx, 3 * nh, rng);
  p.w_h = orthogonal_blocks(nh, 2, rng);
  p.w_hn = orthogonal(nh, rng);
  return p;
}

GruState GruState::initial(const CellConfig& c, Index batch) {
  return {Tensor(Shape{batch, c.hidden_size})};
}

GruState gru_step(const GruParams& p, const GruState& s, const Tensor& x) {
  return {gru_step_impl<TensorOps, Tensor>(p.w_x, p.w_h, p.w_hn, p.b, s.h, x)};
}

GruStateVars gru_step(const GruVars& p, const GruStateVars& s, ad::Var x) {
  return {gru_step_impl<VarOps, ad::Var>(p.w_x, p.w_h, p.w_hn, p.b, s.h, x)};
}

// ---------------------------------------------------------------------------

const char* cell_name(CellKind kind) {
  switch (kind) {
    case CellKind::Rum: return "rum";
    case CellKind::Lstm: return "lstm";
    case CellKind::Gru: return "gru";
  }
  return "unknown";
}

CellKind parse_cell(const std::string& name) {
  if (name == "rum") return CellKind::Rum;
  if (name == "lstm") return CellKind::Lstm;
  if (name == "gru") return CellKind::Gru;
  throw std::invalid_argument("unknown cell '" + name + "' (expected rum, lstm or gru)");
}

std::vector<std::pair<std::string, Shape>> model_layout(const ModelSpec& spec) {
  spec.config.validate();
  const Index nx = spec.config.input_size, nh = spec.config.hidden_size;
  std::vector<std::pair<std::string, Shape>> layout;
  switch (spec.cell) {
    case CellKind::Rum:
      layout = {{"W_xh", Shape{nx, 2 * nh}},
                {"W_hh", Shape{nh, 2 * nh}},
                {"b", Shape{2 * nh}},
                {"W_xh_tilde", Shape{nx, nh}},
                {"b_tilde", Shape{nh}}};
      break;
    case CellKind::Lstm:
      layout = {{"W_x", Shape{nx, 4 * nh}}, {"W_h", Shape{nh, 4 * nh}}, {"b", Shape{4 * nh}}};
      break;
    case CellKind::Gru:
      layout = {{"W_x", Shape{nx, 3 * nh}},
                {"W_h", Shape{nh, 2 * nh}},
                {"W_hn", Shape{nh, nh}},
                {"b", Shape{3 * nh}}};
      break;
  }
  layout.emplace_back("W_out", Shape{nh, spec.vocab_out});
  layout.emplace_back("b_out", Shape{spec.vocab_out});
  return layout;
}

ParameterList initialize_model(const ModelSpec& spec, Rng& rng) {
  const auto& c = spec.config;
  ParameterList params;
  switch (spec.cell) {
    case CellKind::Rum: {
      auto p = RumParams::initialize(c, rng);
      params = {{"W_xh", std::move(p.w_xh)},
                {"W_hh", std::move(p.w_hh)},
                {"b", std::move(p.b)},
                {"W_xh_tilde", std::move(p.w_xh_tilde)},
                {"b_tilde", std::move(p.b_tilde)}};
      break;
    }
    case CellKind::Lstm: {
      auto p = LstmParams::initialize(c, rng);
      params = {{"W_x", std::move(p.w_x)}, {"W_h", std::move(p.w_h)}, {"b", std::move(p.b)}};
      break;
    }
    case CellKind::Gru: {
      auto p = GruParams::initialize(c, rng);
      params = {{"W_x", std::move(p.w_x)},
                {"W_h", std::move(p.w_h)},
                {"W_hn", std::move(p.w_hn)},
                {"b", std::move(p.b)}};
      break;
    }
  }
  params.push_back({"W_out", glorot(c.hidden_size, spec.vocab_out, rng)});
  params.push_back({"b_out", Tensor(Shape{spec.vocab_out})});
  return params;
}

Index count_model_params(const ModelSpec& spec) {
  Index n = 0;
  for (const auto& [name, shape] : model_layout(spec)) n += shape.size();
  return n;
}

Tensor one_hot(std::span<const int> ids, Index vocab) {
  Tensor out(Shape{static_cast<Index>(ids.size()), vocab});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab)
      throw std::out_of_range("one_hot: id " + std::to_string(ids[i]) + " outside vocabulary");
    out(static_cast<Index>(i), ids[i]) = 1.0;
  }
  return out;
}

Unrolled unroll(ad::Tape& tape, const ModelSpec& spec, std::span<const ad::Var> params,
                const TokenBatch& tokens) {
  const auto layout = model_layout(spec);
  if (params.size() != layout.size())
    throw std::invalid_argument("unroll: expected " + std::to_string(layout.size()) +
                                " parameter tensors");
  for (std::size_t k = 0; k < layout.size(); ++k)
    if (!(params[k].shape() == layout[k].second))
      throw ShapeError("unroll: parameter " + layout[k].first + " has shape " +
                       params[k].shape().str() + ", expected " + layout[k].second.str());
  if (tokens.length < 1) throw std::invalid_argument("unroll: empty sequence");

  const auto& c = spec.config;
  const Index batch = tokens.batch;
  std::vector<int> column(static_cast<std::size_t>(batch));
  auto input_at = [&](Index t) {
    for (Index b = 0; b < batch; ++b) column[static_cast<std::size_t>(b)] = tokens.at(b, t);
    return ad::constant(tape, one_hot(column, c.input_size));
  };

  Unrolled out;
  out.hidden.reserve(static_cast<std::size_t>(tokens.length));
  switch (spec.cell) {
    case CellKind::Rum: {
      const RumVars p{params[0], params[1], params[2], params[3], params[4]};
      RumState init = RumState::initial(c, batch);
      RumStateVars s{ad::constant(tape, std::move(init.h), "h0"), std::nullopt};
      if (init.r) s.r = ad::constant(tape, std::move(*init.r), "R0");
      for (Index t = 0; t < tokens.length; ++t) {
        s = rum_step(p, c, s, input_at(t));
        out.hidden.push_back(s.h);
        if (s.r && c.orthogonality_every > 0 && (t + 1) % c.orthogonality_every == 0) {
          const double err = orthogonality_error(s.r->value());
          if (!(err < kOrthogonalityTolerance))
            throw OrthogonalityError("unroll: R lost orthogonality at step " +
                                     std::to_string(t + 1) + " (error " + std::to_string(err) +
                                     ")");
        }
      }
      break;
    }
    case CellKind::Lstm: {
      const LstmVars p{params[0], params[1], params[2]};
      LstmState init = LstmState::initial(c, batch);
      LstmStateVars s{ad::constant(tape, std::move(init.h), "h0"),
                      ad::constant(tape, std::move(init.c), "c0")};
      for (Index t = 0; t < tokens.length; ++t) {
        s = lstm_step(p, s, input_at(t));
        out.hidden.push_back(s.h);
      }
      break;
    }
    case CellKind::Gru: {
      const GruVars p{params[0], params[1], params[2], params[3]};
      GruStateVars s{ad::constant(tape, GruState::initial(c, batch).h, "h0")};
      for (Index t = 0; t < tokens.length; ++t) {
        s = gru_step(p, s, input_at(t));
        out.hidden.push_back(s.h);
      }
      break;
    }
  }
  const std::size_t n = params.size();
  const ad::Var stacked = ad::concat_rows(out.hidden);
  out.logits = ad::add_row(ad::matmul(stacked, params[n - 2]), params[n - 1]);
  return out;
}

}  // namespace rum
