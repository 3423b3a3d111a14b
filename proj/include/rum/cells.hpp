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

// Recurrent cells: the rotational unit (RUM) plus LSTM and GRU baselines, and
// the sequence model that wraps a cell with one-hot inputs and a softmax head.
//
// Each step function has a plain tensor form and a tape form; both run the same
// kernels in the same order, so their values agree bit for bit.

#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "rum/autodiff.hpp"
#include "rum/tensor.hpp"

namespace rum {

struct CellConfig {
  Index input_size = 1;
  Index hidden_size = 1;
  int lambda = 0;             // 0: per-step rotation, 1: accumulated rotation
  std::optional<double> eta;  // time-normalization target; nullopt disables it
  // unroll re-verifies that every R slice is orthogonal after each this many
  // steps (lambda == 1 only); 0 disables the check.
  Index orthogonality_every = 100;

  void validate() const;
};

/// Raised when the accumulated rotation drifts away from orthogonality.
class OrthogonalityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kOrthogonalityTolerance = 1e-8;

/// max over slices of ||R^T R - I||_inf for a (batch, n, n) tensor.
double orthogonality_error(const Tensor& r);

// ---------------------------------------------------------------------------
// RUM

/// Kernels act on row vectors: [u' tau] = x W_xh + h W_hh + b, eps = x W_xh_tilde + b_tilde.
struct RumParams {
  Tensor w_xh;        // (N_x, 2 N_h)
  Tensor w_hh;        // (N_h, 2 N_h); columns [0, N_h) feed u', [N_h, 2 N_h) feed tau
  Tensor b;           // (2 N_h)
  Tensor w_xh_tilde;  // (N_x, N_h)
  Tensor b_tilde;     // (N_h)

  static RumParams zeros(const CellConfig& config);
  /// Orthogonal W_hh halves, Glorot-uniform input kernels, zero biases.
  static RumParams initialize(const CellConfig& config, Rng& rng);

  Index count() const;
  void validate(const CellConfig& config) const;
};

/// Closed-form parameter count of a RUM cell.
Index rum_param_count(Index input_size, Index hidden_size);

struct RumState {
  Tensor h;                // (N_b, N_h)
  std::optional<Tensor> r; // (N_b, N_h, N_h), present iff lambda == 1

  /// h = 0 and R = I per batch element.
  static RumState initial(const CellConfig& config, Index batch);
};

RumState rum_step(const RumParams& params, const CellConfig& config, const RumState& state,
                  const Tensor& x);

/// Rows rescaled to norm eta; rows of norm < 1e-12 are returned unchanged.
Tensor time_normalize(const Tensor& h, double eta);

struct RumVars {
  ad::Var w_xh, w_hh, b, w_xh_tilde, b_tilde;
};

struct RumStateVars {
  ad::Var h;
  std::optional<ad::Var> r;
};

RumStateVars rum_step(const RumVars& params, const CellConfig& config, const RumStateVars& state,
                      ad::Var x);

// ---------------------------------------------------------------------------
// LSTM: gate blocks ordered [input, forget, candidate, output].

struct LstmParams {
  Tensor w_x;  // (N_x, 4 N_h)
  Tensor w_h;  // (N_h, 4 N_h)
  Tensor b;    // (4 N_h)

  static LstmParams zeros(const CellConfig& config);
  /// Forget-gate bias starts at +1.
  static LstmParams initialize(const CellConfig& config, Rng& rng);
  Index count() const { return w_x.size() + w_h.size() + b.size(); }
};

struct LstmState {
  Tensor h;
  Tensor c;
  static LstmState initial(const CellConfig& config, Index batch);
};

LstmState lstm_step(const LstmParams& params, const LstmState& state, const Tensor& x);

struct LstmVars {
  ad::Var w_x, w_h, b;
};
struct LstmStateVars {
  ad::Var h, c;
};
LstmStateVars lstm_step(const LstmVars& params, const LstmStateVars& state, ad::Var x);

// ---------------------------------------------------------------------------
// GRU: z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br),
// n = tanh(x Wn + (r * h) Un + bn), h' = z * h + (1 - z) * n.

struct GruParams {
  Tensor w_x;   // (N_x, 3 N_h), blocks [z, r, n]
  Tensor w_h;   // (N_h, 2 N_h), blocks [z, r]
  Tensor w_hn;  // (N_h, N_h)
  Tensor b;     // (3 N_h)

  static GruParams zeros(const CellConfig& config);
  static GruParams initialize(const CellConfig& config, Rng& rng);
  Index count() const { return w_x.size() + w_h.size() + w_hn.size() + b.size(); }
};

struct GruState {
  Tensor h;
  static GruState initial(const CellConfig& config, Index batch);
};

GruState gru_step(const GruParams& params, const GruState& state, const Tensor& x);

struct GruVars {
  ad::Var w_x, w_h, w_hn, b;
};
struct GruStateVars {
  ad::Var h;
};
GruStateVars gru_step(const GruVars& params, const GruStateVars& state, ad::Var x);

// ---------------------------------------------------------------------------
// Sequence model

enum class CellKind { Rum, Lstm, Gru };

const char* cell_name(CellKind kind);
CellKind parse_cell(const std::string& name);

struct ModelSpec {
  CellKind cell = CellKind::Rum;
  CellConfig config;  // input_size equals vocab_in (one-hot inputs)
  Index vocab_out = 1;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

using ParameterList = std::vector<NamedTensor>;

/// Cell parameters followed by the output projection "W_out" (N_h, V) and "b_out" (V).
ParameterList initialize_model(const ModelSpec& spec, Rng& rng);

/// Names and shapes the model expects, in canonical order.
std::vector<std::pair<std::string, Shape>> model_layout(const ModelSpec& spec);

Index count_model_params(const ModelSpec& spec);

/// Token ids for one mini-batch, row-major (batch, length).
struct TokenBatch {
  Index batch = 0;
  Index length = 0;
  std::vector<int> ids;

  int at(Index b, Index t) const { return ids[static_cast<std::size_t>(b * length + t)]; }
};

Tensor one_hot(std::span<const int> ids, Index vocab);

struct Unrolled {
  ad::Var logits;          // (length * batch, vocab_out), time-major rows
  std::vector<ad::Var> hidden;  // h_t per step
};

/// Runs the cell over every step on one tape. `params` must follow model_layout order.
Unrolled unroll(ad::Tape& tape, const ModelSpec& spec, std::span<const ad::Var> params,
                const TokenBatch& tokens);

}  // namespace rum
