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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rum/tensor.hpp"

namespace rum {

enum class OptimizerKind { RmsProp, Adam };

const char* optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::RmsProp;
  double lr = 1e-3;
  double decay = 0.9;  // RMSProp
  double beta1 = 0.9;  // Adam
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Accumulators mirror the parameter shapes. RMSProp only uses `second`.
struct OptimizerState {
  OptimizerConfig config;
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::int64_t step = 0;

  static OptimizerState create(const OptimizerConfig& config, std::span<const Tensor> params);
};

/// v <- decay v + (1 - decay) g^2;  p <- p - lr g / (sqrt(v) + eps)
void rmsprop_update(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state);

/// Bias-corrected Adam.
void adam_update(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state);

/// Dispatches on state.config.kind.
void apply_update(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state);

double global_norm(std::span<const Tensor> grads);

/// Rescales all gradients by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_by_global_norm(std::span<Tensor> grads, double max_norm);

}  // namespace rum
