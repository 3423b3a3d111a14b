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

#include "rum/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rum {

const char* optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::Adam ? "adam" : "rmsprop";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "rmsprop") return OptimizerKind::RmsProp;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected rmsprop or adam)");
}

OptimizerState OptimizerState::create(const OptimizerConfig& config,
                                      std::span<const Tensor> params) {
  OptimizerState s;
  s.config = config;
  for (const Tensor& p : params) {
    if (config.kind == OptimizerKind::Adam) s.first.emplace_back(p.shape());
    s.second.emplace_back(p.shape());
  }
  return s;
}

namespace {

void check(std::span<Tensor> params, std::span<const Tensor> grads, const OptimizerState& s) {
  if (params.size() != grads.size() || params.size() != s.second.size())
    throw ShapeError("optimizer: parameter, gradient and state counts differ");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (!(params[k].shape() == grads[k].shape()) || !(params[k].shape() == s.second[k].shape()))
      throw ShapeError("optimizer: shape mismatch for parameter " + std::to_string(k));
}

}  // namespace

void rmsprop_update(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& s) {
  check(params, grads, s);
  const auto& c = s.config;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data();
    auto g = grads[k].data();
    auto v = s.second[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = c.decay * v[i] + (1.0 - c.decay) * g[i] * g[i];
      p[i] -= c.lr * g[i] / (std::sqrt(v[i]) + c.eps);
    }
  }
  ++s.step;
}

void adam_update(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& s) {
  check(params, grads, s);
  if (s.first.size() != params.size()) throw ShapeError("adam: missing first-moment state");
  const auto& c = s.config;
  ++s.step;
  const double correct1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double correct2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data();
    auto g = grads[k].data();
    auto m = s.first[k].data();
    auto v = s.second[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      p[i] -= c.lr * (m[i] / correct1) / (std::sqrt(v[i] / correct2) + c.eps);
    }
  }
}

void apply_update(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& s) {
  if (s.config.kind == OptimizerKind::Adam)
    adam_update(params, grads, s);
  else
    rmsprop_update(params, grads, s);
}

double global_norm(std::span<const Tensor> grads) {
  double acc = 0.0;
  for (const Tensor& g : grads)
    for (double x : g.data()) acc += x * x;
  return std::sqrt(acc);
}

double clip_by_global_norm(std::span<Tensor> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_by_global_norm: max_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads) g.flat() *= factor;
  }
  return norm;
}

}  // namespace rum
