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

// Random finite-difference cases for every tape primitive, shared by the unit
// tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "rum/autodiff.hpp"
#include "rum/cells.hpp"
#include "rum/rotation.hpp"

namespace rum::testing {

struct GradCase {
  std::string primitive;
  ad::ScalarFunction f;
  std::vector<Tensor> params;
};

// Angle between two rows, in long double.
inline double row_angle(const Tensor& a, const Tensor& b, Index i) {
  long double ab = 0, aa = 0, bb = 0;
  for (Index j = 0; j < a.shape().cols(); ++j) {
    ab += static_cast<long double>(a(i, j)) * b(i, j);
    aa += static_cast<long double>(a(i, j)) * a(i, j);
    bb += static_cast<long double>(b(i, j)) * b(i, j);
  }
  return static_cast<double>(std::acos(ab / std::sqrt(aa * bb)));
}

/// Pairs (a, b) of shape (rows, n) whose per-row angle stays `margin` away
/// from 0 and pi, where arccos is steep.
inline std::pair<Tensor, Tensor> rotation_pair(Index rows, Index n, Rng& rng,
                                               double margin = 0.1) {
  for (;;) {
    Tensor a = random_normal(Shape{rows, n}, rng);
    Tensor b = random_normal(Shape{rows, n}, rng);
    bool ok = true;
    for (Index i = 0; i < rows && ok; ++i) {
      const double t = row_angle(a, b, i);
      ok = t > margin && t < std::numbers::pi - margin;
    }
    if (ok) return {std::move(a), std::move(b)};
  }
}

// Entries bounded away from zero so relu is differentiable with margin.
inline Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = random_normal(shape, rng);
  for (double& x : t.data())
    if (std::abs(x) < 0.05) x = x < 0 ? x - 0.05 : x + 0.05;
  return t;
}

// Reduces any output to a scalar with fixed random weights.
inline ad::Var project(ad::Var out, const Tensor& weights) {
  return ad::dot(out, ad::constant(out.tape(), weights));
}

/// `per_primitive` seeded random cases for each primitive, dims 2-32.
inline std::vector<GradCase> primitive_cases(int per_primitive, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> cases;
  auto dim = [&] { return 2 + static_cast<Index>(rng.uniform_int(31)); };
  auto rows = [&] { return 1 + static_cast<Index>(rng.uniform_int(3)); };
  using Params = std::span<const ad::Var>;

  for (int k = 0; k < per_primitive; ++k) {
    const Index m = rows(), n = dim(), q = dim();
    const Tensor w_mn = random_normal(Shape{m, n}, rng);
    const Tensor w_mq = random_normal(Shape{m, q}, rng);

    cases.push_back({"matmul",
                     [w_mq](ad::Tape&, Params p) { return project(ad::matmul(p[0], p[1]), w_mq); },
                     {random_normal(Shape{m, n}, rng), random_normal(Shape{n, q}, rng)}});
    cases.push_back({"add", [w_mn](ad::Tape&, Params p) { return project(p[0] + p[1], w_mn); },
                     {random_normal(Shape{m, n}, rng), random_normal(Shape{m, n}, rng)}});
    cases.push_back({"sub", [w_mn](ad::Tape&, Params p) { return project(p[0] - p[1], w_mn); },
                     {random_normal(Shape{m, n}, rng), random_normal(Shape{m, n}, rng)}});
    cases.push_back({"mul", [w_mn](ad::Tape&, Params p) { return project(p[0] * p[1], w_mn); },
                     {random_normal(Shape{m, n}, rng), random_normal(Shape{m, n}, rng)}});
    const double s = rng.uniform(-3, 3);
    cases.push_back({"scale",
                     [w_mn, s](ad::Tape&, Params p) { return project(ad::scale(p[0], s), w_mn); },
                     {random_normal(Shape{m, n}, rng)}});
    cases.push_back({"neg", [w_mn](ad::Tape&, Params p) { return project(-p[0], w_mn); },
                     {random_normal(Shape{m, n}, rng)}});
    cases.push_back({"one_minus",
                     [w_mn](ad::Tape&, Params p) { return project(ad::one_minus(p[0]), w_mn); },
                     {random_normal(Shape{m, n}, rng)}});
    cases.push_back({"sigmoid",
                     [w_mn](ad::Tape&, Params p) { return project(ad::sigmoid(p[0]), w_mn); },
                     {random_normal(Shape{m, n}, rng, 2.0)}});
    cases.push_back({"relu",
                     [w_mn](ad::Tape&, Params p) { return project(ad::relu(p[0]), w_mn); },
                     {away_from_zero(Shape{m, n}, rng)}});
    cases.push_back({"tanh",
                     [w_mn](ad::Tape&, Params p) { return project(ad::tanh(p[0]), w_mn); },
                     {random_normal(Shape{m, n}, rng)}});
    cases.push_back({"add_row",
                     [w_mn](ad::Tape&, Params p) { return project(ad::add_row(p[0], p[1]), w_mn); },
                     {random_normal(Shape{m, n}, rng), random_normal(Shape{n}, rng)}});
    {
      const Index begin = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
      const Index end = begin + 1 + static_cast<Index>(rng.uniform_int(
                                        static_cast<std::uint64_t>(n - begin)));
      const Tensor w = random_normal(Shape{m, end - begin}, rng);
      cases.push_back({"slice_cols",
                       [w, begin, end](ad::Tape&, Params p) {
                         return project(ad::slice_cols(p[0], begin, end), w);
                       },
                       {random_normal(Shape{m, n}, rng)}});
    }
    {
      const Index m2 = rows();
      const Tensor w = random_normal(Shape{m + m2, n}, rng);
      cases.push_back({"concat_rows",
                       [w](ad::Tape&, Params p) {
                         const ad::Var parts[] = {p[0], p[1]};
                         return project(ad::concat_rows(parts), w);
                       },
                       {random_normal(Shape{m, n}, rng), random_normal(Shape{m2, n}, rng)}});
    }
    cases.push_back({"sum",
                     [](ad::Tape&, Params p) { return ad::sum(ad::sigmoid(p[0])); },
                     {random_normal(Shape{m, n}, rng)}});
    cases.push_back({"dot", [](ad::Tape&, Params p) { return ad::dot(p[0], p[1]); },
                     {random_normal(Shape{m, n}, rng), random_normal(Shape{m, n}, rng)}});
    cases.push_back({"l2norm", [](ad::Tape&, Params p) { return ad::l2norm(p[0]); },
                     {random_normal(Shape{m, n}, rng)}});
    {
      auto [a, b] = rotation_pair(m, n, rng);
      cases.push_back({"rotate",
                       [w_mn](ad::Tape&, Params p) {
                         return project(ad::rotate(p[0], p[1], p[2]), w_mn);
                       },
                       {std::move(a), std::move(b), random_normal(Shape{m, n}, rng)}});
    }
    {
      auto [a, b] = rotation_pair(m, n, rng);
      const Tensor w = random_normal(Shape{m, n, n}, rng);
      cases.push_back({"compose_right",
                       [w](ad::Tape&, Params p) {
                         return project(ad::compose_right(p[0], p[1], p[2]), w);
                       },
                       {random_normal(Shape{m, n, n}, rng), std::move(a), std::move(b)}});
    }
    cases.push_back({"batched_matvec",
                     [w_mn](ad::Tape&, Params p) {
                       return project(ad::batched_matvec(p[0], p[1]), w_mn);
                     },
                     {random_normal(Shape{m, n, n}, rng), random_normal(Shape{m, n}, rng)}});
    const double eta = rng.uniform(0.5, 2.0);
    cases.push_back({"normalize_rows",
                     [w_mn, eta](ad::Tape&, Params p) {
                       return project(ad::normalize_rows(p[0], eta), w_mn);
                     },
                     {random_normal(Shape{m, n}, rng)}});
    {
      auto targets = std::make_shared<ClassTargets>();
      for (Index i = 0; i < m; ++i) {
        targets->ids.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n))));
        targets->mask.push_back(i == 0 || rng.uniform() < 0.7 ? 1 : 0);
      }
      cases.push_back({"softmax_cross_entropy",
                       [targets](ad::Tape&, Params p) {
                         return ad::softmax_cross_entropy(p[0], targets);
                       },
                       {random_normal(Shape{m, n}, rng, 2.0)}});
    }
  }
  return cases;
}

/// plan + rotate as one composite, with the angle kept away from 0 and pi.
inline std::vector<GradCase> plan_rotate_cases(int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCase> cases;
  for (int k = 0; k < count; ++k) {
    const Index n = 2 + static_cast<Index>(rng.uniform_int(31));
    auto [a, b] = rotation_pair(1, n, rng);
    const Tensor w = random_normal(Shape{1, n}, rng);
    cases.push_back({"plan+rotate",
                     [w](ad::Tape&, std::span<const ad::Var> p) {
                       // Two chained rotations exercise plan inputs that are themselves outputs.
                       const ad::Var once = ad::rotate(p[0], p[1], p[2]);
                       return project(ad::rotate(p[0], p[1], once), w);
                     },
                     {std::move(a), std::move(b), random_normal(Shape{1, n}, rng)}});
  }
  return cases;
}

struct UnrollCase {
  std::string label;
  ad::ScalarFunction f;
  std::vector<Tensor> params;
  CellConfig config;
  std::vector<Tensor> xs;

  /// Smallest distance of any step's rotation angle from 0 or pi.
  double angle_margin() const {
    const RumParams p{params[0], params[1], params[2], params[3], params[4]};
    RumState s = RumState::initial(config, params[5].shape()[0]);
    s.h = params[5];
    double margin = std::numbers::pi;
    const Index n = config.hidden_size;
    for (const Tensor& x : xs) {
      const Tensor pre = add_row(add(matmul(x, p.w_xh), matmul(s.h, p.w_hh)), p.b);
      const Tensor eps = add_row(matmul(x, p.w_xh_tilde), p.b_tilde);
      Tensor tau(Shape{pre.shape().rows(), n});
      tau.matrix() = pre.matrix().middleCols(n, n);
      for (Index i = 0; i < eps.shape().rows(); ++i) {
        const double t = row_angle(eps, tau, i);
        margin = std::min({margin, t, std::numbers::pi - t});
      }
      s = rum_step(p, config, s, x);
    }
    return margin;
  }
};

/// Loss of a `steps`-step RUM unroll over random real-valued inputs.
inline UnrollCase rum_unroll_case(int lambda, std::optional<double> eta, int steps,
                                  std::uint64_t seed, Index nx = 3, Index nh = 5, Index nb = 2) {
  Rng rng(seed);
  CellConfig config{nx, nh, lambda, eta};
  RumParams init = RumParams::initialize(config, rng);
  // Nonzero biases keep every plan away from the degenerate branch.
  init.b = random_normal(Shape{2 * nh}, rng, 0.5);
  init.b_tilde = random_normal(Shape{nh}, rng, 0.5);
  std::vector<Tensor> xs;
  for (int t = 0; t < steps; ++t) xs.push_back(random_normal(Shape{nb, nx}, rng));
  const Tensor w = random_normal(Shape{nb, nh}, rng);
  Tensor h0 = random_normal(Shape{nb, nh}, rng, 0.5);

  UnrollCase c;
  c.label = "rum lambda=" + std::to_string(lambda) +
            (eta ? " eta=" + std::to_string(*eta) : std::string(" eta=disabled"));
  c.params = {init.w_xh, init.w_hh, init.b, init.w_xh_tilde, init.b_tilde, h0};
  c.config = config;
  c.xs = xs;
  c.f = [config, xs, w](ad::Tape& tape, std::span<const ad::Var> p) {
    const RumVars vars{p[0], p[1], p[2], p[3], p[4]};
    RumStateVars s{p[5], std::nullopt};
    if (config.lambda == 1)
      s.r = ad::constant(tape, *RumState::initial(config, w.shape()[0]).r);
    ad::Var loss = ad::constant(tape, Tensor::scalar(0.0));
    for (const Tensor& x : xs) {
      s = rum_step(vars, config, s, ad::constant(tape, x));
      loss = loss + ad::dot(s.h, ad::constant(tape, w));
    }
    return loss;
  };
  return c;
}

}  // namespace rum::testing
