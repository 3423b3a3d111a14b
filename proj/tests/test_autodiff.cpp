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

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "grad_cases.hpp"
#include "rum/autodiff.hpp"
#include "rum/cells.hpp"

namespace rum {
namespace {

using ad::Tape;
using ad::Var;

TEST(Tape, RecordingMatmulWithIdentityCachesOperand) {
  Tape tape;
  Rng rng(1);
  const Tensor a = random_normal(Shape{3, 3}, rng);
  const Var y = ad::matmul(ad::constant(tape, Tensor::identity(3)), ad::constant(tape, a));
  EXPECT_EQ(y.value(), a);
}

TEST(Tape, ChainReplayEqualsDirectEvaluation) {
  Tape tape;
  Rng rng(2);
  const Tensor a = random_normal(Shape{2, 4}, rng);
  const Tensor b = random_normal(Shape{4, 3}, rng);
  const Var x = ad::parameter(tape, a);
  const Var w = ad::parameter(tape, b);
  const Var y = ad::relu(ad::sigmoid(ad::matmul(x, w)));
  EXPECT_EQ(tape.size(), 5u);
  const auto values = tape.replay();
  EXPECT_EQ(values[y.id()], relu(sigmoid(matmul_fast(a, b))));
  for (std::size_t i = 0; i < tape.size(); ++i) EXPECT_EQ(values[i], tape.value(i));
}

TEST(Tape, InputsPrecedeNodes) {
  auto c = testing::rum_unroll_case(1, 1.0, 3, 3);
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& p : c.params) vars.push_back(ad::parameter(tape, p));
  c.f(tape, vars);
  for (std::size_t i = 0; i < tape.size(); ++i)
    for (auto in : tape.node(i).inputs) EXPECT_LT(in, i);
}

TEST(Tape, ReplayOfRumStepMatchesPlainForward) {
  for (int lambda : {0, 1}) {
    Rng rng(4);
    CellConfig config{3, 6, lambda, 1.0};
    const RumParams p = RumParams::initialize(config, rng);
    RumState s0 = RumState::initial(config, 4);
    s0.h = random_normal(Shape{4, 6}, rng);
    const Tensor x = random_normal(Shape{4, 3}, rng);
    const RumState plain = rum_step(p, config, s0, x);

    Tape tape;
    const RumVars vars{ad::parameter(tape, p.w_xh), ad::parameter(tape, p.w_hh),
                       ad::parameter(tape, p.b), ad::parameter(tape, p.w_xh_tilde),
                       ad::parameter(tape, p.b_tilde)};
    RumStateVars sv{ad::constant(tape, s0.h), std::nullopt};
    if (s0.r) sv.r = ad::constant(tape, *s0.r);
    const RumStateVars next = rum_step(vars, config, sv, ad::constant(tape, x));
    EXPECT_EQ(next.h.value(), plain.h);
    EXPECT_EQ(tape.replay()[next.h.id()], plain.h);
    if (lambda == 1) {
      EXPECT_EQ(next.r->value(), *plain.r);
    }
  }
}

TEST(Backward, IdentitySeedOne) {
  Tape tape;
  const Var x = ad::parameter(tape, Tensor::scalar(3.0));
  const auto grads = ad::backward(tape, x.id());
  EXPECT_EQ(grads.at(x.id()).item(), 1.0);
}

TEST(Backward, DotWithItself) {
  Tape tape;
  const Var x = ad::parameter(tape, Tensor::vector({1, 2}));
  const Var y = ad::dot(x, x);
  const auto grads = ad::backward(tape, y.id());
  EXPECT_EQ(grads.at(x.id()), Tensor::vector({2, 4}));
}

TEST(Backward, SeedShapeMustMatch) {
  Tape tape;
  const Var x = ad::parameter(tape, Tensor::vector({1, 2}));
  EXPECT_THROW(ad::backward(tape, x.id(), Tensor::vector({1})), ShapeError);
}

TEST(Backward, ConstantsGetNoGradient) {
  Tape tape;
  const Var x = ad::parameter(tape, Tensor::vector({1, 2}));
  const Var c = ad::constant(tape, Tensor::vector({3, 4}));
  const Var y = ad::dot(x, c);
  const auto grads = ad::backward(tape, y.id());
  EXPECT_TRUE(grads.contains(x.id()));
  EXPECT_FALSE(grads.contains(c.id()));
  EXPECT_FALSE(grads.contains(y.id()));
}

TEST(Backward, KeepIntermediate) {
  Tape tape;
  const Var x = ad::parameter(tape, Tensor::vector({1, 2}));
  const Var s = ad::sigmoid(x);
  const Var y = ad::sum(s);
  const auto grads = ad::backward(tape, y.id(), {.keep_intermediate = true});
  ASSERT_TRUE(grads.contains(s.id()));
  EXPECT_EQ(grads.at(s.id()), Tensor::vector({1, 1}));
  for (std::size_t i = 0; i < tape.size(); ++i)
    if (grads.contains(i)) {
      EXPECT_EQ(grads.at(i).shape(), tape.value(i).shape());
    }
}

TEST(Backward, DiamondAccumulatesBothBranches) {
  // f(x) = sum(sigmoid(x) * tanh(x)); df/dx = s(1-s) t + s (1 - t^2).
  Rng rng(5);
  const Tensor x0 = random_normal(Shape{3, 4}, rng);
  Tape tape;
  const Var x = ad::parameter(tape, x0);
  const Var y = ad::sum(ad::sigmoid(x) * ad::tanh(x));
  const auto grads = ad::backward(tape, y.id());
  for (Index i = 0; i < x0.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x0[i]));
    const double t = std::tanh(x0[i]);
    EXPECT_NEAR(grads.at(x.id())[i], s * (1 - s) * t + s * (1 - t * t), 1e-14);
  }
}

TEST(Backward, SharedLeafAccumulates) {
  // f(x) = dot(x, 2x) + sum(x) => df/dx = 4x + 1.
  Tape tape;
  const Var x = ad::parameter(tape, Tensor::vector({1, -2, 3}));
  const Var y = ad::dot(x, ad::scale(x, 2.0)) + ad::sum(x);
  const auto grads = ad::backward(tape, y.id());
  EXPECT_EQ(grads.at(x.id()), Tensor::vector({5, -7, 13}));
}

TEST(Backward, ReluSubgradientAtZeroIsZero) {
  Tape tape;
  const Var x = ad::parameter(tape, Tensor::vector({-1, 0, 2}));
  const auto grads = ad::backward(tape, ad::sum(ad::relu(x)).id());
  EXPECT_EQ(grads.at(x.id()), Tensor::vector({0, 0, 1}));
}

TEST(GradCheck, LinearFunctionIsExact) {
  // Rounding in the difference quotient scales with |f| / eps, so keep f small
  // relative to the slopes.
  Rng rng(6);
  const Tensor w = random_uniform(Shape{4, 5}, rng, 1.0, 2.0);
  const auto res = ad::grad_check(
      [&](Tape& tape, std::span<const Var> p) { return ad::dot(p[0], ad::constant(tape, w)); },
      {random_normal(Shape{4, 5}, rng, 0.1)});
  EXPECT_LT(res.max_rel_error, 1e-10);
  EXPECT_EQ(res.checks, 20);
  EXPECT_FALSE(res.nan_encountered);
}

TEST(GradCheck, SigmoidChain) {
  Rng rng(7);
  const auto res = ad::grad_check(
      [](Tape&, std::span<const Var> p) {
        return ad::sum(ad::sigmoid(ad::scale(ad::sigmoid(p[0]), 3.0)));
      },
      {random_normal(Shape{3, 3}, rng)});
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(GradCheck, ProbesAboveThreshold) {
  Rng rng(8);
  const auto res = ad::grad_check(
      [](Tape&, std::span<const Var> p) { return ad::sum(ad::tanh(p[0])); },
      {random_normal(Shape{40, 30}, rng)}, {.probes = 8});
  EXPECT_EQ(res.checks, 8);
  EXPECT_LT(res.max_rel_error, 1e-6);
  EXPECT_EQ(res.worst.rfind("probe", 0), 0u);
}

TEST(GradCheck, ReportsWrongGradient) {
  // relu at exactly 0: the analytic subgradient is 0, the central difference 0.5.
  const auto res = ad::grad_check(
      [](Tape&, std::span<const Var> p) { return ad::sum(ad::relu(p[0])); },
      {Tensor::vector({0.0, 1.0})});
  EXPECT_GT(res.max_rel_error, 0.4);
  EXPECT_EQ(res.worst, "p0[0]");
}

TEST(GradCheck, ReportsNanInsteadOfThrowing) {
  const auto res = ad::grad_check(
      [](Tape& tape, std::span<const Var> p) {
        if (p[0].value()[0] != 1.0) return ad::constant(tape, Tensor::scalar(std::nan("")));
        return ad::sum(p[0]);
      },
      {Tensor::vector({1.0})});
  EXPECT_TRUE(res.nan_encountered);
}

TEST(GradCheck, EveryPrimitive) {
  std::map<std::string, double> worst;
  for (const auto& c : testing::primitive_cases(100, 0xabc)) {
    const auto res = ad::grad_check(c.f, c.params);
    ASSERT_FALSE(res.nan_encountered) << c.primitive;
    worst[c.primitive] = std::max(worst[c.primitive], res.max_rel_error);
  }
  EXPECT_EQ(worst.size(), 21u);
  for (const auto& [name, err] : worst) EXPECT_LT(err, 1e-4) << name;
}

TEST(GradCheck, UnrolledRum) {
  for (int lambda : {0, 1})
    for (std::optional<double> eta : {std::optional<double>(1.0), std::optional<double>()}) {
      const auto c = testing::rum_unroll_case(lambda, eta, 3, 100 + lambda);
      ASSERT_GT(c.angle_margin(), 0.1) << c.label;
      const auto res = ad::grad_check(c.f, c.params);
      EXPECT_LT(res.max_rel_error, 1e-4) << c.label << " worst " << res.worst;
    }
}

TEST(NormPreservation, RotationJacobianIsOrthogonal) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.uniform_int(31));
    const Tensor a = random_normal(Shape{1, n}, rng);
    const Tensor b = random_normal(Shape{1, n}, rng);
    const Tensor g = random_normal(Shape{1, n}, rng);
    Tape tape;
    const Var h = ad::parameter(tape, random_normal(Shape{1, n}, rng));
    const Var y = ad::rotate(ad::constant(tape, a), ad::constant(tape, b), h);
    const auto grads = ad::backward(tape, y.id(), g);
    EXPECT_NEAR(l2norm(grads.at(h.id())), l2norm(g), 1e-10);
  }
}

}  // namespace
}  // namespace rum
