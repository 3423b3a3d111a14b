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
#include <limits>

#include "rum/tensor.hpp"

namespace rum {
namespace {

TEST(Shape, RejectsBadExtents) {
  EXPECT_THROW((Shape{0}), ShapeError);
  EXPECT_THROW((Shape{1, 2, 3, 4}), ShapeError);
  EXPECT_EQ((Shape{2, 3, 4}).size(), 24);
  EXPECT_EQ((Shape{2, 3, 4}).rows(), 3);
  EXPECT_EQ((Shape{2, 3, 4}).batch(), 2);
  EXPECT_EQ(Shape{}.size(), 1);
}

TEST(Tensor, DataLengthMatchesShape) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t(Shape{3, 4}, 1.5);
  EXPECT_EQ(t.size(), 12);
  EXPECT_EQ(t(2, 3), 1.5);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Tensor::identity(2), a), a);
  EXPECT_EQ(matmul(a, Tensor::identity(2)), a);
}

TEST(Matmul, RowTimesColumn) {
  const Tensor a = Tensor::from_rows({{1, 2}});
  const Tensor b = Tensor::from_rows({{3}, {4}});
  EXPECT_EQ(matmul(a, b).item(), 11.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(11);
  const Tensor a = random_normal(Shape{4, 5}, rng);
  const Tensor b = random_normal(Shape{5, 3}, rng);
  const Tensor c = matmul(a, b);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < 5; ++k) acc += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), acc, 1e-15);
    }
}

TEST(Matmul, FastPathAgreesWithReference) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.uniform_int(40));
    const Index k = 1 + static_cast<Index>(rng.uniform_int(40));
    const Index n = 1 + static_cast<Index>(rng.uniform_int(40));
    const Tensor a = random_normal(Shape{m, k}, rng);
    const Tensor b = random_normal(Shape{k, n}, rng);
    const Tensor ref = matmul(a, b);
    const Tensor fast = matmul_fast(a, b);
    double scale = 0.0;
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) {
        double s = 0.0;
        for (Index q = 0; q < k; ++q) s += std::abs(a(i, q) * b(q, j));
        scale = std::max(scale, s);
      }
    EXPECT_LE((ref.matrix() - fast.matrix()).cwiseAbs().maxCoeff(), 1e-12 * scale);
  }
}

TEST(Matmul, RepeatedCallsAreBitIdentical) {
  Rng rng(13);
  const Tensor a = random_normal(Shape{7, 9}, rng);
  const Tensor b = random_normal(Shape{9, 5}, rng);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
  EXPECT_EQ(matmul_fast(a, b), matmul_fast(a, b));
}

TEST(Elementwise, TrivialValues) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(relu(Tensor::vector({-1, 2})), Tensor::vector({0, 2}));
  EXPECT_EQ(neg(Tensor::vector({1, -2})), Tensor::vector({-1, 2}));
  EXPECT_EQ(scale(Tensor::vector({1, -2}), 3.0), Tensor::vector({3, -6}));
}

TEST(Elementwise, MatchesScalarLoop) {
  Rng rng(14);
  const Tensor a = random_normal(Shape{3, 4, 5}, rng);
  const Tensor b = random_normal(Shape{3, 4, 5}, rng);
  const Tensor s = add(a, b), d = sub(a, b), m = mul(a, b);
  for (Index i = 0; i < a.size(); ++i) {
    EXPECT_EQ(s[i], a[i] + b[i]);
    EXPECT_EQ(d[i], a[i] - b[i]);
    EXPECT_EQ(m[i], a[i] * b[i]);
  }
  EXPECT_THROW(add(a, Tensor(Shape{3, 4})), ShapeError);
}

TEST(Elementwise, SigmoidIsStableAtExtremes) {
  const Tensor y = sigmoid(Tensor::vector({-800, -30, 0, 30, 800}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], std::exp(-30.0), 1e-25);
  EXPECT_EQ(y[2], 0.5);
  EXPECT_EQ(y[4], 1.0);
  Rng rng(15);
  const Tensor x = random_normal(Shape{200}, rng, 5.0);
  const Tensor t = sigmoid(x);
  for (Index i = 0; i < x.size(); ++i) EXPECT_NEAR(t[i], sigmoid(x[i]), 4e-16);
}

TEST(Elementwise, NonFiniteIsReported) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(add(Tensor::vector({inf}), Tensor::vector({-inf})), NonFiniteError);
  EXPECT_THROW(scale(Tensor::vector({1e308}), 1e10), NonFiniteError);
}

TEST(Reduce, TrivialValues) {
  EXPECT_EQ(l2norm(Tensor::vector({3, 4})), 5.0);
  EXPECT_EQ(dot(Tensor::vector({1, 0}), Tensor::vector({0, 1})), 0.0);
  EXPECT_EQ(sum(Tensor::vector({1, 2, 3})), 6.0);
  EXPECT_THROW(dot(Tensor::vector({1}), Tensor::vector({1, 2})), ShapeError);
}

TEST(Reduce, L2NormMatchesCompensatedSum) {
  Rng rng(16);
  const Tensor x = random_normal(Shape{100}, rng);
  long double acc = 0.0L, carry = 0.0L;
  for (double v : x.data()) {
    const long double y = static_cast<long double>(v) * v - carry;
    const long double t = acc + y;
    carry = (t - acc) - y;
    acc = t;
  }
  const double oracle = static_cast<double>(std::sqrt(acc));
  EXPECT_NEAR(l2norm(x), oracle, 1e-13 * oracle);
}

TEST(Reduce, SumRows) {
  const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(sum_rows(a), Tensor::vector({9, 12}));
}

TEST(NormalizeRows, ScalesEachRowAndSkipsZeroRows) {
  const Tensor h = Tensor::from_rows({{3, 4}, {0, 0}});
  const Tensor y = normalize_rows(h, 1.0);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(y(0, 1), 0.8);
  EXPECT_EQ(y(1, 0), 0.0);
  EXPECT_EQ(y(1, 1), 0.0);
}

TEST(Softmax, UniformLogitsGiveLogV) {
  const Tensor logits(Shape{4, 8}, 0.25);
  const ClassTargets targets{{0, 3, 5, 7}, {}};
  EXPECT_NEAR(softmax_cross_entropy(logits, targets).loss, std::log(8.0), 1e-15);
}

TEST(Softmax, LargeMarginDrivesLossToZero) {
  double previous = std::numeric_limits<double>::infinity();
  for (double margin : {1.0, 10.0, 30.0, 1000.0}) {
    const Tensor logits = Tensor::from_rows({{margin, 0, 0}});
    const double loss = softmax_cross_entropy(logits, ClassTargets{{0}, {}}).loss;
    EXPECT_NEAR(loss, std::log1p(2 * std::exp(-margin)), 4e-15);
    EXPECT_LE(loss, previous);
    previous = loss;
  }
  EXPECT_EQ(previous, 0.0);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  Rng rng(17);
  const Tensor logits = random_normal(Shape{3, 5}, rng, 2.0);
  const ClassTargets targets{{4, 0, 2}, {}};
  long double total = 0.0L;
  for (Index i = 0; i < 3; ++i) {
    long double z = 0.0L;
    for (Index j = 0; j < 5; ++j) z += std::exp(static_cast<long double>(logits(i, j)));
    total -= std::log(std::exp(static_cast<long double>(logits(i, targets.ids[i]))) / z);
  }
  const auto ce = softmax_cross_entropy(logits, targets);
  EXPECT_NEAR(ce.loss, static_cast<double>(total / 3), 1e-12);
  for (Index i = 0; i < 3; ++i) {
    long double z = 0.0L;
    for (Index j = 0; j < 5; ++j) z += std::exp(static_cast<long double>(logits(i, j)));
    for (Index j = 0; j < 5; ++j)
      EXPECT_NEAR(ce.probabilities(i, j),
                  static_cast<double>(std::exp(static_cast<long double>(logits(i, j))) / z),
                  1e-15);
  }
}

TEST(Softmax, ProbabilitiesSumToOne) {
  Rng rng(18);
  const Tensor p = softmax_rows(random_normal(Shape{50, 37}, rng, 10.0));
  for (Index i = 0; i < 50; ++i) EXPECT_NEAR(p.matrix().row(i).sum(), 1.0, 1e-12);
}

TEST(Softmax, MaskAndNormalizer) {
  const Tensor logits = Tensor::from_rows({{0, 0}, {5, 0}});
  const ClassTargets only_first{{0, 1}, {1, 0}};
  EXPECT_NEAR(softmax_cross_entropy(logits, only_first).loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(softmax_cross_entropy(logits, only_first, 4.0).loss, std::log(2.0) / 4, 1e-15);
}

TEST(Softmax, OutOfRangeTargetThrows) {
  const Tensor logits(Shape{1, 3});
  EXPECT_THROW(softmax_cross_entropy(logits, ClassTargets{{3}, {}}), std::out_of_range);
  EXPECT_THROW(softmax_cross_entropy(logits, ClassTargets{{-1}, {}}), std::out_of_range);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs |= x != c.normal();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, StateRoundTrip) {
  Rng a(7);
  for (int i = 0; i < 10; ++i) a.uniform();
  Rng b(0);
  b.restore(a.state());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, FirstOutputMatchesStandardEngine) {
  // The standard pins the 10000th output of a default-seeded mt19937_64.
  std::mt19937_64 reference;
  reference.discard(9999);
  EXPECT_EQ(reference(), 9981545732273789042ULL);
  Rng rng(5489);
  for (int i = 0; i < 9999; ++i) rng.next_u64();
  EXPECT_EQ(rng.next_u64(), 9981545732273789042ULL);
}

TEST(Rng, UniformIntStaysInRange) {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.uniform_int(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_GT(c, 850);
}

}  // namespace
}  // namespace rum
