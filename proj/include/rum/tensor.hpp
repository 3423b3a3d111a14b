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

// Dense row-major tensors of rank <= 3 and the reference numeric kernels.
//
// Every kernel here sums in ascending index order so results are bit
// reproducible. The `_fast` variants route through Eigen's blocked kernels and
// agree with the reference path to ~1e-12 relative.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rum {

using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Extents of a tensor. Rank 0 is a scalar; ranks 1-3 carry positive extents.
/// A rank-3 shape reads as (batch, rows, cols).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> extents) {
    if (extents.size() > 3) throw ShapeError("tensor rank must be <= 3");
    for (Index e : extents) {
      if (e <= 0) throw ShapeError("tensor extents must be positive");
      extents_[rank_++] = e;
    }
  }

  static Shape from(std::span<const Index> extents) {
    Shape s;
    if (extents.size() > 3) throw ShapeError("tensor rank must be <= 3");
    for (Index e : extents) {
      if (e <= 0) throw ShapeError("tensor extents must be positive");
      s.extents_[s.rank_++] = e;
    }
    return s;
  }

  int rank() const { return rank_; }
  Index operator[](int axis) const { return extents_.at(axis); }
  std::vector<Index> extents() const { return {extents_.begin(), extents_.begin() + rank_}; }

  Index size() const {
    Index n = 1;
    for (int i = 0; i < rank_; ++i) n *= extents_[i];
    return n;
  }

  // Matrix view extents. Rank 0 and 1 are single rows; rank 3 refers to one slice.
  Index rows() const { return rank_ <= 1 ? 1 : extents_[rank_ - 2]; }
  Index cols() const { return rank_ == 0 ? 1 : extents_[rank_ - 1]; }
  Index batch() const { return rank_ == 3 ? extents_[0] : 1; }

  bool operator==(const Shape& other) const {
    if (rank_ != other.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (extents_[i] != other.extents_[i]) return false;
    return true;
  }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < rank_; ++i) {
      if (i) s += ", ";
      s += std::to_string(extents_[i]);
    }
    return s + ")";
  }

 private:
  std::array<Index, 3> extents_{};
  int rank_ = 0;
};

/// Tag selecting a constructor that leaves the buffer uninitialized.
struct Uninitialized {};
inline constexpr Uninitialized uninitialized{};

template <typename Scalar>
class BasicTensor {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  BasicTensor() : data_(Vector::Zero(1)) {}

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(Vector::Constant(shape.size(), fill)) {}

  BasicTensor(Shape shape, Uninitialized) : shape_(shape), data_(shape.size()) {}

  BasicTensor(Shape shape, std::vector<Scalar> values) : shape_(shape), data_(shape.size()) {
    if (static_cast<Index>(values.size()) != shape.size())
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape.str());
    std::copy(values.begin(), values.end(), data_.data());
  }

  /// Rank-2 tensor holding a copy of `m`.
  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    BasicTensor t(Shape{m.rows(), m.cols()});
    t.matrix() = m;
    return t;
  }

  static BasicTensor from_rows(std::initializer_list<std::initializer_list<Scalar>> rows) {
    const Index r = static_cast<Index>(rows.size());
    const Index c = r ? static_cast<Index>(rows.begin()->size()) : 0;
    std::vector<Scalar> flat;
    for (const auto& row : rows) {
      if (static_cast<Index>(row.size()) != c) throw ShapeError("ragged row list");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return BasicTensor(Shape{r, c}, std::move(flat));
  }

  static BasicTensor vector(std::initializer_list<Scalar> values) {
    return BasicTensor(Shape{static_cast<Index>(values.size())}, std::vector<Scalar>(values));
  }

  static BasicTensor scalar(Scalar value) {
    BasicTensor t;
    t.data_[0] = value;
    return t;
  }

  static BasicTensor identity(Index n) {
    BasicTensor t(Shape{n, n});
    t.matrix().setIdentity();
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  Index size() const { return data_.size(); }

  std::span<Scalar> data() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> data() const {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }
  Scalar& operator()(Index i, Index j) { return data_[i * shape_.cols() + j]; }
  Scalar operator()(Index i, Index j) const { return data_[i * shape_.cols() + j]; }
  Scalar& operator()(Index b, Index i, Index j) {
    return data_[(b * shape_.rows() + i) * shape_.cols() + j];
  }
  Scalar operator()(Index b, Index i, Index j) const {
    return data_[(b * shape_.rows() + i) * shape_.cols() + j];
  }

  Scalar item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_.str());
    return data_[0];
  }

  VectorMap flat() { return VectorMap(data_.data(), data_.size()); }
  ConstVectorMap flat() const { return ConstVectorMap(data_.data(), data_.size()); }

  /// Rank <= 2 as a matrix; rank 3 stacks the batch along rows.
  MatrixMap matrix() {
    return MatrixMap(data_.data(), shape_.batch() * shape_.rows(), shape_.cols());
  }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data_.data(), shape_.batch() * shape_.rows(), shape_.cols());
  }

  MatrixMap slice(Index b) {
    return MatrixMap(data_.data() + b * shape_.rows() * shape_.cols(), shape_.rows(),
                     shape_.cols());
  }
  ConstMatrixMap slice(Index b) const {
    return ConstMatrixMap(data_.data() + b * shape_.rows() * shape_.cols(), shape_.rows(),
                          shape_.cols());
  }

  // x * 0 is NaN exactly when x is NaN or infinite, and the sum vectorizes.
  bool all_finite() const { return (data_.array() * Scalar(0)).sum() == Scalar(0); }

  const BasicTensor& ensure_finite(const std::string& context) const {
    if (!all_finite()) throw NonFiniteError("non-finite value produced by " + context);
    return *this;
  }

  bool operator==(const BasicTensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

namespace detail {

template <typename Scalar>
void require_same_shape(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b,
                        const char* op) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
}

template <typename Scalar>
void require_matmul_shapes(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible shapes " + a.shape().str() + " x " +
                     b.shape().str());
}

template <typename Scalar, typename F>
BasicTensor<Scalar> map(const BasicTensor<Scalar>& a, F f, const char* op) {
  BasicTensor<Scalar> out(a.shape(), uninitialized);
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  out.ensure_finite(op);
  return out;
}

template <typename Scalar, typename F>
BasicTensor<Scalar> zip(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, F f,
                        const char* op) {
  require_same_shape(a, b, op);
  BasicTensor<Scalar> out(a.shape(), uninitialized);
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  out.ensure_finite(op);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Products

/// Reference product; accumulates each entry over ascending k.
template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_matmul_shapes(a, b);
  const Index m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  BasicTensor<Scalar> out(Shape{m, n});
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      Scalar acc(0);
      for (Index p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
      out(i, j) = acc;
    }
  out.ensure_finite("matmul");
  return out;
}

/// Eigen-backed product used on hot paths.
template <typename Scalar>
BasicTensor<Scalar> matmul_fast(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_matmul_shapes(a, b);
  BasicTensor<Scalar> out(Shape{a.shape()[0], b.shape()[1]}, uninitialized);
  out.matrix().noalias() = a.matrix() * b.matrix();
  out.ensure_finite("matmul");
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise kernels

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
BasicTensor<Scalar> add(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return detail::zip(a, b, [](Scalar x, Scalar y) { return x + y; }, "add");
}

template <typename Scalar>
BasicTensor<Scalar> sub(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return detail::zip(a, b, [](Scalar x, Scalar y) { return x - y; }, "sub");
}

template <typename Scalar>
BasicTensor<Scalar> mul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return detail::zip(a, b, [](Scalar x, Scalar y) { return x * y; }, "mul");
}

template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar s) {
  return detail::map(a, [s](Scalar x) { return s * x; }, "scale");
}

template <typename Scalar>
BasicTensor<Scalar> neg(const BasicTensor<Scalar>& a) {
  return detail::map(a, [](Scalar x) { return -x; }, "neg");
}

template <typename Scalar>
BasicTensor<Scalar> one_minus(const BasicTensor<Scalar>& a) {
  return detail::map(a, [](Scalar x) { return Scalar(1) - x; }, "one_minus");
}

template <typename Scalar>
BasicTensor<Scalar> sigmoid(const BasicTensor<Scalar>& a) {
  BasicTensor<Scalar> out(a.shape(), uninitialized);
  const auto x = a.flat().array();
  const auto e = (-x.abs()).exp().eval();
  out.flat() = (x >= Scalar(0)).select(Scalar(1) / (Scalar(1) + e), e / (Scalar(1) + e));
  out.ensure_finite("sigmoid");
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& a) {
  return detail::map(a, [](Scalar x) { return x > Scalar(0) ? x : Scalar(0); }, "relu");
}

template <typename Scalar>
BasicTensor<Scalar> tanh(const BasicTensor<Scalar>& a) {
  return detail::map(a, [](Scalar x) { return std::tanh(x); }, "tanh");
}

/// Adds a length-`cols` vector to every row of `a`.
template <typename Scalar>
BasicTensor<Scalar> add_row(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& row) {
  if (row.size() != a.shape().cols() || a.rank() != 2)
    throw ShapeError("add_row: " + row.shape().str() + " does not broadcast over " +
                     a.shape().str());
  BasicTensor<Scalar> out(a.shape(), uninitialized);
  const Index cols = a.shape().cols();
  for (Index i = 0; i < a.shape().rows(); ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = a(i, j) + row[j];
  out.ensure_finite("add_row");
  return out;
}

/// Rescales every row of a rank-2 tensor to Euclidean norm `eta`. Rows with
/// norm below 1e-12 are copied unchanged.
template <typename Scalar>
BasicTensor<Scalar> normalize_rows(const BasicTensor<Scalar>& a, Scalar eta) {
  if (a.rank() != 2) throw ShapeError("normalize_rows: expected rank 2, got " + a.shape().str());
  if (!(eta > Scalar(0))) throw std::invalid_argument("normalize_rows: eta must be positive");
  BasicTensor<Scalar> out = a;
  for (Index i = 0; i < a.shape().rows(); ++i) {
    Scalar acc(0);
    for (Index j = 0; j < a.shape().cols(); ++j) acc += a(i, j) * a(i, j);
    const Scalar norm = std::sqrt(acc);
    if (norm < Scalar(1e-12)) continue;
    for (Index j = 0; j < a.shape().cols(); ++j) out(i, j) = eta * (a(i, j) / norm);
  }
  out.ensure_finite("normalize_rows");
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename Scalar>
Scalar sum(const BasicTensor<Scalar>& a) {
  Scalar acc(0);
  for (Scalar x : a.data()) acc += x;
  return acc;
}

template <typename Scalar>
Scalar dot(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_shape(a, b, "dot");
  auto x = a.data();
  auto y = b.data();
  Scalar acc(0);
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

template <typename Scalar>
Scalar l2norm(const BasicTensor<Scalar>& a) {
  Scalar acc(0);
  for (Scalar x : a.data()) acc += x * x;
  return std::sqrt(acc);
}

/// Column sums of a rank-2 tensor, as a rank-1 tensor.
template <typename Scalar>
BasicTensor<Scalar> sum_rows(const BasicTensor<Scalar>& a) {
  BasicTensor<Scalar> out(Shape{a.shape().cols()});
  for (Index i = 0; i < a.shape().rows(); ++i)
    for (Index j = 0; j < a.shape().cols(); ++j) out[j] += a(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Loss

/// Class ids and loss mask for a flattened (positions x classes) logit matrix.
struct ClassTargets {
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;  // empty means every position counts

  bool counts(std::size_t i) const { return mask.empty() || mask[i] != 0; }
  std::size_t active() const {
    if (mask.empty()) return ids.size();
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  }
};

template <typename Scalar>
struct CrossEntropy {
  Scalar loss;                        // mean nats over counted positions
  BasicTensor<Scalar> probabilities;  // row-wise softmax
};

template <typename Scalar>
BasicTensor<Scalar> softmax_rows(const BasicTensor<Scalar>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: logits must be rank 2");
  BasicTensor<Scalar> p(logits.shape());
  const Index v = logits.shape().cols();
  for (Index i = 0; i < logits.shape().rows(); ++i) {
    Scalar m = logits(i, 0);
    for (Index j = 1; j < v; ++j) m = std::max(m, logits(i, j));
    Scalar z(0);
    for (Index j = 0; j < v; ++j) {
      p(i, j) = std::exp(logits(i, j) - m);
      z += p(i, j);
    }
    for (Index j = 0; j < v; ++j) p(i, j) /= z;
  }
  return p;
}

/// Mean cross entropy over counted rows. `normalizer` overrides the divisor
/// (0 selects the number of counted rows).
template <typename Scalar>
CrossEntropy<Scalar> softmax_cross_entropy(const BasicTensor<Scalar>& logits,
                                           const ClassTargets& targets, Scalar normalizer = 0) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be rank 2");
  const Index n = logits.shape().rows();
  const Index v = logits.shape().cols();
  if (static_cast<Index>(targets.ids.size()) != n ||
      (!targets.mask.empty() && static_cast<Index>(targets.mask.size()) != n))
    throw ShapeError("softmax_cross_entropy: target count does not match logits");
  CrossEntropy<Scalar> out{Scalar(0), softmax_rows(logits)};
  Scalar total(0);
  for (Index i = 0; i < n; ++i) {
    if (!targets.counts(static_cast<std::size_t>(i))) continue;
    const int id = targets.ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= v)
      throw std::out_of_range("softmax_cross_entropy: target id " + std::to_string(id) +
                              " outside [0, " + std::to_string(v) + ")");
    Scalar m = logits(i, 0);
    for (Index j = 1; j < v; ++j) m = std::max(m, logits(i, j));
    Scalar z(0);
    for (Index j = 0; j < v; ++j) z += std::exp(logits(i, j) - m);
    total += std::log(z) + m - logits(i, id);
  }
  const Scalar denom = normalizer > 0 ? normalizer : Scalar(targets.active());
  out.loss = denom > 0 ? total / denom : Scalar(0);
  if (!std::isfinite(out.loss)) throw NonFiniteError("non-finite cross entropy");
  return out;
}

/// Keeps large tensor buffers on the heap between steps instead of mapping and
/// unmapping them on every allocation. No-op outside glibc; safe to call twice.
void tune_allocator();

// ---------------------------------------------------------------------------
// Random numbers

/// Seeded generator whose stream is identical across platforms: mt19937_64 is
/// fully specified by the standard and every distribution below is hand-rolled.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) by rejection.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

Tensor random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);
Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0);

}  // namespace rum
