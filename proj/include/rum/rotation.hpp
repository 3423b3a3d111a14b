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

// Rotation R(a, b): the orthogonal map turning the direction of `a` onto the
// direction of `b` inside span(a, b) while fixing the orthogonal complement.
//
//   R = I - u_a u_a^T - u_b u_b^T + [u_a u_b] [[cos t, -sin t], [sin t, cos t]] [u_a u_b]^T
//
// Nothing here needs R itself: `rotate` applies it in O(N) per vector and
// `compose_right` folds it into an existing product with a rank-2 update.
// `dense_matrix` is kept as the reference oracle.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rum/tensor.hpp"

namespace rum {

/// Norm below which a vector (or the orthogonal residual of b) counts as zero.
inline constexpr double kDegenerateNorm = 1e-12;
/// The cosine fed to arccos is kept this far inside [-1, 1].
inline constexpr double kCosineClamp = 1e-12;

template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using SquareMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct RotationPlan {
  ColVector<Scalar> u_a;
  ColVector<Scalar> u_b;
  Scalar theta = Scalar(0);
  // True when a or b is (numerically) zero or the two are collinear; the
  // rotation is then the identity.
  bool degenerate = true;

  Index dim() const { return u_a.size(); }
};

namespace detail {

// Intermediate quantities of the Gram-Schmidt step, shared by plan and its
// reverse pass.
template <typename Scalar>
struct PlanTrace {
  RotationPlan<Scalar> plan;
  Scalar norm_a = 0;
  Scalar norm_b = 0;
  Scalar proj = 0;      // u_a . b
  Scalar norm_w = 0;    // |b - proj u_a|
  Scalar cosine = 0;    // proj / |b| before clamping
  bool clamped = false;
};

template <typename Scalar, typename DA, typename DB>
PlanTrace<Scalar> trace_plan(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.size() != b.size()) throw ShapeError("rotation: a and b differ in dimension");
  if (a.size() < 2) throw ShapeError("rotation: dimension must be at least 2");
  PlanTrace<Scalar> t;
  const Index n = a.size();
  t.plan.u_a = ColVector<Scalar>::Zero(n);
  t.plan.u_b = ColVector<Scalar>::Zero(n);
  t.norm_a = a.norm();
  t.norm_b = b.norm();
  if (!(t.norm_a >= Scalar(kDegenerateNorm)) || !(t.norm_b >= Scalar(kDegenerateNorm))) return t;

  ColVector<Scalar> ua = a.reshaped() / t.norm_a;
  t.proj = ua.dot(b.reshaped());
  ColVector<Scalar> w = b.reshaped() - t.proj * ua;
  t.norm_w = w.norm();
  if (!(t.norm_w >= Scalar(kDegenerateNorm))) return t;

  t.cosine = t.proj / t.norm_b;
  const Scalar lo = Scalar(-1 + kCosineClamp), hi = Scalar(1 - kCosineClamp);
  const Scalar k = std::clamp(t.cosine, lo, hi);
  t.clamped = k != t.cosine;
  t.plan.u_a = std::move(ua);
  t.plan.u_b = w / t.norm_w;
  t.plan.theta = std::acos(k);
  t.plan.degenerate = false;
  return t;
}

}  // namespace detail

/// Orthonormal pair and angle for R(a, b).
template <typename DA, typename DB>
RotationPlan<typename DA::Scalar> plan(const Eigen::MatrixBase<DA>& a,
                                       const Eigen::MatrixBase<DB>& b) {
  return detail::trace_plan<typename DA::Scalar>(a, b).plan;
}

/// Materialized R; identity for degenerate plans.
template <typename Scalar>
SquareMatrix<Scalar> dense_matrix(const RotationPlan<Scalar>& p) {
  const Index n = p.dim();
  SquareMatrix<Scalar> r = SquareMatrix<Scalar>::Identity(n, n);
  if (p.degenerate) return r;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2> basis(n, 2);
  basis.col(0) = p.u_a;
  basis.col(1) = p.u_b;
  Eigen::Matrix<Scalar, 2, 2> mini;
  mini << std::cos(p.theta), -std::sin(p.theta), std::sin(p.theta), std::cos(p.theta);
  r -= basis * basis.transpose();
  r += basis * mini * basis.transpose();
  return r;
}

/// R h without forming R.
template <typename Scalar, typename DH>
ColVector<Scalar> rotate(const RotationPlan<Scalar>& p, const Eigen::MatrixBase<DH>& h) {
  if (h.size() != p.dim()) throw ShapeError("rotate: h does not match plan dimension");
  ColVector<Scalar> out = h.reshaped();
  if (p.degenerate) return out;
  const Scalar c = std::cos(p.theta), s = std::sin(p.theta);
  const Scalar alpha = p.u_a.dot(out), beta = p.u_b.dot(out);
  out += ((c - 1) * alpha - s * beta) * p.u_a + (s * alpha + (c - 1) * beta) * p.u_b;
  return out;
}

/// Applies R to every row of a row-major batch.
template <typename Scalar, typename DH>
SquareMatrix<Scalar> rotate_rows(const RotationPlan<Scalar>& p, const Eigen::MatrixBase<DH>& hs) {
  SquareMatrix<Scalar> out(hs.rows(), hs.cols());
  for (Index i = 0; i < hs.rows(); ++i) out.row(i) = rotate(p, hs.row(i)).transpose();
  return out;
}

namespace detail {

// out = prev * R(plan); `out` may not alias `prev`.
template <typename Scalar, typename DP, typename DO>
void compose_right_into(const Eigen::MatrixBase<DP>& prev, const RotationPlan<Scalar>& p,
                        const Eigen::MatrixBase<DO>& out_) {
  auto& out = const_cast<Eigen::MatrixBase<DO>&>(out_);
  out = prev;
  if (p.degenerate) return;
  const Scalar c = std::cos(p.theta), s = std::sin(p.theta);
  const ColVector<Scalar> pa = prev * p.u_a;
  const ColVector<Scalar> pb = prev * p.u_b;
  out.noalias() += ((c - 1) * pa + s * pb) * p.u_a.transpose();
  out.noalias() += ((c - 1) * pb - s * pa) * p.u_b.transpose();
}

}  // namespace detail

/// prev * R(plan) via the rank-2 structure of R; O(N^2).
template <typename Scalar, typename DP>
SquareMatrix<Scalar> compose_right(const Eigen::MatrixBase<DP>& prev, const RotationPlan<Scalar>& p) {
  if (prev.rows() != prev.cols() || prev.cols() != p.dim())
    throw ShapeError("compose_right: prev must be square and match the plan");
  SquareMatrix<Scalar> out(prev.rows(), prev.cols());
  detail::compose_right_into(prev, p, out);
  return out;
}

// ---------------------------------------------------------------------------
// Reverse-mode helpers. Each takes the same inputs as its forward counterpart
// plus the upstream gradient and returns vector-Jacobian products.

template <typename Scalar>
struct PlanInputGrad {
  ColVector<Scalar> a;
  ColVector<Scalar> b;
};

/// Pulls gradients w.r.t. (u_a, u_b, theta) back to (a, b).
template <typename Scalar, typename DA, typename DB>
PlanInputGrad<Scalar> plan_backward(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                                    const ColVector<Scalar>& g_ua, const ColVector<Scalar>& g_ub,
                                    Scalar g_theta) {
  const auto t = detail::trace_plan<Scalar>(a, b);
  const Index n = a.size();
  PlanInputGrad<Scalar> g{ColVector<Scalar>::Zero(n), ColVector<Scalar>::Zero(n)};
  if (t.plan.degenerate) return g;
  const auto& ua = t.plan.u_a;
  const auto& ub = t.plan.u_b;
  const ColVector<Scalar> bv = b.reshaped();

  // theta = acos(clamp(proj / |b|))
  const Scalar g_k =
      t.clamped ? Scalar(0) : -g_theta / std::sqrt(Scalar(1) - t.cosine * t.cosine);
  Scalar g_proj = g_k / t.norm_b;
  g.b -= (g_k * t.proj / (t.norm_b * t.norm_b * t.norm_b)) * bv;

  // u_b = w / |w|,  w = b - proj u_a
  const ColVector<Scalar> g_w = (g_ub - g_ub.dot(ub) * ub) / t.norm_w;
  ColVector<Scalar> g_ua_total = g_ua - t.proj * g_w;
  g.b += g_w;
  g_proj -= g_w.dot(ua);

  // proj = u_a . b
  g_ua_total += g_proj * bv;
  g.b += g_proj * ua;

  // u_a = a / |a|
  g.a = (g_ua_total - g_ua_total.dot(ua) * ua) / t.norm_a;
  return g;
}

template <typename Scalar>
struct RotateGrad {
  ColVector<Scalar> a;
  ColVector<Scalar> b;
  ColVector<Scalar> h;
};

template <typename Scalar, typename DA, typename DB, typename DH, typename DG>
RotateGrad<Scalar> rotate_backward(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                                   const Eigen::MatrixBase<DH>& h, const Eigen::MatrixBase<DG>& g) {
  const auto p = plan(a, b);
  const Index n = a.size();
  const ColVector<Scalar> gv = g.reshaped();
  if (p.degenerate) return {ColVector<Scalar>::Zero(n), ColVector<Scalar>::Zero(n), gv};
  const ColVector<Scalar> hv = h.reshaped();
  const auto& ua = p.u_a;
  const auto& ub = p.u_b;
  const Scalar c = std::cos(p.theta), s = std::sin(p.theta);
  const Scalar alpha = ua.dot(hv), beta = ub.dot(hv);
  const Scalar ga = ua.dot(gv), gb = ub.dot(gv);

  RotateGrad<Scalar> out;
  // R^T g
  out.h = gv + ((c - 1) * ga + s * gb) * ua + ((c - 1) * gb - s * ga) * ub;
  const ColVector<Scalar> g_ua = (c - 1) * (ga * hv + alpha * gv) + s * (gb * hv - beta * gv);
  const ColVector<Scalar> g_ub = (c - 1) * (gb * hv + beta * gv) + s * (alpha * gv - ga * hv);
  const Scalar g_theta = -s * (alpha * ga + beta * gb) + c * (alpha * gb - beta * ga);
  auto pg = plan_backward<Scalar>(a, b, g_ua, g_ub, g_theta);
  out.a = std::move(pg.a);
  out.b = std::move(pg.b);
  return out;
}

template <typename Scalar>
struct ComposeGrad {
  SquareMatrix<Scalar> prev;
  ColVector<Scalar> a;
  ColVector<Scalar> b;
};

namespace detail {

// Writes G R^T into `g_prev_` and returns the (a, b) gradients. Every product
// is a matrix-vector product.
template <typename Scalar, typename DP, typename DA, typename DB, typename DG, typename DO>
PlanInputGrad<Scalar> compose_right_backward_into(const Eigen::MatrixBase<DP>& prev,
                                                  const Eigen::MatrixBase<DA>& a,
                                                  const Eigen::MatrixBase<DB>& b,
                                                  const Eigen::MatrixBase<DG>& g,
                                                  const Eigen::MatrixBase<DO>& g_prev_) {
  auto& g_prev = const_cast<Eigen::MatrixBase<DO>&>(g_prev_);
  const auto p = plan(a, b);
  const Index n = a.size();
  g_prev = g;
  if (p.degenerate) return {ColVector<Scalar>::Zero(n), ColVector<Scalar>::Zero(n)};
  const auto& ua = p.u_a;
  const auto& ub = p.u_b;
  const Scalar c = std::cos(p.theta), s = std::sin(p.theta);

  const ColVector<Scalar> g_ua_vec = g * ua;
  const ColVector<Scalar> g_ub_vec = g * ub;
  const ColVector<Scalar> pa = prev * ua;
  const ColVector<Scalar> pb = prev * ub;

  g_prev.noalias() += ((c - 1) * g_ua_vec - s * g_ub_vec) * ua.transpose();
  g_prev.noalias() += ((c - 1) * g_ub_vec + s * g_ua_vec) * ub.transpose();

  // With M = prev^T G, only M u and M^T u are needed.
  const ColVector<Scalar> m_ua = prev.transpose() * g_ua_vec;
  const ColVector<Scalar> m_ub = prev.transpose() * g_ub_vec;
  const ColVector<Scalar> mt_ua = g.transpose() * pa;
  const ColVector<Scalar> mt_ub = g.transpose() * pb;

  const Scalar q_aa = pa.dot(g_ua_vec), q_bb = pb.dot(g_ub_vec);
  const Scalar q_ba = pb.dot(g_ua_vec), q_ab = pa.dot(g_ub_vec);
  const Scalar g_theta = -s * (q_aa + q_bb) + c * (q_ba - q_ab);
  const ColVector<Scalar> g_ua = (c - 1) * (m_ua + mt_ua) + s * (mt_ub - m_ub);
  const ColVector<Scalar> g_ub = (c - 1) * (m_ub + mt_ub) + s * (m_ua - mt_ua);
  return plan_backward<Scalar>(a, b, g_ua, g_ub, g_theta);
}

}  // namespace detail

/// Reverse pass of compose_right.
template <typename Scalar, typename DP, typename DA, typename DB, typename DG>
ComposeGrad<Scalar> compose_right_backward(const Eigen::MatrixBase<DP>& prev,
                                           const Eigen::MatrixBase<DA>& a,
                                           const Eigen::MatrixBase<DB>& b,
                                           const Eigen::MatrixBase<DG>& g) {
  ComposeGrad<Scalar> out;
  out.prev.resize(g.rows(), g.cols());
  auto ab = detail::compose_right_backward_into<Scalar>(prev, a, b, g, out.prev);
  out.a = std::move(ab.a);
  out.b = std::move(ab.b);
  return out;
}

// ---------------------------------------------------------------------------
// Batched tensor kernels: row i of each operand belongs to batch element i.

template <typename Scalar>
BasicTensor<Scalar> rotate_batch(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b,
                                 const BasicTensor<Scalar>& h) {
  if (a.rank() != 2 || !(a.shape() == b.shape()) || !(a.shape() == h.shape()))
    throw ShapeError("rotate_batch: operands must share one (batch, n) shape");
  BasicTensor<Scalar> out(h.shape(), uninitialized);
  for (Index i = 0; i < h.shape().rows(); ++i) {
    const auto p = plan(a.matrix().row(i), b.matrix().row(i));
    out.matrix().row(i) = rotate(p, h.matrix().row(i)).transpose();
  }
  out.ensure_finite("rotate");
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> compose_right_batch(const BasicTensor<Scalar>& prev,
                                        const BasicTensor<Scalar>& a,
                                        const BasicTensor<Scalar>& b) {
  const Index n = a.shape().cols();
  if (prev.rank() != 3 || a.rank() != 2 || !(a.shape() == b.shape()) ||
      prev.shape()[0] != a.shape()[0] || prev.shape()[1] != n || prev.shape()[2] != n)
    throw ShapeError("compose_right_batch: expected (batch, n, n) and (batch, n) operands");
  BasicTensor<Scalar> out(prev.shape(), uninitialized);
  for (Index i = 0; i < a.shape().rows(); ++i) {
    const auto p = plan(a.matrix().row(i), b.matrix().row(i));
    detail::compose_right_into(prev.slice(i), p, out.slice(i));
  }
  out.ensure_finite("compose_right");
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> batched_matvec(const BasicTensor<Scalar>& r, const BasicTensor<Scalar>& h) {
  if (r.rank() != 3 || h.rank() != 2 || r.shape()[0] != h.shape()[0] ||
      r.shape()[2] != h.shape()[1])
    throw ShapeError("batched_matvec: shapes " + r.shape().str() + " and " + h.shape().str());
  BasicTensor<Scalar> out(Shape{h.shape()[0], r.shape()[1]}, uninitialized);
  for (Index i = 0; i < h.shape()[0]; ++i)
    out.matrix().row(i).noalias() = h.matrix().row(i) * r.slice(i).transpose();
  out.ensure_finite("batched_matvec");
  return out;
}

}  // namespace rum
