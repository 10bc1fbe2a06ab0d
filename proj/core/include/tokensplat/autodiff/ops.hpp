// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable primitive operations.
//
// Binary elementwise operations follow numpy broadcasting. Reductions over
// all elements return a rank-0 tensor. Matrix products accumulate in a fixed
// order so a row of the output never depends on how many other rows exist.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tokensplat/autodiff/tensor.hpp"

namespace tokensplat::ad {

// Elementwise binary, broadcasting.
template <typename Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real> Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b);
/// Gradient goes to a where a <= b (ties favour a), else to b.
template <typename Real> Tensor<Real> minimum(const Tensor<Real>& a, const Tensor<Real>& b);
/// Gradient goes to a where a >= b (ties favour a), else to b.
template <typename Real> Tensor<Real> maximum(const Tensor<Real>& a, const Tensor<Real>& b);

// Tensor-scalar.
template <typename Real> Tensor<Real> add_scalar(const Tensor<Real>& a, Real s);
template <typename Real> Tensor<Real> mul_scalar(const Tensor<Real>& a, Real s);
template <typename Real> Tensor<Real> minimum_scalar(const Tensor<Real>& a, Real s);
template <typename Real> Tensor<Real> maximum_scalar(const Tensor<Real>& a, Real s);

// Elementwise unary.
template <typename Real> Tensor<Real> neg(const Tensor<Real>& x);
template <typename Real> Tensor<Real> exp(const Tensor<Real>& x);
template <typename Real> Tensor<Real> log(const Tensor<Real>& x);
template <typename Real> Tensor<Real> tanh(const Tensor<Real>& x);
/// relu'(0) = 0.
template <typename Real> Tensor<Real> relu(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sqrt(const Tensor<Real>& x);
template <typename Real> Tensor<Real> square(const Tensor<Real>& x);
template <typename Real> Tensor<Real> pow(const Tensor<Real>& x, Real exponent);
/// Zero gradient everywhere.
template <typename Real> Tensor<Real> sign(const Tensor<Real>& x);
template <typename Real> Tensor<Real> abs(const Tensor<Real>& x);
/// Gradient 1 on [lo, hi] including the boundaries, 0 outside.
template <typename Real> Tensor<Real> clamp(const Tensor<Real>& x, Real lo, Real hi);

// Reductions.
template <typename Real> Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real> Tensor<Real> mean(const Tensor<Real>& x);
template <typename Real> Tensor<Real> sum(const Tensor<Real>& x, std::size_t axis, bool keepdim = false);
template <typename Real> Tensor<Real> mean(const Tensor<Real>& x, std::size_t axis, bool keepdim = false);

// Layout.
template <typename Real> Tensor<Real> broadcast_to(const Tensor<Real>& x, const Shape& shape);
template <typename Real> Tensor<Real> reshape(const Tensor<Real>& x, const Shape& shape);
template <typename Real> Tensor<Real> permute(const Tensor<Real>& x, const std::vector<std::size_t>& axes);
template <typename Real> Tensor<Real> transpose(const Tensor<Real>& x, std::size_t a0, std::size_t a1);
template <typename Real> Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, std::size_t axis);
/// Half-open range [begin, end) along axis.
template <typename Real> Tensor<Real> slice(const Tensor<Real>& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows of x (axis 0) in the given order; repeated indices accumulate gradient.
template <typename Real> Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> rows);

// Linear algebra and normalisation.
/// (m,k)x(k,n) or batched (b,m,k)x(b,k,n).
template <typename Real> Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
/// Softmax over the last axis.
template <typename Real> Tensor<Real> softmax(const Tensor<Real>& x);
/// Layer normalisation over the last axis with per-channel gain and bias.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps = Real(1e-6));
/// x / max(||x||, eps) over the last axis.
template <typename Real> Tensor<Real> l2_normalize(const Tensor<Real>& x, Real eps = Real(1e-12));

template <typename Real> Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) { return add(a, b); }
template <typename Real> Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) { return sub(a, b); }
template <typename Real> Tensor<Real> operator*(const Tensor<Real>& a, const Tensor<Real>& b) { return mul(a, b); }
template <typename Real> Tensor<Real> operator/(const Tensor<Real>& a, const Tensor<Real>& b) { return div(a, b); }
template <typename Real> Tensor<Real> operator-(const Tensor<Real>& a) { return neg(a); }
template <typename Real> Tensor<Real> operator+(const Tensor<Real>& a, Real s) { return add_scalar(a, s); }
template <typename Real> Tensor<Real> operator*(const Tensor<Real>& a, Real s) { return mul_scalar(a, s); }
template <typename Real> Tensor<Real> operator*(Real s, const Tensor<Real>& a) { return mul_scalar(a, s); }

}  // namespace tokensplat::ad
