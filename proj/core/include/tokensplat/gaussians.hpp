// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// The 14-parameter Gaussian primitive.
//
// Raw network outputs and stored Gaussians share one column order:
//   [x, y, z, r, g, b, s1, s2, s3, opacity, q0, q1, q2, q3]
// with q0 the real part of the quaternion.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tokensplat/autodiff/tensor.hpp"

namespace tokensplat {

inline constexpr std::size_t kGaussianColumns = 14;

enum GaussianColumn : std::size_t {
  kColX = 0,
  kColR = 3,
  kColScale = 6,
  kColOpacity = 9,
  kColQuat = 10,
};

struct ActivationConfig {
  double scale_min = 1e-4;
  double scale_max = 1.0;
  double z_offset = 1.0;
  // Added to the raw log-scale before clamping; 0 gives exp(clamp(x)).
  double log_scale_offset = 0.0;
};

/// Activated Gaussians. Every attribute is a tensor so renders and losses
/// can differentiate back to whatever produced them.
template <typename Real>
struct GaussianSet {
  ad::Tensor<Real> means;      // (M, 3) world coordinates
  ad::Tensor<Real> colors;     // (M, 3) in [0, 1]
  ad::Tensor<Real> scales;     // (M, 3) positive
  ad::Tensor<Real> opacities;  // (M, 1) in [0, 1]
  ad::Tensor<Real> rotations;  // (M, 4) unit quaternions
  std::vector<std::int32_t> token_id;  // emitting token per row, empty if unknown

  std::size_t size() const { return means.defined() ? means.shape()[0] : 0; }

  static GaussianSet empty();
  /// Builds constant tensors from M x 14 activated rows in canonical order.
  static GaussianSet from_rows(std::span<const double> rows, std::vector<std::int32_t> token_id = {});
  /// M x 14 activated rows in canonical order.
  std::vector<double> to_rows() const;
  GaussianSet detach() const;

  /// Throws NumericError naming the first row that violates the domain
  /// constraints (colours/opacity in [0,1], scale in bounds, unit quaternion).
  void validate(const ActivationConfig& config, double tolerance = 1e-6) const;
};

/// Maps raw (M, 14) outputs onto the attribute domains:
///   mean   = sign(x) (exp|x| - 1), then z += z_offset
///   colour = opacity = (tanh(x) + 1) / 2
///   scale  = exp(clamp(x, ln s_min, ln s_max))
///   rotation = x / |x|, or (1, 0, 0, 0) when |x| < 1e-8
/// Throws NumericError identifying the first non-finite entry.
template <typename Real>
GaussianSet<Real> activate(const ad::Tensor<Real>& raw, const ActivationConfig& config,
                           std::vector<std::int32_t> token_id = {});

/// Quaternion row normalisation with identity fallback below 1e-8.
template <typename Real>
ad::Tensor<Real> normalize_quaternions(const ad::Tensor<Real>& q);

/// Rotation matrix of a quaternion (w, x, y, z); exact for unit inputs.
Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& q);

/// R(q) diag(s)^2 R(q)^T.
Eigen::Matrix3d covariance(const Eigen::Vector4d& q, const Eigen::Vector3d& s);

extern template struct GaussianSet<float>;
extern template struct GaussianSet<double>;

}  // namespace tokensplat
