// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable Gaussian splatting.
//
// Each Gaussian is projected with the local affine (EWA) approximation of the
// pinhole model, culled to a 3-sigma pixel box, sorted front to back and
// alpha-composited per pixel. The render is a single autodiff node whose
// backward pass produces gradients for means, rotations, scales, opacities
// and colours.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tokensplat/camera.hpp"
#include "tokensplat/gaussians.hpp"

namespace tokensplat {

struct RenderConfig {
  std::array<double, 3> background{0.0, 0.0, 0.0};
  double alpha_min = 1.0 / 255.0;  // contributions below this are skipped
  double alpha_max = 0.999;        // per-splat opacity cap
  double dilation = 0.3;           // pixels^2 added to the 2D covariance diagonal
  double transmittance_stop = 1e-4;
  // Stop compositing a pixel once transmittance drops below
  // transmittance_stop. Gradient checks turn this off.
  bool early_stop = true;

  void validate() const;
};

struct ProjectedGaussian {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();  // pixel coordinates
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();   // includes dilation
  double depth = 0;
  bool behind = false;
  bool degenerate = false;  // det(cov) <= 1e-12
};

/// cov2d = J W Sigma W^T J^T + dilation I, with W the world-to-camera
/// rotation and J the pinhole Jacobian at the camera-space mean.
ProjectedGaussian project_gaussian(const Eigen::Vector3d& mean, const Eigen::Matrix3d& cov3d, const Camera& camera,
                                   double dilation);

template <typename Real>
struct RenderOutput {
  ad::Tensor<Real> image;              // (H, W, 3)
  std::vector<double> transmittance;   // H * W, final transmittance per pixel
  std::vector<std::uint8_t> visible;   // per Gaussian: contributed to at least one pixel
  std::vector<std::uint8_t> excluded;  // per Gaussian: behind the camera or degenerate
};

template <typename Real>
RenderOutput<Real> render(const GaussianSet<Real>& gaussians, const Camera& camera, const RenderConfig& config);

extern template RenderOutput<float> render(const GaussianSet<float>&, const Camera&, const RenderConfig&);
extern template RenderOutput<double> render(const GaussianSet<double>&, const Camera&, const RenderConfig&);

}  // namespace tokensplat
