// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Photometric losses, the frustum visibility penalty and image metrics.

#pragma once

#include <span>
#include <vector>

#include "tokensplat/autodiff/tensor.hpp"
#include "tokensplat/camera.hpp"

namespace tokensplat {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrCap = 100.0;

struct LossWeights {
  double ssim = 0.2;
  double vis = 1.0;
  double vis_clip = 1.0;
  bool vis_normalize = false;  // mean instead of sum over Gaussians

  void validate() const;
};

template <typename Real>
struct LossTerms {
  ad::Tensor<Real> total;
  ad::Tensor<Real> mse;
  ad::Tensor<Real> ssim;  // 1 - mean SSIM
  ad::Tensor<Real> vis;
};

/// Normalized 1D Gaussian window of kSsimWindow taps.
std::vector<double> ssim_window();

/// Separable Gaussian blur of an (H, W, C) image without padding; output is
/// (H - 10, W - 10, C).
template <typename Real>
ad::Tensor<Real> gaussian_blur_valid(const ad::Tensor<Real>& image);

template <typename Real>
ad::Tensor<Real> mse_loss(const ad::Tensor<Real>& pred, const ad::Tensor<Real>& target);

template <typename Real>
ad::Tensor<Real> ssim_loss(const ad::Tensor<Real>& pred, const ad::Tensor<Real>& target);

/// Sum (or mean) over Gaussians of min(min_i penalty_i, clip), where
/// penalty_i = relu(|u~|-1) + relu(|v~|-1) in camera i, or clip when the
/// mean is behind camera i.
template <typename Real>
ad::Tensor<Real> visibility_loss(const ad::Tensor<Real>& means, std::span<const Camera> cameras, double clip,
                                 bool normalize = false);

/// preds and targets are per supervised view; vis_cameras drive the
/// visibility term. Photometric terms are averaged over views.
template <typename Real>
LossTerms<Real> total_loss(std::span<const ad::Tensor<Real>> preds, std::span<const ad::Tensor<Real>> targets,
                           const ad::Tensor<Real>& means, std::span<const Camera> vis_cameras,
                           const LossWeights& weights);

/// 10 log10(1 / MSE), capped at 100 dB.
double psnr(std::span<const double> pred, std::span<const double> target);
/// Mean SSIM of two (H, W, C) images.
double ssim(std::span<const double> pred, std::span<const double> target, int height, int width, int channels);

template <typename Real>
double psnr(const ad::Tensor<Real>& pred, const ad::Tensor<Real>& target);
template <typename Real>
double ssim(const ad::Tensor<Real>& pred, const ad::Tensor<Real>& target);

/// Fraction of means that fall outside every camera's frustum.
double outside_fraction(std::span<const double> means_xyz, std::span<const Camera> cameras);

#define TOKENSPLAT_EXTERN_LOSSES(Real)                                                                           \
  extern template ad::Tensor<Real> gaussian_blur_valid(const ad::Tensor<Real>&);                                 \
  extern template ad::Tensor<Real> mse_loss(const ad::Tensor<Real>&, const ad::Tensor<Real>&);                   \
  extern template ad::Tensor<Real> ssim_loss(const ad::Tensor<Real>&, const ad::Tensor<Real>&);                  \
  extern template ad::Tensor<Real> visibility_loss(const ad::Tensor<Real>&, std::span<const Camera>, double, bool); \
  extern template LossTerms<Real> total_loss(std::span<const ad::Tensor<Real>>, std::span<const ad::Tensor<Real>>, \
                                             const ad::Tensor<Real>&, std::span<const Camera>, const LossWeights&); \
  extern template double psnr(const ad::Tensor<Real>&, const ad::Tensor<Real>&);                                 \
  extern template double ssim(const ad::Tensor<Real>&, const ad::Tensor<Real>&);
TOKENSPLAT_EXTERN_LOSSES(float)
TOKENSPLAT_EXTERN_LOSSES(double)
#undef TOKENSPLAT_EXTERN_LOSSES

}  // namespace tokensplat
