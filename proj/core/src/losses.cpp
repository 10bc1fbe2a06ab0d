// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/errors.hpp"

namespace tokensplat {

using ad::Tensor;

void LossWeights::validate() const {
  if (!(ssim >= 0 && vis >= 0 && vis_clip >= 0)) throw ConfigError("loss weights must be non-negative");
}

std::vector<double> ssim_window() {
  std::vector<double> w(kSsimWindow);
  double total = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    w[i] = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

template <typename Real>
Tensor<Real> gaussian_blur_valid(const Tensor<Real>& image) {
  if (image.rank() != 3) throw ShapeError("gaussian_blur_valid: expected (H,W,C), got " + ad::shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const std::size_t k = kSsimWindow;
  if (h < k || w < k) {
    throw ShapeError("ssim: image " + ad::shape_string(image.shape()) + " is smaller than the 11x11 window");
  }
  const std::size_t ho = h - k + 1, wo = w - k + 1;
  const auto win = ssim_window();
  // Horizontal then vertical pass.
  std::vector<double> tmp(h * wo * c, 0.0);
  const auto in = image.values();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < wo; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0;
        for (std::size_t t = 0; t < k; ++t) s += win[t] * in[(y * w + x + t) * c + ch];
        tmp[(y * wo + x) * c + ch] = s;
      }
  std::vector<Real> out(ho * wo * c);
  for (std::size_t y = 0; y < ho; ++y)
    for (std::size_t x = 0; x < wo; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0;
        for (std::size_t t = 0; t < k; ++t) s += win[t] * tmp[((y + t) * wo + x) * c + ch];
        out[(y * wo + x) * c + ch] = static_cast<Real>(s);
      }
  return ad::make_result<Real>("gaussian_blur_valid", {ho, wo, c}, std::move(out), {image},
                               [h, w, c, ho, wo, k, win](ad::Node<Real>& self) {
    std::vector<double> gtmp(h * wo * c, 0.0);
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double g = self.grad[(y * wo + x) * c + ch];
          for (std::size_t t = 0; t < k; ++t) gtmp[((y + t) * wo + x) * c + ch] += win[t] * g;
        }
    auto gi = self.inputs[0]->grad_buffer();
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < wo; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double g = gtmp[(y * wo + x) * c + ch];
          for (std::size_t t = 0; t < k; ++t) gi[(y * w + x + t) * c + ch] += static_cast<Real>(win[t] * g);
        }
  });
}

template <typename Real>
Tensor<Real> mse_loss(const Tensor<Real>& pred, const Tensor<Real>& target) {
  if (pred.shape() != target.shape()) ad::throw_shape_error("mse_loss", pred.shape(), target.shape());
  return ad::mean(ad::square(ad::sub(pred, target)));
}

template <typename Real>
Tensor<Real> ssim_loss(const Tensor<Real>& pred, const Tensor<Real>& target) {
  if (pred.shape() != target.shape()) ad::throw_shape_error("ssim_loss", pred.shape(), target.shape());
  const Real c1 = static_cast<Real>(kSsimC1), c2 = static_cast<Real>(kSsimC2);
  const auto mx = gaussian_blur_valid(pred);
  const auto my = gaussian_blur_valid(target);
  const auto mx2 = ad::square(mx), my2 = ad::square(my), mxy = ad::mul(mx, my);
  const auto sx = ad::sub(gaussian_blur_valid(ad::square(pred)), mx2);
  const auto sy = ad::sub(gaussian_blur_valid(ad::square(target)), my2);
  const auto sxy = ad::sub(gaussian_blur_valid(ad::mul(pred, target)), mxy);
  const auto num = ad::mul(ad::add_scalar(ad::mul_scalar(mxy, Real(2)), c1), ad::add_scalar(ad::mul_scalar(sxy, Real(2)), c2));
  const auto den = ad::mul(ad::add_scalar(ad::add(mx2, my2), c1), ad::add_scalar(ad::add(sx, sy), c2));
  // Every channel has the same pixel count, so the global mean is the
  // average of per-channel means.
  return ad::add_scalar(ad::neg(ad::mean(ad::div(num, den))), Real(1));
}

template <typename Real>
Tensor<Real> visibility_loss(const Tensor<Real>& means, std::span<const Camera> cameras, double clip, bool normalize) {
  if (means.rank() != 2 || means.dim(1) != 3) {
    throw ShapeError("visibility_loss: expected (M,3) means, got " + ad::shape_string(means.shape()));
  }
  if (cameras.empty()) throw ConfigError("visibility_loss: at least one supervision camera is required");
  const std::size_t m = means.dim(0);
  const Real clip_r = static_cast<Real>(clip);
  Tensor<Real> best;
  for (const Camera& cam : cameras) {
    // Row vectors: p_cam = (mu - o) R with R camera-to-world.
    std::vector<Real> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) rot[r * 3 + col] = static_cast<Real>(cam.rotation(r, col));
    const auto origin = Tensor<Real>::from_values(
        {1, 3}, {static_cast<Real>(cam.translation.x()), static_cast<Real>(cam.translation.y()),
                 static_cast<Real>(cam.translation.z())});
    const auto pcam = ad::matmul(ad::sub(means, origin), Tensor<Real>::from_values({3, 3}, rot));
    const auto x = ad::slice(pcam, 1, 0, 1), y = ad::slice(pcam, 1, 1, 2), z = ad::slice(pcam, 1, 2, 3);
    std::vector<Real> front(m), back(m);
    for (std::size_t i = 0; i < m; ++i) {
      const bool ok = static_cast<double>(z[i]) > kDepthEpsilon;
      front[i] = ok ? Real(1) : Real(0);
      back[i] = ok ? Real(0) : Real(1);
    }
    const auto kf = Tensor<Real>::from_values({m, 1}, front);
    const auto kb = Tensor<Real>::from_values({m, 1}, back);
    const auto z_safe = ad::add(ad::mul(z, kf), kb);
    const Real w = static_cast<Real>(cam.width), h = static_cast<Real>(cam.height);
    const auto un = ad::add_scalar(ad::mul_scalar(ad::div(x, z_safe), static_cast<Real>(2 * cam.fx) / w),
                                   static_cast<Real>(2 * cam.cx) / w - Real(1));
    const auto vn = ad::add_scalar(ad::mul_scalar(ad::div(y, z_safe), static_cast<Real>(2 * cam.fy) / h),
                                   static_cast<Real>(2 * cam.cy) / h - Real(1));
    const auto penalty = ad::add(ad::relu(ad::add_scalar(ad::abs(un), Real(-1))),
                                 ad::relu(ad::add_scalar(ad::abs(vn), Real(-1))));
    const auto masked = ad::add(ad::mul(penalty, kf), ad::mul_scalar(kb, clip_r));
    best = best.defined() ? ad::minimum(best, masked) : masked;
  }
  const auto per_gaussian = ad::minimum_scalar(best, clip_r);
  return normalize ? ad::mean(per_gaussian) : ad::sum(per_gaussian);
}

template <typename Real>
LossTerms<Real> total_loss(std::span<const Tensor<Real>> preds, std::span<const Tensor<Real>> targets,
                           const Tensor<Real>& means, std::span<const Camera> vis_cameras, const LossWeights& weights) {
  weights.validate();
  if (preds.size() != targets.size() || preds.empty()) {
    throw ShapeError("total_loss: need matching, non-empty prediction and target lists (" +
                     std::to_string(preds.size()) + " vs " + std::to_string(targets.size()) + ")");
  }
  LossTerms<Real> out;
  const Real inv = Real(1) / static_cast<Real>(preds.size());
  for (std::size_t v = 0; v < preds.size(); ++v) {
    const auto mse = mse_loss(preds[v], targets[v]);
    out.mse = out.mse.defined() ? ad::add(out.mse, mse) : mse;
    if (weights.ssim > 0) {
      const auto s = ssim_loss(preds[v], targets[v]);
      out.ssim = out.ssim.defined() ? ad::add(out.ssim, s) : s;
    }
  }
  out.mse = ad::mul_scalar(out.mse, inv);
  out.total = out.mse;
  if (weights.ssim > 0) {
    out.ssim = ad::mul_scalar(out.ssim, inv);
    out.total = ad::add(out.total, ad::mul_scalar(out.ssim, static_cast<Real>(weights.ssim)));
  } else {
    out.ssim = Tensor<Real>::scalar(Real(0));
  }
  if (weights.vis > 0 && means.defined() && means.dim(0) > 0) {
    out.vis = visibility_loss(means, vis_cameras, weights.vis_clip, weights.vis_normalize);
    out.total = ad::add(out.total, ad::mul_scalar(out.vis, static_cast<Real>(weights.vis)));
  } else {
    out.vis = Tensor<Real>::scalar(Real(0));
  }
  return out;
}

double psnr(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) throw ShapeError("psnr: image sizes differ or are empty");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  const double mse = acc / static_cast<double>(pred.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(std::span<const double> pred, std::span<const double> target, int height, int width, int channels) {
  const ad::Shape shape{static_cast<std::size_t>(height), static_cast<std::size_t>(width),
                        static_cast<std::size_t>(channels)};
  ad::NoGradGuard guard;
  const auto p = Tensor<double>::from_values(shape, {pred.begin(), pred.end()});
  const auto t = Tensor<double>::from_values(shape, {target.begin(), target.end()});
  return 1.0 - ssim_loss(p, t).item();
}

namespace {
template <typename Real>
std::vector<double> to_double(const Tensor<Real>& t) {
  return {t.values().begin(), t.values().end()};
}
}  // namespace

template <typename Real>
double psnr(const Tensor<Real>& pred, const Tensor<Real>& target) {
  if (pred.shape() != target.shape()) ad::throw_shape_error("psnr", pred.shape(), target.shape());
  return psnr(to_double(pred), to_double(target));
}

template <typename Real>
double ssim(const Tensor<Real>& pred, const Tensor<Real>& target) {
  if (pred.shape() != target.shape()) ad::throw_shape_error("ssim", pred.shape(), target.shape());
  if (pred.rank() != 3) throw ShapeError("ssim: expected (H,W,C), got " + ad::shape_string(pred.shape()));
  return ssim(to_double(pred), to_double(target), static_cast<int>(pred.dim(0)), static_cast<int>(pred.dim(1)),
              static_cast<int>(pred.dim(2)));
}

double outside_fraction(std::span<const double> means_xyz, std::span<const Camera> cameras) {
  const std::size_t m = means_xyz.size() / 3;
  if (m == 0) return 0;
  std::size_t outside = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Vector3d p(means_xyz[3 * i], means_xyz[3 * i + 1], means_xyz[3 * i + 2]);
    bool inside = false;
    for (const Camera& cam : cameras) {
      const Projection pr = project_point(p, cam);
      if (pr.behind) continue;
      const auto n = normalize_coords(pr.u, pr.v, cam.width, cam.height);
      if (std::abs(n.u) <= 1 && std::abs(n.v) <= 1) {
        inside = true;
        break;
      }
    }
    if (!inside) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(m);
}

#define TOKENSPLAT_INSTANTIATE_LOSSES(Real)                                                                     \
  template Tensor<Real> gaussian_blur_valid(const Tensor<Real>&);                                               \
  template Tensor<Real> mse_loss(const Tensor<Real>&, const Tensor<Real>&);                                     \
  template Tensor<Real> ssim_loss(const Tensor<Real>&, const Tensor<Real>&);                                    \
  template Tensor<Real> visibility_loss(const Tensor<Real>&, std::span<const Camera>, double, bool);            \
  template LossTerms<Real> total_loss(std::span<const Tensor<Real>>, std::span<const Tensor<Real>>,             \
                                      const Tensor<Real>&, std::span<const Camera>, const LossWeights&);        \
  template double psnr(const Tensor<Real>&, const Tensor<Real>&);                                               \
  template double ssim(const Tensor<Real>&, const Tensor<Real>&);
TOKENSPLAT_INSTANTIATE_LOSSES(float)
TOKENSPLAT_INSTANTIATE_LOSSES(double)
#undef TOKENSPLAT_INSTANTIATE_LOSSES

}  // namespace tokensplat
