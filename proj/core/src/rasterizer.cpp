// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "tokensplat/errors.hpp"
#include "tokensplat/parallel.hpp"

namespace tokensplat {

namespace {

constexpr int kTileSize = 8;
constexpr double kDegenerateDet = 1e-12;
constexpr double kCullSigmas = 3.0;

struct Splat {
  bool active = false;
  Eigen::Vector3d p_cam;
  Eigen::Matrix3d rot;        // R(q)
  Eigen::Vector3d scale;
  Eigen::Matrix3d cov_cam;    // W Sigma W^T
  Eigen::Matrix<double, 2, 3> jac;
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d conic;      // inverse of the dilated 2D covariance
  double opacity = 0;
  Eigen::Vector3d color;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel box
};

struct RenderState {
  Camera camera;
  RenderConfig config;
  std::vector<Splat> splats;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<std::uint32_t>> tiles;  // Gaussian indices, front to back
  std::vector<double> final_t;
  std::vector<std::uint32_t> processed;           // per pixel: tile-list entries visited
};

Eigen::Matrix<double, 2, 3> pinhole_jacobian(const Eigen::Vector3d& p, const Camera& cam) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0, -cam.fx * p.x() * iz * iz,
       0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return j;
}

// Opacity of splat s at pixel centre (px, py); negative when the pixel is
// outside the cull box. `clamped` reports the alpha_max cap.
inline double splat_alpha(const Splat& s, double px, double py, int ix, int iy, double alpha_max, double& gauss,
                          bool& clamped, Eigen::Vector2d& d) {
  if (ix < s.x0 || ix > s.x1 || iy < s.y0 || iy > s.y1) return -1;
  d = Eigen::Vector2d(px, py) - s.mean2d;
  const double power = -0.5 * (s.conic(0, 0) * d.x() * d.x() + 2 * s.conic(0, 1) * d.x() * d.y() +
                               s.conic(1, 1) * d.y() * d.y());
  gauss = std::exp(power);
  const double a = s.opacity * gauss;
  clamped = a > alpha_max;
  return clamped ? alpha_max : a;
}

std::array<Eigen::Matrix3d, 4> rotation_partials(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Eigen::Matrix3d, 4> d;
  d[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  d[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  d[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  d[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  return d;
}

template <typename Real>
void check_set(const GaussianSet<Real>& g) {
  const std::size_t m = g.size();
  auto expect = [&](const ad::Tensor<Real>& t, std::size_t width, const char* name) {
    if (!t.defined() || t.rank() != 2 || t.shape()[0] != m || t.shape()[1] != width) {
      throw ShapeError(std::string("render: attribute '") + name + "' has shape " +
                       (t.defined() ? ad::shape_string(t.shape()) : std::string("undefined")));
    }
  };
  if (m == 0 && !g.means.defined()) return;
  expect(g.means, 3, "means");
  expect(g.rotations, 4, "rotations");
  expect(g.scales, 3, "scales");
  expect(g.opacities, 1, "opacities");
  expect(g.colors, 3, "colors");
}

}  // namespace

void RenderConfig::validate() const {
  if (!(alpha_min > 0 && alpha_min < alpha_max && alpha_max <= 1)) {
    throw ConfigError("render: require 0 < alpha_min < alpha_max <= 1");
  }
  if (!(dilation >= 0)) throw ConfigError("render: dilation must be non-negative");
  if (!(transmittance_stop >= 0 && transmittance_stop < 1)) throw ConfigError("render: require 0 <= T_stop < 1");
  for (double c : background) {
    if (!(c >= 0 && c <= 1)) throw ConfigError("render: background must lie in [0,1]");
  }
}

ProjectedGaussian project_gaussian(const Eigen::Vector3d& mean, const Eigen::Matrix3d& cov3d, const Camera& camera,
                                   double dilation) {
  ProjectedGaussian out;
  const Eigen::Vector3d p = camera.to_camera(mean);
  out.depth = p.z();
  if (p.z() <= kDepthEpsilon) {
    out.behind = true;
    return out;
  }
  const Eigen::Matrix3d w = camera.world_to_camera_rotation();
  const auto j = pinhole_jacobian(p, camera);
  out.cov = j * (w * cov3d * w.transpose()) * j.transpose() + dilation * Eigen::Matrix2d::Identity();
  out.mean = {camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy};
  out.degenerate = !(out.cov.determinant() > kDegenerateDet);
  return out;
}

template <typename Real>
RenderOutput<Real> render(const GaussianSet<Real>& gaussians, const Camera& camera, const RenderConfig& config) {
  config.validate();
  camera.validate();
  check_set(gaussians);
  const std::size_t m = gaussians.size();
  const int width = camera.width, height = camera.height;
  const std::size_t pixels = static_cast<std::size_t>(width) * height;

  auto state = std::make_shared<RenderState>();
  state->camera = camera;
  state->config = config;
  state->splats.resize(m);
  RenderOutput<Real> out;
  out.visible.assign(m, 0);
  out.excluded.assign(m, 0);

  const Eigen::Matrix3d world_to_cam = camera.world_to_camera_rotation();
  std::vector<std::uint32_t> order;
  order.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    Splat& s = state->splats[i];
    const Real* mu = gaussians.means.values().data() + 3 * i;
    const Real* q = gaussians.rotations.values().data() + 4 * i;
    const Real* sc = gaussians.scales.values().data() + 3 * i;
    const Real* col = gaussians.colors.values().data() + 3 * i;
    s.p_cam = world_to_cam * (Eigen::Vector3d(mu[0], mu[1], mu[2]) - camera.center());
    s.opacity = gaussians.opacities.values()[i];
    s.color = {col[0], col[1], col[2]};
    if (s.p_cam.z() <= kDepthEpsilon) {
      out.excluded[i] = 1;
      continue;
    }
    s.rot = quaternion_to_rotation(Eigen::Vector4d(q[0], q[1], q[2], q[3]));
    s.scale = {sc[0], sc[1], sc[2]};
    const Eigen::Matrix3d mm = s.rot * s.scale.asDiagonal();
    s.cov_cam = world_to_cam * (mm * mm.transpose()) * world_to_cam.transpose();
    s.jac = pinhole_jacobian(s.p_cam, camera);
    const Eigen::Matrix2d cov2d =
        s.jac * s.cov_cam * s.jac.transpose() + config.dilation * Eigen::Matrix2d::Identity();
    const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
    if (!(det > kDegenerateDet)) {
      out.excluded[i] = 1;
      continue;
    }
    s.conic << cov2d(1, 1) / det, -cov2d(0, 1) / det, -cov2d(1, 0) / det, cov2d(0, 0) / det;
    s.mean2d = {camera.fx * s.p_cam.x() / s.p_cam.z() + camera.cx, camera.fy * s.p_cam.y() / s.p_cam.z() + camera.cy};
    const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
    const double lambda = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = kCullSigmas * std::sqrt(lambda);
    if (!std::isfinite(radius) || !s.mean2d.allFinite()) continue;
    const double lo_x = std::max(s.mean2d.x() - radius - 0.5, -1.0);
    const double hi_x = std::min(s.mean2d.x() + radius - 0.5, static_cast<double>(width));
    const double lo_y = std::max(s.mean2d.y() - radius - 0.5, -1.0);
    const double hi_y = std::min(s.mean2d.y() + radius - 0.5, static_cast<double>(height));
    s.x0 = std::max(0, static_cast<int>(std::ceil(lo_x)));
    s.x1 = std::min(width - 1, static_cast<int>(std::floor(hi_x)));
    s.y0 = std::max(0, static_cast<int>(std::ceil(lo_y)));
    s.y1 = std::min(height - 1, static_cast<int>(std::floor(hi_y)));
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;
    s.active = true;
    order.push_back(static_cast<std::uint32_t>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return state->splats[a].p_cam.z() < state->splats[b].p_cam.z();
  });

  state->tiles_x = (width + kTileSize - 1) / kTileSize;
  state->tiles_y = (height + kTileSize - 1) / kTileSize;
  state->tiles.assign(static_cast<std::size_t>(state->tiles_x) * state->tiles_y, {});
  for (std::uint32_t idx : order) {
    const Splat& s = state->splats[idx];
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty)
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx)
        state->tiles[static_cast<std::size_t>(ty) * state->tiles_x + tx].push_back(idx);
  }

  state->final_t.assign(pixels, 1.0);
  state->processed.assign(pixels, 0);
  std::vector<Real> image(pixels * 3);
  const int workers = thread_count();
  std::vector<std::vector<std::uint8_t>> seen(static_cast<std::size_t>(workers), std::vector<std::uint8_t>(m, 0));
  const bool early = config.early_stop;
  parallel_for(0, static_cast<std::size_t>(height), [&](std::size_t row_begin, std::size_t row_end, int worker) {
    auto& vis = seen[static_cast<std::size_t>(worker)];
    for (std::size_t py = row_begin; py < row_end; ++py) {
      for (int px = 0; px < width; ++px) {
        const std::size_t pix = py * width + px;
        const auto& list = state->tiles[(py / kTileSize) * state->tiles_x + px / kTileSize];
        double t = 1.0;
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        std::uint32_t k = 0;
        for (; k < list.size(); ++k) {
          const Splat& s = state->splats[list[k]];
          double gauss = 0;
          bool clamped = false;
          Eigen::Vector2d d;
          const double a = splat_alpha(s, px + 0.5, py + 0.5, px, static_cast<int>(py), config.alpha_max, gauss,
                                       clamped, d);
          if (a < config.alpha_min) continue;
          c += s.color * (a * t);
          t *= 1.0 - a;
          vis[list[k]] = 1;
          if (early && t < config.transmittance_stop) {
            ++k;
            break;
          }
        }
        state->processed[pix] = k;
        state->final_t[pix] = t;
        for (int ch = 0; ch < 3; ++ch) image[pix * 3 + ch] = static_cast<Real>(c[ch] + t * config.background[ch]);
      }
    }
  });
  for (const auto& vis : seen)
    for (std::size_t i = 0; i < m; ++i) out.visible[i] |= vis[i];
  out.transmittance = state->final_t;

  std::vector<ad::Tensor<Real>> inputs;
  if (m) inputs = {gaussians.means, gaussians.rotations, gaussians.scales, gaussians.opacities, gaussians.colors};
  const ad::Shape shape{static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3};
  out.image = ad::make_result<Real>("render", shape, std::move(image), std::move(inputs), [state](ad::Node<Real>& self) {
    const Camera& cam = state->camera;
    const RenderConfig& cfg = state->config;
    const int w = cam.width, h = cam.height;
    const std::size_t count = state->splats.size();
    // Per-Gaussian accumulators in image space.
    std::vector<Eigen::Vector2d> g_mean2d(count, Eigen::Vector2d::Zero());
    std::vector<Eigen::Matrix2d> g_conic(count, Eigen::Matrix2d::Zero());
    std::vector<double> g_opacity(count, 0.0);
    std::vector<Eigen::Vector3d> g_color(count, Eigen::Vector3d::Zero());
    const Real* grad = self.grad.data();
    const Eigen::Vector3d bg(cfg.background[0], cfg.background[1], cfg.background[2]);

    for (int py = 0; py < h; ++py) {
      for (int px = 0; px < w; ++px) {
        const std::size_t pix = static_cast<std::size_t>(py) * w + px;
        const Eigen::Vector3d dc(grad[pix * 3], grad[pix * 3 + 1], grad[pix * 3 + 2]);
        if (dc.isZero()) continue;
        const auto& list = state->tiles[static_cast<std::size_t>(py / kTileSize) * state->tiles_x + px / kTileSize];
        double t = state->final_t[pix];
        Eigen::Vector3d behind = t * bg;  // colour composited behind the current splat
        for (std::uint32_t k = state->processed[pix]; k-- > 0;) {
          const std::uint32_t idx = list[k];
          const Splat& s = state->splats[idx];
          double gauss = 0;
          bool clamped = false;
          Eigen::Vector2d d;
          const double a = splat_alpha(s, px + 0.5, py + 0.5, px, py, cfg.alpha_max, gauss, clamped, d);
          if (a < cfg.alpha_min) continue;
          const double t_here = t / (1.0 - a);
          g_color[idx] += dc * (a * t_here);
          const double g_alpha = t_here * s.color.dot(dc) - behind.dot(dc) / (1.0 - a);
          behind += s.color * (a * t_here);
          t = t_here;
          if (clamped) continue;
          g_opacity[idx] += g_alpha * gauss;
          const double g_power = g_alpha * s.opacity * gauss;
          g_mean2d[idx] += g_power * (s.conic * d);
          g_conic[idx] += (-0.5 * g_power) * (d * d.transpose());
        }
      }
    }

    const bool want_mean = self.inputs[0]->requires_grad;
    const bool want_rot = self.inputs[1]->requires_grad;
    const bool want_scale = self.inputs[2]->requires_grad;
    const bool want_opacity = self.inputs[3]->requires_grad;
    const bool want_color = self.inputs[4]->requires_grad;
    Real* gm = want_mean ? self.inputs[0]->grad_buffer().data() : nullptr;
    Real* gq = want_rot ? self.inputs[1]->grad_buffer().data() : nullptr;
    Real* gs = want_scale ? self.inputs[2]->grad_buffer().data() : nullptr;
    Real* go = want_opacity ? self.inputs[3]->grad_buffer().data() : nullptr;
    Real* gc = want_color ? self.inputs[4]->grad_buffer().data() : nullptr;
    const Real* qv = self.inputs[1]->value.data();
    const Eigen::Matrix3d world_to_cam = cam.world_to_camera_rotation();

    for (std::size_t i = 0; i < count; ++i) {
      const Splat& s = state->splats[i];
      if (!s.active) continue;
      if (gc)
        for (int ch = 0; ch < 3; ++ch) gc[3 * i + ch] += static_cast<Real>(g_color[i][ch]);
      if (go) go[i] += static_cast<Real>(g_opacity[i]);
      if (!gm && !gq && !gs) continue;

      // conic = cov2d^-1
      const Eigen::Matrix2d g_cov2d = -s.conic * g_conic[i] * s.conic;
      const Eigen::Matrix3d g_cov_cam = s.jac.transpose() * g_cov2d * s.jac;
      const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2d * s.jac * s.cov_cam;
      const Eigen::Matrix3d g_sigma = world_to_cam.transpose() * g_cov_cam * world_to_cam;

      if (gq || gs) {
        const Eigen::Matrix3d mm = s.rot * s.scale.asDiagonal();
        const Eigen::Matrix3d g_m = 2.0 * g_sigma * mm;
        if (gs) {
          for (int k = 0; k < 3; ++k) gs[3 * i + k] += static_cast<Real>(g_m.col(k).dot(s.rot.col(k)));
        }
        if (gq) {
          Eigen::Matrix3d g_rot = g_m;
          for (int k = 0; k < 3; ++k) g_rot.col(k) *= s.scale[k];
          const auto partials =
              rotation_partials(Eigen::Vector4d(qv[4 * i], qv[4 * i + 1], qv[4 * i + 2], qv[4 * i + 3]));
          for (int k = 0; k < 4; ++k) gq[4 * i + k] += static_cast<Real>(g_rot.cwiseProduct(partials[k]).sum());
        }
      }
      if (gm) {
        const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
        const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
        const Eigen::Vector2d& gu = g_mean2d[i];
        Eigen::Vector3d g_p;
        g_p.x() = gu.x() * cam.fx * iz + g_jac(0, 2) * (-cam.fx * iz2);
        g_p.y() = gu.y() * cam.fy * iz + g_jac(1, 2) * (-cam.fy * iz2);
        g_p.z() = -gu.x() * cam.fx * x * iz2 - gu.y() * cam.fy * y * iz2 + g_jac(0, 0) * (-cam.fx * iz2) +
                  g_jac(0, 2) * (2 * cam.fx * x * iz3) + g_jac(1, 1) * (-cam.fy * iz2) +
                  g_jac(1, 2) * (2 * cam.fy * y * iz3);
        const Eigen::Vector3d g_mu = world_to_cam.transpose() * g_p;
        for (int k = 0; k < 3; ++k) gm[3 * i + k] += static_cast<Real>(g_mu[k]);
      }
    }
  });
  return out;
}

template RenderOutput<float> render(const GaussianSet<float>&, const Camera&, const RenderConfig&);
template RenderOutput<double> render(const GaussianSet<double>&, const Camera&, const RenderConfig&);

}  // namespace tokensplat
