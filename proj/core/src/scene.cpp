// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "tokensplat/errors.hpp"
#include "tokensplat/gaussians.hpp"

namespace tokensplat {

namespace {

const std::vector<std::array<double, 3>>& default_palette() {
  static const std::vector<std::array<double, 3>> palette{
      {0.90, 0.25, 0.20}, {0.20, 0.70, 0.30}, {0.25, 0.40, 0.90}, {0.95, 0.80, 0.20},
      {0.80, 0.30, 0.80}, {0.20, 0.80, 0.85}, {0.95, 0.55, 0.15}, {0.85, 0.85, 0.85}};
  return palette;
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

Eigen::Vector4d random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Eigen::Vector4d q(n01(rng), n01(rng), n01(rng), n01(rng));
  const double n = q.norm();
  return n < 1e-12 ? Eigen::Vector4d(1, 0, 0, 0) : Eigen::Vector4d(q / n);
}

void push_row(std::vector<double>& rows, const Eigen::Vector3d& mean, const std::array<double, 3>& color,
              const Eigen::Vector3d& scale, double opacity, const Eigen::Vector4d& q) {
  rows.insert(rows.end(), {mean.x(), mean.y(), mean.z(), color[0], color[1], color[2], scale.x(), scale.y(),
                           scale.z(), opacity, q[0], q[1], q[2], q[3]});
}

}  // namespace

Eigen::Vector3d Motion::displacement(double t) const {
  if (kind == MotionKind::kLinear) return t * velocity;
  const double a = angular_speed * t + phase;
  return radius * Eigen::Vector3d(std::cos(a) - std::cos(phase), 0.0, std::sin(a) - std::sin(phase));
}

void SceneSpec::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("scene: " + what); };
  render.validate();
  if (n_static_blobs < 0 || n_dynamic_blobs < 0 || n_static_blobs + n_dynamic_blobs < 1) {
    fail("need at least one blob");
  }
  if (blob_gaussians_min < 1 || blob_gaussians_max < blob_gaussians_min) fail("invalid blob Gaussian count range");
  if (!(blob_radius_min > 0 && blob_radius_max >= blob_radius_min)) fail("invalid blob radius range");
  if (!(splat_scale_min > 0 && splat_scale_max >= splat_scale_min)) fail("invalid splat scale range");
  if (!(scene_radius >= 0)) fail("scene_radius must be non-negative");
  if (!(orbit_radius > scene_radius + 3 * blob_radius_max)) fail("orbit radius must exceed the scene extent");
  if (n_views < 1) fail("need at least one view");
  if (image_width <= 0 || image_height <= 0) fail("image size must be positive");
  if (!(focal_factor > 0)) fail("focal_factor must be positive");
  if (elevation_max_degrees < elevation_min_degrees) fail("invalid elevation range");
  if (timestamps.empty()) fail("need at least one timestamp");
  for (double t : timestamps)
    if (!(t >= 0 && t <= 1)) fail("timestamps must lie in [0, 1]");
  for (const auto& c : palette)
    for (double v : c)
      if (!(v >= 0 && v <= 1)) fail("palette colours must lie in [0, 1]");
}

std::vector<double> SceneSample::rows_at(double t) const {
  std::vector<double> rows = base_rows;
  for (std::size_t i = 0; i < blob.size(); ++i) {
    if (blob[i] < 0) continue;
    const Eigen::Vector3d d = motions[static_cast<std::size_t>(blob[i])].displacement(t);
    for (int k = 0; k < 3; ++k) rows[i * kGaussianColumns + k] += d[k];
  }
  return rows;
}

const SceneView& SceneSample::view(int camera, int time_index) const {
  const auto t_count = static_cast<int>(timestamps.size());
  if (camera < 0 || camera >= static_cast<int>(rig.size()) || time_index < 0 || time_index >= t_count) {
    throw ConfigError("scene: view (" + std::to_string(camera) + ", " + std::to_string(time_index) + ") out of range");
  }
  return views[static_cast<std::size_t>(camera * t_count + time_index)];
}

Camera SceneSample::camera_at(int camera, double t) const {
  Camera c = rig.at(static_cast<std::size_t>(camera));
  c.timestamp = t;
  return c;
}

std::vector<double> SceneSample::oracle_render(const Camera& camera) const {
  ad::NoGradGuard guard;
  const auto g = GaussianSet<double>::from_rows(rows_at(camera.timestamp));
  const auto out = render(g, camera, render_config);
  return {out.image.values().begin(), out.image.values().end()};
}

Eigen::Isometry3d world_from_camera_frame(const Camera& reference) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = reference.rotation.transpose();
  t.translation() = -reference.rotation.transpose() * reference.translation;
  return t;
}

SceneSample generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01;
  std::normal_distribution<double> n01;
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const auto& palette = spec.palette.empty() ? default_palette() : spec.palette;

  SceneSample s;
  s.seed = spec.seed;
  s.width = spec.image_width;
  s.height = spec.image_height;
  s.timestamps = spec.timestamps;
  s.render_config = spec.render;

  // Gaussians in an orbit-centred frame with -y up; the scene centre is the origin.
  std::vector<double> rows;
  const int n_blobs = spec.n_static_blobs + spec.n_dynamic_blobs;
  for (int b = 0; b < n_blobs; ++b) {
    Eigen::Vector3d centre;
    do {
      centre = Eigen::Vector3d(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
    } while (centre.squaredNorm() > 1.0);
    centre *= spec.scene_radius;
    const double radius = uniform(spec.blob_radius_min, spec.blob_radius_max);
    const auto base = palette[static_cast<std::size_t>(rng() % palette.size())];
    const int count = std::uniform_int_distribution<int>(spec.blob_gaussians_min, spec.blob_gaussians_max)(rng);
    const bool dynamic = b >= spec.n_static_blobs;
    for (int i = 0; i < count; ++i) {
      const Eigen::Vector3d mean = centre + radius * Eigen::Vector3d(n01(rng), n01(rng), n01(rng));
      std::array<double, 3> color{};
      for (int k = 0; k < 3; ++k) color[k] = std::clamp(base[k] + 0.08 * n01(rng), 0.02, 0.98);
      const Eigen::Vector3d scale(uniform(spec.splat_scale_min, spec.splat_scale_max),
                                  uniform(spec.splat_scale_min, spec.splat_scale_max),
                                  uniform(spec.splat_scale_min, spec.splat_scale_max));
      push_row(rows, mean, color, scale, uniform(0.6, 0.95), random_quaternion(rng));
      s.blob.push_back(dynamic ? b - spec.n_static_blobs : -1);
    }
    if (dynamic) {
      Motion m;
      m.kind = spec.motion;
      m.velocity = spec.velocity;
      m.radius = spec.circle_radius;
      m.angular_speed = spec.angular_speed;
      m.phase = uniform(0, 2 * std::numbers::pi);
      s.motions.push_back(m);
    }
  }
  if (spec.ground_plane) {
    const int grid = 8;
    const double y = spec.scene_radius + spec.blob_radius_max;
    const double extent = 2.0 * spec.scene_radius;
    for (int gz = 0; gz < grid; ++gz)
      for (int gx = 0; gx < grid; ++gx) {
        const Eigen::Vector3d mean(-extent + 2 * extent * (gx + 0.5) / grid, y,
                                   -extent + 2 * extent * (gz + 0.5) / grid);
        const double g = std::clamp(0.45 + 0.05 * n01(rng), 0.0, 1.0);
        const double step = extent / grid;
        push_row(rows, mean, {g, g, g}, Eigen::Vector3d(step, 0.2 * spec.splat_scale_min, step), 0.9,
                 Eigen::Vector4d(1, 0, 0, 0));
        s.blob.push_back(-1);
      }
  }

  // Cameras on an arc around the origin, looking at it.
  const double fx = spec.focal_factor * spec.image_width;
  const double fy = spec.focal_factor * spec.image_width;
  const double cx = spec.image_width / 2.0, cy = spec.image_height / 2.0;
  const Eigen::Vector3d up(0, -1, 0);
  std::vector<Camera> rig;
  for (int v = 0; v < spec.n_views; ++v) {
    const double frac = spec.n_views > 1 ? static_cast<double>(v) / (spec.n_views - 1) : 0.5;
    const double azimuth = deg(-spec.arc_degrees / 2 + spec.arc_degrees * frac);
    const double elevation = deg(uniform(spec.elevation_min_degrees, spec.elevation_max_degrees));
    const Eigen::Vector3d eye = spec.orbit_radius * Eigen::Vector3d(std::sin(azimuth) * std::cos(elevation),
                                                                    -std::sin(elevation),
                                                                    -std::cos(azimuth) * std::cos(elevation));
    rig.push_back(Camera::look_at(eye, Eigen::Vector3d::Zero(), up, fx, fy, cx, cy, spec.image_width,
                                  spec.image_height));
  }

  // Rebase so the first camera is the identity.
  const Eigen::Isometry3d world_from_old = world_from_camera_frame(rig.front());
  const Eigen::Quaterniond rot(world_from_old.linear());
  for (auto& cam : rig) {
    cam = transform_camera(cam, world_from_old);
    cam.rotation.col(0).normalize();
    cam.rotation.col(1).normalize();
    cam.rotation.col(2).normalize();
  }
  rig.front().rotation = Eigen::Matrix3d::Identity();
  rig.front().translation = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < rows.size() / kGaussianColumns; ++i) {
    double* r = rows.data() + i * kGaussianColumns;
    const Eigen::Vector3d p = world_from_old * Eigen::Vector3d(r[0], r[1], r[2]);
    const Eigen::Quaterniond q = rot * Eigen::Quaterniond(r[10], r[11], r[12], r[13]);
    r[0] = p.x(), r[1] = p.y(), r[2] = p.z();
    r[10] = q.w(), r[11] = q.x(), r[12] = q.y(), r[13] = q.z();
  }
  s.base_rows = std::move(rows);
  s.rig = rig;

  for (int c = 0; c < spec.n_views; ++c) {
    for (std::size_t k = 0; k < s.timestamps.size(); ++k) {
      SceneView v;
      v.camera_index = c;
      v.time_index = static_cast<int>(k);
      v.camera = s.camera_at(c, s.timestamps[k]);
      v.image = s.oracle_render(v.camera);
      s.views.push_back(std::move(v));
    }
  }
  return s;
}

SceneSplit sample_context_target(int n_views, int n_context, int n_target, std::mt19937_64& rng) {
  if (n_context < 1 || n_target < 0 || n_context + n_target > n_views) {
    throw ConfigError("split: cannot take " + std::to_string(n_context) + " context and " + std::to_string(n_target) +
                      " target views from " + std::to_string(n_views));
  }
  SceneSplit split;
  std::vector<std::uint8_t> used(static_cast<std::size_t>(n_views), 0);
  for (int i = 0; i < n_context; ++i) {
    const int idx = static_cast<int>((static_cast<long long>(i) * n_views) / n_context);
    split.context.push_back(idx);
    used[static_cast<std::size_t>(idx)] = 1;
  }
  std::vector<int> rest;
  for (int i = 0; i < n_views; ++i)
    if (!used[static_cast<std::size_t>(i)]) rest.push_back(i);
  // Partial Fisher-Yates with an explicit draw so results do not depend on
  // the standard library's shuffle.
  for (int i = 0; i < n_target; ++i) {
    const auto span = static_cast<std::uint64_t>(rest.size() - static_cast<std::size_t>(i));
    const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng() % span);
    std::swap(rest[static_cast<std::size_t>(i)], rest[j]);
  }
  split.target.assign(rest.begin(), rest.begin() + n_target);
  std::sort(split.target.begin(), split.target.end());
  return split;
}

SceneSplit fixed_split(int n_views, int n_context, int n_target) {
  std::mt19937_64 unused(0);
  SceneSplit split = sample_context_target(n_views, n_context, 0, unused);
  std::vector<std::uint8_t> used(static_cast<std::size_t>(n_views), 0);
  for (int c : split.context) used[static_cast<std::size_t>(c)] = 1;
  for (int i = 0; i < n_views; ++i) {
    if (used[static_cast<std::size_t>(i)]) continue;
    if (n_target >= 0 && static_cast<int>(split.target.size()) >= n_target) break;
    split.target.push_back(i);
  }
  return split;
}

}  // namespace tokensplat
