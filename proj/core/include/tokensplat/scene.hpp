// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Procedural multi-view scenes built from clusters of Gaussians and rendered
// with the project's own rasterizer, so every target image has an exact
// Gaussian explanation.

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tokensplat/camera.hpp"
#include "tokensplat/rasterizer.hpp"

namespace tokensplat {

enum class MotionKind { kLinear, kCircular };

struct Motion {
  MotionKind kind = MotionKind::kLinear;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // linear: c(t) = c0 + t v
  double radius = 0;                                   // circular, in the x-z plane
  double angular_speed = 0;                            // radians per unit time
  double phase = 0;

  Eigen::Vector3d displacement(double t) const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_static_blobs = 6;
  int n_dynamic_blobs = 0;
  int blob_gaussians_min = 20;
  int blob_gaussians_max = 100;
  double blob_radius_min = 0.04;
  double blob_radius_max = 0.10;
  double scene_radius = 0.22;  // blob centres lie within this ball
  double splat_scale_min = 0.012;
  double splat_scale_max = 0.035;
  std::vector<std::array<double, 3>> palette;  // empty: built-in palette
  bool ground_plane = false;
  MotionKind motion = MotionKind::kLinear;
  Eigen::Vector3d velocity{0.2, 0.0, 0.0};
  double circle_radius = 0.1;
  double angular_speed = 3.14159265358979323846;
  int n_views = 12;
  double orbit_radius = 1.0;
  double arc_degrees = 90.0;
  double elevation_min_degrees = -10.0;
  double elevation_max_degrees = 10.0;
  int image_width = 32;
  int image_height = 32;
  double focal_factor = 1.2;  // fx = fy = focal_factor * width
  std::vector<double> timestamps{0.0};
  RenderConfig render;  // used for every stored view

  void validate() const;
};

struct SceneView {
  int camera_index = 0;
  int time_index = 0;
  Camera camera;              // timestamp set
  std::vector<double> image;  // H x W x 3 in [0, 1]
};

struct SceneSample {
  std::uint64_t seed = 0;
  int width = 0, height = 0;
  std::vector<double> timestamps;
  std::vector<Camera> rig;          // one per orbit position, world = first camera's frame
  std::vector<SceneView> views;     // camera-major: views[c * T + k] is camera c at timestamps[k]
  std::vector<double> base_rows;    // ground-truth Gaussians at t = 0, M x 14
  std::vector<std::int32_t> blob;   // per row: dynamic blob index, -1 for static rows
  std::vector<Motion> motions;      // per dynamic blob
  RenderConfig render_config;

  std::size_t n_gaussians() const { return base_rows.size() / 14; }
  bool dynamic() const { return !motions.empty(); }
  /// Ground truth at any time in [0, 1].
  std::vector<double> rows_at(double t) const;
  const SceneView& view(int camera, int time_index) const;
  /// Camera c with its timestamp set to t.
  Camera camera_at(int camera, double t) const;
  /// Renders the ground truth for an arbitrary camera.
  std::vector<double> oracle_render(const Camera& camera) const;
};

SceneSample generate_scene(const SceneSpec& spec);

/// Camera indices: context floor(i N / n_c), targets drawn from the rest.
struct SceneSplit {
  std::vector<int> context;
  std::vector<int> target;
};

SceneSplit sample_context_target(int n_views, int n_context, int n_target, std::mt19937_64& rng);
/// Deterministic split: targets are all remaining cameras, or the first n_target of them.
SceneSplit fixed_split(int n_views, int n_context, int n_target = -1);

/// Rotation taking the old world into the frame of `reference`.
Eigen::Isometry3d world_from_camera_frame(const Camera& reference);

}  // namespace tokensplat
