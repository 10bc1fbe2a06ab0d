// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Pinhole cameras, per-pixel Plücker rays and projection to the image plane.
//
// Conventions: the pose is camera-to-world; the camera looks down +z with x
// to the right and y down; pixel (u, v) has its centre at (u + 0.5, v + 0.5).

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tokensplat {

/// Points at or below this camera-space depth count as behind the camera.
inline constexpr double kDepthEpsilon = 1e-6;

struct Camera {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // camera-to-world
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();   // camera centre in world
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 1, height = 1;
  double timestamp = 0;

  const Eigen::Vector3d& center() const { return translation; }
  Eigen::Matrix3d world_to_camera_rotation() const { return rotation.transpose(); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation.transpose() * (world - translation);
  }

  /// Throws ConfigError on a non-orthonormal rotation, non-positive focal
  /// lengths or empty image.
  void validate() const;

  /// Camera at `eye` looking at `target`; `up` fixes the roll (image y is down).
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                        double fx, double fy, double cx, double cy, int width, int height);
};

/// Applies a rigid world transform to a camera pose.
Camera transform_camera(const Camera& camera, const Eigen::Isometry3d& world_from_old);

/// Per-pixel (direction, moment) rays, stored row-major as H x W x 6.
struct PluckerMap {
  int width = 0, height = 0;
  std::vector<double> values;

  Eigen::Vector3d direction(int u, int v) const;
  Eigen::Vector3d moment(int u, int v) const;
};

/// Unit direction through each pixel centre and moment m = o x d.
PluckerMap plucker_rays(const Camera& camera);

struct Projection {
  double u = 0, v = 0;  // pixel coordinates, valid only when !behind
  double depth = 0;     // camera-space z
  bool behind = false;
};

Projection project_point(const Eigen::Vector3d& world, const Camera& camera);

/// Projects M points given as a flat M x 3 array.
std::vector<Projection> project(std::span<const double> points, const Camera& camera);

/// Maps pixel coordinates to [-1, 1] across the image: 2 u / W - 1.
struct NormalizedCoords {
  double u = 0, v = 0;
};
NormalizedCoords normalize_coords(double u, double v, int width, int height);

}  // namespace tokensplat
