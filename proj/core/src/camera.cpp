// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/camera.hpp"

#include <cmath>
#include <sstream>

#include "tokensplat/errors.hpp"

namespace tokensplat {

void Camera::validate() const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-6)) {
    std::ostringstream msg;
    msg << "camera: rotation is not orthonormal (max |R^T R - I| = " << ortho << ")";
    throw ConfigError(msg.str());
  }
  if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera: image size must be positive");
  if (!translation.allFinite() || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw ConfigError("camera: non-finite parameters");
  }
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                       double fx, double fy, double cx, double cy, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-12) throw ConfigError("camera: look_at up vector is parallel to the view direction");
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Camera cam;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = down;
  cam.rotation.col(2) = forward;
  cam.translation = eye;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  return cam;
}

Camera transform_camera(const Camera& camera, const Eigen::Isometry3d& world_from_old) {
  Camera out = camera;
  out.rotation = world_from_old.linear() * camera.rotation;
  out.translation = world_from_old * camera.translation;
  return out;
}

Eigen::Vector3d PluckerMap::direction(int u, int v) const {
  const double* p = values.data() + (static_cast<std::size_t>(v) * width + u) * 6;
  return {p[0], p[1], p[2]};
}

Eigen::Vector3d PluckerMap::moment(int u, int v) const {
  const double* p = values.data() + (static_cast<std::size_t>(v) * width + u) * 6;
  return {p[3], p[4], p[5]};
}

PluckerMap plucker_rays(const Camera& camera) {
  camera.validate();
  PluckerMap map;
  map.width = camera.width;
  map.height = camera.height;
  map.values.resize(static_cast<std::size_t>(camera.width) * camera.height * 6);
  const Eigen::Vector3d& origin = camera.center();
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      const Eigen::Vector3d local((u + 0.5 - camera.cx) / camera.fx, (v + 0.5 - camera.cy) / camera.fy, 1.0);
      const Eigen::Vector3d d = (camera.rotation * local).normalized();
      const Eigen::Vector3d m = origin.cross(d);
      double* p = map.values.data() + (static_cast<std::size_t>(v) * camera.width + u) * 6;
      for (int k = 0; k < 3; ++k) {
        p[k] = d[k];
        p[3 + k] = m[k];
      }
    }
  }
  return map;
}

Projection project_point(const Eigen::Vector3d& world, const Camera& camera) {
  const Eigen::Vector3d p = camera.to_camera(world);
  Projection out;
  out.depth = p.z();
  if (p.z() <= kDepthEpsilon) {
    out.behind = true;
    return out;
  }
  out.u = camera.fx * p.x() / p.z() + camera.cx;
  out.v = camera.fy * p.y() / p.z() + camera.cy;
  return out;
}

std::vector<Projection> project(std::span<const double> points, const Camera& camera) {
  if (points.size() % 3 != 0) throw ConfigError("project: expected an M x 3 array of points");
  std::vector<Projection> out(points.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = project_point({points[3 * i], points[3 * i + 1], points[3 * i + 2]}, camera);
  }
  return out;
}

NormalizedCoords normalize_coords(double u, double v, int width, int height) {
  if (width <= 0 || height <= 0) throw ConfigError("normalize_coords: image size must be positive");
  return {2.0 * (u / width) - 1.0, 2.0 * (v / height) - 1.0};
}

}  // namespace tokensplat
