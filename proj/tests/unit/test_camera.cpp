// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include <Eigen/Geometry>

#include "tokensplat/camera.hpp"
#include "tokensplat/errors.hpp"

namespace tokensplat {
namespace {

Camera pinhole(double f, double c, int size) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = c;
  cam.width = cam.height = size;
  return cam;
}

Camera random_camera(std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  const Eigen::Quaterniond q(Eigen::Vector4d(n01(rng), n01(rng), n01(rng), n01(rng)).normalized());
  Camera cam = pinhole(20 + 5 * std::abs(n01(rng)), 8, 16);
  cam.rotation = q.toRotationMatrix();
  cam.translation = Eigen::Vector3d(n01(rng), n01(rng), n01(rng));
  return cam;
}

TEST(Plucker, IdentityPosePrincipalPixel) {
  // The principal point (8, 8) is the centre of pixel (7.5, 7.5); use an odd
  // offset so pixel (8, 8)'s centre is the principal point.
  Camera cam = pinhole(16, 8.5, 16);
  const auto map = plucker_rays(cam);
  const auto d = map.direction(8, 8);
  const auto m = map.moment(8, 8);
  EXPECT_NEAR((d - Eigen::Vector3d(0, 0, 1)).norm(), 0, 1e-12);
  EXPECT_NEAR(m.norm(), 0, 1e-12);
}

TEST(Plucker, TranslatedCameraMoment) {
  Camera cam = pinhole(16, 8.5, 16);
  cam.translation = {1, 0, 0};
  const auto map = plucker_rays(cam);
  EXPECT_NEAR((map.direction(8, 8) - Eigen::Vector3d(0, 0, 1)).norm(), 0, 1e-12);
  EXPECT_NEAR((map.moment(8, 8) - Eigen::Vector3d(0, -1, 0)).norm(), 0, 1e-12);
}

TEST(Plucker, DirectionOrthogonalToMoment) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto cam = random_camera(rng);
    const auto map = plucker_rays(cam);
    ASSERT_EQ(map.values.size(), 16u * 16u * 6u);
    for (int v = 0; v < 16; ++v)
      for (int u = 0; u < 16; ++u) {
        EXPECT_NEAR(map.direction(u, v).dot(map.moment(u, v)), 0, 1e-12);
        EXPECT_NEAR(map.direction(u, v).norm(), 1, 1e-12);
      }
  }
}

TEST(Plucker, CovariantUnderRigidTransform) {
  std::mt19937_64 rng(2);
  const auto cam = random_camera(rng);
  Eigen::Isometry3d g = Eigen::Isometry3d::Identity();
  g.linear() = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  g.translation() = Eigen::Vector3d(0.3, -1.2, 2.0);
  const auto moved = transform_camera(cam, g);
  const auto a = plucker_rays(cam);
  const auto b = plucker_rays(moved);
  for (int v = 0; v < 16; v += 3)
    for (int u = 0; u < 16; u += 3) {
      const Eigen::Vector3d d = g.linear() * a.direction(u, v);
      const Eigen::Vector3d o = g * cam.center();
      EXPECT_NEAR((b.direction(u, v) - d).norm(), 0, 1e-12);
      EXPECT_NEAR((b.moment(u, v) - o.cross(d)).norm(), 0, 1e-12);
      EXPECT_NEAR(b.direction(u, v).dot(b.moment(u, v)), 0, 1e-12);
    }
}

TEST(Project, PrincipalAxis) {
  const auto p = project_point({0, 0, 1}, pinhole(32, 16, 32));
  EXPECT_DOUBLE_EQ(p.u, 16);
  EXPECT_DOUBLE_EQ(p.v, 16);
  EXPECT_DOUBLE_EQ(p.depth, 1);
  EXPECT_FALSE(p.behind);
}

TEST(Project, PinholeFormula) {
  const auto p = project_point({0.5, 0, 1}, pinhole(32, 16, 32));
  EXPECT_DOUBLE_EQ(p.u, 32);
}

TEST(Project, BehindCamera) {
  EXPECT_TRUE(project_point({0, 0, -1}, pinhole(32, 16, 32)).behind);
  EXPECT_TRUE(project_point({0, 0, 0}, pinhole(32, 16, 32)).behind);
}

TEST(Project, BatchMatchesSinglePoints) {
  const std::vector<double> pts{0, 0, 1, 0.5, 0, 1, 0, 0, -1};
  const auto cam = pinhole(32, 16, 32);
  const auto out = project(pts, cam);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_DOUBLE_EQ(out[1].u, 32);
  EXPECT_TRUE(out[2].behind);
}

TEST(NormalizeCoords, Examples) {
  EXPECT_DOUBLE_EQ(normalize_coords(16, 0, 32, 32).u, 0);
  EXPECT_DOUBLE_EQ(normalize_coords(0, 0, 32, 32).u, -1);
  EXPECT_DOUBLE_EQ(normalize_coords(32, 0, 32, 32).u, 1);
  EXPECT_DOUBLE_EQ(normalize_coords(40, 0, 32, 32).u, 1.5);
  EXPECT_DOUBLE_EQ(normalize_coords(0, 32, 32, 32).v, 1);
}

TEST(NormalizeCoords, InsideFrustumMapsIntoUnitSquare) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u01;
  const auto cam = random_camera(rng);
  int inside = 0;
  for (int i = 0; i < 2000; ++i) {
    // Sample a pixel and a depth, back-project, then project again.
    const double u = u01(rng) * cam.width, v = u01(rng) * cam.height, z = 0.1 + 5 * u01(rng);
    const Eigen::Vector3d pc((u - cam.cx) / cam.fx * z, (v - cam.cy) / cam.fy * z, z);
    const Eigen::Vector3d world = cam.rotation * pc + cam.translation;
    const auto p = project_point(world, cam);
    ASSERT_FALSE(p.behind);
    const auto n = normalize_coords(p.u, p.v, cam.width, cam.height);
    EXPECT_LE(std::abs(n.u), 1 + 1e-12);
    EXPECT_LE(std::abs(n.v), 1 + 1e-12);
    ++inside;
  }
  EXPECT_EQ(inside, 2000);
}

TEST(Camera, ValidateRejectsBadInputs) {
  Camera cam = pinhole(32, 16, 32);
  EXPECT_NO_THROW(cam.validate());
  cam.fx = 0;
  EXPECT_THROW(cam.validate(), ConfigError);
  cam = pinhole(32, 16, 32);
  cam.rotation(0, 0) = 2;
  EXPECT_THROW(cam.validate(), ConfigError);
  cam = pinhole(32, 16, 32);
  cam.width = 0;
  EXPECT_THROW(cam.validate(), ConfigError);
}

TEST(Camera, LookAtPointsAtTarget) {
  const auto cam = Camera::look_at({1, 0, 0}, {0, 0, 1}, {0, -1, 0}, 20, 20, 8, 8, 16, 16);
  const auto p = project_point({0, 0, 1}, cam);
  EXPECT_NEAR(p.u, 8, 1e-12);
  EXPECT_NEAR(p.v, 8, 1e-12);
  EXPECT_NEAR((cam.rotation.transpose() * cam.rotation - Eigen::Matrix3d::Identity()).norm(), 0, 1e-12);
}

}  // namespace
}  // namespace tokensplat
