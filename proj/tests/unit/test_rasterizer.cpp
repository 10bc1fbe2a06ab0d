// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>

#include "tokensplat/autodiff/gradcheck.hpp"
#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/rasterizer.hpp"

namespace tokensplat {
namespace {

using ad::Tensor;

Camera test_camera(int w = 16, int h = 16) {
  Camera cam;
  cam.fx = cam.fy = 20;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

GaussianSet<double> one_gaussian(Eigen::Vector3d mean, double scale, double opacity, Eigen::Vector3d color) {
  std::vector<double> row{mean.x(), mean.y(), mean.z(), color.x(), color.y(), color.z(), scale, scale, scale,
                          opacity, 1, 0, 0, 0};
  return GaussianSet<double>::from_rows(row);
}

TEST(Rasterizer, EmptySetRendersBackground) {
  RenderConfig cfg;
  cfg.background = {0.2, 0.4, 0.6};
  const auto out = render(GaussianSet<double>::empty(), test_camera(), cfg);
  ASSERT_EQ(out.image.shape(), (ad::Shape{16, 16, 3}));
  for (std::size_t i = 0; i < 16 * 16; ++i) {
    EXPECT_DOUBLE_EQ(out.image[3 * i], 0.2);
    EXPECT_DOUBLE_EQ(out.image[3 * i + 2], 0.6);
    EXPECT_DOUBLE_EQ(out.transmittance[i], 1.0);
  }
}

TEST(Rasterizer, SingleGaussianOnPixelCentre) {
  Camera cam = test_camera();
  // Pixel (8, 8) has centre (8.5, 8.5); put the mean there.
  const double z = 2;
  const Eigen::Vector3d mean((8.5 - cam.cx) * z / cam.fx, (8.5 - cam.cy) * z / cam.fy, z);
  const auto g = one_gaussian(mean, 0.05, 0.7, {0.2, 0.5, 0.9});
  const auto out = render(g, cam, RenderConfig{});
  const std::size_t pix = 8 * 16 + 8;
  EXPECT_NEAR(out.image[3 * pix], 0.7 * 0.2, 1e-12);
  EXPECT_NEAR(out.image[3 * pix + 1], 0.7 * 0.5, 1e-12);
  EXPECT_NEAR(out.image[3 * pix + 2], 0.7 * 0.9, 1e-12);
  EXPECT_TRUE(out.visible[0]);
}

TEST(Rasterizer, GradientsMatchFiniteDifferences) {
  Camera cam = test_camera();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const std::size_t m = 4;
  std::vector<double> raw(m * kGaussianColumns);
  for (std::size_t i = 0; i < m; ++i) {
    double* r = raw.data() + i * kGaussianColumns;
    r[0] = 0.25 * n01(rng);
    r[1] = 0.25 * n01(rng);
    r[2] = 0.2 * n01(rng) + 0.5;
    for (int k = 3; k < 6; ++k) r[k] = n01(rng);
    for (int k = 6; k < 9; ++k) r[k] = -2.0 + 0.3 * n01(rng);
    r[9] = n01(rng);
    for (int k = 10; k < 14; ++k) r[k] = n01(rng);
  }
  std::vector<double> target(16 * 16 * 3);
  std::uniform_real_distribution<double> u01;
  for (auto& v : target) v = u01(rng);
  const auto target_t = Tensor<double>::from_values({16, 16, 3}, target);
  auto leaf = Tensor<double>::from_values({m, kGaussianColumns}, raw, true);
  RenderConfig cfg;
  cfg.early_stop = false;
  ad::ScalarFn<double> fn = [&](const std::vector<Tensor<double>>& leaves) {
    const auto g = activate(leaves[0], ActivationConfig{});
    const auto img = render(g, cam, cfg).image;
    return ad::mean(ad::square(ad::sub(img, target_t)));
  };
  ad::GradCheckOptions opts;
  opts.rel_tol = 1e-4;
  const auto report = ad::check_gradients(fn, {leaf}, opts);
  EXPECT_TRUE(report.passed()) << report.worst << " max rel " << report.max_rel_error;
  EXPECT_EQ(report.checked, m * kGaussianColumns);
}

TEST(ProjectGaussian, IsotropicOnAxis) {
  const Camera cam = test_camera();
  const double z = 2, s = 0.1, dil = 0.3;
  const auto p = project_gaussian({0, 0, z}, Eigen::Matrix3d::Identity() * s * s, cam, dil);
  EXPECT_FALSE(p.behind);
  EXPECT_NEAR(p.mean.x(), cam.cx, 1e-12);
  EXPECT_NEAR(p.mean.y(), cam.cy, 1e-12);
  EXPECT_DOUBLE_EQ(p.depth, z);
  const double var = std::pow(cam.fx * s / z, 2) + dil;
  EXPECT_NEAR(p.cov(0, 0), var, 1e-12);
  EXPECT_NEAR(p.cov(1, 1), var, 1e-12);
  EXPECT_NEAR(p.cov(0, 1), 0, 1e-12);
}

TEST(ProjectGaussian, MatchesJacobianFormula) {
  Camera cam = Camera::look_at({0.4, -0.3, -0.5}, {0.1, 0.2, 2}, {0, -1, 0}, 30, 25, 8, 8, 16, 16);
  const Eigen::Vector3d mean(0.2, 0.1, 1.8);
  const Eigen::Matrix3d cov = covariance(Eigen::Vector4d(0.8, 0.2, -0.3, 0.4).normalized(), {0.05, 0.1, 0.2});
  const auto p = project_gaussian(mean, cov, cam, 0.0);
  const Eigen::Vector3d c = cam.to_camera(mean);
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / c.z(), 0, -cam.fx * c.x() / (c.z() * c.z()), 0, cam.fy / c.z(), -cam.fy * c.y() / (c.z() * c.z());
  const Eigen::Matrix3d w = cam.world_to_camera_rotation();
  const Eigen::Matrix2d want = j * w * cov * w.transpose() * j.transpose();
  EXPECT_NEAR((p.cov - want).norm(), 0, 1e-10);
  EXPECT_NEAR(p.mean.x(), cam.fx * c.x() / c.z() + cam.cx, 1e-12);
}

TEST(ProjectGaussian, BehindCameraExcluded) {
  const auto p = project_gaussian({0, 0, -1}, Eigen::Matrix3d::Identity() * 0.01, test_camera(), 0.3);
  EXPECT_TRUE(p.behind);
  const auto g = one_gaussian({0, 0, -1}, 0.1, 0.9, {1, 1, 1});
  const auto out = render(g, test_camera(), RenderConfig{});
  EXPECT_TRUE(out.excluded[0]);
  EXPECT_FALSE(out.visible[0]);
  for (std::size_t i = 0; i < 16 * 16 * 3; ++i) EXPECT_EQ(out.image[i], 0.0);
}

TEST(ProjectGaussian, DegenerateCovarianceSkipped) {
  const auto p = project_gaussian({0, 0, 2}, Eigen::Matrix3d::Zero(), test_camera(), 0.0);
  EXPECT_TRUE(p.degenerate);
}

TEST(Rasterizer, TwoGaussiansComposite) {
  Camera cam = test_camera();
  auto on_pixel = [&](double z) {
    return Eigen::Vector3d((8.5 - cam.cx) * z / cam.fx, (8.5 - cam.cy) * z / cam.fy, z);
  };
  const Eigen::Vector3d c1(0.9, 0.1, 0.3), c2(0.2, 0.8, 0.6);
  const double s1 = 0.6, s2 = 0.5;
  std::vector<double> rows;
  for (auto [z, s, c] : {std::tuple{3.0, s2, c2}, std::tuple{2.0, s1, c1}}) {
    const auto m = on_pixel(z);
    rows.insert(rows.end(), {m.x(), m.y(), m.z(), c.x(), c.y(), c.z(), 0.05, 0.05, 0.05, s, 1, 0, 0, 0});
  }
  RenderConfig cfg;
  cfg.background = {0.1, 0.2, 0.3};
  const auto out = render(GaussianSet<double>::from_rows(rows), cam, cfg);
  const std::size_t pix = 8 * 16 + 8;
  for (int k = 0; k < 3; ++k) {
    const double want = s1 * c1[k] + (1 - s1) * s2 * c2[k] + (1 - s1) * (1 - s2) * cfg.background[k];
    EXPECT_NEAR(out.image[3 * pix + k], want, 1e-12);
  }
  EXPECT_NEAR(out.transmittance[pix], (1 - s1) * (1 - s2), 1e-12);
}

std::vector<double> random_rows(std::mt19937_64& rng, std::size_t m) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  std::vector<double> rows;
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Vector4d q = Eigen::Vector4d(n01(rng), n01(rng), n01(rng), n01(rng)).normalized();
    // Distinct depths so the sort order is unambiguous.
    rows.insert(rows.end(), {0.3 * n01(rng), 0.3 * n01(rng), 1.5 + 0.1 * static_cast<double>(i), u01(rng), u01(rng),
                             u01(rng), 0.02 + 0.1 * u01(rng), 0.02 + 0.1 * u01(rng), 0.02 + 0.1 * u01(rng), u01(rng),
                             q[0], q[1], q[2], q[3]});
  }
  return rows;
}

TEST(Rasterizer, OrderInvariant) {
  std::mt19937_64 rng(8);
  const std::size_t m = 12;
  const auto rows = random_rows(rng, m);
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> shuffled;
  for (std::size_t i : perm) shuffled.insert(shuffled.end(), rows.begin() + i * 14, rows.begin() + (i + 1) * 14);
  const auto cam = test_camera();
  const auto a = render(GaussianSet<double>::from_rows(rows), cam, RenderConfig{});
  const auto b = render(GaussianSet<double>::from_rows(shuffled), cam, RenderConfig{});
  for (std::size_t i = 0; i < 16 * 16 * 3; ++i) EXPECT_NEAR(a.image[i], b.image[i], 1e-6);
}

TEST(Rasterizer, EnergyBound) {
  std::mt19937_64 rng(9);
  const auto rows = random_rows(rng, 30);
  RenderConfig cfg;
  cfg.background = {0.3, 0.6, 0.9};
  const auto out = render(GaussianSet<double>::from_rows(rows), test_camera(), cfg);
  for (std::size_t i = 0; i < 16 * 16; ++i) {
    EXPECT_GE(out.transmittance[i], 0.0);
    EXPECT_LE(out.transmittance[i], 1.0);
    for (int k = 0; k < 3; ++k) {
      EXPECT_GE(out.image[3 * i + k], -1e-12);
      EXPECT_LE(out.image[3 * i + k], 1 + 1e-12);
    }
  }
}

TEST(Rasterizer, DeterministicAndFloatAgrees) {
  std::mt19937_64 rng(10);
  const auto rows = random_rows(rng, 10);
  const auto a = render(GaussianSet<double>::from_rows(rows), test_camera(), RenderConfig{});
  const auto b = render(GaussianSet<double>::from_rows(rows), test_camera(), RenderConfig{});
  const auto f = render(GaussianSet<float>::from_rows(rows), test_camera(), RenderConfig{});
  for (std::size_t i = 0; i < 16 * 16 * 3; ++i) {
    EXPECT_EQ(a.image[i], b.image[i]);
    EXPECT_NEAR(a.image[i], f.image[i], 1e-4);
  }
}

}  // namespace
}  // namespace tokensplat
