// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "tokensplat/autodiff/gradcheck.hpp"
#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/errors.hpp"
#include "tokensplat/gaussians.hpp"

namespace tokensplat {
namespace {

using ad::Tensor;

TEST(Activate, ZeroRawOutputs) {
  const auto g = activate(Tensor<double>::zeros({2, kGaussianColumns}), ActivationConfig{});
  const auto rows = g.to_rows();
  const std::vector<double> expect{0, 0, 1, 0.5, 0.5, 0.5, 1, 1, 1, 0.5, 1, 0, 0, 0};
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < kGaussianColumns; ++c) EXPECT_DOUBLE_EQ(rows[r * kGaussianColumns + c], expect[c]);
}

TEST(Activate, LogScaleOffsetShiftsScale) {
  ActivationConfig cfg;
  cfg.log_scale_offset = std::log(0.1);
  const auto g = activate(Tensor<double>::zeros({1, kGaussianColumns}), cfg);
  EXPECT_NEAR(g.scales[0], 0.1, 1e-15);
}

TEST(Activate, ScaleClamped) {
  std::vector<double> raw(kGaussianColumns, 0.0);
  raw[kColScale] = 50;
  raw[kColScale + 1] = -50;
  const auto g = activate(Tensor<double>::from_values({1, kGaussianColumns}, raw), ActivationConfig{});
  EXPECT_DOUBLE_EQ(g.scales[0], 1.0);
  EXPECT_NEAR(g.scales[1], 1e-4, 1e-16);
}

TEST(Activate, TinyQuaternionFallsBackToIdentity) {
  std::vector<double> raw(kGaussianColumns, 0.0);
  raw[kColQuat + 2] = 1e-10;
  const auto g = activate(Tensor<double>::from_values({1, kGaussianColumns}, raw), ActivationConfig{});
  EXPECT_EQ(g.rotations[0], 1.0);
  EXPECT_EQ(g.rotations[3], 0.0);
}

TEST(Activate, NonFiniteInputThrows) {
  std::vector<double> raw(2 * kGaussianColumns, 0.0);
  raw[kGaussianColumns + 4] = std::nan("");
  EXPECT_THROW(activate(Tensor<double>::from_values({2, kGaussianColumns}, raw), ActivationConfig{}), NumericError);
  raw[kGaussianColumns + 4] = INFINITY;
  EXPECT_THROW(activate(Tensor<double>::from_values({2, kGaussianColumns}, raw), ActivationConfig{}), NumericError);
}

TEST(Activate, OutputsInDomain) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  std::vector<double> raw(64 * kGaussianColumns);
  for (auto& v : raw) v = 3 * n01(rng);
  const ActivationConfig cfg;
  const auto g = activate(Tensor<double>::from_values({64, kGaussianColumns}, raw), cfg);
  EXPECT_NO_THROW(g.validate(cfg));
}

TEST(Activate, MonotoneAndOddMean) {
  const ActivationConfig cfg;
  const std::vector<double> xs{-3, -1, -0.2, 0, 0.1, 0.9, 2.5};
  std::vector<double> raw;
  for (double x : xs) {
    std::vector<double> row(kGaussianColumns, x);
    raw.insert(raw.end(), row.begin(), row.end());
  }
  const auto rows = activate(Tensor<double>::from_values({xs.size(), kGaussianColumns}, raw), cfg).to_rows();
  auto at = [&](std::size_t r, std::size_t c) { return rows[r * kGaussianColumns + c]; };
  for (std::size_t r = 1; r < xs.size(); ++r)
    for (std::size_t c : {0, 2, 3, 9}) EXPECT_GT(at(r, c), at(r - 1, c)) << "column " << c;
  // Scale is strictly increasing below the upper clamp at ln 1 = 0.
  for (std::size_t r = 1; r < xs.size() && xs[r] <= 0; ++r) EXPECT_GT(at(r, kColScale), at(r - 1, kColScale));
  // Symmetric inputs map symmetrically about (0, 0, z_offset).
  std::vector<double> pair(2 * kGaussianColumns, 0.0);
  pair[0] = 0.7, pair[1] = -1.3, pair[2] = 0.4;
  pair[kGaussianColumns] = -0.7, pair[kGaussianColumns + 1] = 1.3, pair[kGaussianColumns + 2] = -0.4;
  const auto sym = activate(Tensor<double>::from_values({2, kGaussianColumns}, pair), cfg).to_rows();
  EXPECT_DOUBLE_EQ(sym[0], -sym[kGaussianColumns]);
  EXPECT_DOUBLE_EQ(sym[1], -sym[kGaussianColumns + 1]);
  EXPECT_NEAR(sym[2] - cfg.z_offset, -(sym[kGaussianColumns + 2] - cfg.z_offset), 1e-15);
}

TEST(Activate, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n01;
  std::vector<double> raw(3 * kGaussianColumns);
  for (auto& v : raw) v = 0.5 * n01(rng);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 3; ++k) raw[r * kGaussianColumns + kColScale + k] = -2 + 0.3 * n01(rng);
  std::vector<double> w(3 * kGaussianColumns);
  for (auto& v : w) v = n01(rng);
  auto leaf = Tensor<double>::from_values({3, kGaussianColumns}, raw, true);
  ad::ScalarFn<double> fn = [&](const std::vector<Tensor<double>>& l) {
    const auto g = activate(l[0], ActivationConfig{});
    const auto all = ad::concat<double>({g.means, g.colors, g.scales, g.opacities, g.rotations}, 1);
    return ad::sum(ad::mul(all, Tensor<double>::from_values({3, kGaussianColumns}, w)));
  };
  const auto report = ad::check_gradients(fn, {leaf});
  EXPECT_TRUE(report.passed()) << report.worst;
  EXPECT_LE(report.max_rel_error, 1e-6);
}

TEST(Gaussians, RowsRoundTrip) {
  std::vector<double> rows{0.1, -0.2, 1.5, 0.3, 0.4, 0.5, 0.01, 0.02, 0.03, 0.9, 0.5, 0.5, 0.5, 0.5};
  const auto g = GaussianSet<double>::from_rows(rows, {7});
  EXPECT_EQ(g.size(), 1u);
  EXPECT_EQ(g.to_rows(), rows);
  EXPECT_EQ(g.token_id, std::vector<std::int32_t>{7});
}

TEST(Gaussians, ValidateRejectsOutOfDomain) {
  std::vector<double> rows{0, 0, 1, 1.5, 0.4, 0.5, 0.01, 0.02, 0.03, 0.9, 1, 0, 0, 0};
  EXPECT_THROW(GaussianSet<double>::from_rows(rows).validate(ActivationConfig{}), NumericError);
}

TEST(Covariance, IdentityRotation) {
  const auto s = covariance({1, 0, 0, 0}, {1, 2, 3});
  EXPECT_NEAR((s - Eigen::Vector3d(1, 4, 9).asDiagonal().toDenseMatrix()).norm(), 0, 1e-15);
}

TEST(Covariance, EigenvaluesAreSquaredScales) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> scale(0.01, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector4d q = Eigen::Vector4d(n01(rng), n01(rng), n01(rng), n01(rng)).normalized();
    const Eigen::Vector3d s(scale(rng), scale(rng), scale(rng));
    const Eigen::Matrix3d cov = covariance(q, s);
    EXPECT_NEAR((cov - cov.transpose()).norm(), 0, 1e-15);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    std::array<double, 3> want{s.x() * s.x(), s.y() * s.y(), s.z() * s.z()};
    std::sort(want.begin(), want.end());
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(eig.eigenvalues()[k], want[k], 1e-6);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-15);
  }
}

TEST(Covariance, RotationIsOrthonormal) {
  const Eigen::Vector4d q = Eigen::Vector4d(0.3, -0.5, 0.7, 0.1).normalized();
  const auto r = quaternion_to_rotation(q);
  EXPECT_NEAR((r.transpose() * r - Eigen::Matrix3d::Identity()).norm(), 0, 1e-14);
  EXPECT_NEAR(r.determinant(), 1, 1e-14);
}

}  // namespace
}  // namespace tokensplat
