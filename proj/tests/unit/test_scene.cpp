// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "tokensplat/errors.hpp"
#include "tokensplat/scene.hpp"

namespace tokensplat {
namespace {

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.n_static_blobs = 3;
  s.n_views = 8;
  s.image_width = s.image_height = 16;
  return s;
}

Eigen::Vector3d blob_centroid(const std::vector<double>& rows, const std::vector<std::int32_t>& blob, int id) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  int n = 0;
  for (std::size_t i = 0; i < blob.size(); ++i)
    if (blob[i] == id) c += Eigen::Vector3d(rows[i * 14], rows[i * 14 + 1], rows[i * 14 + 2]), ++n;
  return c / n;
}

TEST(Scene, SameSeedIsBitwiseIdentical) {
  auto spec = small_spec(7);
  spec.n_dynamic_blobs = 1;
  spec.timestamps = {0, 0.5, 1};
  const auto a = generate_scene(spec), b = generate_scene(spec);
  EXPECT_EQ(a.base_rows, b.base_rows);
  ASSERT_EQ(a.views.size(), b.views.size());
  for (std::size_t i = 0; i < a.views.size(); ++i) {
    EXPECT_EQ(a.views[i].image, b.views[i].image);
    EXPECT_EQ(a.views[i].camera.rotation, b.views[i].camera.rotation);
  }
  EXPECT_NE(generate_scene(small_spec(8)).base_rows, a.base_rows);
}

TEST(Scene, StaticSceneConstantAcrossTime) {
  auto spec = small_spec(3);
  spec.timestamps = {0, 0.3, 1};
  const auto s = generate_scene(spec);
  EXPECT_FALSE(s.dynamic());
  EXPECT_EQ(s.rows_at(0.0), s.rows_at(0.3));
  EXPECT_EQ(s.rows_at(0.0), s.rows_at(1.0));
  for (int c = 0; c < 8; ++c) EXPECT_EQ(s.view(c, 0).image, s.view(c, 2).image);
}

TEST(Scene, LinearMotionMovesCentroid) {
  auto spec = small_spec(4);
  spec.n_dynamic_blobs = 1;
  spec.velocity = {0.2, 0, 0};
  spec.timestamps = {0, 1};
  const auto s = generate_scene(spec);
  ASSERT_TRUE(s.dynamic());
  const auto d = blob_centroid(s.rows_at(1), s.blob, 0) - blob_centroid(s.rows_at(0), s.blob, 0);
  EXPECT_NEAR((d - Eigen::Vector3d(0.2, 0, 0)).norm(), 0, 1e-6);
  // Static rows do not move.
  const auto a = s.rows_at(0), b = s.rows_at(1);
  for (std::size_t i = 0; i < s.blob.size(); ++i)
    if (s.blob[i] < 0)
      for (int k = 0; k < 14; ++k) EXPECT_EQ(a[i * 14 + k], b[i * 14 + k]);
}

TEST(Scene, CircularMotionRadius) {
  auto spec = small_spec(5);
  spec.n_dynamic_blobs = 1;
  spec.motion = MotionKind::kCircular;
  spec.timestamps = {0, 0.5};
  const auto s = generate_scene(spec);
  const auto& m = s.motions.at(0);
  for (double t : {0.0, 0.25, 0.7}) {
    const auto c0 = blob_centroid(s.rows_at(0), s.blob, 0);
    const auto ct = blob_centroid(s.rows_at(t), s.blob, 0);
    EXPECT_NEAR(((ct - c0) - (m.displacement(t) - m.displacement(0))).norm(), 0, 1e-9);
  }
}

TEST(Scene, BlobSizesAndDomain) {
  const auto spec = small_spec(6);
  const auto s = generate_scene(spec);
  EXPECT_GE(s.n_gaussians(), 3u * 20u);
  EXPECT_LE(s.n_gaussians(), 3u * 100u);
  EXPECT_EQ(s.rig.size(), 8u);
  EXPECT_EQ(s.views.size(), 8u);
  const auto rows = s.rows_at(0);
  for (std::size_t i = 0; i < s.n_gaussians(); ++i) {
    const double* r = rows.data() + i * 14;
    for (int k = 3; k < 6; ++k) EXPECT_TRUE(r[k] >= 0 && r[k] <= 1);
    EXPECT_TRUE(r[9] >= 0 && r[9] <= 1);
    EXPECT_NEAR(Eigen::Vector4d(r[10], r[11], r[12], r[13]).norm(), 1, 1e-12);
  }
}

TEST(Scene, OracleReproducesStoredViews) {
  auto spec = small_spec(9);
  spec.n_dynamic_blobs = 1;
  spec.timestamps = {0, 0.5};
  const auto s = generate_scene(spec);
  for (const auto& v : s.views) EXPECT_EQ(s.oracle_render(v.camera), v.image);
}

TEST(Scene, InvalidSpecRejected) {
  auto spec = small_spec(1);
  spec.n_static_blobs = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = small_spec(1);
  spec.orbit_radius = 0.1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = small_spec(1);
  spec.timestamps = {1.5};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Split, UniformContext) {
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_context_target(8, 2, 2, rng).context, (std::vector<int>{0, 4}));
  EXPECT_EQ(sample_context_target(8, 4, 4, rng).context, (std::vector<int>{0, 2, 4, 6}));
  EXPECT_EQ(fixed_split(8, 4).target, (std::vector<int>{1, 3, 5, 7}));
  EXPECT_EQ(fixed_split(8, 2, 3).target, (std::vector<int>{1, 2, 3}));
}

TEST(Split, DisjointForAllSeeds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto s = sample_context_target(12, 3, 5, rng);
    std::set<int> all(s.context.begin(), s.context.end());
    all.insert(s.target.begin(), s.target.end());
    EXPECT_EQ(all.size(), 8u);
    for (int v : all) EXPECT_TRUE(v >= 0 && v < 12);
  }
}

TEST(Split, InsufficientViewsThrows) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_context_target(4, 3, 2, rng), ConfigError);
}

}  // namespace
}  // namespace tokensplat
