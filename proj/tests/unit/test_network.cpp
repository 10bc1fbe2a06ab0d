// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tokensplat/autodiff/gradcheck.hpp"
#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/errors.hpp"
#include "tokensplat/network/model.hpp"

namespace tokensplat::net {
namespace {

using ad::Tensor;

NetworkConfig tiny(std::size_t n_static = 2, std::size_t n_dynamic = 0) {
  NetworkConfig c;
  c.channels = 16;
  c.heads = 2;
  c.enc_depth = 1;
  c.dec_depth = 2;
  c.patch = 4;
  c.time_dim = 8;
  c.n_static = n_static;
  c.n_dynamic = n_dynamic;
  // Large LayerScale so every residual branch matters numerically.
  c.layerscale_init = 0.5;
  c.head_std = 0.05;
  return c;
}

std::vector<Tensor<double>> images(std::size_t n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01;
  std::vector<Tensor<double>> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(static_cast<std::size_t>(h * w * 3));
    for (auto& x : v) x = u01(rng);
    out.push_back(Tensor<double>::from_values({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 3}, v));
  }
  return out;
}

std::vector<Camera> cameras(std::size_t n, int h, int w) {
  std::vector<Camera> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 0.3 * static_cast<double>(i);
    out.push_back(Camera::look_at({std::sin(a), 0.1, 1 - std::cos(a)}, {0, 0, 1}, {0, -1, 0}, 1.2 * w, 1.2 * w,
                                  w / 2.0, h / 2.0, w, h));
  }
  return out;
}

void fill(Tensor<double>& t, double v) {
  for (auto& x : t.mutable_values()) x = v;
}

void zero_layerscales(Model<double>& m) {
  for (auto& b : m.encoder) fill(b.scale1, 0), fill(b.scale2, 0);
  for (auto& b : m.decoder) fill(b.scale_cross, 0), fill(b.scale_self, 0), fill(b.scale_mlp, 0);
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double d = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

TEST(Patchify, TokenCount) {
  auto cfg = tiny();
  cfg.patch = 8;
  const auto m = Model<double>::create(cfg, 1);
  const auto a = m.patchify_embed(images(2, 32, 32, 1), cameras(2, 32, 32));
  EXPECT_EQ(a.shape(), (ad::Shape{32, 16}));
}

TEST(Patchify, ZeroInputsAndBiasGiveZero) {
  auto m = Model<double>::create(tiny(), 2);
  fill(m.image_embed.bias, 0);
  fill(m.ray_embed.bias, 0);
  // Zero ray weights stand in for zero Plücker inputs.
  fill(m.ray_embed.weight, 0);
  std::vector<Tensor<double>> zero{Tensor<double>::zeros({8, 8, 3})};
  const auto a = m.patchify_embed(zero, cameras(1, 8, 8));
  for (double v : a.values()) EXPECT_EQ(v, 0.0);
}

TEST(Patchify, ViewPermutationPermutesBlocks) {
  const auto m = Model<double>::create(tiny(), 3);
  auto imgs = images(2, 8, 8, 3);
  auto cams = cameras(2, 8, 8);
  const auto a = m.patchify_embed(imgs, cams);
  std::swap(imgs[0], imgs[1]);
  std::swap(cams[0], cams[1]);
  const auto b = m.patchify_embed(imgs, cams);
  const std::size_t block = 4 * 16;
  for (std::size_t i = 0; i < block; ++i) {
    EXPECT_EQ(a[i], b[block + i]);
    EXPECT_EQ(a[block + i], b[i]);
  }
}

TEST(Patchify, IndivisibleImageThrows) {
  const auto m = Model<double>::create(tiny(), 4);
  EXPECT_THROW(m.patchify_embed(images(1, 10, 8, 4), cameras(1, 10, 8)), ConfigError);
  EXPECT_THROW(tiny().check_image(8, 6), ConfigError);
}

TEST(Encoder, ZeroLayerScaleIsFinalNorm) {
  auto m = Model<double>::create(tiny(), 5);
  zero_layerscales(m);
  const auto a = m.patchify_embed(images(2, 8, 8, 5), cameras(2, 8, 8));
  EXPECT_LE(max_abs_diff(m.encode(a), m.encoder_norm(a)), 1e-15);
}

TEST(Encoder, PreservesShape) {
  const auto m = Model<double>::create(tiny(), 6);
  for (std::size_t n : {1u, 3u}) {
    const auto a = m.patchify_embed(images(n, 8, 8, 6), cameras(n, 8, 8));
    EXPECT_EQ(m.encode(a).shape(), a.shape());
  }
}

TEST(Attention, QkNormLogitsBoundedByTemperature) {
  std::mt19937_64 rng(7);
  const auto q = normal_tensor<double>({2, 5, 8}, 3.0, rng);
  const auto k = normal_tensor<double>({2, 9, 8}, 3.0, rng);
  const auto temp = Tensor<double>::from_values({2}, {2.5, -4.0});
  const auto logits = qk_norm_logits(q, k, temp);
  ASSERT_EQ(logits.shape(), (ad::Shape{2, 5, 9}));
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 45; ++i) EXPECT_LE(std::abs(logits[h * 45 + i]), std::abs(temp[h]) + 1e-12);
}

TEST(Mask, Patterns) {
  const auto full = build_mask(3, 0);
  EXPECT_TRUE(full.all_allowed());
  EXPECT_TRUE(build_mask(0, 3).all_allowed());
  const auto m = build_mask(2, 2);
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(m.at(q, k), q >= 2 || k < 2) << q << "," << k;
  EXPECT_FALSE(m.all_allowed());
}

TEST(TimeEmbed, FeaturesBoundedAndDistinct) {
  for (double t : {0.0, 0.13, 0.5, 1.0}) {
    const auto f = time_features(t, 64);
    ASSERT_EQ(f.size(), 64u);
    for (double v : f) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_DOUBLE_EQ(time_features(0.0, 8)[1], 1.0);
  EXPECT_NEAR(time_features(0.25, 8)[0], 1.0, 1e-15);  // period 1: sin(pi / 2)
  EXPECT_NE(time_features(0.2, 8), time_features(0.3, 8));
}

TEST(TimeEmbed, ZeroProjectionLeavesTokens) {
  auto m = Model<double>::create(tiny(2, 2), 8);
  fill(m.bank.time_proj.weight, 0);
  fill(m.bank.time_proj.bias, 0);
  const auto a = time_embed(m.bank, 0.1), b = time_embed(m.bank, 0.9);
  EXPECT_EQ(max_abs_diff(a, b), 0.0);
  for (std::size_t i = 0; i < 2 * 16; ++i) EXPECT_EQ(a[2 * 16 + i], m.bank.dynamic_tokens[i]);
}

TEST(TimeEmbed, StaticTokensUnchangedDynamicMove) {
  const auto m = Model<double>::create(tiny(2, 2), 9);
  const auto a = time_embed(m.bank, 0.1), b = time_embed(m.bank, 0.9);
  for (std::size_t i = 0; i < 2 * 16; ++i) {
    EXPECT_EQ(a[i], m.bank.static_tokens[i]);
    EXPECT_EQ(b[i], m.bank.static_tokens[i]);
  }
  double diff = 0;
  for (std::size_t i = 2 * 16; i < 4 * 16; ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(Decoder, SharedKvMatchesPerLayerReference) {
  const auto m = Model<double>::create(tiny(2, 2), 10);
  const auto b = m.encode(m.patchify_embed(images(2, 8, 8, 10), cameras(2, 8, 8)));
  const auto tokens = time_embed(m.bank, 0.4);
  const auto mask = build_mask(2, 2);
  const auto shared = m.decode(tokens, m.prepare(b), mask);
  const auto reference = m.decode_per_layer_kv(tokens, b, mask);
  EXPECT_LE(max_abs_diff(shared, reference), 1e-6);
  // Untying a single layer's projections must change the result.
  Rng rng(1);
  std::vector<Linear<double>> ks, vs;
  for (std::size_t l = 0; l < m.decoder.size(); ++l) ks.push_back(m.shared_k), vs.push_back(m.shared_v);
  ks[1] = Linear<double>::create(16, 16, 0.3, rng);
  EXPECT_GT(max_abs_diff(shared, m.decode_per_layer_kv(tokens, b, mask, ks, vs)), 1e-6);
}

TEST(Decoder, ZeroLayerScaleIsIdentity) {
  auto m = Model<double>::create(tiny(2, 1), 11);
  zero_layerscales(m);
  const auto enc = m.encode_views(images(1, 8, 8, 11), cameras(1, 8, 8));
  const auto tokens = time_embed(m.bank, 0.5);
  EXPECT_EQ(max_abs_diff(m.decode(tokens, enc, build_mask(2, 1)), tokens), 0.0);
}

TEST(Decoder, StaticRowsIgnoreDynamicInputs) {
  const auto m = Model<double>::create(tiny(3, 2), 12);
  const auto enc = m.encode_views(images(2, 8, 8, 12), cameras(2, 8, 8));
  const auto mask = build_mask(3, 2);
  const auto tokens = time_embed(m.bank, 0.2);
  std::vector<double> perturbed(tokens.values().begin(), tokens.values().end());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (std::size_t i = 3 * 16; i < perturbed.size(); ++i) perturbed[i] += n01(rng);
  const auto a = m.decode(tokens, enc, mask);
  const auto b = m.decode(Tensor<double>::from_values(tokens.shape(), perturbed), enc, mask);
  double stat = 0, dyn = 0;
  for (std::size_t i = 0; i < 3 * 16; ++i) stat = std::max(stat, std::abs(a[i] - b[i]));
  for (std::size_t i = 3 * 16; i < 5 * 16; ++i) dyn = std::max(dyn, std::abs(a[i] - b[i]));
  EXPECT_LE(stat, 1e-12);
  EXPECT_GT(dyn, 1e-6);
}

TEST(Head, ZeroWeightsPlaceMeansAtOffset) {
  auto m = Model<double>::create(tiny(3), 13);
  fill(m.head.weight, 0);
  fill(m.head.bias, 0);
  const auto g = m.forward(images(1, 8, 8, 13), cameras(1, 8, 8));
  ASSERT_EQ(g.size(), 3 * kGaussiansPerToken);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(g.means[3 * i], 0.0);
    EXPECT_EQ(g.means[3 * i + 1], 0.0);
    EXPECT_EQ(g.means[3 * i + 2], m.config.activation.z_offset);
  }
}

TEST(Head, TokenIdsAndRawShape) {
  const auto m = Model<double>::create(tiny(2, 1), 14);
  const auto ids = m.token_ids();
  ASSERT_EQ(ids.size(), 3 * kGaussiansPerToken);
  EXPECT_EQ(ids.front(), 0);
  EXPECT_EQ(ids[kGaussiansPerToken - 1], 0);
  EXPECT_EQ(ids[kGaussiansPerToken], 1);
  EXPECT_EQ(ids.back(), 2);
  const auto raw = m.regress(Tensor<double>::zeros({3, 16}));
  EXPECT_EQ(raw.shape(), (ad::Shape{3 * kGaussiansPerToken, kGaussianColumns}));
}

TEST(Network, GaussianCountIndependentOfContext) {
  const auto m = Model<double>::create(tiny(2, 1), 15);
  for (std::size_t n : {2u, 4u, 8u}) {
    const auto g = m.forward(images(n, 8, 8, n), cameras(n, 8, 8), 0.5);
    EXPECT_EQ(g.size(), 3 * kGaussiansPerToken);
    EXPECT_EQ(g.token_id, m.token_ids());
  }
  const auto g = m.forward(images(1, 16, 12, 1), cameras(1, 16, 12), 0.5);
  EXPECT_EQ(g.size(), 3 * kGaussiansPerToken);
  NetworkConfig big = tiny(1024);
  EXPECT_EQ(big.n_gaussians(), 65536u);
  big.n_static = 4096;
  EXPECT_EQ(big.n_gaussians(), 262144u);
}

TEST(Network, StaticOnlyIgnoresTime) {
  const auto m = Model<double>::create(tiny(2), 16);
  const auto imgs = images(2, 8, 8, 16);
  const auto cams = cameras(2, 8, 8);
  EXPECT_EQ(m.forward(imgs, cams, 0.2).to_rows(), m.forward(imgs, cams, 0.7).to_rows());
}

TEST(Network, StaticGaussiansConstantAcrossTime) {
  const auto m = Model<double>::create(tiny(2, 2), 17);
  const auto imgs = images(2, 8, 8, 17);
  const auto cams = cameras(2, 8, 8);
  const auto a = m.forward(imgs, cams, 0.0).to_rows();
  const auto b = m.forward(imgs, cams, 1.0).to_rows();
  const std::size_t n = 2 * kGaussiansPerToken * kGaussianColumns;
  double stat = 0, dyn = 0;
  for (std::size_t i = 0; i < n; ++i) stat = std::max(stat, std::abs(a[i] - b[i]));
  for (std::size_t i = n; i < a.size(); ++i) dyn = std::max(dyn, std::abs(a[i] - b[i]));
  EXPECT_LE(stat, 1e-12);
  EXPECT_GT(dyn, 0.0);
}

TEST(Network, InitializationContract) {
  NetworkConfig cfg;  // defaults: 64 static tokens, C = 64
  const auto m = Model<float>::create(cfg, 18);
  auto std_of = [](std::span<const float> v) {
    double s = 0, s2 = 0;
    for (float x : v) s += x, s2 += double(x) * x;
    const double mean = s / v.size();
    return std::sqrt(s2 / v.size() - mean * mean);
  };
  EXPECT_NEAR(std_of(m.bank.static_tokens.values()), 0.01, 0.001);
  EXPECT_NEAR(std_of(m.head.weight.values()), 2e-3, 1e-4);
  for (float v : m.head.bias.values()) EXPECT_EQ(v, 0.0f);
  for (const auto& b : m.encoder)
    for (float v : b.scale1.values()) EXPECT_FLOAT_EQ(v, 1e-5f);
  for (const auto& b : m.decoder)
    for (float v : b.scale_self.values()) EXPECT_FLOAT_EQ(v, 1e-5f);
}

TEST(Network, SeedDeterminesWeights) {
  auto a = Model<double>::create(tiny(2, 1), 19);
  auto b = Model<double>::create(tiny(2, 1), 19);
  auto c = Model<double>::create(tiny(2, 1), 20);
  EXPECT_EQ(parameter_digest(a.parameters()), parameter_digest(b.parameters()));
  EXPECT_NE(parameter_digest(a.parameters()), parameter_digest(c.parameters()));
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
  EXPECT_LT(a.network_parameters().size(), a.parameters().size());
}

TEST(Network, InvalidConfigRejected) {
  auto cfg = tiny();
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny(0, 0);
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny();
  cfg.time_dim = 7;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Bank, GrowCopiesCyclically) {
  auto m = Model<double>::create(tiny(2), 21);
  const auto old = m.bank.static_tokens.clone();
  Rng rng(1);
  grow_bank(m, 5, 1, rng, 0.0);
  EXPECT_EQ(m.bank.n_static(), 5u);
  EXPECT_EQ(m.bank.n_dynamic(), 1u);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(m.bank.static_tokens[j * 16 + c], old[(j % 2) * 16 + c]);
  for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(m.bank.dynamic_tokens[c], old[c]);
  EXPECT_EQ(m.token_ids().size(), 6 * kGaussiansPerToken);
}

TEST(Network, EndToEndGradientSpotCheck) {
  auto m = Model<double>::create(tiny(1, 1), 22);
  const auto imgs = images(1, 8, 8, 22);
  const auto cams = cameras(1, 8, 8);
  auto params = m.parameters();
  std::vector<Tensor<double>> leaves;
  for (auto& p : params) leaves.push_back(*p.tensor);
  set_requires_grad(params, true);
  ad::ScalarFn<double> fn = [&](const std::vector<Tensor<double>>&) {
    return ad::mean(ad::square(m.raw_from(m.encode_views(imgs, cams), 0.3)));
  };
  ad::GradCheckOptions opts;
  opts.rel_tol = 1e-5;
  opts.roundoff_factor = 4;
  opts.max_coords_per_leaf = 5;
  opts.seed = 3;
  const auto report = ad::check_gradients(fn, leaves, opts);
  EXPECT_TRUE(report.passed()) << report.worst;
}

}  // namespace
}  // namespace tokensplat::net
