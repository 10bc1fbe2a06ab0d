// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "tokensplat/tts.hpp"

namespace tokensplat {
namespace {

using ad::Tensor;

net::NetworkConfig tiny_network(std::size_t n_dynamic = 0) {
  net::NetworkConfig c;
  c.channels = 16;
  c.heads = 2;
  c.enc_depth = 1;
  c.dec_depth = 1;
  c.patch = 4;
  c.n_static = 2;
  c.n_dynamic = n_dynamic;
  c.time_dim = 8;
  c.head_std = 0.05;
  return c;
}

SceneSample tiny_scene() {
  SceneSpec s;
  s.seed = 21;
  s.n_static_blobs = 2;
  s.n_views = 8;
  s.image_width = s.image_height = 16;
  return generate_scene(s);
}

std::vector<double> flat(const Tensor<double>& t) { return {t.values().begin(), t.values().end()}; }

TEST(ContextExtend, SameAsForwardAndCountFixed) {
  const auto m = net::Model<double>::create(tiny_network(), 1);
  const auto scene = tiny_scene();
  for (const std::vector<int> cams : {std::vector<int>{0, 4}, std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}}) {
    const auto v = context_views<double>(scene, cams);
    const auto g = context_extend(m, v);
    EXPECT_EQ(g.size(), m.config.n_gaussians());
    EXPECT_EQ(g.to_rows(), m.forward(v.images, v.cameras).to_rows());
  }
}

TEST(TokenTune, ZeroStepsLeavesBank) {
  const auto m = net::Model<double>::create(tiny_network(), 2);
  const auto v = context_views<double>(tiny_scene(), {0, 4});
  TuneConfig cfg;
  cfg.steps = 0;
  const auto r = token_tune(m, v, cfg);
  EXPECT_EQ(flat(r.bank.static_tokens), flat(m.bank.static_tokens));
  EXPECT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.gaussians.to_rows(), m.forward(v.images, v.cameras).to_rows());
}

TEST(TokenTune, FreezesNetworkAndImprovesInputs) {
  auto m = net::Model<double>::create(tiny_network(), 3);
  const auto scene = tiny_scene();
  const auto v = context_views<double>(scene, {0, 2, 4, 6});
  const auto before_net = net::parameter_digest(m.network_parameters());
  const auto before_all = net::parameter_digest(m.parameters());
  TuneConfig cfg;
  cfg.steps = 20;
  cfg.lr = 1e-2;
  const auto r = token_tune(m, v, cfg);
  EXPECT_EQ(net::parameter_digest(m.network_parameters()), before_net);
  EXPECT_EQ(net::parameter_digest(m.parameters()), before_all);
  EXPECT_NE(flat(r.bank.static_tokens), flat(m.bank.static_tokens));
  ASSERT_EQ(r.log.size(), 21u);
  EXPECT_LT(r.best_loss, r.log.front().loss);
  EXPECT_GT(r.log[r.best_step].input_psnr, r.log.front().input_psnr);
  for (const auto& p : m.parameters()) EXPECT_FALSE(p.tensor->requires_grad() && p.tensor->has_grad()) << p.name;
}

TEST(TokenTune, CachedEncodingMatchesRecompute) {
  const auto m = net::Model<double>::create(tiny_network(), 4);
  const auto v = context_views<double>(tiny_scene(), {0, 4});
  TuneConfig cfg;
  cfg.steps = 5;
  cfg.lr = 1e-2;
  const auto a = token_tune(m, v, cfg);
  cfg.recompute_encoding = true;
  const auto b = token_tune(m, v, cfg);
  const auto ra = a.gaussians.to_rows(), rb = b.gaussians.to_rows();
  double d = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) d = std::max(d, std::abs(ra[i] - rb[i]));
  EXPECT_LE(d, 1e-6);
}

TEST(GaussianTune, ZeroStepsIsActivation) {
  std::mt19937_64 rng(5);
  const auto raw = net::normal_tensor<double>({32, kGaussianColumns}, 0.3, rng);
  const ActivationConfig act;
  const auto v = context_views<double>(tiny_scene(), {0, 4});
  TuneConfig cfg;
  cfg.target = TuneTarget::kGaussians;
  cfg.steps = 0;
  const auto r = gaussian_tune(raw, act, v, cfg);
  EXPECT_EQ(r.gaussians.to_rows(), activate(raw, act).to_rows());
}

TEST(GaussianTune, BestSoFarNonIncreasing) {
  const auto scene = tiny_scene();
  const auto m = net::Model<double>::create(tiny_network(), 6);
  const auto v = context_views<double>(scene, {0, 2, 4, 6});
  const auto enc = m.encode_views(v.images, v.cameras);
  const auto raw = m.raw_from(enc, std::nullopt).detach();
  const auto before = flat(raw);
  TuneConfig cfg;
  cfg.target = TuneTarget::kGaussians;
  cfg.steps = 15;
  const auto r = gaussian_tune(raw, m.config.activation, v, cfg);
  EXPECT_EQ(flat(raw), before);
  double best = INFINITY;
  for (const auto& row : r.log) best = std::min(best, row.loss);
  EXPECT_EQ(best, r.best_loss);
  EXPECT_EQ(r.log[r.best_step].loss, r.best_loss);
  EXPECT_LT(r.best_loss, r.log.front().loss);
}

TEST(TokenTune, HeldoutColumnFilled) {
  const auto m = net::Model<double>::create(tiny_network(), 7);
  const auto scene = tiny_scene();
  const auto v = context_views<double>(scene, {0, 4});
  const auto h = context_views<double>(scene, {2});
  TuneConfig cfg;
  cfg.steps = 2;
  const auto r = token_tune(m, v, cfg, &h);
  for (const auto& row : r.log) EXPECT_GT(row.heldout_psnr, 0.0);
}

TEST(TuneConfig, NegativeLrRejected) {
  TuneConfig cfg;
  cfg.lr = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace tokensplat
