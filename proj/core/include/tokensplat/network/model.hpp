// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Encoder-decoder Transformer that maps posed images to a fixed-size set of
// Gaussians through learnable Gaussian tokens.
//
//   images + Plücker rays -> patch embedding -> ViT encoder -> B
//   tokens (+ time embedding for dynamic tokens) -> decoder(B) -> linear head
//   -> 64 raw Gaussians per token -> activate

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tokensplat/camera.hpp"
#include "tokensplat/gaussians.hpp"
#include "tokensplat/network/layers.hpp"

namespace tokensplat::net {

inline constexpr std::size_t kGaussiansPerToken = 64;

struct NetworkConfig {
  std::size_t channels = 64;
  std::size_t enc_depth = 2;
  std::size_t dec_depth = 4;
  std::size_t patch = 8;
  std::size_t heads = 8;
  double mlp_ratio = 4.0;
  std::size_t time_dim = 64;
  std::size_t n_static = 64;
  std::size_t n_dynamic = 0;
  double token_std = 0.01;
  double head_std = 2e-3;
  double weight_std = 0.02;
  double layerscale_init = 1e-5;
  // Raw log-scales start near zero; the offset starts splats at scale 0.1
  // instead of covering the whole image.
  ActivationConfig activation{.log_scale_offset = -2.302585092994046};

  std::size_t n_tokens() const { return n_static + n_dynamic; }
  std::size_t n_gaussians() const { return n_tokens() * kGaussiansPerToken; }
  void validate() const;
  /// Throws ConfigError unless both extents are positive multiples of patch.
  void check_image(int height, int width) const;
};

/// allowed(q, k): static queries see static keys only; dynamic queries see all.
struct AttentionMask {
  std::size_t n_static = 0, n_dynamic = 0;
  std::vector<std::uint8_t> allowed;  // row-major (N_t, N_t)

  std::size_t size() const { return n_static + n_dynamic; }
  bool at(std::size_t query, std::size_t key) const { return allowed[query * size() + key] != 0; }
  bool all_allowed() const;
};

AttentionMask build_mask(std::size_t n_static, std::size_t n_dynamic);

/// Sinusoidal features of t: time_dim / 2 periods spaced geometrically from 1
/// to 1e4; layout [sin(w_0 t), cos(w_0 t), sin(w_1 t), ...] with w = 2 pi / period.
std::vector<double> time_features(double t, std::size_t time_dim);

template <typename Real>
struct TokenBank {
  ad::Tensor<Real> static_tokens;   // (N_s, C), undefined when N_s = 0
  ad::Tensor<Real> dynamic_tokens;  // (N_d, C), undefined when N_d = 0
  Linear<Real> time_proj;           // time_dim -> C

  std::size_t n_static() const { return static_tokens.defined() ? static_tokens.dim(0) : 0; }
  std::size_t n_dynamic() const { return dynamic_tokens.defined() ? dynamic_tokens.dim(0) : 0; }
  std::size_t size() const { return n_static() + n_dynamic(); }
  TokenBank clone() const;
  /// Token embeddings only.
  void collect_tokens(std::vector<ParamRef<Real>>& out);
  void collect(std::vector<ParamRef<Real>>& out);
};

/// T~^D = T^D + Linear(tau(t)); static tokens first. Without dynamic tokens
/// the result does not depend on t.
template <typename Real>
ad::Tensor<Real> time_embed(const TokenBank<Real>& bank, std::optional<double> t);

template <typename Real>
struct EncoderBlock {
  LayerNorm<Real> norm1, norm2;
  SelfAttention<Real> attn;
  Mlp<Real> mlp;
  ad::Tensor<Real> scale1, scale2;  // LayerScale, (C)
};

template <typename Real>
struct DecoderBlock {
  LayerNorm<Real> norm_cross, norm_self, norm_mlp;
  Linear<Real> cross_q, cross_out;
  ad::Tensor<Real> cross_temperature;  // (heads)
  SelfAttention<Real> self_attn;
  Mlp<Real> mlp;
  ad::Tensor<Real> scale_cross, scale_self, scale_mlp;
};

/// Image tokens plus the decoder's shared key/value projections of them.
template <typename Real>
struct Encoding {
  ad::Tensor<Real> tokens;  // B, (N_I, C)
  ad::Tensor<Real> keys;    // (heads, N_I, d), unit-normalized
  ad::Tensor<Real> values;  // (heads, N_I, d)
};

template <typename Real>
struct Model {
  NetworkConfig config;
  Linear<Real> image_embed;  // p*p*3 -> C
  Linear<Real> ray_embed;    // p*p*6 -> C
  std::vector<EncoderBlock<Real>> encoder;
  LayerNorm<Real> encoder_norm;
  Linear<Real> shared_k, shared_v;
  std::vector<DecoderBlock<Real>> decoder;
  Linear<Real> head;  // C -> 64 * 14
  TokenBank<Real> bank;

  static Model create(const NetworkConfig& config, std::uint64_t seed);

  /// Every parameter, bank included, in a fixed order.
  std::vector<ParamRef<Real>> parameters();
  /// Parameters other than the token embeddings.
  std::vector<ParamRef<Real>> network_parameters();
  std::size_t parameter_count();

  /// A: (N_c * H * W / p^2, C), view-major then patch raster order.
  ad::Tensor<Real> patchify_embed(std::span<const ad::Tensor<Real>> images, std::span<const Camera> cameras) const;
  ad::Tensor<Real> encode(const ad::Tensor<Real>& embedded) const;
  Encoding<Real> prepare(const ad::Tensor<Real>& image_tokens) const;
  Encoding<Real> encode_views(std::span<const ad::Tensor<Real>> images, std::span<const Camera> cameras) const;

  ad::Tensor<Real> decode(const ad::Tensor<Real>& tokens, const Encoding<Real>& encoding,
                          const AttentionMask& mask) const;
  /// Decoder that recomputes key/value projections of B in every block from
  /// per-layer weights (tied to the shared ones by default).
  ad::Tensor<Real> decode_per_layer_kv(const ad::Tensor<Real>& tokens, const ad::Tensor<Real>& image_tokens,
                                       const AttentionMask& mask, std::span<const Linear<Real>> layer_k = {},
                                       std::span<const Linear<Real>> layer_v = {}) const;
  /// (N_t, C) -> raw (N_t * 64, 14)
  ad::Tensor<Real> regress(const ad::Tensor<Real>& decoded) const;
  std::vector<std::int32_t> token_ids() const;

  /// Decode from a cached encoding with the current bank.
  GaussianSet<Real> gaussians_from(const Encoding<Real>& encoding, std::optional<double> t) const;
  ad::Tensor<Real> raw_from(const Encoding<Real>& encoding, std::optional<double> t) const;
  GaussianSet<Real> forward(std::span<const ad::Tensor<Real>> images, std::span<const Camera> cameras,
                            std::optional<double> t = std::nullopt) const;
};

/// Resizes the bank: new tokens copy existing ones cyclically (dynamic from
/// dynamic when available, else from static) plus N(0, std^2) noise.
template <typename Real>
void grow_bank(Model<Real>& model, std::size_t n_static, std::size_t n_dynamic, Rng& rng, double noise_std = 0.01);

/// FNV-1a over the raw bytes and names of the given parameters.
template <typename Real>
std::uint64_t parameter_digest(const std::vector<ParamRef<Real>>& params);

template <typename Real>
void set_requires_grad(const std::vector<ParamRef<Real>>& params, bool on);

extern template struct Model<float>;
extern template struct Model<double>;

}  // namespace tokensplat::net
