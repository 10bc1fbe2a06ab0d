// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Transformer building blocks on top of the autodiff tensor.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tokensplat/autodiff/tensor.hpp"

namespace tokensplat::net {

using Rng = std::mt19937_64;

/// Named handle to a parameter tensor owned by a module. `decay` marks
/// parameters that receive decoupled weight decay.
template <typename Real>
struct ParamRef {
  std::string name;
  ad::Tensor<Real>* tensor = nullptr;
  bool decay = true;
};

template <typename Real>
ad::Tensor<Real> normal_tensor(const ad::Shape& shape, double std, Rng& rng);

template <typename Real>
struct Linear {
  ad::Tensor<Real> weight;  // (in, out)
  ad::Tensor<Real> bias;    // (out), undefined when the layer has no bias

  static Linear create(std::size_t in, std::size_t out, double std, Rng& rng, bool with_bias = true);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  ad::Tensor<Real> operator()(const ad::Tensor<Real>& x) const;
  void collect(std::vector<ParamRef<Real>>& out, const std::string& prefix);
};

template <typename Real>
struct LayerNorm {
  ad::Tensor<Real> gain;
  ad::Tensor<Real> bias;

  static LayerNorm create(std::size_t channels);
  ad::Tensor<Real> operator()(const ad::Tensor<Real>& x) const;
  void collect(std::vector<ParamRef<Real>>& out, const std::string& prefix);
};

/// GELU, tanh approximation.
template <typename Real>
ad::Tensor<Real> gelu(const ad::Tensor<Real>& x);

template <typename Real>
struct Mlp {
  Linear<Real> fc1, fc2;

  static Mlp create(std::size_t channels, double ratio, double std, Rng& rng);
  ad::Tensor<Real> operator()(const ad::Tensor<Real>& x) const;
  void collect(std::vector<ParamRef<Real>>& out, const std::string& prefix);
};

/// (N, C) -> (heads, N, C / heads)
template <typename Real>
ad::Tensor<Real> split_heads(const ad::Tensor<Real>& x, std::size_t heads);
/// (heads, N, d) -> (N, heads * d)
template <typename Real>
ad::Tensor<Real> merge_heads(const ad::Tensor<Real>& x);

/// QK-normalized attention. q, k are unit-normalized per head here; logits
/// are scaled by the per-head temperature (heads). `mask_bias` is either
/// undefined or (1, Nq, Nk) with 0 for allowed and -inf for blocked pairs.
/// k_normalized skips re-normalizing keys that were normalized by the caller.
template <typename Real>
ad::Tensor<Real> qk_norm_attention(const ad::Tensor<Real>& q, const ad::Tensor<Real>& k, const ad::Tensor<Real>& v,
                                   const ad::Tensor<Real>& temperature, const ad::Tensor<Real>& mask_bias,
                                   bool k_normalized = false);

/// Attention logits (heads, Nq, Nk) before masking, for inspection.
template <typename Real>
ad::Tensor<Real> qk_norm_logits(const ad::Tensor<Real>& q, const ad::Tensor<Real>& k,
                                const ad::Tensor<Real>& temperature);

template <typename Real>
struct SelfAttention {
  Linear<Real> q, k, v, out;
  ad::Tensor<Real> temperature;  // (heads)
  std::size_t heads = 1;

  static SelfAttention create(std::size_t channels, std::size_t heads, double std, Rng& rng);
  ad::Tensor<Real> operator()(const ad::Tensor<Real>& x, const ad::Tensor<Real>& mask_bias) const;
  void collect(std::vector<ParamRef<Real>>& out, const std::string& prefix);
};

}  // namespace tokensplat::net
