// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Test-time scaling: more context views through the unchanged forward pass,
// self-supervised tuning of the token embeddings with the network frozen,
// and direct tuning of raw Gaussian parameters as a baseline.

#pragma once

#include <cstdint>
#include <vector>

#include "tokensplat/losses.hpp"
#include "tokensplat/network/model.hpp"
#include "tokensplat/training.hpp"

namespace tokensplat {

enum class TuneTarget { kTokens, kGaussians };

struct TuneConfig {
  TuneTarget target = TuneTarget::kTokens;
  std::size_t steps = 50;
  double lr = 1e-4;
  double gaussian_lr = 5e-3;  // used when target is kGaussians
  double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;
  LossWeights loss;
  RenderConfig render;
  bool recompute_encoding = false;  // re-encode the inputs every step instead of caching B

  void validate() const;
  double effective_lr() const { return target == TuneTarget::kTokens ? lr : gaussian_lr; }
};

struct TuneRow {
  std::size_t step = 0;
  double loss = 0;
  double input_psnr = 0;
  double heldout_psnr = 0;  // 0 when no held-out views were given
};

template <typename Real>
struct TuneResult {
  net::TokenBank<Real> bank;    // token tuning: best bank; gaussian tuning: empty
  ad::Tensor<Real> raw;         // gaussian tuning: best raw matrix
  GaussianSet<Real> gaussians;  // best Gaussians at the first input timestamp
  std::vector<TuneRow> log;     // one row per evaluated state, step 0 is the starting point
  std::size_t best_step = 0;
  double best_loss = 0;
  bool aborted = false;  // stopped on a non-finite loss
};

/// Same code path as forward; the Gaussian count does not depend on the
/// number of views.
template <typename Real>
GaussianSet<Real> context_extend(const net::Model<Real>& model, const ViewBatch<Real>& views,
                                 std::optional<double> t = std::nullopt);

/// Tunes token embeddings on the input views. Network weights are left
/// bitwise unchanged and the model's own bank is not modified.
template <typename Real>
TuneResult<Real> token_tune(const net::Model<Real>& model, const ViewBatch<Real>& inputs, const TuneConfig& config,
                            const ViewBatch<Real>* heldout = nullptr);

/// Tunes a raw (M, 14) Gaussian matrix on the input views.
template <typename Real>
TuneResult<Real> gaussian_tune(const ad::Tensor<Real>& raw, const ActivationConfig& activation,
                               const ViewBatch<Real>& inputs, const TuneConfig& config,
                               const ViewBatch<Real>* heldout = nullptr);

}  // namespace tokensplat
