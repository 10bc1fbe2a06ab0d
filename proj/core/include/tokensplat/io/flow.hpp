// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Per-Gaussian trajectories from a dynamic model. Row i of the output at one
// timestamp corresponds to row i at every other timestamp.

#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tokensplat/network/model.hpp"

namespace tokensplat::io {

struct FlowRow {
  std::size_t gaussian_index = 0;
  std::int32_t token_id = 0;
  double t = 0;
  double x = 0, y = 0, z = 0;
  double opacity = 0;
};

/// One decode per timestamp from a single encoding of the inputs; rows are
/// timestamp-major. Throws ConfigError without dynamic tokens or with fewer
/// than two timestamps.
template <typename Real>
std::vector<FlowRow> export_flow(const net::Model<Real>& model, std::span<const ad::Tensor<Real>> images,
                                 std::span<const Camera> cameras, const std::vector<double>& timestamps);

void write_flow_csv(std::ostream& out, const std::vector<FlowRow>& rows);

struct FlowSummary {
  std::size_t count = 0;            // Gaussians that passed the filter
  Eigen::Vector3d mean_displacement = Eigen::Vector3d::Zero();
  double cosine = 0;                // against the reference direction
};

/// Mean displacement from the first to the last timestamp of Gaussians from
/// dynamic tokens (id >= n_static) whose opacity at the first timestamp
/// exceeds `min_opacity`.
FlowSummary summarize_flow(const std::vector<FlowRow>& rows, std::size_t n_static, const Eigen::Vector3d& reference,
                           double min_opacity = 0.5);

}  // namespace tokensplat::io
