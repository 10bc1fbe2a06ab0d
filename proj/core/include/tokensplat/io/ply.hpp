// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Gaussian splat PLY files in the layout common 3DGS viewers read: position,
// log-scale, rotation quaternion, logit opacity and DC colour coefficients.

#pragma once

#include <string>
#include <vector>

namespace tokensplat::io {

/// Zeroth-order spherical harmonic constant; f_dc = (c - 0.5) / kShC0.
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kLogitClamp = 15.0;

struct PlyOptions {
  // float32 properties for viewers that reject double; positions then
  // round-trip only to single precision.
  bool single_precision = false;
};

/// Writes M x 14 rows (canonical column order) as binary little-endian PLY.
void export_ply(const std::string& path, const std::vector<double>& rows, const PlyOptions& options = {});
/// Reads a PLY written by export_ply (or any binary little-endian PLY with
/// the same property names) back into M x 14 rows.
std::vector<double> import_ply(const std::string& path);

}  // namespace tokensplat::io
