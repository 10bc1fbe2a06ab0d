// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tokensplat::io {

struct Image {
  int width = 0, height = 0;
  std::vector<double> pixels;  // H x W x 3 in [0, 1]
};

/// 8-bit value for a [0, 1] intensity: round(clamp(v) * 255).
std::uint8_t quantize(double v);

/// Binary PPM (P6, maxval 255).
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

}  // namespace tokensplat::io
