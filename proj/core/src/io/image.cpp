// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/io/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tokensplat/errors.hpp"

namespace tokensplat::io {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  while (true) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int header_int(std::istream& in, const std::string& path) {
  const auto tok = header_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used == tok.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw IoError(path + ": bad PPM header field '" + tok + "'");
}

}  // namespace

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_ppm(const std::string& path, const Image& image) {
  const auto n = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height) * 3;
  if (image.width <= 0 || image.height <= 0 || image.pixels.size() != n) {
    throw ConfigError("write_ppm: image size does not match " + std::to_string(image.width) + "x" +
                      std::to_string(image.height));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<char> bytes(n);
  for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<char>(quantize(image.pixels[i]));
  out.write(bytes.data(), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed: '" + path + "'");
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  if (header_token(in) != "P6") throw IoError(path + ": not a binary PPM");
  Image image;
  image.width = header_int(in, path);
  image.height = header_int(in, path);
  if (header_int(in, path) != 255) throw IoError(path + ": only maxval 255 is supported");
  const auto n = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height) * 3;
  std::vector<unsigned char> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw IoError(path + ": truncated pixel data");
  image.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) image.pixels[i] = bytes[i] / 255.0;
  return image;
}

}  // namespace tokensplat::io
