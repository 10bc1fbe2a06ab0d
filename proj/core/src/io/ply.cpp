// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/io/ply.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tokensplat/errors.hpp"
#include "tokensplat/gaussians.hpp"

namespace tokensplat::io {

namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

constexpr std::array<const char*, 14> kProperties = {"x",     "y",     "z",     "scale_0", "scale_1",
                                                     "scale_2", "rot_0", "rot_1", "rot_2",   "rot_3",
                                                     "opacity", "f_dc_0", "f_dc_1", "f_dc_2"};

std::array<double, 14> to_ply(const double* r) {
  std::array<double, 14> p{};
  for (int k = 0; k < 3; ++k) p[static_cast<std::size_t>(k)] = r[kColX + k];
  for (int k = 0; k < 3; ++k) p[3 + static_cast<std::size_t>(k)] = std::log(r[kColScale + k]);
  for (int k = 0; k < 4; ++k) p[6 + static_cast<std::size_t>(k)] = r[kColQuat + k];
  const double o = std::clamp(r[kColOpacity], 0.0, 1.0);
  p[10] = std::clamp(std::log(o) - std::log1p(-o), -kLogitClamp, kLogitClamp);
  for (int k = 0; k < 3; ++k) p[11 + static_cast<std::size_t>(k)] = (r[kColR + k] - 0.5) / kShC0;
  return p;
}

void from_ply(const std::array<double, 14>& p, double* r) {
  for (int k = 0; k < 3; ++k) r[kColX + k] = p[static_cast<std::size_t>(k)];
  for (int k = 0; k < 3; ++k) r[kColScale + k] = std::exp(p[3 + static_cast<std::size_t>(k)]);
  for (int k = 0; k < 4; ++k) r[kColQuat + k] = p[6 + static_cast<std::size_t>(k)];
  r[kColOpacity] = 1.0 / (1.0 + std::exp(-p[10]));
  for (int k = 0; k < 3; ++k) r[kColR + k] = p[11 + static_cast<std::size_t>(k)] * kShC0 + 0.5;
}

}  // namespace

void export_ply(const std::string& path, const std::vector<double>& rows, const PlyOptions& options) {
  if (rows.size() % kGaussianColumns != 0) throw ConfigError("export_ply: rows are not a multiple of 14");
  const std::size_t m = rows.size() / kGaussianColumns;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const char* type = options.single_precision ? "float" : "double";
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << m << '\n';
  for (const char* name : kProperties) out << "property " << type << ' ' << name << '\n';
  out << "end_header\n";
  for (std::size_t i = 0; i < m; ++i) {
    const auto p = to_ply(rows.data() + i * kGaussianColumns);
    for (double v : p) {
      if (options.single_precision) {
        const auto f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof f);
      } else {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
  if (!out) throw IoError("write failed: '" + path + "'");
}

std::vector<double> import_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw IoError(path + ": not a PLY file");

  struct Property {
    std::string name;
    std::size_t size = 0;
    bool is_double = false, is_float = false;
  };
  std::vector<Property> props;
  std::size_t count = 0;
  bool in_vertex = false, seen_format = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw IoError(path + ": only binary_little_endian PLY is supported");
      seen_format = true;
    } else if (word == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw IoError(path + ": unexpected element '" + name + "'");
      in_vertex = true;
    } else if (word == "property") {
      if (!in_vertex) throw IoError(path + ": property outside the vertex element");
      std::string type, name;
      ls >> type >> name;
      Property p{name};
      if (type == "double" || type == "float64") {
        p.size = 8;
        p.is_double = true;
      } else if (type == "float" || type == "float32") {
        p.size = 4;
        p.is_float = true;
      } else if (type == "uchar" || type == "char" || type == "uint8" || type == "int8") {
        p.size = 1;
      } else if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") {
        p.size = 2;
      } else if (type == "int" || type == "uint" || type == "int32" || type == "uint32") {
        p.size = 4;
      } else {
        throw IoError(path + ": unsupported property type '" + type + "'");
      }
      props.push_back(p);
    } else if (word != "comment" && word != "obj_info") {
      throw IoError(path + ": unexpected header line '" + line + "'");
    }
  }
  if (!seen_format) throw IoError(path + ": missing format line");

  std::array<std::ptrdiff_t, 14> column{};
  column.fill(-1);
  for (std::size_t j = 0; j < props.size(); ++j) {
    for (std::size_t k = 0; k < kProperties.size(); ++k) {
      if (props[j].name == kProperties[k]) {
        if (!props[j].is_double && !props[j].is_float) throw IoError(path + ": property '" + props[j].name + "' is not floating point");
        column[k] = static_cast<std::ptrdiff_t>(j);
      }
    }
  }
  for (std::size_t k = 0; k < kProperties.size(); ++k) {
    if (column[k] < 0) throw IoError(path + ": missing property '" + std::string(kProperties[k]) + "'");
  }
  std::size_t stride = 0;
  std::vector<std::size_t> offset;
  for (const auto& p : props) {
    offset.push_back(stride);
    stride += p.size;
  }

  std::vector<double> rows(count * kGaussianColumns);
  std::vector<char> record(stride);
  for (std::size_t i = 0; i < count; ++i) {
    in.read(record.data(), static_cast<std::streamsize>(stride));
    if (static_cast<std::size_t>(in.gcount()) != stride) throw IoError(path + ": truncated vertex data");
    std::array<double, 14> p{};
    for (std::size_t k = 0; k < kProperties.size(); ++k) {
      const auto j = static_cast<std::size_t>(column[k]);
      if (props[j].is_double) {
        std::memcpy(&p[k], record.data() + offset[j], 8);
      } else {
        float f;
        std::memcpy(&f, record.data() + offset[j], 4);
        p[k] = f;
      }
    }
    from_ply(p, rows.data() + i * kGaussianColumns);
  }
  return rows;
}

}  // namespace tokensplat::io
