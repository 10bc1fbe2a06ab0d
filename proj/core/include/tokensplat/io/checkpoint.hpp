// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint container.
//
// Layout (little-endian): "TKSP", u32 version, u32 kind, u32 metadata count,
// then (key, value) string pairs in key order, u32 block count, then blocks:
// name, u8 dtype, u32 rank, u64 dims, u64 byte count, raw values. Strings are
// a u32 length followed by bytes.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tokensplat/training.hpp"

namespace tokensplat::io {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class ContainerKind : std::uint32_t { kModel = 1, kGaussians = 2 };
enum class DType : std::uint8_t { kF32 = 1, kF64 = 2, kI32 = 3 };

struct Block {
  std::string name;
  DType dtype = DType::kF64;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;

  std::size_t numel() const;
  std::vector<double> as_doubles() const;
  std::vector<std::int32_t> as_ints() const;
};

struct Container {
  ContainerKind kind = ContainerKind::kModel;
  std::map<std::string, std::string> metadata;
  std::vector<Block> blocks;

  const Block* find(const std::string& name) const;
  const Block& get(const std::string& name) const;
  const std::string& meta(const std::string& key) const;
};

template <typename Real>
Block make_block(std::string name, const ad::Shape& shape, std::span<const Real> values);
Block make_int_block(std::string name, std::span<const std::int32_t> values);

std::vector<std::uint8_t> encode_container(const Container& c);
Container decode_container(std::span<const std::uint8_t> bytes);
void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

/// Model weights, token bank, optimizer moments, step counters, sampling RNG
/// and the network/train configuration.
template <typename Real>
Container checkpoint_container(TrainState<Real>& state, const TrainConfig& train);
/// Restores a training state; `train` receives the stored TrainConfig.
template <typename Real>
TrainState<Real> state_from_container(const Container& c, TrainConfig* train = nullptr);

template <typename Real>
void save_checkpoint(const std::string& path, TrainState<Real>& state, const TrainConfig& train);
template <typename Real>
TrainState<Real> load_checkpoint(const std::string& path, TrainConfig* train = nullptr);
/// Weights and bank only; optimizer state in the file is ignored.
template <typename Real>
net::Model<Real> load_model(const std::string& path);

/// A fixed Gaussian set (M x 14 rows in the canonical column order).
struct GaussianFile {
  std::vector<double> rows;
  std::vector<std::int32_t> token_id;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return rows.size() / 14; }
};

void save_gaussians(const std::string& path, const GaussianFile& g);
GaussianFile load_gaussians(const std::string& path);

ContainerKind peek_kind(const std::string& path);

}  // namespace tokensplat::io
