// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: flat dotted `key = value` lines, '#' starts a comment.
// Unknown keys are rejected; command-line overrides use the same keys.

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "tokensplat/network/model.hpp"
#include "tokensplat/rasterizer.hpp"
#include "tokensplat/scene.hpp"
#include "tokensplat/training.hpp"
#include "tokensplat/tts.hpp"

namespace tokensplat::io {

struct RunConfig {
  SceneSpec scene;
  int n_scenes = 1;  // synth: scene i uses seed scene.seed + i
  net::NetworkConfig network;
  TrainConfig train;
  TuneConfig tune;
  RenderConfig render;  // setting a render.* key also updates scene, train and tune
  int eval_context = 4;
  int eval_target = -1;  // -1: every non-context camera
  int precision = 32;

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

/// Every accepted key with a one-line description.
const std::vector<ConfigKey>& config_keys();

/// Sets one key; throws ConfigError for unknown keys or malformed values.
void set_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_value(const RunConfig& config, std::string_view key);

/// Applies a whole file's worth of lines to `config`.
void apply_text(RunConfig& config, std::string_view text, std::string_view origin = "<config>");
RunConfig load_config(const std::string& path);
/// Applies "key=value" overrides.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

/// All keys with their current values, one `key = value` per line; with
/// `documented`, each line is preceded by a comment.
std::string dump_config(const RunConfig& config, bool documented = false);
/// Only keys whose name starts with one of the prefixes.
std::string dump_sections(const RunConfig& config, const std::vector<std::string>& prefixes);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace tokensplat::io
