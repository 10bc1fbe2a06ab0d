// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Scene dataset directories: manifest.json (cameras, timestamps, render
// settings, image names), one 8-bit PPM per view, and ground_truth.tksp
// holding the Gaussians and their motions.
//
// Loading re-renders every view from the stored ground truth so training
// sees the exact float images; the PPMs must match the re-render after
// quantization.

#pragma once

#include <string>
#include <vector>

#include "tokensplat/scene.hpp"

namespace tokensplat::io {

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kGroundTruthName = "ground_truth.tksp";

void write_scene(const std::string& dir, const SceneSample& scene);
SceneSample read_scene(const std::string& dir);

/// Writes scenes to dir/scene_0000, dir/scene_0001, ...
void write_dataset(const std::string& dir, const std::vector<SceneSample>& scenes);
/// Accepts a single scene directory or a directory of scene_* directories.
std::vector<SceneSample> read_dataset(const std::string& dir);

std::string view_file_name(int camera, int time_index);

}  // namespace tokensplat::io
