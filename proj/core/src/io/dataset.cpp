// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/io/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tokensplat/errors.hpp"
#include "tokensplat/io/checkpoint.hpp"
#include "tokensplat/io/image.hpp"

namespace tokensplat::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;
constexpr std::size_t kMotionColumns = 7;  // kind, velocity xyz, radius, angular speed, phase

json camera_json(const Camera& c) {
  json rotation = json::array();
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) rotation.push_back(c.rotation(r, k));
  return {{"rotation", rotation},
          {"translation", {c.translation[0], c.translation[1], c.translation[2]}},
          {"fx", c.fx},
          {"fy", c.fy},
          {"cx", c.cx},
          {"cy", c.cy},
          {"width", c.width},
          {"height", c.height}};
}

Camera camera_from(const json& j) {
  Camera c;
  const auto& r = j.at("rotation");
  if (r.size() != 9) throw IoError("manifest: camera rotation needs 9 values");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = r.at(static_cast<std::size_t>(i * 3 + k)).get<double>();
  const auto& t = j.at("translation");
  if (t.size() != 3) throw IoError("manifest: camera translation needs 3 values");
  for (int i = 0; i < 3; ++i) c.translation[i] = t.at(static_cast<std::size_t>(i)).get<double>();
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
  return c;
}

json render_json(const RenderConfig& r) {
  return {{"background", r.background},
          {"alpha_min", r.alpha_min},
          {"alpha_max", r.alpha_max},
          {"dilation", r.dilation},
          {"transmittance_stop", r.transmittance_stop},
          {"early_stop", r.early_stop}};
}

RenderConfig render_from(const json& j) {
  RenderConfig r;
  r.background = j.at("background").get<std::array<double, 3>>();
  r.alpha_min = j.at("alpha_min").get<double>();
  r.alpha_max = j.at("alpha_max").get<double>();
  r.dilation = j.at("dilation").get<double>();
  r.transmittance_stop = j.at("transmittance_stop").get<double>();
  r.early_stop = j.at("early_stop").get<bool>();
  return r;
}

}  // namespace

std::string view_file_name(int camera, int time_index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "view_c%03d_t%02d.ppm", camera, time_index);
  return buf;
}

void write_scene(const std::string& dir, const SceneSample& scene) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());

  json manifest;
  manifest["format"] = "tokensplat-scene";
  manifest["version"] = kManifestVersion;
  manifest["seed"] = scene.seed;
  manifest["width"] = scene.width;
  manifest["height"] = scene.height;
  manifest["timestamps"] = scene.timestamps;
  manifest["render"] = render_json(scene.render_config);
  manifest["ground_truth"] = kGroundTruthName;
  json cameras = json::array();
  for (const auto& c : scene.rig) cameras.push_back(camera_json(c));
  manifest["cameras"] = cameras;
  json views = json::array();
  for (const auto& v : scene.views) {
    const auto name = view_file_name(v.camera_index, v.time_index);
    views.push_back({{"camera", v.camera_index},
                     {"time_index", v.time_index},
                     {"timestamp", v.camera.timestamp},
                     {"image", name}});
    write_ppm((fs::path(dir) / name).string(), {scene.width, scene.height, v.image});
  }
  manifest["views"] = views;

  std::ofstream out(fs::path(dir) / kManifestName, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed: manifest in '" + dir + "'");

  Container gt;
  gt.kind = ContainerKind::kGaussians;
  gt.metadata["content"] = "scene ground truth";
  gt.metadata["seed"] = std::to_string(scene.seed);
  gt.blocks.push_back(make_block<double>("gaussians", {scene.n_gaussians(), 14}, scene.base_rows));
  gt.blocks.push_back(make_int_block("blob", scene.blob));
  std::vector<double> motions;
  for (const auto& m : scene.motions) {
    motions.insert(motions.end(), {m.kind == MotionKind::kLinear ? 0.0 : 1.0, m.velocity[0], m.velocity[1],
                                   m.velocity[2], m.radius, m.angular_speed, m.phase});
  }
  gt.blocks.push_back(make_block<double>("motions", {scene.motions.size(), kMotionColumns}, motions));
  write_container((fs::path(dir) / kGroundTruthName).string(), gt);
}

SceneSample read_scene(const std::string& dir) {
  const auto manifest_path = fs::path(dir) / kManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open '" + manifest_path.string() + "'");
  SceneSample s;
  try {
    const json m = json::parse(in);
    if (m.at("format").get<std::string>() != "tokensplat-scene") throw IoError("manifest: unknown format");
    if (m.at("version").get<int>() != kManifestVersion) throw IoError("manifest: unsupported version");
    s.seed = m.at("seed").get<std::uint64_t>();
    s.width = m.at("width").get<int>();
    s.height = m.at("height").get<int>();
    s.timestamps = m.at("timestamps").get<std::vector<double>>();
    s.render_config = render_from(m.at("render"));
    for (const auto& c : m.at("cameras")) s.rig.push_back(camera_from(c));

    const auto gt = read_container((fs::path(dir) / m.at("ground_truth").get<std::string>()).string());
    s.base_rows = gt.get("gaussians").as_doubles();
    s.blob = gt.get("blob").as_ints();
    const auto motions = gt.get("motions").as_doubles();
    for (std::size_t i = 0; i + kMotionColumns <= motions.size(); i += kMotionColumns) {
      Motion mo;
      mo.kind = motions[i] == 0.0 ? MotionKind::kLinear : MotionKind::kCircular;
      mo.velocity = {motions[i + 1], motions[i + 2], motions[i + 3]};
      mo.radius = motions[i + 4];
      mo.angular_speed = motions[i + 5];
      mo.phase = motions[i + 6];
      s.motions.push_back(mo);
    }
    if (s.blob.size() != s.n_gaussians()) throw IoError("ground truth: blob index length mismatch");
    for (auto b : s.blob) {
      if (b >= static_cast<std::int32_t>(s.motions.size())) throw IoError("ground truth: blob index out of range");
    }

    const auto t_count = static_cast<int>(s.timestamps.size());
    const auto& views = m.at("views");
    if (views.size() != s.rig.size() * s.timestamps.size()) throw IoError("manifest: view count mismatch");
    for (const auto& v : views) {
      SceneView view;
      view.camera_index = v.at("camera").get<int>();
      view.time_index = v.at("time_index").get<int>();
      const auto expected = static_cast<int>(s.views.size());
      if (view.camera_index * t_count + view.time_index != expected) {
        throw IoError("manifest: views must be listed camera-major");
      }
      view.camera = s.camera_at(view.camera_index, s.timestamps[static_cast<std::size_t>(view.time_index)]);
      view.image = s.oracle_render(view.camera);
      const auto file = read_ppm((fs::path(dir) / v.at("image").get<std::string>()).string());
      if (file.width != s.width || file.height != s.height) throw IoError("dataset: image size mismatch");
      for (std::size_t i = 0; i < view.image.size(); ++i) {
        if (quantize(view.image[i]) != quantize(file.pixels[i])) {
          throw IoError("dataset: " + v.at("image").get<std::string>() +
                        " does not match the render of the stored ground truth");
        }
      }
      s.views.push_back(std::move(view));
    }
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(dir + ": " + e.what());
  }
  return s;
}

void write_dataset(const std::string& dir, const std::vector<SceneSample>& scenes) {
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    write_scene((fs::path(dir) / name).string(), scenes[i]);
  }
}

std::vector<SceneSample> read_dataset(const std::string& dir) {
  if (fs::exists(fs::path(dir) / kManifestName)) return {read_scene(dir)};
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a dataset directory");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && e.path().filename().string().rfind("scene_", 0) == 0 &&
        fs::exists(e.path() / kManifestName)) {
      subdirs.push_back(e.path());
    }
  }
  if (subdirs.empty()) throw IoError("'" + dir + "' contains no scenes");
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<SceneSample> scenes;
  for (const auto& p : subdirs) scenes.push_back(read_scene(p.string()));
  return scenes;
}

}  // namespace tokensplat::io
