// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/io/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tokensplat/errors.hpp"

namespace tokensplat::io {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config: key '" + std::string(key) + "' expects " + std::string(expected) + ", got '" +
                    std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const auto v = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    bad_value(key, text, std::is_floating_point_v<T> ? "a number" : "an integer");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const auto v = trim(text);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(key, text, "a boolean");
}

std::vector<double> parse_list(std::string_view key, std::string_view text, char sep = ',') {
  std::vector<double> out;
  auto v = trim(text);
  if (v.empty()) return out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto end = v.find(sep, start);
    out.push_back(parse_number<double>(key, v.substr(start, end == std::string_view::npos ? v.size() - start : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

std::string join(const std::vector<double>& v, const char* sep = ",") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_double(v[i]);
  }
  return s;
}

struct Entry {
  std::string name;
  std::string doc;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Entry number(std::string name, std::string doc, Access access) {
  return {name, std::move(doc),
          [access, name](RunConfig& c, std::string_view v) { access(c) = parse_number<T>(name, v); },
          [access](const RunConfig& c) {
            const T value = access(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(value);
            } else {
              return std::to_string(value);
            }
          }};
}

template <typename Access>
Entry boolean(std::string name, std::string doc, Access access) {
  return {name, std::move(doc), [access, name](RunConfig& c, std::string_view v) { access(c) = parse_bool(name, v); },
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Access>
Entry vector3(std::string name, std::string doc, Access access) {
  return {name, std::move(doc),
          [access, name](RunConfig& c, std::string_view v) {
            const auto l = parse_list(name, v);
            if (l.size() != 3) bad_value(name, v, "three comma-separated numbers");
            auto& out = access(c);
            for (int i = 0; i < 3; ++i) out[i] = l[static_cast<std::size_t>(i)];
          },
          [access](const RunConfig& c) {
            const auto& a = access(const_cast<RunConfig&>(c));
            return join({a[0], a[1], a[2]});
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> e;
    // run
    e.push_back(number<int>("run.precision", "floating-point precision, 32 or 64",
                            [](RunConfig& c) -> int& { return c.precision; }));
    // scene
    e.push_back(number<std::uint64_t>("scene.seed", "scene seed; scene i of a dataset uses seed + i",
                                      [](RunConfig& c) -> std::uint64_t& { return c.scene.seed; }));
    e.push_back(number<int>("scene.count", "number of scenes written by synth",
                            [](RunConfig& c) -> int& { return c.n_scenes; }));
    e.push_back(number<int>("scene.n_static_blobs", "static Gaussian clusters",
                            [](RunConfig& c) -> int& { return c.scene.n_static_blobs; }));
    e.push_back(number<int>("scene.n_dynamic_blobs", "moving Gaussian clusters",
                            [](RunConfig& c) -> int& { return c.scene.n_dynamic_blobs; }));
    e.push_back(number<int>("scene.blob_gaussians_min", "fewest Gaussians per cluster",
                            [](RunConfig& c) -> int& { return c.scene.blob_gaussians_min; }));
    e.push_back(number<int>("scene.blob_gaussians_max", "most Gaussians per cluster",
                            [](RunConfig& c) -> int& { return c.scene.blob_gaussians_max; }));
    e.push_back(number<double>("scene.blob_radius_min", "smallest cluster radius (scene units)",
                               [](RunConfig& c) -> double& { return c.scene.blob_radius_min; }));
    e.push_back(number<double>("scene.blob_radius_max", "largest cluster radius (scene units)",
                               [](RunConfig& c) -> double& { return c.scene.blob_radius_max; }));
    e.push_back(number<double>("scene.scene_radius", "cluster centres lie within this radius of the scene centre",
                               [](RunConfig& c) -> double& { return c.scene.scene_radius; }));
    e.push_back(number<double>("scene.splat_scale_min", "smallest per-axis Gaussian scale",
                               [](RunConfig& c) -> double& { return c.scene.splat_scale_min; }));
    e.push_back(number<double>("scene.splat_scale_max", "largest per-axis Gaussian scale",
                               [](RunConfig& c) -> double& { return c.scene.splat_scale_max; }));
    e.push_back({"scene.palette", "cluster colours as 'r,g,b; r,g,b; ...' (empty: built-in palette)",
                 [](RunConfig& c, std::string_view v) {
                   c.scene.palette.clear();
                   auto text = trim(v);
                   std::size_t start = 0;
                   while (start < text.size()) {
                     auto end = text.find(';', start);
                     if (end == std::string_view::npos) end = text.size();
                     const auto l = parse_list("scene.palette", text.substr(start, end - start));
                     if (l.size() != 3) bad_value("scene.palette", v, "semicolon-separated r,g,b triples");
                     c.scene.palette.push_back({l[0], l[1], l[2]});
                     start = end + 1;
                   }
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.scene.palette.size(); ++i) {
                     if (i) s += "; ";
                     const auto& p = c.scene.palette[i];
                     s += join({p[0], p[1], p[2]});
                   }
                   return s;
                 }});
    e.push_back(boolean("scene.ground_plane", "add a flat grid of Gaussians below the clusters",
                        [](RunConfig& c) -> bool& { return c.scene.ground_plane; }));
    e.push_back({"scene.motion", "motion of dynamic clusters: linear or circular",
                 [](RunConfig& c, std::string_view v) {
                   const auto t = trim(v);
                   if (t == "linear") c.scene.motion = MotionKind::kLinear;
                   else if (t == "circular") c.scene.motion = MotionKind::kCircular;
                   else bad_value("scene.motion", v, "linear or circular");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.scene.motion == MotionKind::kLinear ? "linear" : "circular");
                 }});
    e.push_back(vector3("scene.velocity", "linear motion velocity per unit time (world frame)",
                        [](RunConfig& c) -> Eigen::Vector3d& { return c.scene.velocity; }));
    e.push_back(number<double>("scene.circle_radius", "circular motion radius",
                               [](RunConfig& c) -> double& { return c.scene.circle_radius; }));
    e.push_back(number<double>("scene.angular_speed", "circular motion speed (radians per unit time)",
                               [](RunConfig& c) -> double& { return c.scene.angular_speed; }));
    e.push_back(number<int>("scene.n_views", "cameras on the orbit arc",
                            [](RunConfig& c) -> int& { return c.scene.n_views; }));
    e.push_back(number<double>("scene.orbit_radius", "camera distance from the scene centre",
                               [](RunConfig& c) -> double& { return c.scene.orbit_radius; }));
    e.push_back(number<double>("scene.arc_degrees", "azimuth span of the orbit arc",
                               [](RunConfig& c) -> double& { return c.scene.arc_degrees; }));
    e.push_back(number<double>("scene.elevation_min_degrees", "lowest camera elevation",
                               [](RunConfig& c) -> double& { return c.scene.elevation_min_degrees; }));
    e.push_back(number<double>("scene.elevation_max_degrees", "highest camera elevation",
                               [](RunConfig& c) -> double& { return c.scene.elevation_max_degrees; }));
    e.push_back(number<int>("scene.image_width", "image width in pixels",
                            [](RunConfig& c) -> int& { return c.scene.image_width; }));
    e.push_back(number<int>("scene.image_height", "image height in pixels",
                            [](RunConfig& c) -> int& { return c.scene.image_height; }));
    e.push_back(number<double>("scene.focal_factor", "focal length as a multiple of the image width",
                               [](RunConfig& c) -> double& { return c.scene.focal_factor; }));
    e.push_back({"scene.timestamps", "comma-separated timestamps in [0,1] rendered for every camera",
                 [](RunConfig& c, std::string_view v) { c.scene.timestamps = parse_list("scene.timestamps", v); },
                 [](const RunConfig& c) { return join(c.scene.timestamps); }});
    // network
    auto net_size = [&e](const char* key, const char* doc, std::size_t net::NetworkConfig::*member) {
      e.push_back(number<std::size_t>(std::string("network.") + key, doc,
                                      [member](RunConfig& c) -> std::size_t& { return c.network.*member; }));
    };
    auto net_real = [&e](const char* key, const char* doc, double net::NetworkConfig::*member) {
      e.push_back(number<double>(std::string("network.") + key, doc,
                                 [member](RunConfig& c) -> double& { return c.network.*member; }));
    };
    net_size("channels", "token width C", &net::NetworkConfig::channels);
    net_size("enc_depth", "encoder blocks", &net::NetworkConfig::enc_depth);
    net_size("dec_depth", "decoder blocks", &net::NetworkConfig::dec_depth);
    net_size("patch", "encoder patch size in pixels", &net::NetworkConfig::patch);
    net_size("heads", "attention heads", &net::NetworkConfig::heads);
    net_real("mlp_ratio", "MLP hidden width as a multiple of C", &net::NetworkConfig::mlp_ratio);
    net_size("time_dim", "sinusoidal time feature size (even)", &net::NetworkConfig::time_dim);
    net_size("n_static", "static Gaussian tokens", &net::NetworkConfig::n_static);
    net_size("n_dynamic", "dynamic Gaussian tokens", &net::NetworkConfig::n_dynamic);
    net_real("token_std", "token initialization std", &net::NetworkConfig::token_std);
    net_real("head_std", "regression head weight initialization std", &net::NetworkConfig::head_std);
    net_real("weight_std", "std of other linear weights", &net::NetworkConfig::weight_std);
    net_real("layerscale_init", "initial LayerScale value", &net::NetworkConfig::layerscale_init);
    e.push_back(number<double>("network.scale_min", "smallest activated Gaussian scale",
                               [](RunConfig& c) -> double& { return c.network.activation.scale_min; }));
    e.push_back(number<double>("network.scale_max", "largest activated Gaussian scale",
                               [](RunConfig& c) -> double& { return c.network.activation.scale_max; }));
    e.push_back(number<double>("network.z_offset", "depth added to activated means",
                               [](RunConfig& c) -> double& { return c.network.activation.z_offset; }));
    e.push_back(number<double>("network.log_scale_offset", "added to raw log-scales before clamping",
                               [](RunConfig& c) -> double& { return c.network.activation.log_scale_offset; }));
    // train
    auto tr_real = [&e](const char* key, const char* doc, double TrainConfig::*member) {
      e.push_back(number<double>(std::string("train.") + key, doc,
                                 [member](RunConfig& c) -> double& { return c.train.*member; }));
    };
    auto tr_size = [&e](const char* key, const char* doc, std::size_t TrainConfig::*member) {
      e.push_back(number<std::size_t>(std::string("train.") + key, doc,
                                      [member](RunConfig& c) -> std::size_t& { return c.train.*member; }));
    };
    tr_real("lr_max", "peak learning rate", &TrainConfig::lr_max);
    tr_real("lr_min", "final learning rate of the cosine decay", &TrainConfig::lr_min);
    tr_size("warmup_steps", "linear warmup steps", &TrainConfig::warmup_steps);
    tr_size("total_steps", "optimizer steps", &TrainConfig::total_steps);
    tr_real("weight_decay", "decoupled weight decay (not applied to biases, norms, tokens, temperatures)",
            &TrainConfig::weight_decay);
    tr_real("grad_clip_norm", "global gradient-norm clip", &TrainConfig::grad_clip_norm);
    tr_real("beta1", "AdamW first-moment decay", &TrainConfig::beta1);
    tr_real("beta2", "AdamW second-moment decay", &TrainConfig::beta2);
    tr_real("eps", "AdamW epsilon", &TrainConfig::eps);
    tr_size("batch_size", "scenes per step", &TrainConfig::batch_size);
    e.push_back(number<int>("train.n_context", "context cameras per sample",
                            [](RunConfig& c) -> int& { return c.train.n_context; }));
    e.push_back(number<int>("train.n_target", "extra target cameras per sample",
                            [](RunConfig& c) -> int& { return c.train.n_target; }));
    e.push_back(boolean("train.random_split", "draw targets at random (false: fixed split)",
                        [](RunConfig& c) -> bool& { return c.train.random_split; }));
    e.push_back(boolean("train.supervise_context", "also render and supervise the context views",
                        [](RunConfig& c) -> bool& { return c.train.supervise_context; }));
    tr_size("log_interval", "metrics CSV row every this many steps", &TrainConfig::log_interval);
    tr_size("ckpt_interval", "checkpoint every this many steps (0: only at the end)", &TrainConfig::ckpt_interval);
    e.push_back(number<std::uint64_t>("train.seed", "initialization and sampling seed",
                                      [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
    e.push_back(number<int>("train.max_consecutive_skips", "abort after this many non-finite steps in a row",
                            [](RunConfig& c) -> int& { return c.train.max_consecutive_skips; }));
    e.push_back(number<double>("train.lambda_ssim", "SSIM loss weight",
                               [](RunConfig& c) -> double& { return c.train.loss.ssim; }));
    e.push_back(number<double>("train.lambda_vis", "visibility loss weight",
                               [](RunConfig& c) -> double& { return c.train.loss.vis; }));
    e.push_back(number<double>("train.vis_clip", "per-Gaussian visibility loss clip",
                               [](RunConfig& c) -> double& { return c.train.loss.vis_clip; }));
    e.push_back(boolean("train.vis_normalize", "average the visibility loss over Gaussians instead of summing",
                        [](RunConfig& c) -> bool& { return c.train.loss.vis_normalize; }));
    // tune
    e.push_back({"tune.target", "what test-time tuning optimizes: tokens or gaussians",
                 [](RunConfig& c, std::string_view v) {
                   const auto t = trim(v);
                   if (t == "tokens") c.tune.target = TuneTarget::kTokens;
                   else if (t == "gaussians") c.tune.target = TuneTarget::kGaussians;
                   else bad_value("tune.target", v, "tokens or gaussians");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.tune.target == TuneTarget::kTokens ? "tokens" : "gaussians");
                 }});
    e.push_back(number<std::size_t>("tune.steps", "tuning steps",
                                    [](RunConfig& c) -> std::size_t& { return c.tune.steps; }));
    e.push_back(number<double>("tune.lr", "token tuning learning rate",
                               [](RunConfig& c) -> double& { return c.tune.lr; }));
    e.push_back(number<double>("tune.gaussian_lr", "Gaussian tuning learning rate",
                               [](RunConfig& c) -> double& { return c.tune.gaussian_lr; }));
    e.push_back(number<double>("tune.lambda_ssim", "SSIM loss weight while tuning",
                               [](RunConfig& c) -> double& { return c.tune.loss.ssim; }));
    e.push_back(number<double>("tune.lambda_vis", "visibility loss weight while tuning",
                               [](RunConfig& c) -> double& { return c.tune.loss.vis; }));
    e.push_back(number<double>("tune.vis_clip", "visibility loss clip while tuning",
                               [](RunConfig& c) -> double& { return c.tune.loss.vis_clip; }));
    e.push_back(boolean("tune.recompute_encoding", "re-encode the inputs every step instead of caching",
                        [](RunConfig& c) -> bool& { return c.tune.recompute_encoding; }));
    // render
    e.push_back({"render.background", "background colour r,g,b",
                 [](RunConfig& c, std::string_view v) {
                   const auto l = parse_list("render.background", v);
                   if (l.size() != 3) bad_value("render.background", v, "three comma-separated numbers");
                   c.render.background = {l[0], l[1], l[2]};
                 },
                 [](const RunConfig& c) { return join({c.render.background[0], c.render.background[1], c.render.background[2]}); }});
    e.push_back(number<double>("render.alpha_min", "skip splat contributions below this alpha",
                               [](RunConfig& c) -> double& { return c.render.alpha_min; }));
    e.push_back(number<double>("render.alpha_max", "per-splat alpha cap",
                               [](RunConfig& c) -> double& { return c.render.alpha_max; }));
    e.push_back(number<double>("render.dilation", "pixels^2 added to the projected covariance",
                               [](RunConfig& c) -> double& { return c.render.dilation; }));
    e.push_back(number<double>("render.transmittance_stop", "early termination threshold",
                               [](RunConfig& c) -> double& { return c.render.transmittance_stop; }));
    e.push_back(boolean("render.early_stop", "stop compositing below transmittance_stop",
                        [](RunConfig& c) -> bool& { return c.render.early_stop; }));
    // eval
    e.push_back(number<int>("eval.n_context", "context cameras used by eval and tune",
                            [](RunConfig& c) -> int& { return c.eval_context; }));
    e.push_back(number<int>("eval.n_target", "scored cameras (-1: all non-context cameras)",
                            [](RunConfig& c) -> int& { return c.eval_target; }));
    // The run-level render settings are copied into every stage.
    for (auto& entry : e) {
      if (entry.name.rfind("render.", 0) != 0) continue;
      entry.set = [inner = entry.set](RunConfig& c, std::string_view v) {
        inner(c, v);
        c.scene.render = c.render;
        c.train.render = c.render;
        c.tune.render = c.render;
      };
    }
    return e;
  }();
  return table;
}

const Entry& find_entry(std::string_view key) {
  static const std::map<std::string, std::size_t, std::less<>> index = [] {
    std::map<std::string, std::size_t, std::less<>> m;
    for (std::size_t i = 0; i < entries().size(); ++i) m.emplace(entries()[i].name, i);
    return m;
  }();
  const auto it = index.find(key);
  if (it == index.end()) throw ConfigError("config: unknown key '" + std::string(key) + "'");
  return entries()[it->second];
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void RunConfig::validate() const {
  scene.validate();
  network.validate();
  train.validate();
  tune.validate();
  render.validate();
  if (precision != 32 && precision != 64) throw ConfigError("config: run.precision must be 32 or 64");
  if (n_scenes < 1) throw ConfigError("config: scene.count must be positive");
  if (eval_context < 1) throw ConfigError("config: eval.n_context must be positive");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back({e.name, e.doc});
    return k;
  }();
  return keys;
}

void set_value(RunConfig& config, std::string_view key, std::string_view value) {
  find_entry(trim(key)).set(config, value);
}

std::string get_value(const RunConfig& config, std::string_view key) { return find_entry(trim(key)).get(config); }

void apply_text(RunConfig& config, std::string_view text, std::string_view origin) {
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(start, end - start);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      try {
        set_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (end == text.size()) break;
    start = end + 1;
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig config;
  apply_text(config, ss.str(), path);
  return config;
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("config: override '" + o + "' is not key=value");
    set_value(config, std::string_view(o).substr(0, eq), std::string_view(o).substr(eq + 1));
  }
}

std::string dump_config(const RunConfig& config, bool documented) {
  std::ostringstream out;
  std::string section;
  for (const auto& e : entries()) {
    const auto sec = e.name.substr(0, e.name.find('.'));
    if (documented && sec != section) {
      if (!section.empty()) out << '\n';
      out << "# [" << sec << "]\n";
      section = sec;
    }
    if (documented) out << "# " << e.doc << '\n';
    out << e.name << " = " << e.get(config) << '\n';
  }
  return out.str();
}

std::string dump_sections(const RunConfig& config, const std::vector<std::string>& prefixes) {
  std::ostringstream out;
  for (const auto& e : entries()) {
    for (const auto& p : prefixes) {
      if (e.name.rfind(p, 0) == 0) {
        out << e.name << " = " << e.get(config) << '\n';
        break;
      }
    }
  }
  return out.str();
}

}  // namespace tokensplat::io
