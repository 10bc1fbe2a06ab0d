// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tokensplat/errors.hpp"
#include "tokensplat/gradcheck_suites.hpp"
#include "tokensplat/io/checkpoint.hpp"
#include "tokensplat/io/dataset.hpp"
#include "tokensplat/io/flow.hpp"
#include "tokensplat/io/image.hpp"
#include "tokensplat/io/ply.hpp"
#include "tokensplat/losses.hpp"
#include "tokensplat/tts.hpp"

namespace tokensplat::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
}

std::string step_name(const std::string& dir, std::uint64_t step) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "checkpoint_%07llu.tksp", static_cast<unsigned long long>(step));
  return (fs::path(dir) / buf).string();
}

std::optional<double> model_time(const net::NetworkConfig& cfg, std::optional<double> t) {
  if (cfg.n_dynamic == 0) return std::nullopt;
  return t.value_or(0.0);
}

/// Context cameras floor(i N / n_c) and scored cameras per eval.n_target.
SceneSplit eval_split(const io::RunConfig& config, const SceneSample& scene) {
  return fixed_split(static_cast<int>(scene.rig.size()), config.eval_context, config.eval_target);
}

const SceneSample& pick_scene(const std::vector<SceneSample>& scenes, int index) {
  if (index < 0 || index >= static_cast<int>(scenes.size())) {
    throw ConfigError("scene index " + std::to_string(index) + " out of range (" + std::to_string(scenes.size()) +
                      " scenes)");
  }
  return scenes[static_cast<std::size_t>(index)];
}

template <typename Real>
GaussianSet<Real> model_gaussians(const net::Model<Real>& model, const io::RunConfig& config, const SceneSample& scene,
                                  std::optional<double> t) {
  const auto split = eval_split(config, scene);
  const auto inputs = context_views<Real>(scene, split.context);
  ad::NoGradGuard guard;
  return model.forward(inputs.images, inputs.cameras, model_time(model.config, t));
}

template <typename Real>
int train_impl(io::RunConfig config, const TrainArgs& args) {
  const auto data = io::read_dataset(args.data);
  make_dir(args.out);
  TrainState<Real> state = args.resume.empty() ? make_train_state<Real>(config.network, config.train)
                                               : io::load_checkpoint<Real>(args.resume, nullptr);
  if (!args.resume.empty()) {
    state.optimizer.set_config(adamw_config(config.train));
    config.network = state.model.config;
  }
  for (const auto& scene : data) config.network.check_image(scene.height, scene.width);
  {
    auto cfg_out = open_out((fs::path(args.out) / "config.txt").string());
    cfg_out << io::dump_config(config);
  }
  const auto metrics_path = (fs::path(args.out) / "metrics.csv").string();
  std::ofstream metrics;
  if (args.resume.empty()) {
    metrics = open_out(metrics_path);
    write_metrics_header(metrics);
  } else {
    metrics.open(metrics_path, std::ios::app);
    if (!metrics) throw IoError("cannot append to '" + metrics_path + "'");
  }
  TrainHooks hooks;
  hooks.metrics = &metrics;
  hooks.checkpoint = [&](std::uint64_t step) { io::save_checkpoint(step_name(args.out, step), state, config.train); };
  hooks.on_step = [&](const StepMetrics& m) {
    if (config.train.log_interval && m.step % config.train.log_interval == 0) {
      std::fprintf(stderr, "step %llu loss %.5f psnr %.2f lr %.2e%s\n", static_cast<unsigned long long>(m.step),
                   m.total, m.psnr, m.lr, m.skipped ? " (skipped)" : "");
    }
  };
  train(state, data, config.train, hooks);
  io::save_checkpoint((fs::path(args.out) / "final.tksp").string(), state, config.train);
  return 0;
}

template <typename Real>
int eval_impl(const io::RunConfig& config, const EvalArgs& args) {
  const auto data = io::read_dataset(args.data);
  const bool gaussians_only = io::peek_kind(args.checkpoint) == io::ContainerKind::kGaussians;
  std::optional<net::Model<Real>> model;
  io::GaussianFile fixed;
  if (gaussians_only) {
    fixed = io::load_gaussians(args.checkpoint);
  } else {
    model = io::load_model<Real>(args.checkpoint);
  }
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!args.out.empty()) {
    file = open_out(args.out);
    out = &file;
  }
  *out << "scene,camera,t,psnr,ssim\n";
  std::vector<ViewScore> all;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto& scene = data[s];
    std::vector<ViewScore> scores;
    if (gaussians_only) {
      // Fixed Gaussians are scored on every stored view.
      std::vector<int> cameras(scene.rig.size());
      for (std::size_t c = 0; c < cameras.size(); ++c) cameras[c] = static_cast<int>(c);
      const auto g = GaussianSet<Real>::from_rows(fixed.rows, fixed.token_id);
      for (double t : scene.timestamps) {
        auto part = score_gaussians(g, scene, cameras, t, scene.render_config);
        scores.insert(scores.end(), part.begin(), part.end());
      }
    } else {
      model->config.check_image(scene.height, scene.width);
      const auto split = eval_split(config, scene);
      scores = evaluate(*model, scene, split.context, split.target, scene.timestamps, scene.render_config);
    }
    for (const auto& v : scores) {
      *out << s << ',' << v.camera << ',' << io::format_double(v.timestamp) << ',' << io::format_double(v.psnr) << ','
           << io::format_double(v.ssim) << '\n';
    }
    all.insert(all.end(), scores.begin(), scores.end());
  }
  double mean_ssim = 0;
  for (const auto& v : all) mean_ssim += v.ssim;
  if (!all.empty()) mean_ssim /= static_cast<double>(all.size());
  *out << "mean,,," << io::format_double(mean_psnr(all)) << ',' << io::format_double(mean_ssim) << '\n';
  std::fprintf(stderr, "%zu views, mean PSNR %.3f dB, mean SSIM %.4f\n", all.size(), mean_psnr(all), mean_ssim);
  return 0;
}

template <typename Real>
GaussianSet<Real> checkpoint_gaussians(const io::RunConfig& config, const std::string& checkpoint,
                                       const std::string& data_dir, std::optional<double> t, int scene_index = 0) {
  if (io::peek_kind(checkpoint) == io::ContainerKind::kGaussians) {
    const auto fixed = io::load_gaussians(checkpoint);
    return GaussianSet<Real>::from_rows(fixed.rows, fixed.token_id);
  }
  if (data_dir.empty()) throw ConfigError("a model checkpoint needs --data for its context views");
  const auto model = io::load_model<Real>(checkpoint);
  const auto data = io::read_dataset(data_dir);
  return model_gaussians(model, config, pick_scene(data, scene_index), t);
}

template <typename Real>
int render_impl(const io::RunConfig& config, const RenderArgs& args) {
  const auto data = io::read_dataset(args.data);
  const auto& scene = data.front();
  const auto g = checkpoint_gaussians<Real>(config, args.checkpoint, args.data, args.t);
  make_dir(args.out);
  std::vector<int> cameras = args.cameras;
  if (cameras.empty())
    for (std::size_t c = 0; c < scene.rig.size(); ++c) cameras.push_back(static_cast<int>(c));
  ad::NoGradGuard guard;
  for (int c : cameras) {
    if (c < 0 || c >= static_cast<int>(scene.rig.size())) throw ConfigError("camera " + std::to_string(c) + " out of range");
    const auto cam = scene.camera_at(c, args.t.value_or(0.0));
    const auto image = render(g, cam, config.render).image;
    char name[32];
    std::snprintf(name, sizeof name, "render_c%03d.ppm", c);
    io::write_ppm((fs::path(args.out) / name).string(),
                  {scene.width, scene.height, std::vector<double>(image.values().begin(), image.values().end())});
  }
  return 0;
}

template <typename Real>
int tune_impl(const io::RunConfig& config, const TuneArgs& args) {
  const auto data = io::read_dataset(args.data);
  const auto& scene = pick_scene(data, args.scene);
  auto model = io::load_model<Real>(args.checkpoint);
  model.config.check_image(scene.height, scene.width);
  const auto split = eval_split(config, scene);
  const auto inputs = context_views<Real>(scene, split.context);
  const auto heldout = context_views<Real>(scene, split.target);
  const auto* held = split.target.empty() ? nullptr : &heldout;
  make_dir(args.out);

  TuneResult<Real> result;
  if (config.tune.target == TuneTarget::kTokens) {
    result = token_tune(model, inputs, config.tune, held);
    model.bank = result.bank;
    TrainState<Real> state{model, AdamW<Real>(adamw_config(config.train)), 0, std::mt19937_64(config.train.seed), 0, 0};
    io::save_checkpoint((fs::path(args.out) / "tuned.tksp").string(), state, config.train);
  } else {
    ad::Tensor<Real> raw;
    {
      ad::NoGradGuard guard;
      const auto encoding = model.encode_views(inputs.images, inputs.cameras);
      raw = model.raw_from(encoding, model_time(model.config, scene.timestamps.front()));
    }
    result = gaussian_tune(raw, model.config.activation, inputs, config.tune, held);
  }
  io::GaussianFile g{result.gaussians.to_rows(), result.gaussians.token_id, {{"content", "tuned gaussians"}}};
  io::save_gaussians((fs::path(args.out) / "tuned_gaussians.tksp").string(), g);

  auto csv = open_out((fs::path(args.out) / "tune.csv").string());
  csv << "step,loss,input_psnr,heldout_psnr\n";
  for (const auto& row : result.log) {
    csv << row.step << ',' << io::format_double(row.loss) << ',' << io::format_double(row.input_psnr) << ','
        << io::format_double(row.heldout_psnr) << '\n';
  }
  const auto& first = result.log.front();
  const auto& best = result.log[result.best_step];
  std::fprintf(stderr, "input PSNR %.3f -> %.3f dB (best step %zu)%s\n", first.input_psnr, best.input_psnr,
               result.best_step, result.aborted ? ", stopped on a non-finite loss" : "");
  return result.aborted ? 4 : 0;
}

template <typename Real>
int ply_impl(const io::RunConfig& config, const PlyArgs& args) {
  const auto g = checkpoint_gaussians<Real>(config, args.checkpoint, args.data, args.t);
  io::PlyOptions options;
  options.single_precision = args.single_precision;
  io::export_ply(args.out, g.to_rows(), options);
  return 0;
}

template <typename Real>
int flow_impl(const io::RunConfig& config, const FlowArgs& args) {
  const auto model = io::load_model<Real>(args.checkpoint);
  const auto data = io::read_dataset(args.data);
  const auto& scene = data.front();
  const auto split = eval_split(config, scene);
  const auto inputs = context_views<Real>(scene, split.context);
  const auto timestamps = args.timestamps.empty() ? scene.timestamps : args.timestamps;
  const auto rows = io::export_flow<Real>(model, inputs.images, inputs.cameras, timestamps);
  auto out = open_out(args.out);
  io::write_flow_csv(out, rows);
  return 0;
}

}  // namespace

int synth(const io::RunConfig& config, const SynthArgs& args) {
  if (config.n_scenes == 1) {
    io::write_scene(args.out, generate_scene(config.scene));
    return 0;
  }
  std::vector<SceneSample> scenes;
  for (int i = 0; i < config.n_scenes; ++i) {
    SceneSpec spec = config.scene;
    spec.seed = config.scene.seed + static_cast<std::uint64_t>(i);
    scenes.push_back(generate_scene(spec));
  }
  io::write_dataset(args.out, scenes);
  return 0;
}

int train(const io::RunConfig& config, const TrainArgs& args) {
  return config.precision == 64 ? train_impl<double>(config, args) : train_impl<float>(config, args);
}

int eval(const io::RunConfig& config, const EvalArgs& args) {
  return config.precision == 64 ? eval_impl<double>(config, args) : eval_impl<float>(config, args);
}

int render(const io::RunConfig& config, const RenderArgs& args) {
  return config.precision == 64 ? render_impl<double>(config, args) : render_impl<float>(config, args);
}

int tune(const io::RunConfig& config, const TuneArgs& args) {
  return config.precision == 64 ? tune_impl<double>(config, args) : tune_impl<float>(config, args);
}

int export_ply(const io::RunConfig& config, const PlyArgs& args) {
  return config.precision == 64 ? ply_impl<double>(config, args) : ply_impl<float>(config, args);
}

int flow(const io::RunConfig& config, const FlowArgs& args) {
  return config.precision == 64 ? flow_impl<double>(config, args) : flow_impl<float>(config, args);
}

int gradcheck(const GradcheckArgs& args) {
  bool ok = true;
  for (const auto& suite : all_suites(args.seed)) {
    std::size_t checked = 0, below = 0;
    for (const auto& c : suite.cases) {
      checked += c.report.checked;
      below += c.report.below_floor;
    }
    std::printf("%-11s %s  max rel err %.3e (tol %.0e)  %zu coords (%zu judged absolutely)  %.2fs\n", suite.suite.c_str(),
                suite.passed() ? "PASS" : "FAIL", suite.max_rel_error(), suite.tolerance, checked, below, suite.seconds);
    for (const auto& c : suite.cases) {
      if (!c.report.passed()) std::printf("  %s failed: %s\n", c.name.c_str(), c.report.worst.c_str());
    }
    ok = ok && suite.passed();
  }
  if (!ok) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace tokensplat::cli
