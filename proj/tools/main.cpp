// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// tokensplat command-line tool.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error, 3 I/O
// error, 4 numeric failure.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "tokensplat/errors.hpp"

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

}  // namespace

int main(int argc, char** argv) {
  using namespace tokensplat;

  CLI::App app{"Feed-forward Gaussian splatting with a fixed bank of Gaussian tokens"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> overrides;
  int precision = 0;
  bool dump_defaults = false;
  app.add_option("--config", config_path, "configuration file (key = value lines)");
  app.add_option("--set", overrides, "override a configuration key, key=value (repeatable)");
  app.add_option("--precision", precision, "floating-point precision")->check(CLI::IsMember({32, 64}));
  app.add_flag("--dump-defaults", dump_defaults, "print every configuration key with its default and exit");

  std::optional<std::uint64_t> seed;
  std::optional<int> count;
  cli::SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene dataset");
  synth->add_option("--out", synth_args.out, "output directory")->required();
  synth->add_option("--seed", seed, "scene seed (scene.seed)");
  synth->add_option("--count", count, "number of scenes (scene.count)");

  cli::TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model on a dataset");
  train->add_option("--data", train_args.data, "dataset directory")->required();
  train->add_option("--out", train_args.out, "output directory for checkpoints and metrics.csv")->required();
  train->add_option("--resume", train_args.resume, "checkpoint to resume from");

  cli::EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset (per-view PSNR/SSIM CSV)");
  eval->add_option("--checkpoint", eval_args.checkpoint, "model or Gaussian checkpoint")->required();
  eval->add_option("--data", eval_args.data, "dataset directory")->required();
  eval->add_option("--out", eval_args.out, "CSV path (default: standard output)");

  cli::RenderArgs render_args;
  auto* render = app.add_subcommand("render", "render a checkpoint from dataset cameras");
  render->add_option("--checkpoint", render_args.checkpoint, "model or Gaussian checkpoint")->required();
  render->add_option("--data", render_args.data, "dataset providing cameras and context views")->required();
  render->add_option("--out", render_args.out, "output directory for PPM images")->required();
  render->add_option("--cameras", render_args.cameras, "camera indices (default: all)")->delimiter(',');
  render->add_option("--t", render_args.t, "timestamp for dynamic models");

  cli::TuneArgs tune_args;
  auto* tune = app.add_subcommand("tune", "test-time tuning of tokens or Gaussians on a scene's context views");
  tune->add_option("--checkpoint", tune_args.checkpoint, "model checkpoint")->required();
  tune->add_option("--data", tune_args.data, "dataset directory")->required();
  tune->add_option("--out", tune_args.out, "output directory")->required();
  tune->add_option("--scene", tune_args.scene, "scene index within the dataset");

  cli::PlyArgs ply_args;
  auto* ply = app.add_subcommand("export-ply", "write Gaussians as a PLY point cloud");
  ply->add_option("--checkpoint", ply_args.checkpoint, "model or Gaussian checkpoint")->required();
  ply->add_option("--data", ply_args.data, "dataset with context views (model checkpoints)");
  ply->add_option("--out", ply_args.out, "PLY path")->required();
  ply->add_option("--t", ply_args.t, "timestamp for dynamic models");
  ply->add_flag("--float", ply_args.single_precision, "store float32 properties");

  cli::FlowArgs flow_args;
  auto* flow = app.add_subcommand("flow", "export per-Gaussian trajectories of a dynamic model");
  flow->add_option("--checkpoint", flow_args.checkpoint, "dynamic model checkpoint")->required();
  flow->add_option("--data", flow_args.data, "dataset with context views")->required();
  flow->add_option("--out", flow_args.out, "CSV path")->required();
  flow->add_option("--timestamps", flow_args.timestamps, "timestamps (default: the scene's)")->delimiter(',');

  cli::GradcheckArgs gradcheck_args;
  auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference gradient suites");
  gradcheck->add_option("--seed", gradcheck_args.seed, "input seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    io::RunConfig config = config_path.empty() ? io::RunConfig{} : io::load_config(config_path);
    io::apply_overrides(config, overrides);
    if (seed) config.scene.seed = *seed;
    if (count) config.n_scenes = *count;
    if (precision) config.precision = precision;
    if (dump_defaults) {
      std::cout << io::dump_config(config, true);
      return 0;
    }
    config.validate();

    if (*synth) return cli::synth(config, synth_args);
    if (*train) return cli::train(config, train_args);
    if (*eval) return cli::eval(config, eval_args);
    if (*render) return cli::render(config, render_args);
    if (*tune) return cli::tune(config, tune_args);
    if (*ply) return cli::export_ply(config, ply_args);
    if (*flow) return cli::flow(config, flow_args);
    if (*gradcheck) return cli::gradcheck(gradcheck_args);
    std::cerr << app.help();
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitOther;
  }
}
