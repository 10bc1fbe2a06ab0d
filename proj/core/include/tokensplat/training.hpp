// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// AdamW, the learning-rate schedule and the training loop.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "tokensplat/losses.hpp"
#include "tokensplat/network/model.hpp"
#include "tokensplat/rasterizer.hpp"
#include "tokensplat/scene.hpp"

namespace tokensplat {

struct TrainConfig {
  double lr_max = 4e-4;
  double lr_min = 4e-6;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 2000;
  double weight_decay = 0.05;
  double grad_clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::size_t batch_size = 4;
  int n_context = 4;
  int n_target = 4;
  bool random_split = true;       // false: fixed_split, targets are the first n_target remaining cameras
  bool supervise_context = true;  // render context views as well as targets
  LossWeights loss;
  RenderConfig render;
  std::uint64_t seed = 0;
  std::size_t log_interval = 10;
  std::size_t ckpt_interval = 0;  // 0: only at the end
  int max_consecutive_skips = 3;

  void validate() const;
};

double lr_schedule(std::size_t step, const TrainConfig& config);

struct AdamWConfig {
  double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;
  double weight_decay = 0.05;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping
};

struct StepReport {
  bool skipped = false;  // non-finite gradient
  double grad_norm = 0;  // before clipping
  double clip_scale = 1;
};

/// AdamW with global-norm clipping before the update and decoupled decay
/// applied only to parameters whose ParamRef has decay set. Moments are
/// keyed by parameter name and reset when the shape changes.
template <typename Real>
class AdamW {
 public:
  struct Slot {
    ad::Shape shape;
    std::vector<Real> m, v;
  };

  AdamW() = default;
  explicit AdamW(AdamWConfig config) : config_(config) {}

  StepReport step(const std::vector<net::ParamRef<Real>>& params, double lr);

  const AdamWConfig& config() const { return config_; }
  void set_config(const AdamWConfig& c) { config_ = c; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  AdamWConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Slot> slots_;
};

AdamWConfig adamw_config(const TrainConfig& config);

/// Images as (H, W, 3) tensors plus their cameras.
template <typename Real>
struct ViewBatch {
  std::vector<Camera> cameras;
  std::vector<ad::Tensor<Real>> images;
};

template <typename Real>
ad::Tensor<Real> image_tensor(const std::vector<double>& image, int height, int width);

/// Context input: the given cameras at every timestamp of the scene.
template <typename Real>
ViewBatch<Real> context_views(const SceneSample& scene, const std::vector<int>& cameras);
/// The given cameras at one timestamp.
template <typename Real>
ViewBatch<Real> views_at(const SceneSample& scene, const std::vector<int>& cameras, int time_index);

template <typename Real>
struct TrainState {
  net::Model<Real> model;
  AdamW<Real> optimizer;
  std::uint64_t step = 0;
  std::mt19937_64 rng;
  int consecutive_skips = 0;
  std::uint64_t skipped_steps = 0;
};

template <typename Real>
TrainState<Real> make_train_state(const net::NetworkConfig& network, const TrainConfig& config);

struct StepMetrics {
  std::uint64_t step = 0;
  double lr = 0;
  double mse = 0, ssim_loss = 0, vis_loss = 0, total = 0, psnr = 0;
  bool skipped = false;
  double grad_norm = 0;
};

/// One optimizer step over batch_size scenes drawn from `data`.
template <typename Real>
StepMetrics train_step(TrainState<Real>& state, const std::vector<SceneSample>& data, const TrainConfig& config);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const StepMetrics& m);

struct TrainHooks {
  std::ostream* metrics = nullptr;  // CSV rows every log_interval steps
  std::function<void(std::uint64_t step)> checkpoint;
  std::function<void(const StepMetrics&)> on_step;
};

/// Runs until state.step == config.total_steps.
template <typename Real>
std::vector<StepMetrics> train(TrainState<Real>& state, const std::vector<SceneSample>& data,
                               const TrainConfig& config, const TrainHooks& hooks = {});

struct ViewScore {
  int camera = 0;
  double timestamp = 0;
  double psnr = 0;
  double ssim = 0;
};

/// Feed-forward reconstruction from `context` cameras, scored on `eval`
/// cameras at each of the given timestamps (oracle renders for timestamps
/// not in the scene).
template <typename Real>
std::vector<ViewScore> evaluate(const net::Model<Real>& model, const SceneSample& scene,
                                const std::vector<int>& context, const std::vector<int>& eval,
                                const std::vector<double>& timestamps, const RenderConfig& render_config = {});

template <typename Real>
std::vector<ViewScore> score_gaussians(const GaussianSet<Real>& gaussians, const SceneSample& scene,
                                       const std::vector<int>& cameras, double timestamp,
                                       const RenderConfig& render_config = {});

double mean_psnr(const std::vector<ViewScore>& scores);

}  // namespace tokensplat
