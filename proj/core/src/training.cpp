// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>

#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/errors.hpp"

namespace tokensplat {

using ad::Tensor;

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train: " + what); };
  if (total_steps == 0) fail("total_steps must be positive");
  if (warmup_steps >= total_steps) fail("warmup_steps must be smaller than total_steps");
  if (!(lr_max > 0 && lr_min >= 0 && lr_min <= lr_max)) fail("require 0 <= lr_min <= lr_max, lr_max > 0");
  if (!(grad_clip_norm > 0)) fail("grad_clip_norm must be positive");
  if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0)) fail("invalid AdamW betas or eps");
  if (batch_size == 0) fail("batch_size must be positive");
  if (n_context < 1 || n_target < 0) fail("need n_context >= 1 and n_target >= 0");
  if (!supervise_context && n_target == 0) fail("no supervision views: n_target is 0 and supervise_context is off");
  if (max_consecutive_skips < 1) fail("max_consecutive_skips must be positive");
  loss.validate();
  render.validate();
}

double lr_schedule(std::size_t step, const TrainConfig& config) {
  step = std::min(step, config.total_steps);
  if (step < config.warmup_steps) {
    return config.lr_max * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  const double progress = static_cast<double>(step - config.warmup_steps) /
                          static_cast<double>(config.total_steps - config.warmup_steps);
  return config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamWConfig adamw_config(const TrainConfig& config) {
  return {config.beta1, config.beta2, config.eps, config.weight_decay, config.grad_clip_norm};
}

template <typename Real>
StepReport AdamW<Real>::step(const std::vector<net::ParamRef<Real>>& params, double lr) {
  StepReport report;
  double sq = 0;
  for (const auto& p : params) {
    if (!p.tensor->has_grad()) continue;
    for (Real g : p.tensor->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  report.grad_norm = std::sqrt(sq);
  if (!std::isfinite(report.grad_norm)) {
    report.skipped = true;
    return report;
  }
  if (config_.grad_clip_norm > 0 && report.grad_norm > config_.grad_clip_norm) {
    report.clip_scale = config_.grad_clip_norm / report.grad_norm;
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const auto& p : params) {
    auto values = p.tensor->mutable_values();
    Slot& slot = slots_[p.name];
    if (slot.shape != p.tensor->shape()) {
      slot.shape = p.tensor->shape();
      slot.m.assign(values.size(), Real(0));
      slot.v.assign(values.size(), Real(0));
    }
    const bool has_grad = p.tensor->has_grad();
    const auto grad = p.tensor->grad();
    const double decay = p.decay ? lr * config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? static_cast<double>(grad[i]) * report.clip_scale : 0.0;
      const double m = b1 * slot.m[i] + (1 - b1) * g;
      const double v = b2 * slot.v[i] + (1 - b2) * g * g;
      slot.m[i] = static_cast<Real>(m);
      slot.v[i] = static_cast<Real>(v);
      double x = static_cast<double>(values[i]);
      x -= decay * x;
      x -= lr * (m / c1) / (std::sqrt(v / c2) + config_.eps);
      values[i] = static_cast<Real>(x);
    }
  }
  return report;
}

template <typename Real>
Tensor<Real> image_tensor(const std::vector<double>& image, int height, int width) {
  const auto h = static_cast<std::size_t>(height), w = static_cast<std::size_t>(width);
  if (image.size() != h * w * 3) throw ShapeError("image_tensor: pixel count does not match the image size");
  return Tensor<Real>::from_values({h, w, 3}, std::vector<Real>(image.begin(), image.end()));
}

template <typename Real>
ViewBatch<Real> context_views(const SceneSample& scene, const std::vector<int>& cameras) {
  ViewBatch<Real> batch;
  for (int c : cameras)
    for (std::size_t k = 0; k < scene.timestamps.size(); ++k) {
      const auto& v = scene.view(c, static_cast<int>(k));
      batch.cameras.push_back(v.camera);
      batch.images.push_back(image_tensor<Real>(v.image, scene.height, scene.width));
    }
  return batch;
}

template <typename Real>
ViewBatch<Real> views_at(const SceneSample& scene, const std::vector<int>& cameras, int time_index) {
  ViewBatch<Real> batch;
  for (int c : cameras) {
    const auto& v = scene.view(c, time_index);
    batch.cameras.push_back(v.camera);
    batch.images.push_back(image_tensor<Real>(v.image, scene.height, scene.width));
  }
  return batch;
}

template <typename Real>
TrainState<Real> make_train_state(const net::NetworkConfig& network, const TrainConfig& config) {
  config.validate();
  TrainState<Real> s{net::Model<Real>::create(network, config.seed), AdamW<Real>(adamw_config(config)), 0,
                     std::mt19937_64(config.seed ^ 0x9e3779b97f4a7c15ULL), 0, 0};
  return s;
}

namespace {

std::optional<double> query_time(const net::NetworkConfig& cfg, double t) {
  if (cfg.n_dynamic == 0) return std::nullopt;
  return t;
}

}  // namespace

template <typename Real>
StepMetrics train_step(TrainState<Real>& state, const std::vector<SceneSample>& data, const TrainConfig& config) {
  if (data.empty()) throw ConfigError("train: empty dataset");
  auto params = state.model.parameters();
  for (auto& p : params) p.tensor->zero_grad();

  StepMetrics metrics;
  metrics.step = state.step;
  metrics.lr = lr_schedule(static_cast<std::size_t>(state.step), config);
  const Real inv_batch = Real(1) / static_cast<Real>(config.batch_size);
  bool finite = true;
  std::size_t psnr_views = 0;
  for (std::size_t b = 0; b < config.batch_size; ++b) {
    const SceneSample& scene = data[data.size() == 1 ? 0 : static_cast<std::size_t>(state.rng() % data.size())];
    const int n_views = static_cast<int>(scene.rig.size());
    const SceneSplit split = config.random_split
                                 ? sample_context_target(n_views, config.n_context, config.n_target, state.rng)
                                 : fixed_split(n_views, config.n_context, config.n_target);
    const int time_index =
        scene.timestamps.size() == 1 ? 0 : static_cast<int>(state.rng() % scene.timestamps.size());
    std::vector<int> supervised = split.target;
    if (config.supervise_context || supervised.empty()) {
      supervised.insert(supervised.end(), split.context.begin(), split.context.end());
      std::sort(supervised.begin(), supervised.end());
    }
    const auto inputs = context_views<Real>(scene, split.context);
    const auto targets = views_at<Real>(scene, supervised, time_index);
    try {
      const auto g = state.model.forward(inputs.images, inputs.cameras,
                                         query_time(state.model.config, scene.timestamps[static_cast<std::size_t>(time_index)]));
      std::vector<Tensor<Real>> preds;
      for (const auto& cam : targets.cameras) preds.push_back(render(g, cam, config.render).image);
      const auto loss = total_loss<Real>(preds, targets.images, g.means, targets.cameras, config.loss);
      const double total = static_cast<double>(loss.total.item());
      if (!std::isfinite(total)) {
        finite = false;
        break;
      }
      metrics.mse += static_cast<double>(loss.mse.item()) / static_cast<double>(config.batch_size);
      metrics.ssim_loss += static_cast<double>(loss.ssim.item()) / static_cast<double>(config.batch_size);
      metrics.vis_loss += static_cast<double>(loss.vis.item()) / static_cast<double>(config.batch_size);
      metrics.total += total / static_cast<double>(config.batch_size);
      for (std::size_t v = 0; v < preds.size(); ++v) {
        metrics.psnr += psnr(preds[v], targets.images[v]);
        ++psnr_views;
      }
      ad::backward(ad::mul_scalar(loss.total, inv_batch));
    } catch (const NumericError&) {
      finite = false;
      break;
    }
  }
  if (psnr_views) metrics.psnr /= static_cast<double>(psnr_views);

  if (finite) {
    const StepReport report = state.optimizer.step(params, metrics.lr);
    metrics.grad_norm = report.grad_norm;
    finite = !report.skipped;
  }
  for (auto& p : params) p.tensor->zero_grad();
  if (!finite) {
    metrics.skipped = true;
    ++state.skipped_steps;
    if (++state.consecutive_skips >= config.max_consecutive_skips) {
      throw NumericError("train: " + std::to_string(state.consecutive_skips) +
                         " consecutive steps had a non-finite loss or gradient (last at step " +
                         std::to_string(state.step) + ")");
    }
  } else {
    state.consecutive_skips = 0;
  }
  ++state.step;
  return metrics;
}

void write_metrics_header(std::ostream& out) { out << "step,lr,mse,ssim_loss,vis_loss,total,psnr\n"; }

void write_metrics_row(std::ostream& out, const StepMetrics& m) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << m.step << ',' << std::setprecision(17) << m.lr << ',' << m.mse << ',' << m.ssim_loss << ',' << m.vis_loss
      << ',' << m.total << ',' << m.psnr << '\n';
  out.flags(flags);
  out.precision(prec);
}

template <typename Real>
std::vector<StepMetrics> train(TrainState<Real>& state, const std::vector<SceneSample>& data,
                               const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  state.optimizer.set_config(adamw_config(config));
  std::vector<StepMetrics> history;
  while (state.step < config.total_steps) {
    const StepMetrics m = train_step(state, data, config);
    history.push_back(m);
    if (hooks.on_step) hooks.on_step(m);
    if (hooks.metrics && (m.step % config.log_interval == 0 || state.step == config.total_steps)) {
      write_metrics_row(*hooks.metrics, m);
    }
    if (hooks.checkpoint && config.ckpt_interval && state.step % config.ckpt_interval == 0 &&
        state.step != config.total_steps) {
      hooks.checkpoint(state.step);
    }
  }
  if (hooks.checkpoint) hooks.checkpoint(state.step);
  return history;
}

template <typename Real>
std::vector<ViewScore> score_gaussians(const GaussianSet<Real>& gaussians, const SceneSample& scene,
                                       const std::vector<int>& cameras, double timestamp,
                                       const RenderConfig& render_config) {
  ad::NoGradGuard guard;
  const auto known = std::find(scene.timestamps.begin(), scene.timestamps.end(), timestamp);
  std::vector<ViewScore> scores;
  for (int c : cameras) {
    const Camera cam = scene.camera_at(c, timestamp);
    const std::vector<double> target =
        known != scene.timestamps.end()
            ? scene.view(c, static_cast<int>(known - scene.timestamps.begin())).image
            : scene.oracle_render(cam);
    const auto pred = render(gaussians, cam, render_config).image;
    const auto target_t = image_tensor<Real>(target, scene.height, scene.width);
    scores.push_back({c, timestamp, psnr(pred, target_t), ssim(pred, target_t)});
  }
  return scores;
}

template <typename Real>
std::vector<ViewScore> evaluate(const net::Model<Real>& model, const SceneSample& scene,
                                const std::vector<int>& context, const std::vector<int>& eval,
                                const std::vector<double>& timestamps, const RenderConfig& render_config) {
  ad::NoGradGuard guard;
  const auto inputs = context_views<Real>(scene, context);
  const auto encoding = model.encode_views(inputs.images, inputs.cameras);
  std::vector<ViewScore> scores;
  for (double t : timestamps) {
    const auto g = model.gaussians_from(encoding, query_time(model.config, t));
    auto s = score_gaussians(g, scene, eval, t, render_config);
    scores.insert(scores.end(), s.begin(), s.end());
  }
  return scores;
}

double mean_psnr(const std::vector<ViewScore>& scores) {
  if (scores.empty()) return 0;
  double acc = 0;
  for (const auto& s : scores) acc += s.psnr;
  return acc / static_cast<double>(scores.size());
}

#define TOKENSPLAT_INSTANTIATE_TRAINING(Real)                                                                       \
  template class AdamW<Real>;                                                                                       \
  template Tensor<Real> image_tensor<Real>(const std::vector<double>&, int, int);                                   \
  template ViewBatch<Real> context_views<Real>(const SceneSample&, const std::vector<int>&);                        \
  template ViewBatch<Real> views_at<Real>(const SceneSample&, const std::vector<int>&, int);                        \
  template TrainState<Real> make_train_state<Real>(const net::NetworkConfig&, const TrainConfig&);                  \
  template StepMetrics train_step(TrainState<Real>&, const std::vector<SceneSample>&, const TrainConfig&);          \
  template std::vector<StepMetrics> train(TrainState<Real>&, const std::vector<SceneSample>&, const TrainConfig&,   \
                                          const TrainHooks&);                                                       \
  template std::vector<ViewScore> score_gaussians(const GaussianSet<Real>&, const SceneSample&,                     \
                                                  const std::vector<int>&, double, const RenderConfig&);            \
  template std::vector<ViewScore> evaluate(const net::Model<Real>&, const SceneSample&, const std::vector<int>&,    \
                                           const std::vector<int>&, const std::vector<double>&, const RenderConfig&);
TOKENSPLAT_INSTANTIATE_TRAINING(float)
TOKENSPLAT_INSTANTIATE_TRAINING(double)
#undef TOKENSPLAT_INSTANTIATE_TRAINING

}  // namespace tokensplat
