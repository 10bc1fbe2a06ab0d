// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/tts.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/errors.hpp"

namespace tokensplat {

using ad::Tensor;

void TuneConfig::validate() const {
  if (!(lr >= 0 && gaussian_lr >= 0)) throw ConfigError("tune: learning rates must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0)) throw ConfigError("tune: invalid AdamW betas");
  loss.validate();
  render.validate();
}

template <typename Real>
GaussianSet<Real> context_extend(const net::Model<Real>& model, const ViewBatch<Real>& views, std::optional<double> t) {
  return model.forward(views.images, views.cameras, t);
}

namespace {

// Input views grouped by timestamp.
struct TimeGroups {
  std::vector<double> times;
  std::vector<std::vector<std::size_t>> members;
};

template <typename Real>
TimeGroups group_by_time(const ViewBatch<Real>& views, bool use_time) {
  TimeGroups g;
  std::map<double, std::size_t> index;
  for (std::size_t i = 0; i < views.cameras.size(); ++i) {
    const double t = use_time ? views.cameras[i].timestamp : 0.0;
    auto [it, inserted] = index.emplace(t, g.times.size());
    if (inserted) {
      g.times.push_back(t);
      g.members.emplace_back();
    }
    g.members[it->second].push_back(i);
  }
  return g;
}

template <typename Real>
using GaussianFn = std::function<GaussianSet<Real>(double t)>;

struct Evaluation {
  double loss = 0;
  double input_psnr = 0;
};

template <typename Real>
Tensor<Real> input_loss(const GaussianFn<Real>& make, const ViewBatch<Real>& inputs, const TimeGroups& groups,
                        const LossWeights& weights, const RenderConfig& render_config, Evaluation& eval) {
  std::vector<Tensor<Real>> preds, targets;
  std::vector<Camera> cameras;
  Tensor<Real> means;
  std::vector<Tensor<Real>> all_means;
  for (std::size_t k = 0; k < groups.times.size(); ++k) {
    const auto g = make(groups.times[k]);
    for (std::size_t i : groups.members[k]) {
      preds.push_back(render(g, inputs.cameras[i], render_config).image);
      targets.push_back(inputs.images[i]);
      cameras.push_back(inputs.cameras[i]);
    }
    all_means.push_back(g.means);
  }
  means = all_means.size() == 1 ? all_means.front() : ad::concat(all_means, 0);
  const auto terms = total_loss<Real>(preds, targets, means, cameras, weights);
  eval.loss = static_cast<double>(terms.total.item());
  eval.input_psnr = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) eval.input_psnr += psnr(preds[i], targets[i]);
  eval.input_psnr /= static_cast<double>(preds.size());
  return terms.total;
}

template <typename Real>
double heldout_psnr(const GaussianFn<Real>& make, const ViewBatch<Real>& views, bool use_time,
                    const RenderConfig& render_config) {
  ad::NoGradGuard guard;
  const auto groups = group_by_time(views, use_time);
  double acc = 0;
  for (std::size_t k = 0; k < groups.times.size(); ++k) {
    const auto g = make(groups.times[k]);
    for (std::size_t i : groups.members[k]) acc += psnr(render(g, views.cameras[i], render_config).image, views.images[i]);
  }
  return acc / static_cast<double>(views.cameras.size());
}

// Shared descent loop. `snapshot` records the current parameters as the
// best state.
template <typename Real>
void tune_loop(const GaussianFn<Real>& make, const std::vector<net::ParamRef<Real>>& params,
               const ViewBatch<Real>& inputs, const ViewBatch<Real>* heldout, bool use_time, const TuneConfig& config,
               const std::function<void()>& snapshot, TuneResult<Real>& result) {
  config.validate();
  if (inputs.cameras.empty() || inputs.cameras.size() != inputs.images.size()) {
    throw ConfigError("tune: need matching, non-empty input images and cameras");
  }
  const auto groups = group_by_time(inputs, use_time);
  AdamW<Real> optimizer(AdamWConfig{config.beta1, config.beta2, config.eps, 0.0, 0.0});
  result.best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t step = 0; step <= config.steps; ++step) {
    for (const auto& p : params) p.tensor->zero_grad();
    Evaluation eval;
    Tensor<Real> loss;
    bool finite = true;
    try {
      loss = input_loss(make, inputs, groups, config.loss, config.render, eval);
      finite = std::isfinite(eval.loss);
    } catch (const NumericError&) {
      finite = false;
    }
    if (!finite) {
      result.aborted = true;
      break;
    }
    TuneRow row{step, eval.loss, eval.input_psnr, heldout ? heldout_psnr(make, *heldout, use_time, config.render) : 0.0};
    result.log.push_back(row);
    if (eval.loss < result.best_loss) {
      result.best_loss = eval.loss;
      result.best_step = step;
      snapshot();
    }
    if (step == config.steps) break;
    ad::backward(loss);
    const auto report = optimizer.step(params, config.effective_lr());
    if (report.skipped) {
      result.aborted = true;
      break;
    }
  }
  for (const auto& p : params) p.tensor->zero_grad();
}

// Restores requires_grad flags on scope exit.
template <typename Real>
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<net::ParamRef<Real>> params) : params_(std::move(params)) {
    for (const auto& p : params_) {
      saved_.push_back(p.tensor->requires_grad());
      p.tensor->set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].tensor->set_requires_grad(saved_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<net::ParamRef<Real>> params_;
  std::vector<bool> saved_;
};

}  // namespace

template <typename Real>
TuneResult<Real> token_tune(const net::Model<Real>& model, const ViewBatch<Real>& inputs, const TuneConfig& config,
                            const ViewBatch<Real>* heldout) {
  // Shallow copy: weight tensors are shared with `model`, the bank is private.
  net::Model<Real> work = model;
  work.bank = model.bank.clone();
  FreezeGuard<Real> freeze(work.network_parameters());
  std::vector<net::ParamRef<Real>> tokens;
  work.bank.collect_tokens(tokens);
  for (const auto& p : tokens) p.tensor->set_requires_grad(true);

  const bool dynamic = work.bank.n_dynamic() > 0;
  auto encode = [&] {
    ad::NoGradGuard guard;
    return work.encode_views(inputs.images, inputs.cameras);
  };
  const net::Encoding<Real> cached = encode();
  auto time_of = [dynamic](double t) { return dynamic ? std::optional<double>(t) : std::nullopt; };
  GaussianFn<Real> make = [&](double t) {
    return config.recompute_encoding ? work.gaussians_from(encode(), time_of(t)) : work.gaussians_from(cached, time_of(t));
  };

  TuneResult<Real> result;
  result.bank = work.bank.clone();
  tune_loop<Real>(make, tokens, inputs, heldout, dynamic, config, [&] { result.bank = work.bank.clone(); }, result);

  work.bank = result.bank.clone();
  {
    ad::NoGradGuard guard;
    result.gaussians = work.gaussians_from(cached, time_of(inputs.cameras.front().timestamp)).detach();
  }
  return result;
}

template <typename Real>
TuneResult<Real> gaussian_tune(const Tensor<Real>& raw, const ActivationConfig& activation, const ViewBatch<Real>& inputs,
                               const TuneConfig& config, const ViewBatch<Real>* heldout) {
  if (raw.rank() != 2 || raw.dim(1) != kGaussianColumns) {
    throw ShapeError("gaussian_tune: expected raw (M,14), got " + ad::shape_string(raw.shape()));
  }
  Tensor<Real> work = raw.detach().clone();
  work.set_requires_grad(true);
  std::vector<net::ParamRef<Real>> params{{"raw", &work, false}};
  GaussianFn<Real> make = [&](double) { return activate(work, activation); };

  TuneResult<Real> result;
  result.raw = work.detach().clone();
  tune_loop<Real>(make, params, inputs, heldout, false, config, [&] { result.raw = work.detach().clone(); }, result);
  {
    ad::NoGradGuard guard;
    result.gaussians = activate(result.raw, activation).detach();
  }
  return result;
}

#define TOKENSPLAT_INSTANTIATE_TTS(Real)                                                                       \
  template GaussianSet<Real> context_extend(const net::Model<Real>&, const ViewBatch<Real>&,                   \
                                            std::optional<double>);                                            \
  template TuneResult<Real> token_tune(const net::Model<Real>&, const ViewBatch<Real>&, const TuneConfig&,     \
                                       const ViewBatch<Real>*);                                                \
  template TuneResult<Real> gaussian_tune(const Tensor<Real>&, const ActivationConfig&, const ViewBatch<Real>&, \
                                          const TuneConfig&, const ViewBatch<Real>*);
TOKENSPLAT_INSTANTIATE_TTS(float)
TOKENSPLAT_INSTANTIATE_TTS(double)
#undef TOKENSPLAT_INSTANTIATE_TTS

}  // namespace tokensplat
