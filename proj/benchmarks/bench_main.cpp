// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "tokensplat/rasterizer.hpp"
#include "tokensplat/training.hpp"

using namespace tokensplat;

namespace {

SceneSample bench_scene() {
  SceneSpec spec;
  spec.seed = 3;
  return generate_scene(spec);
}

void BM_RenderGroundTruth(benchmark::State& state) {
  const auto scene = bench_scene();
  const auto g = GaussianSet<float>::from_rows(scene.base_rows);
  const auto camera = scene.rig.front();
  for (auto _ : state) benchmark::DoNotOptimize(render(g, camera, scene.render_config));
  state.counters["gaussians"] = static_cast<double>(g.size());
}
BENCHMARK(BM_RenderGroundTruth)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto scene = bench_scene();
  const auto model = net::Model<float>::create({}, 1);
  const auto split = fixed_split(static_cast<int>(scene.rig.size()), static_cast<int>(state.range(0)), 0);
  const auto views = context_views<float>(scene, split.context);
  ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(views.images, views.cameras));
}
BENCHMARK(BM_Forward)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto scene = bench_scene();
  TrainConfig tc;
  tc.batch_size = 1;
  auto train_state = make_train_state<float>({}, tc);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(train_state, {scene}, tc));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
