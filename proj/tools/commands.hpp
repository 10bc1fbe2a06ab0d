// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tokensplat/io/config.hpp"

namespace tokensplat::cli {

struct SynthArgs {
  std::string out;
};

struct TrainArgs {
  std::string data, out, resume;
};

struct EvalArgs {
  std::string checkpoint, data, out;
};

struct RenderArgs {
  std::string checkpoint, data, out;
  std::vector<int> cameras;  // empty: every camera
  std::optional<double> t;
};

struct TuneArgs {
  std::string checkpoint, data, out;
  int scene = 0;
};

struct PlyArgs {
  std::string checkpoint, data, out;
  std::optional<double> t;
  bool single_precision = false;
};

struct FlowArgs {
  std::string checkpoint, data, out;
  std::vector<double> timestamps;
};

struct GradcheckArgs {
  std::uint64_t seed = 1;
};

int synth(const io::RunConfig& config, const SynthArgs& args);
int train(const io::RunConfig& config, const TrainArgs& args);
int eval(const io::RunConfig& config, const EvalArgs& args);
int render(const io::RunConfig& config, const RenderArgs& args);
int tune(const io::RunConfig& config, const TuneArgs& args);
int export_ply(const io::RunConfig& config, const PlyArgs& args);
int flow(const io::RunConfig& config, const FlowArgs& args);
int gradcheck(const GradcheckArgs& args);

}  // namespace tokensplat::cli
