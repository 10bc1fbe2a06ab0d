// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference gradient suites over the differentiable pieces of the
// pipeline, all in 64-bit.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokensplat/autodiff/gradcheck.hpp"

namespace tokensplat {

struct SuiteCase {
  std::string name;
  ad::GradCheckReport report;
};

struct SuiteResult {
  std::string suite;
  double tolerance = 0;
  double seconds = 0;
  std::vector<SuiteCase> cases;

  bool passed() const;
  double max_rel_error() const;
  std::string worst_case() const;
};

/// Every autodiff primitive with step 1e-5 and relative tolerance 1e-6
/// (absolute 1e-8 for gradients at most 1e-8).
SuiteResult primitive_suite(std::uint64_t seed = 1);
/// Network layers and custom ops, relative tolerance 1e-6; coordinates below
/// the finite-difference rounding noise are judged against that noise.
SuiteResult layer_suite(std::uint64_t seed = 1);
/// Raw (M,14) -> activation -> render -> MSE with M <= 4 on a 16x16 image,
/// early stopping off; relative tolerance 1e-4.
SuiteResult rasterizer_suite(std::uint64_t seed = 1);
/// Visibility loss over several cameras with means kept away from the
/// |u| = 1 kinks, the clip and min ties; relative tolerance 1e-5.
SuiteResult visibility_suite(std::uint64_t seed = 1);
/// Photometric losses and a tiny network end to end; relative tolerance 1e-5.
SuiteResult pipeline_suite(std::uint64_t seed = 1);

std::vector<SuiteResult> all_suites(std::uint64_t seed = 1);

}  // namespace tokensplat
