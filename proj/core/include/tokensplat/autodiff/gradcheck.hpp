// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tokensplat/autodiff/tensor.hpp"

namespace tokensplat::ad {

/// Central finite-difference comparison settings. A coordinate is judged
/// relatively, |analytic - numeric| <= rel_tol * max(|analytic|, |numeric|),
/// when rel_tol times that magnitude is above the floor; otherwise it passes
/// when the difference is within the floor.
struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-6;
  double abs_floor = 1e-8;
  // When positive, the floor for a coordinate is raised to the rounding
  // noise of the difference quotient, factor * eps * (|f+| + |f-|) / (2h).
  // Gradients below that level cannot be resolved by finite differences.
  double roundoff_factor = 0;
  // 0 checks every coordinate; otherwise a seeded random subset per leaf.
  std::size_t max_coords_per_leaf = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t below_floor = 0;  // judged against the floor
  double max_rel_error = 0;  // over coordinates judged relatively
  double max_abs_error = 0;  // over all coordinates
  std::string worst;         // "leaf[i] coord j: analytic a numeric n"
  bool passed() const { return failed == 0; }
};

template <typename Real>
using ScalarFn = std::function<Tensor<Real>(const std::vector<Tensor<Real>>&)>;

/// Compares backward() of fn against central differences of fn over every
/// leaf. Leaves must require grad; their values are restored afterwards.
template <typename Real>
GradCheckReport check_gradients(const ScalarFn<Real>& fn, std::vector<Tensor<Real>> leaves,
                                const GradCheckOptions& options = {});

extern template GradCheckReport check_gradients(const ScalarFn<float>&, std::vector<Tensor<float>>,
                                                const GradCheckOptions&);
extern template GradCheckReport check_gradients(const ScalarFn<double>&, std::vector<Tensor<double>>,
                                                const GradCheckOptions&);

}  // namespace tokensplat::ad
