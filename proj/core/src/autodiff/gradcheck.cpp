// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace tokensplat::ad {

template <typename Real>
GradCheckReport check_gradients(const ScalarFn<Real>& fn, std::vector<Tensor<Real>> leaves,
                                const GradCheckOptions& options) {
  for (auto& leaf : leaves) {
    if (!leaf.requires_grad()) throw Error("check_gradients: every leaf must require grad");
    leaf.zero_grad();
  }
  backward(fn(leaves));

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    std::vector<Real> analytic(leaf.numel(), Real(0));
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(leaf.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_leaf && coords.size() > options.max_coords_per_leaf) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_leaf);
      std::sort(coords.begin(), coords.end());
    }

    auto values = leaf.mutable_values();
    for (std::size_t c : coords) {
      const Real saved = values[c];
      double plus = 0, minus = 0;
      {
        NoGradGuard guard;
        values[c] = static_cast<Real>(saved + options.step);
        plus = static_cast<double>(fn(leaves).item());
        values[c] = static_cast<Real>(saved - options.step);
        minus = static_cast<double>(fn(leaves).item());
      }
      values[c] = saved;
      // Divide by the perturbation actually representable in Real.
      const double h_plus = static_cast<double>(static_cast<Real>(saved + options.step)) - saved;
      const double h_minus = saved - static_cast<double>(static_cast<Real>(saved - options.step));
      const double numeric = (plus - minus) / (h_plus + h_minus);
      const double a = analytic[c];
      const double diff = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      double noise = 0;
      if (options.roundoff_factor > 0) {
        noise = options.roundoff_factor * std::numeric_limits<Real>::epsilon() * (std::abs(plus) + std::abs(minus)) /
                (h_plus + h_minus);
      }
      const double floor = std::max(options.abs_floor, noise);
      bool ok = false;
      if (scale > options.abs_floor && options.rel_tol * scale >= noise) {
        const double rel = diff / scale;
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ok = rel <= options.rel_tol;
      } else {
        // Too small to resolve relatively: the finite difference itself is
        // only accurate to `floor`.
        ++report.below_floor;
        ok = diff <= std::max(floor, options.rel_tol * scale);
      }
      report.max_abs_error = std::max(report.max_abs_error, diff);
      ++report.checked;
      if (!ok) {
        ++report.failed;
        if (report.worst.empty()) {
          std::ostringstream msg;
          msg.precision(10);
          msg << "leaf[" << li << "] coord " << c << ": analytic " << a << " numeric " << numeric;
          report.worst = msg.str();
        }
      }
    }
  }
  return report;
}

template GradCheckReport check_gradients(const ScalarFn<float>&, std::vector<Tensor<float>>, const GradCheckOptions&);
template GradCheckReport check_gradients(const ScalarFn<double>&, std::vector<Tensor<double>>,
                                         const GradCheckOptions&);

}  // namespace tokensplat::ad
