// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/gradcheck_suites.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/losses.hpp"
#include "tokensplat/network/model.hpp"
#include "tokensplat/rasterizer.hpp"

namespace tokensplat {

namespace {

using ad::Tensor;
using T = Tensor<double>;
using Fn = ad::ScalarFn<double>;

constexpr double kRoundoff = 4.0;

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Inputs {
  std::mt19937_64 rng;
  explicit Inputs(std::uint64_t seed) : rng(seed) {}

  T normal(const ad::Shape& shape, double std = 1.0, double shift = 0.0, bool leaf = true) {
    std::normal_distribution<double> n01;
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = shift + std * n01(rng);
    return T::from_values(shape, std::move(v), leaf);
  }
  // Magnitudes in [lo, hi] with alternating sign: keeps inputs away from
  // kinks at 0 and exercises both sides.
  T away_from_zero(const ad::Shape& shape, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (i % 2 ? 1.0 : -1.0) * u(rng);
    return T::from_values(shape, std::move(v), true);
  }
  T uniform(const ad::Shape& shape, double lo, double hi, bool leaf = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return T::from_values(shape, std::move(v), leaf);
  }
};

// Contracts an arbitrary output with fixed random weights so every output
// element contributes to the checked scalar.
T project(const T& y, std::uint64_t seed) {
  Inputs in(seed ^ 0x5bd1e995ULL);
  return ad::sum(ad::mul(y, in.normal(y.shape(), 1.0, 0.0, false)));
}

SuiteCase run(const std::string& name, const std::function<T(const std::vector<T>&)>& f, std::vector<T> leaves,
              double tol, std::uint64_t seed, double step, double roundoff) {
  ad::GradCheckOptions opts;
  opts.roundoff_factor = roundoff;
  opts.rel_tol = tol;
  opts.step = step;
  opts.seed = seed;
  const Fn fn = [f, seed](const std::vector<T>& l) { return project(f(l), seed); };
  return {name, ad::check_gradients(fn, std::move(leaves), opts)};
}

Camera grid_camera(int w, int h, double f) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

}  // namespace

bool SuiteResult::passed() const {
  for (const auto& c : cases)
    if (!c.report.passed()) return false;
  return !cases.empty();
}

double SuiteResult::max_rel_error() const {
  double m = 0;
  for (const auto& c : cases) m = std::max(m, c.report.max_rel_error);
  return m;
}

std::string SuiteResult::worst_case() const {
  const SuiteCase* worst = nullptr;
  for (const auto& c : cases) {
    if (!worst || (!c.report.passed() && worst->report.passed()) ||
        (c.report.passed() == worst->report.passed() && c.report.max_rel_error > worst->report.max_rel_error)) {
      worst = &c;
    }
  }
  if (!worst) return "";
  std::ostringstream s;
  s << worst->name << " (" << worst->report.worst << ")";
  return s.str();
}

SuiteResult primitive_suite(std::uint64_t seed) {
  Timer timer;
  SuiteResult r{"primitives", 1e-6, 0, {}};
  const double tol = r.tolerance;
  Inputs in(seed);
  // Plain rule: h = 1e-5, relative where |grad| > 1e-8, absolute below.
  auto add = [&](const std::string& name, auto f, std::vector<T> leaves) {
    r.cases.push_back(run(name, f, std::move(leaves), tol, seed + r.cases.size(), 1e-5, 0.0));
  };
  auto add_poly = add;
  using V = std::vector<T>;

  add_poly("add_broadcast", [](const V& l) { return ad::add(l[0], l[1]); }, {in.normal({3, 4}), in.normal({1, 4})});
  add_poly("sub_broadcast", [](const V& l) { return ad::sub(l[0], l[1]); }, {in.normal({2, 3, 4}), in.normal({3, 1})});
  add_poly("mul_broadcast", [](const V& l) { return ad::mul(l[0], l[1]); }, {in.normal({3, 4}), in.normal({4})});
  add("div", [](const V& l) { return ad::div(l[0], l[1]); }, {in.normal({3, 4}), in.away_from_zero({3, 4}, 0.5, 2.0)});
  {
    // Separate the operands so no element sits on a tie.
    auto a = in.normal({4, 5});
    auto b = T::from_values(a.shape(), [&] {
      std::vector<double> v(a.values().begin(), a.values().end());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += (i % 2 ? 0.3 : -0.3);
      return v;
    }(), true);
    add("minimum", [](const V& l) { return ad::minimum(l[0], l[1]); }, {a, b});
    add("maximum", [](const V& l) { return ad::maximum(l[0], l[1]); }, {a.clone(), b.clone()});
  }
  add_poly("add_scalar", [](const V& l) { return ad::add_scalar(l[0], 0.7); }, {in.normal({5})});
  add_poly("mul_scalar", [](const V& l) { return ad::mul_scalar(l[0], -1.3); }, {in.normal({5})});
  add("minimum_scalar", [](const V& l) { return ad::minimum_scalar(l[0], 0.0); }, {in.away_from_zero({6}, 0.1, 1.0)});
  add("maximum_scalar", [](const V& l) { return ad::maximum_scalar(l[0], 0.0); }, {in.away_from_zero({6}, 0.1, 1.0)});
  add_poly("neg", [](const V& l) { return ad::neg(l[0]); }, {in.normal({5})});
  add("exp", [](const V& l) { return ad::exp(l[0]); }, {in.normal({5})});
  add("log", [](const V& l) { return ad::log(l[0]); }, {in.uniform({5}, 0.2, 3.0)});
  add("tanh", [](const V& l) { return ad::tanh(l[0]); }, {in.normal({5})});
  add("relu", [](const V& l) { return ad::relu(l[0]); }, {in.away_from_zero({8}, 0.1, 1.0)});
  add("sqrt", [](const V& l) { return ad::sqrt(l[0]); }, {in.uniform({5}, 0.2, 3.0)});
  add_poly("square", [](const V& l) { return ad::square(l[0]); }, {in.normal({5})});
  add("pow", [](const V& l) { return ad::pow(l[0], 1.7); }, {in.uniform({5}, 0.2, 3.0)});
  add("abs", [](const V& l) { return ad::abs(l[0]); }, {in.away_from_zero({8}, 0.1, 1.0)});
  add("sign_times_x", [](const V& l) { return ad::mul(ad::sign(l[0]), ad::exp(l[0])); },
      {in.away_from_zero({8}, 0.1, 1.0)});
  add("clamp", [](const V& l) { return ad::clamp(l[0], -0.5, 0.5); }, {in.away_from_zero({8}, 0.1, 0.4)});
  add("clamp_outside", [](const V& l) { return ad::add(ad::clamp(l[0], -0.5, 0.5), ad::square(l[0])); },
      {in.away_from_zero({8}, 0.6, 1.5)});
  add_poly("sum_all", [](const V& l) { return ad::mul(ad::sum(l[0]), ad::sum(l[0])); }, {in.normal({3, 4})});
  add_poly("mean_all", [](const V& l) { return ad::square(ad::mean(l[0])); }, {in.normal({3, 4})});
  add_poly("sum_axis", [](const V& l) { return ad::sum(l[0], 1); }, {in.normal({2, 3, 4})});
  add_poly("mean_axis_keepdim", [](const V& l) { return ad::mean(l[0], 0, true); }, {in.normal({3, 4})});
  add_poly("broadcast_to", [](const V& l) { return ad::broadcast_to(l[0], {3, 2, 4}); }, {in.normal({2, 1})});
  add_poly("reshape", [](const V& l) { return ad::reshape(l[0], {4, 3}); }, {in.normal({2, 6})});
  add_poly("permute", [](const V& l) { return ad::permute(l[0], {2, 0, 1}); }, {in.normal({2, 3, 4})});
  add_poly("transpose", [](const V& l) { return ad::transpose(l[0], 0, 1); }, {in.normal({3, 5})});
  add_poly("concat", [](const V& l) { return ad::concat(std::vector<T>{l[0], l[1]}, 1); },
      {in.normal({3, 2}), in.normal({3, 4})});
  add_poly("slice", [](const V& l) { return ad::slice(l[0], 1, 1, 3); }, {in.normal({3, 5})});
  add_poly("gather_rows_repeated",
      [](const V& l) {
        const std::vector<std::size_t> rows{2, 0, 2, 1};
        return ad::gather_rows(l[0], rows);
      },
      {in.normal({3, 4})});
  add_poly("matmul", [](const V& l) { return ad::matmul(l[0], l[1]); }, {in.normal({3, 4}), in.normal({4, 5})});
  add_poly("matmul_batched", [](const V& l) { return ad::matmul(l[0], l[1]); },
      {in.normal({2, 3, 4}), in.normal({2, 4, 2})});
  add("softmax", [](const V& l) { return ad::softmax(l[0]); }, {in.normal({3, 6})});
  add("layer_norm", [](const V& l) { return ad::layer_norm(l[0], l[1], l[2]); },
      {in.normal({4, 8}), in.normal({8}, 0.3, 1.0), in.normal({8}, 0.3)});
  add("l2_normalize", [](const V& l) { return ad::l2_normalize(l[0]); }, {in.normal({4, 6})});
  add("softmax_cross_entropy",
      [](const V& l) {
        // -log softmax(x)[2]
        const auto p = ad::softmax(ad::reshape(l[0], {1, 5}));
        return ad::neg(ad::log(ad::slice(p, 1, 2, 3)));
      },
      {in.normal({5})});
  r.seconds = timer.seconds();
  return r;
}

SuiteResult layer_suite(std::uint64_t seed) {
  Timer timer;
  SuiteResult r{"layers", 1e-6, 0, {}};
  const double tol = r.tolerance;
  Inputs in(seed * 13);
  auto add = [&](const std::string& name, auto f, std::vector<T> leaves) {
    r.cases.push_back(run(name, f, std::move(leaves), tol, seed + r.cases.size(), 1e-5, kRoundoff));
  };
  auto add_poly = [&](const std::string& name, auto f, std::vector<T> leaves) {
    r.cases.push_back(run(name, f, std::move(leaves), tol, seed + r.cases.size(), 1.0, kRoundoff));
  };
  using V = std::vector<T>;
  add("gelu", [](const V& l) { return net::gelu(l[0]); }, {in.normal({12}, 2.0)});
  add("normalize_quaternions", [](const V& l) { return normalize_quaternions(l[0]); }, {in.normal({5, 4})});
  add_poly("split_merge_heads",
      [](const V& l) { return net::merge_heads(ad::mul(net::split_heads(l[0], 2), net::split_heads(l[0], 2))); },
      {in.normal({3, 8})});
  add("qk_norm_attention",
      [](const V& l) {
        return net::qk_norm_attention(net::split_heads(l[0], 2), net::split_heads(l[1], 2), net::split_heads(l[2], 2),
                                      l[3], T());
      },
      {in.normal({4, 8}), in.normal({5, 8}), in.normal({5, 8}), in.uniform({2}, 1.0, 3.0)});
  {
    const auto mask = net::build_mask(2, 2);
    std::vector<double> bias(16);
    for (std::size_t q = 0; q < 4; ++q)
      for (std::size_t k = 0; k < 4; ++k)
        bias[q * 4 + k] = mask.at(q, k) ? 0.0 : -std::numeric_limits<double>::infinity();
    const auto bias_t = T::from_values({1, 4, 4}, bias);
    add("qk_norm_attention_masked",
        [bias_t](const V& l) {
          return net::qk_norm_attention(net::split_heads(l[0], 2), net::split_heads(l[1], 2),
                                        net::split_heads(l[2], 2), l[3], bias_t);
        },
        {in.normal({4, 8}), in.normal({4, 8}), in.normal({4, 8}), in.uniform({2}, 1.0, 3.0)});
  }
  {
    const auto image = in.uniform({12, 13, 3}, 0.0, 1.0);
    add_poly("gaussian_blur_valid", [](const V& l) { return gaussian_blur_valid(l[0]); }, {image});
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult rasterizer_suite(std::uint64_t seed) {
  Timer timer;
  SuiteResult r{"rasterizer", 1e-4, 0, {}};
  const Camera cam = grid_camera(16, 16, 20);
  RenderConfig cfg;
  cfg.early_stop = false;
  for (std::size_t m = 1; m <= 4; m += 3) {
    for (int trial = 0; trial < 2; ++trial) {
      Inputs in(seed * 1000 + m * 10 + static_cast<std::uint64_t>(trial));
      std::normal_distribution<double> n01;
      std::vector<double> raw(m * kGaussianColumns);
      for (std::size_t i = 0; i < m; ++i) {
        double* row = raw.data() + i * kGaussianColumns;
        row[0] = 0.25 * n01(in.rng);
        row[1] = 0.25 * n01(in.rng);
        row[2] = 0.2 * n01(in.rng) + 0.5;
        for (int k = 3; k < 6; ++k) row[k] = n01(in.rng);
        for (int k = 6; k < 9; ++k) row[k] = -2.0 + 0.3 * n01(in.rng);
        row[9] = n01(in.rng);
        for (int k = 10; k < 14; ++k) row[k] = n01(in.rng);
      }
      const auto target = in.uniform({16, 16, 3}, 0.0, 1.0, false);
      auto leaf = T::from_values({m, kGaussianColumns}, raw, true);
      ad::GradCheckOptions opts;
      opts.rel_tol = r.tolerance;
      const Fn fn = [&](const std::vector<T>& l) {
        const auto g = activate(l[0], ActivationConfig{});
        return ad::mean(ad::square(ad::sub(render(g, cam, cfg).image, target)));
      };
      r.cases.push_back({"render_m" + std::to_string(m) + "_trial" + std::to_string(trial),
                         ad::check_gradients(fn, {leaf}, opts)});
    }
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult visibility_suite(std::uint64_t seed) {
  Timer timer;
  SuiteResult r{"visibility", 1e-5, 0, {}};
  std::vector<Camera> cams;
  for (int i = 0; i < 3; ++i) {
    const double a = -0.4 + 0.4 * i;
    const Eigen::Vector3d eye(1.5 * std::sin(a), 0.1 * i, 1.0 - 1.5 * std::cos(a));
    cams.push_back(Camera::look_at(eye, {0, 0, 1}, {0, -1, 0}, 20, 20, 8, 8, 16, 16));
  }
  const double clip = 1.0;
  const double margin = 0.02;
  for (const bool normalize : {false, true}) {
    Inputs in(seed * 77 + (normalize ? 1 : 0));
    std::normal_distribution<double> n01;
    std::vector<double> means;
    // Rejection-sample means whose penalties are away from every kink.
    while (means.size() < 3 * 12) {
      const Eigen::Vector3d p(0.6 * n01(in.rng), 0.6 * n01(in.rng), 1.0 + 0.6 * n01(in.rng));
      std::vector<double> pen;
      bool ok = true;
      for (const auto& c : cams) {
        const auto pc = c.to_camera(p);
        if (pc.z() <= 0.05) {
          pen.push_back(clip);
          continue;
        }
        const auto nc = normalize_coords(c.fx * pc.x() / pc.z() + c.cx, c.fy * pc.y() / pc.z() + c.cy, c.width,
                                         c.height);
        if (std::abs(std::abs(nc.u) - 1) < margin || std::abs(std::abs(nc.v) - 1) < margin) ok = false;
        pen.push_back(std::max(std::abs(nc.u) - 1, 0.0) + std::max(std::abs(nc.v) - 1, 0.0));
      }
      std::sort(pen.begin(), pen.end());
      if (pen[0] > 0 && pen[1] - pen[0] < margin) ok = false;
      if (std::abs(pen[0] - clip) < margin) ok = false;
      if (ok) means.insert(means.end(), {p.x(), p.y(), p.z()});
    }
    auto leaf = T::from_values({means.size() / 3, 3}, means, true);
    ad::GradCheckOptions opts;
    opts.rel_tol = r.tolerance;
    opts.step = 1e-6;
    const Fn fn = [&](const std::vector<T>& l) { return visibility_loss(l[0], std::span<const Camera>(cams), clip, normalize); };
    r.cases.push_back({normalize ? "visibility_mean" : "visibility_sum", ad::check_gradients(fn, {leaf}, opts)});
  }
  r.seconds = timer.seconds();
  return r;
}

SuiteResult pipeline_suite(std::uint64_t seed) {
  Timer timer;
  SuiteResult r{"pipeline", 1e-5, 0, {}};
  Inputs in(seed * 31);
  {
    const auto target = in.uniform({12, 12, 3}, 0.0, 1.0, false);
    auto pred = in.uniform({12, 12, 3}, 0.0, 1.0);
    ad::GradCheckOptions opts;
  opts.roundoff_factor = kRoundoff;
    opts.rel_tol = r.tolerance;
    const Fn mse = [&](const std::vector<T>& l) { return mse_loss(l[0], target); };
    ad::GradCheckOptions quadratic = opts;
    quadratic.step = 1.0;
    r.cases.push_back({"mse_loss", ad::check_gradients(mse, {pred}, quadratic)});
    const Fn ssim = [&](const std::vector<T>& l) { return ssim_loss(l[0], target); };
    r.cases.push_back({"ssim_loss", ad::check_gradients(ssim, {pred.clone()}, opts)});
  }
  {
    net::NetworkConfig cfg;
    cfg.channels = 16;
    cfg.heads = 2;
    cfg.enc_depth = 1;
    cfg.dec_depth = 1;
    cfg.patch = 4;
    cfg.n_static = 2;
    cfg.n_dynamic = 1;
    cfg.time_dim = 8;
    cfg.layerscale_init = 0.5;  // large enough that every branch matters
    cfg.head_std = 0.05;
    auto model = net::Model<double>::create(cfg, seed);
    const Camera cam = grid_camera(8, 8, 10);
    std::vector<T> images{in.uniform({8, 8, 3}, 0.0, 1.0, false)};
    std::vector<Camera> cams{cam};
    auto params = model.parameters();
    std::vector<T> leaves;
    for (const auto& p : params) leaves.push_back(*p.tensor);
    for (auto& l : leaves) l.set_requires_grad(true);
    ad::GradCheckOptions opts;
  opts.roundoff_factor = kRoundoff;
    opts.rel_tol = r.tolerance;
    opts.max_coords_per_leaf = 3;
    opts.seed = seed;
    const Fn fn = [&](const std::vector<T>&) {
      const auto raw = model.raw_from(model.encode_views(images, cams), 0.3);
      return project(raw, seed);
    };
    r.cases.push_back({"network_raw", ad::check_gradients(fn, leaves, opts)});
  }
  r.seconds = timer.seconds();
  return r;
}

std::vector<SuiteResult> all_suites(std::uint64_t seed) {
  return {primitive_suite(seed), layer_suite(seed), rasterizer_suite(seed), visibility_suite(seed), pipeline_suite(seed)};
}

}  // namespace tokensplat
