// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace tokensplat::ad {

namespace {

template <typename Real>
std::span<Real> grad_of(Node<Real>& self, std::size_t input) {
  return self.inputs[input]->grad_buffer();
}

template <typename Real>
bool wants_grad(const Node<Real>& self, std::size_t input) {
  return self.inputs[input]->requires_grad;
}

// ---------------------------------------------------------------------------
// Broadcasting

struct BroadcastPlan {
  enum class Kind { kSame, kScalarA, kScalarB, kSuffixA, kSuffixB, kGeneral };
  Kind kind = Kind::kSame;
  Shape out;
  std::size_t count = 0;
  std::size_t na = 0, nb = 0;
  std::vector<std::size_t> index_a, index_b;  // only for kGeneral
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  // Leading ones in `small` are allowed; the rest must match the tail of `big`.
  std::size_t off = big.size() - small.size();
  std::size_t first = 0;
  while (first < small.size() && small[first] == 1) ++first;
  for (std::size_t i = first; i < small.size(); ++i) {
    if (small[i] != big[off + i]) return false;
  }
  return true;
}

Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
    const std::size_t db = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) throw_shape_error(op, a, b, "not broadcastable");
    out[i] = std::max(da, db);
  }
  return out;
}

// Flat index into `in` for every flat index of `out`, where `in` broadcasts to `out`.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t oi = i + rank - in.size();
    stride[oi] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> result(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t idx = 0;
  for (std::size_t o = 0; o < n; ++o) {
    result[o] = idx;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      idx += stride[d];
      if (counter[d] < out[d]) break;
      idx -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return result;
}

BroadcastPlan make_plan(std::string_view op, const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.na = shape_numel(a);
  plan.nb = shape_numel(b);
  if (a == b) {
    plan.out = a;
    plan.kind = BroadcastPlan::Kind::kSame;
  } else {
    plan.out = broadcast_shape(op, a, b);
    if (plan.nb == 1 && a == plan.out) {
      plan.kind = BroadcastPlan::Kind::kScalarB;
    } else if (plan.na == 1 && b == plan.out) {
      plan.kind = BroadcastPlan::Kind::kScalarA;
    } else if (a == plan.out && is_suffix(b, a)) {
      plan.kind = BroadcastPlan::Kind::kSuffixB;
    } else if (b == plan.out && is_suffix(a, b)) {
      plan.kind = BroadcastPlan::Kind::kSuffixA;
    } else {
      plan.kind = BroadcastPlan::Kind::kGeneral;
      plan.index_a = broadcast_index(a, plan.out);
      plan.index_b = broadcast_index(b, plan.out);
    }
  }
  plan.count = shape_numel(plan.out);
  return plan;
}

// Calls fn(o, ia, ib) for every output element.
template <typename Fn>
void visit(const BroadcastPlan& p, Fn&& fn) {
  using K = BroadcastPlan::Kind;
  switch (p.kind) {
    case K::kSame:
      for (std::size_t o = 0; o < p.count; ++o) fn(o, o, o);
      break;
    case K::kScalarA:
      for (std::size_t o = 0; o < p.count; ++o) fn(o, std::size_t{0}, o);
      break;
    case K::kScalarB:
      for (std::size_t o = 0; o < p.count; ++o) fn(o, o, std::size_t{0});
      break;
    case K::kSuffixA:
      for (std::size_t o = 0; o < p.count; ++o) fn(o, o % p.na, o);
      break;
    case K::kSuffixB:
      for (std::size_t o = 0; o < p.count; ++o) fn(o, o, o % p.nb);
      break;
    case K::kGeneral:
      for (std::size_t o = 0; o < p.count; ++o) fn(o, p.index_a[o], p.index_b[o]);
      break;
  }
}

// f(x, y) -> z ; da(x, y, z) = dz/dx ; db(x, y, z) = dz/dy
template <typename Real, typename F, typename DA, typename DB>
Tensor<Real> binary(std::string_view op, const Tensor<Real>& a, const Tensor<Real>& b, F f, DA da, DB db) {
  auto plan = std::make_shared<BroadcastPlan>(make_plan(op, a.shape(), b.shape()));
  std::vector<Real> out(plan->count);
  const Real* av = a.values().data();
  const Real* bv = b.values().data();
  visit(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = f(av[ia], bv[ib]); });
  Shape shape = plan->out;
  return make_result<Real>(op, std::move(shape), std::move(out), {a, b}, [plan, da, db](Node<Real>& self) {
    const Real* x = self.inputs[0]->value.data();
    const Real* y = self.inputs[1]->value.data();
    const Real* z = self.value.data();
    const Real* g = self.grad.data();
    if (wants_grad(self, 0)) {
      Real* gx = grad_of(self, 0).data();
      visit(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { gx[ia] += g[o] * da(x[ia], y[ib], z[o]); });
    }
    if (wants_grad(self, 1)) {
      Real* gy = grad_of(self, 1).data();
      visit(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { gy[ib] += g[o] * db(x[ia], y[ib], z[o]); });
    }
  });
}

// f(x) -> y ; df(x, y) = dy/dx
template <typename Real, typename F, typename DF>
Tensor<Real> unary(std::string_view op, const Tensor<Real>& x, F f, DF df) {
  const auto& xv = x.values();
  std::vector<Real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result<Real>(op, x.shape(), std::move(out), {x}, [df](Node<Real>& self) {
    const auto& xin = self.inputs[0]->value;
    auto gx = grad_of(self, 0);
    const Real* g = self.grad.data();
    for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += g[i] * df(xin[i], self.value[i]);
  });
}

// Splits a shape around `axis` into (outer, n, inner).
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void check_axis(std::string_view op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(s));
  }
}

// C(m,n) += A(m,k) B(k,n). Each C(i,j) accumulates over k in ascending order.
template <typename Real>
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real s = arow[p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

// C(m,k) += G(m,n) B(k,n)^T
template <typename Real>
void gemm_nt(const Real* g, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* brow = b + p * n;
      // Four interleaved partial sums, combined in a fixed order.
      Real acc[4] = {0, 0, 0, 0};
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        acc[0] += grow[j] * brow[j];
        acc[1] += grow[j + 1] * brow[j + 1];
        acc[2] += grow[j + 2] * brow[j + 2];
        acc[3] += grow[j + 3] * brow[j + 3];
      }
      for (; j < n; ++j) acc[0] += grow[j] * brow[j];
      c[i * k + p] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
    }
  }
}

// C(k,n) += A(m,k)^T G(m,n)
template <typename Real>
void gemm_tn(const Real* a, const Real* g, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    const Real* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real s = arow[p];
      Real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * grow[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise binary

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary<Real>(
      "add", a, b, [](Real x, Real y) { return x + y; }, [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary<Real>(
      "sub", a, b, [](Real x, Real y) { return x - y; }, [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(-1); });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary<Real>(
      "mul", a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y, Real) { return y; },
      [](Real x, Real, Real) { return x; });
}

template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary<Real>(
      "div", a, b, [](Real x, Real y) { return x / y; }, [](Real, Real y, Real) { return Real(1) / y; },
      [](Real, Real y, Real z) { return -z / y; });
}

template <typename Real>
Tensor<Real> minimum(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary<Real>(
      "minimum", a, b, [](Real x, Real y) { return x <= y ? x : y; },
      [](Real x, Real y, Real) { return x <= y ? Real(1) : Real(0); },
      [](Real x, Real y, Real) { return x <= y ? Real(0) : Real(1); });
}

template <typename Real>
Tensor<Real> maximum(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary<Real>(
      "maximum", a, b, [](Real x, Real y) { return x >= y ? x : y; },
      [](Real x, Real y, Real) { return x >= y ? Real(1) : Real(0); },
      [](Real x, Real y, Real) { return x >= y ? Real(0) : Real(1); });
}

// ---------------------------------------------------------------------------
// Tensor-scalar

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real s) {
  return unary<Real>("add_scalar", a, [s](Real x) { return x + s; }, [](Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> mul_scalar(const Tensor<Real>& a, Real s) {
  return unary<Real>("mul_scalar", a, [s](Real x) { return x * s; }, [s](Real, Real) { return s; });
}

template <typename Real>
Tensor<Real> minimum_scalar(const Tensor<Real>& a, Real s) {
  return unary<Real>(
      "minimum_scalar", a, [s](Real x) { return x <= s ? x : s; },
      [s](Real x, Real) { return x <= s ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> maximum_scalar(const Tensor<Real>& a, Real s) {
  return unary<Real>(
      "maximum_scalar", a, [s](Real x) { return x >= s ? x : s; },
      [s](Real x, Real) { return x >= s ? Real(1) : Real(0); });
}

// ---------------------------------------------------------------------------
// Elementwise unary

template <typename Real>
Tensor<Real> neg(const Tensor<Real>& x) {
  return unary<Real>("neg", x, [](Real v) { return -v; }, [](Real, Real) { return Real(-1); });
}

template <typename Real>
Tensor<Real> exp(const Tensor<Real>& x) {
  return unary<Real>("exp", x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

template <typename Real>
Tensor<Real> log(const Tensor<Real>& x) {
  return unary<Real>("log", x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

template <typename Real>
Tensor<Real> tanh(const Tensor<Real>& x) {
  return unary<Real>("tanh", x, [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  return unary<Real>(
      "relu", x, [](Real v) { return v > Real(0) ? v : Real(0); },
      [](Real v, Real) { return v > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> sqrt(const Tensor<Real>& x) {
  return unary<Real>("sqrt", x, [](Real v) { return std::sqrt(v); }, [](Real, Real y) { return Real(0.5) / y; });
}

template <typename Real>
Tensor<Real> square(const Tensor<Real>& x) {
  return unary<Real>("square", x, [](Real v) { return v * v; }, [](Real v, Real) { return Real(2) * v; });
}

template <typename Real>
Tensor<Real> pow(const Tensor<Real>& x, Real exponent) {
  return unary<Real>(
      "pow", x, [exponent](Real v) { return std::pow(v, exponent); },
      [exponent](Real v, Real) { return exponent * std::pow(v, exponent - Real(1)); });
}

template <typename Real>
Tensor<Real> sign(const Tensor<Real>& x) {
  return unary<Real>(
      "sign", x, [](Real v) { return v > Real(0) ? Real(1) : (v < Real(0) ? Real(-1) : Real(0)); },
      [](Real, Real) { return Real(0); });
}

template <typename Real>
Tensor<Real> abs(const Tensor<Real>& x) {
  return unary<Real>(
      "abs", x, [](Real v) { return std::abs(v); },
      [](Real v, Real) { return v > Real(0) ? Real(1) : (v < Real(0) ? Real(-1) : Real(0)); });
}

template <typename Real>
Tensor<Real> clamp(const Tensor<Real>& x, Real lo, Real hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lower bound exceeds upper bound");
  return unary<Real>(
      "clamp", x, [lo, hi](Real v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? Real(1) : Real(0); });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real acc = 0;
  for (Real v : x.values()) acc += v;
  return make_result<Real>("sum", {}, {acc}, {x}, [](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    const Real g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  const auto n = static_cast<Real>(x.numel());
  Real acc = 0;
  for (Real v : x.values()) acc += v;
  return make_result<Real>("mean", {}, {acc / n}, {x}, [n](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    const Real g = self.grad[0] / n;
    for (auto& v : gx) v += g;
  });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x, std::size_t axis, bool keepdim) {
  check_axis("sum", x.shape(), axis);
  const auto sp = split_axis(x.shape(), axis);
  Shape shape = x.shape();
  if (keepdim) shape[axis] = 1; else shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<Real> out(sp.outer * sp.inner, Real(0));
  const Real* xv = x.values().data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += xv[(o * sp.n + k) * sp.inner + i];
  return make_result<Real>("sum_axis", std::move(shape), std::move(out), {x}, [sp](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.n; ++k)
        for (std::size_t i = 0; i < sp.inner; ++i) gx[(o * sp.n + k) * sp.inner + i] += self.grad[o * sp.inner + i];
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x, std::size_t axis, bool keepdim) {
  check_axis("mean", x.shape(), axis);
  return mul_scalar(sum(x, axis, keepdim), Real(1) / static_cast<Real>(x.shape()[axis]));
}

// ---------------------------------------------------------------------------
// Layout

template <typename Real>
Tensor<Real> broadcast_to(const Tensor<Real>& x, const Shape& shape) {
  const Shape out = broadcast_shape("broadcast_to", x.shape(), shape);
  if (out != shape) throw_shape_error("broadcast_to", x.shape(), shape);
  auto index = std::make_shared<std::vector<std::size_t>>(broadcast_index(x.shape(), shape));
  std::vector<Real> values(index->size());
  for (std::size_t o = 0; o < index->size(); ++o) values[o] = x.values()[(*index)[o]];
  return make_result<Real>("broadcast_to", shape, std::move(values), {x}, [index](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    for (std::size_t o = 0; o < index->size(); ++o) gx[(*index)[o]] += self.grad[o];
  });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) throw_shape_error("reshape", x.shape(), shape, "element count differs");
  std::vector<Real> values(x.values().begin(), x.values().end());
  return make_result<Real>("reshape", shape, std::move(values), {x}, [](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  if (axes.size() != rank) throw_shape_error("permute", in, Shape(axes.begin(), axes.end()), "axes rank");
  std::vector<bool> used(rank, false);
  for (auto a : axes) {
    if (a >= rank || used[a]) throw_shape_error("permute", in, Shape(axes.begin(), axes.end()), "not a permutation");
    used[a] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_stride[d - 1] = in_stride[d] * in[d];
  Shape out(rank);
  std::vector<std::size_t> stride(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out[d] = in[axes[d]];
    stride[d] = in_stride[axes[d]];
  }
  auto index = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> counter(rank, 0);
  std::size_t idx = 0;
  for (std::size_t o = 0; o < index->size(); ++o) {
    (*index)[o] = idx;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      idx += stride[d];
      if (counter[d] < out[d]) break;
      idx -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  std::vector<Real> values(index->size());
  for (std::size_t o = 0; o < index->size(); ++o) values[o] = x.values()[(*index)[o]];
  return make_result<Real>("permute", std::move(out), std::move(values), {x}, [index](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    for (std::size_t o = 0; o < index->size(); ++o) gx[(*index)[o]] += self.grad[o];
  });
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& x, std::size_t a0, std::size_t a1) {
  check_axis("transpose", x.shape(), a0);
  check_axis("transpose", x.shape(), a1);
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[a0], axes[a1]);
  return permute(x, axes);
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  check_axis("concat", first, axis);
  Shape out = first;
  out[axis] = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw_shape_error("concat", first, s, "rank differs");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) throw_shape_error("concat", first, s);
    }
    offsets.push_back(out[axis]);
    out[axis] += s[axis];
  }
  const auto sp = split_axis(out, axis);
  std::vector<Real> values(shape_numel(out));
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const std::size_t n = parts[pi].shape()[axis];
    const Real* src = parts[pi].values().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(src + o * n * sp.inner, n * sp.inner, values.data() + (o * sp.n + offsets[pi]) * sp.inner);
    }
  }
  auto meta = std::make_shared<std::pair<std::vector<std::size_t>, AxisSplit>>(offsets, sp);
  return make_result<Real>("concat", std::move(out), std::move(values), parts, [meta](Node<Real>& self) {
    const auto& [offs, split] = *meta;
    for (std::size_t pi = 0; pi < self.inputs.size(); ++pi) {
      if (!wants_grad(self, pi)) continue;
      auto& in = *self.inputs[pi];
      const std::size_t n = in.value.size() / (split.outer * split.inner);
      auto gx = in.grad_buffer();
      for (std::size_t o = 0; o < split.outer; ++o) {
        const Real* g = self.grad.data() + (o * split.n + offs[pi]) * split.inner;
        Real* dst = gx.data() + o * n * split.inner;
        for (std::size_t i = 0; i < n * split.inner; ++i) dst[i] += g[i];
      }
    }
  });
}

template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis("slice", x.shape(), axis);
  if (begin > end || end > x.shape()[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of shape " + shape_string(x.shape()));
  }
  const auto sp = split_axis(x.shape(), axis);
  const std::size_t len = end - begin;
  Shape out = x.shape();
  out[axis] = len;
  std::vector<Real> values(sp.outer * len * sp.inner);
  const Real* xv = x.values().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv + (o * sp.n + begin) * sp.inner, len * sp.inner, values.data() + o * len * sp.inner);
  }
  return make_result<Real>("slice", std::move(out), std::move(values), {x}, [sp, begin, len](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      const Real* g = self.grad.data() + o * len * sp.inner;
      Real* dst = gx.data() + (o * sp.n + begin) * sp.inner;
      for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += g[i];
    }
  });
}

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw ShapeError("gather_rows: scalar input");
  const std::size_t n = x.shape()[0];
  const std::size_t row = n ? x.numel() / n : 0;
  for (auto r : rows) {
    if (r >= n) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for shape " + shape_string(x.shape()));
    }
  }
  Shape out = x.shape();
  out[0] = rows.size();
  std::vector<Real> values(rows.size() * row);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(x.values().data() + rows[i] * row, row, values.data() + i * row);
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  return make_result<Real>("gather_rows", std::move(out), std::move(values), {x}, [idx, row](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const Real* g = self.grad.data() + i * row;
      Real* dst = gx.data() + (*idx)[i] * row;
      for (std::size_t j = 0; j < row; ++j) dst[j] += g[j];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and normalisation

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  Shape out;
  if (sa.size() == 2 && sb.size() == 2) {
    if (sa[1] != sb[0]) throw_shape_error("matmul", sa, sb, "inner dimensions differ");
    m = sa[0], k = sa[1], n = sb[1];
    out = {m, n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    if (sa[0] != sb[0]) throw_shape_error("matmul", sa, sb, "batch dimensions differ");
    if (sa[2] != sb[1]) throw_shape_error("matmul", sa, sb, "inner dimensions differ");
    batch = sa[0], m = sa[1], k = sa[2], n = sb[2];
    out = {batch, m, n};
  } else {
    throw_shape_error("matmul", sa, sb, "expected two matrices or two batched matrices");
  }
  std::vector<Real> values(batch * m * n, Real(0));
  for (std::size_t bi = 0; bi < batch; ++bi) {
    gemm_nn(a.values().data() + bi * m * k, b.values().data() + bi * k * n, values.data() + bi * m * n, m, k, n);
  }
  return make_result<Real>("matmul", std::move(out), std::move(values), {a, b}, [batch, m, k, n](Node<Real>& self) {
    const Real* av = self.inputs[0]->value.data();
    const Real* bv = self.inputs[1]->value.data();
    const Real* g = self.grad.data();
    if (wants_grad(self, 0)) {
      Real* ga = grad_of(self, 0).data();
      for (std::size_t bi = 0; bi < batch; ++bi) gemm_nt(g + bi * m * n, bv + bi * k * n, ga + bi * m * k, m, n, k);
    }
    if (wants_grad(self, 1)) {
      Real* gb = grad_of(self, 1).data();
      for (std::size_t bi = 0; bi < batch; ++bi) gemm_tn(av + bi * m * k, g + bi * m * n, gb + bi * k * n, m, k, n);
    }
  });
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = n ? x.numel() / n : 0;
  std::vector<Real> values(x.numel());
  const Real* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv + r * n;
    Real* out = values.data() + r * n;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[j]);
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= total;
  }
  return make_result<Real>("softmax", x.shape(), std::move(values), {x}, [rows, n](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* y = self.value.data() + r * n;
      const Real* g = self.grad.data() + r * n;
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias, Real eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t c = x.shape().back();
  if (gain.numel() != c) throw_shape_error("layer_norm", x.shape(), gain.shape(), "gain size");
  if (bias.numel() != c) throw_shape_error("layer_norm", x.shape(), bias.shape(), "bias size");
  const std::size_t rows = c ? x.numel() / c : 0;
  // Saved per row: normalised input and reciprocal standard deviation.
  auto saved = std::make_shared<std::pair<std::vector<Real>, std::vector<Real>>>();
  auto& [xhat, rstd] = *saved;
  xhat.resize(x.numel());
  rstd.resize(rows);
  std::vector<Real> values(x.numel());
  const Real* xv = x.values().data();
  const Real* gv = gain.values().data();
  const Real* bv = bias.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = xv + r * c;
    Real mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += in[j];
    mu /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<Real>(c);
    const Real rs = Real(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const Real h = (in[j] - mu) * rs;
      xhat[r * c + j] = h;
      values[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return make_result<Real>("layer_norm", x.shape(), std::move(values), {x, gain, bias},
                           [saved, rows, c](Node<Real>& self) {
    const auto& [xh, rs] = *saved;
    const Real* g = self.grad.data();
    const Real* gv = self.inputs[1]->value.data();
    if (wants_grad(self, 0)) {
      auto gx = grad_of(self, 0);
      const Real inv_c = Real(1) / static_cast<Real>(c);
      for (std::size_t r = 0; r < rows; ++r) {
        Real mean_g = 0, mean_gh = 0;
        for (std::size_t j = 0; j < c; ++j) {
          const Real gh = g[r * c + j] * gv[j];
          mean_g += gh;
          mean_gh += gh * xh[r * c + j];
        }
        mean_g *= inv_c;
        mean_gh *= inv_c;
        for (std::size_t j = 0; j < c; ++j) {
          const Real gh = g[r * c + j] * gv[j];
          gx[r * c + j] += rs[r] * (gh - mean_g - xh[r * c + j] * mean_gh);
        }
      }
    }
    if (wants_grad(self, 1)) {
      auto gg = grad_of(self, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gg[j] += g[r * c + j] * xh[r * c + j];
    }
    if (wants_grad(self, 2)) {
      auto gb = grad_of(self, 2);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
    }
  });
}

template <typename Real>
Tensor<Real> l2_normalize(const Tensor<Real>& x, Real eps) {
  if (x.rank() == 0) throw ShapeError("l2_normalize: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = c ? x.numel() / c : 0;
  auto norms = std::make_shared<std::vector<Real>>(rows);
  std::vector<Real> values(x.numel());
  const Real* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    Real ss = 0;
    for (std::size_t j = 0; j < c; ++j) ss += xv[r * c + j] * xv[r * c + j];
    const Real nrm = std::max(std::sqrt(ss), eps);
    (*norms)[r] = nrm;
    for (std::size_t j = 0; j < c; ++j) values[r * c + j] = xv[r * c + j] / nrm;
  }
  return make_result<Real>("l2_normalize", x.shape(), std::move(values), {x}, [norms, rows, c, eps](Node<Real>& self) {
    auto gx = grad_of(self, 0);
    const Real* y = self.value.data();
    const Real* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real nrm = (*norms)[r];
      Real dot = 0;
      // Below eps the map is linear: y = x / eps.
      const bool clamped = !(nrm > eps);
      if (!clamped) {
        for (std::size_t j = 0; j < c; ++j) dot += y[r * c + j] * g[r * c + j];
      }
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += (g[r * c + j] - y[r * c + j] * dot) / nrm;
    }
  });
}

#define TOKENSPLAT_INSTANTIATE_OPS(R)                                                                \
  template Tensor<R> add(const Tensor<R>&, const Tensor<R>&);                                        \
  template Tensor<R> sub(const Tensor<R>&, const Tensor<R>&);                                        \
  template Tensor<R> mul(const Tensor<R>&, const Tensor<R>&);                                        \
  template Tensor<R> div(const Tensor<R>&, const Tensor<R>&);                                        \
  template Tensor<R> minimum(const Tensor<R>&, const Tensor<R>&);                                    \
  template Tensor<R> maximum(const Tensor<R>&, const Tensor<R>&);                                    \
  template Tensor<R> add_scalar(const Tensor<R>&, R);                                                \
  template Tensor<R> mul_scalar(const Tensor<R>&, R);                                                \
  template Tensor<R> minimum_scalar(const Tensor<R>&, R);                                            \
  template Tensor<R> maximum_scalar(const Tensor<R>&, R);                                            \
  template Tensor<R> neg(const Tensor<R>&);                                                          \
  template Tensor<R> exp(const Tensor<R>&);                                                          \
  template Tensor<R> log(const Tensor<R>&);                                                          \
  template Tensor<R> tanh(const Tensor<R>&);                                                         \
  template Tensor<R> relu(const Tensor<R>&);                                                         \
  template Tensor<R> sqrt(const Tensor<R>&);                                                         \
  template Tensor<R> square(const Tensor<R>&);                                                       \
  template Tensor<R> pow(const Tensor<R>&, R);                                                       \
  template Tensor<R> sign(const Tensor<R>&);                                                         \
  template Tensor<R> abs(const Tensor<R>&);                                                          \
  template Tensor<R> clamp(const Tensor<R>&, R, R);                                                  \
  template Tensor<R> sum(const Tensor<R>&);                                                          \
  template Tensor<R> mean(const Tensor<R>&);                                                         \
  template Tensor<R> sum(const Tensor<R>&, std::size_t, bool);                                       \
  template Tensor<R> mean(const Tensor<R>&, std::size_t, bool);                                      \
  template Tensor<R> broadcast_to(const Tensor<R>&, const Shape&);                                   \
  template Tensor<R> reshape(const Tensor<R>&, const Shape&);                                        \
  template Tensor<R> permute(const Tensor<R>&, const std::vector<std::size_t>&);                     \
  template Tensor<R> transpose(const Tensor<R>&, std::size_t, std::size_t);                          \
  template Tensor<R> concat(const std::vector<Tensor<R>>&, std::size_t);                             \
  template Tensor<R> slice(const Tensor<R>&, std::size_t, std::size_t, std::size_t);                 \
  template Tensor<R> gather_rows(const Tensor<R>&, std::span<const std::size_t>);                    \
  template Tensor<R> matmul(const Tensor<R>&, const Tensor<R>&);                                     \
  template Tensor<R> softmax(const Tensor<R>&);                                                      \
  template Tensor<R> layer_norm(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, R);            \
  template Tensor<R> l2_normalize(const Tensor<R>&, R);

TOKENSPLAT_INSTANTIATE_OPS(float)
TOKENSPLAT_INSTANTIATE_OPS(double)

}  // namespace tokensplat::ad
