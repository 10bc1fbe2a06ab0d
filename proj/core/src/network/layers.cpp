// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/network/layers.hpp"

#include <cmath>
#include <numbers>

#include "tokensplat/autodiff/ops.hpp"

namespace tokensplat::net {

using ad::Tensor;

template <typename Real>
Tensor<Real> normal_tensor(const ad::Shape& shape, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  std::vector<Real> values(ad::shape_numel(shape));
  for (auto& v : values) v = static_cast<Real>(dist(rng));
  return Tensor<Real>::from_values(shape, std::move(values), true);
}

template <typename Real>
Linear<Real> Linear<Real>::create(std::size_t in, std::size_t out, double std, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = normal_tensor<Real>({in, out}, std, rng);
  if (with_bias) l.bias = Tensor<Real>::zeros({out}, true);
  return l;
}

template <typename Real>
Tensor<Real> Linear<Real>::operator()(const Tensor<Real>& x) const {
  auto y = ad::matmul(x, weight);
  return bias.defined() ? ad::add(y, bias) : y;
}

template <typename Real>
void Linear<Real>::collect(std::vector<ParamRef<Real>>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", &bias, false});
}

template <typename Real>
LayerNorm<Real> LayerNorm<Real>::create(std::size_t channels) {
  return {Tensor<Real>::full({channels}, Real(1), true), Tensor<Real>::zeros({channels}, true)};
}

template <typename Real>
Tensor<Real> LayerNorm<Real>::operator()(const Tensor<Real>& x) const {
  return ad::layer_norm(x, gain, bias);
}

template <typename Real>
void LayerNorm<Real>::collect(std::vector<ParamRef<Real>>& out, const std::string& prefix) {
  out.push_back({prefix + ".gain", &gain, false});
  out.push_back({prefix + ".bias", &bias, false});
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  constexpr double kA = 0.044715;
  const double k = std::sqrt(2.0 / std::numbers::pi);
  std::vector<Real> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = static_cast<Real>(0.5 * v * (1.0 + std::tanh(k * (v + kA * v * v * v))));
  }
  return ad::make_result<Real>("gelu", x.shape(), std::move(out), {x}, [k](ad::Node<Real>& self) {
    auto gx = self.inputs[0]->grad_buffer();
    const auto& xv = self.inputs[0]->value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(k * (v + kA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * k * (1.0 + 3.0 * kA * v * v);
      gx[i] += static_cast<Real>(self.grad[i] * d);
    }
  });
}

template <typename Real>
Mlp<Real> Mlp<Real>::create(std::size_t channels, double ratio, double std, Rng& rng) {
  const auto hidden = static_cast<std::size_t>(std::lround(static_cast<double>(channels) * ratio));
  Mlp m;
  m.fc1 = Linear<Real>::create(channels, hidden, std, rng);
  m.fc2 = Linear<Real>::create(hidden, channels, std, rng);
  return m;
}

template <typename Real>
Tensor<Real> Mlp<Real>::operator()(const Tensor<Real>& x) const {
  return fc2(gelu(fc1(x)));
}

template <typename Real>
void Mlp<Real>::collect(std::vector<ParamRef<Real>>& out, const std::string& prefix) {
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

template <typename Real>
Tensor<Real> split_heads(const Tensor<Real>& x, std::size_t heads) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  return ad::permute(ad::reshape(x, {n, heads, c / heads}), {1, 0, 2});
}

template <typename Real>
Tensor<Real> merge_heads(const Tensor<Real>& x) {
  const std::size_t h = x.dim(0), n = x.dim(1), d = x.dim(2);
  return ad::reshape(ad::permute(x, {1, 0, 2}), {n, h * d});
}

template <typename Real>
Tensor<Real> qk_norm_logits(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& temperature) {
  const std::size_t heads = q.dim(0);
  const auto qn = ad::l2_normalize(q);
  const auto kn = ad::l2_normalize(k);
  return ad::mul(ad::matmul(qn, ad::transpose(kn, 1, 2)), ad::reshape(temperature, {heads, 1, 1}));
}

template <typename Real>
Tensor<Real> qk_norm_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                               const Tensor<Real>& temperature, const Tensor<Real>& mask_bias, bool k_normalized) {
  const std::size_t heads = q.dim(0);
  const auto qn = ad::l2_normalize(q);
  const auto kn = k_normalized ? k : ad::l2_normalize(k);
  auto logits = ad::mul(ad::matmul(qn, ad::transpose(kn, 1, 2)), ad::reshape(temperature, {heads, 1, 1}));
  if (mask_bias.defined()) logits = ad::add(logits, mask_bias);
  return ad::matmul(ad::softmax(logits), v);
}

template <typename Real>
SelfAttention<Real> SelfAttention<Real>::create(std::size_t channels, std::size_t heads, double std, Rng& rng) {
  SelfAttention a;
  a.heads = heads;
  a.q = Linear<Real>::create(channels, channels, std, rng);
  a.k = Linear<Real>::create(channels, channels, std, rng);
  a.v = Linear<Real>::create(channels, channels, std, rng);
  a.out = Linear<Real>::create(channels, channels, std, rng);
  a.temperature = Tensor<Real>::full({heads}, static_cast<Real>(std::sqrt(static_cast<double>(channels / heads))), true);
  return a;
}

template <typename Real>
Tensor<Real> SelfAttention<Real>::operator()(const Tensor<Real>& x, const Tensor<Real>& mask_bias) const {
  const auto o = qk_norm_attention(split_heads(q(x), heads), split_heads(k(x), heads), split_heads(v(x), heads),
                                   temperature, mask_bias);
  return out(merge_heads(o));
}

template <typename Real>
void SelfAttention<Real>::collect(std::vector<ParamRef<Real>>& out_refs, const std::string& prefix) {
  q.collect(out_refs, prefix + ".q");
  k.collect(out_refs, prefix + ".k");
  v.collect(out_refs, prefix + ".v");
  out.collect(out_refs, prefix + ".out");
  out_refs.push_back({prefix + ".temperature", &temperature, false});
}

#define TOKENSPLAT_INSTANTIATE_LAYERS(Real)                                                                    \
  template Tensor<Real> normal_tensor<Real>(const ad::Shape&, double, Rng&);                                   \
  template struct Linear<Real>;                                                                                \
  template struct LayerNorm<Real>;                                                                             \
  template struct Mlp<Real>;                                                                                   \
  template struct SelfAttention<Real>;                                                                         \
  template Tensor<Real> gelu(const Tensor<Real>&);                                                             \
  template Tensor<Real> split_heads(const Tensor<Real>&, std::size_t);                                         \
  template Tensor<Real> merge_heads(const Tensor<Real>&);                                                      \
  template Tensor<Real> qk_norm_logits(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);         \
  template Tensor<Real> qk_norm_attention(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,       \
                                          const Tensor<Real>&, const Tensor<Real>&, bool);
TOKENSPLAT_INSTANTIATE_LAYERS(float)
TOKENSPLAT_INSTANTIATE_LAYERS(double)
#undef TOKENSPLAT_INSTANTIATE_LAYERS

}  // namespace tokensplat::net
