// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/network/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <string>

#include "tokensplat/autodiff/ops.hpp"
#include "tokensplat/errors.hpp"

namespace tokensplat::net {

using ad::Tensor;

void NetworkConfig::validate() const {
  if (channels == 0 || heads == 0 || channels % heads != 0) {
    throw ConfigError("network: channels (" + std::to_string(channels) + ") must be a positive multiple of heads (" +
                      std::to_string(heads) + ")");
  }
  if (patch == 0) throw ConfigError("network: patch must be positive");
  if (n_tokens() == 0) throw ConfigError("network: the token bank needs at least one token");
  if (time_dim == 0 || time_dim % 2 != 0) throw ConfigError("network: time_dim must be even and positive");
  if (!(mlp_ratio > 0)) throw ConfigError("network: mlp_ratio must be positive");
  if (!(token_std >= 0 && head_std >= 0 && weight_std >= 0 && layerscale_init >= 0)) {
    throw ConfigError("network: initialization scales must be non-negative");
  }
  if (!(activation.scale_min > 0 && activation.scale_min < activation.scale_max)) {
    throw ConfigError("network: require 0 < scale_min < scale_max");
  }
}

void NetworkConfig::check_image(int height, int width) const {
  const auto p = static_cast<int>(patch);
  if (height <= 0 || width <= 0 || height % p != 0 || width % p != 0) {
    throw ConfigError("network: image " + std::to_string(width) + "x" + std::to_string(height) +
                      " is not divisible by patch size " + std::to_string(patch));
  }
}

bool AttentionMask::all_allowed() const {
  for (auto a : allowed)
    if (!a) return false;
  return true;
}

AttentionMask build_mask(std::size_t n_static, std::size_t n_dynamic) {
  AttentionMask mask;
  mask.n_static = n_static;
  mask.n_dynamic = n_dynamic;
  const std::size_t n = n_static + n_dynamic;
  mask.allowed.assign(n * n, 1);
  for (std::size_t q = 0; q < n_static; ++q)
    for (std::size_t k = n_static; k < n; ++k) mask.allowed[q * n + k] = 0;
  return mask;
}

std::vector<double> time_features(double t, std::size_t time_dim) {
  const std::size_t n = time_dim / 2;
  std::vector<double> f(time_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double period = n > 1 ? std::pow(1e4, static_cast<double>(i) / static_cast<double>(n - 1)) : 1.0;
    const double w = 2.0 * std::numbers::pi / period;
    f[2 * i] = std::sin(w * t);
    f[2 * i + 1] = std::cos(w * t);
  }
  return f;
}

template <typename Real>
TokenBank<Real> TokenBank<Real>::clone() const {
  TokenBank b;
  if (static_tokens.defined()) b.static_tokens = static_tokens.clone();
  if (dynamic_tokens.defined()) b.dynamic_tokens = dynamic_tokens.clone();
  b.time_proj.weight = time_proj.weight.clone();
  b.time_proj.bias = time_proj.bias.clone();
  return b;
}

template <typename Real>
void TokenBank<Real>::collect_tokens(std::vector<ParamRef<Real>>& out) {
  if (static_tokens.defined()) out.push_back({"bank.static", &static_tokens, false});
  if (dynamic_tokens.defined()) out.push_back({"bank.dynamic", &dynamic_tokens, false});
}

template <typename Real>
void TokenBank<Real>::collect(std::vector<ParamRef<Real>>& out) {
  collect_tokens(out);
  time_proj.collect(out, "bank.time_proj");
}

template <typename Real>
Tensor<Real> time_embed(const TokenBank<Real>& bank, std::optional<double> t) {
  if (bank.n_dynamic() == 0) return bank.static_tokens;
  if (!t) throw ConfigError("time_embed: dynamic tokens require a timestamp");
  const auto f = time_features(*t, bank.time_proj.in_features());
  const auto feat = Tensor<Real>::from_values({1, f.size()}, std::vector<Real>(f.begin(), f.end()));
  const auto dyn = ad::add(bank.dynamic_tokens, bank.time_proj(feat));
  if (bank.n_static() == 0) return dyn;
  return ad::concat<Real>({bank.static_tokens, dyn}, 0);
}

namespace {

template <typename Real>
Tensor<Real> layer_scale(std::size_t channels, double init) {
  return Tensor<Real>::full({channels}, static_cast<Real>(init), true);
}

template <typename Real>
Tensor<Real> mask_bias(const AttentionMask& mask) {
  if (mask.all_allowed()) return {};
  const std::size_t n = mask.size();
  std::vector<Real> bias(n * n);
  for (std::size_t i = 0; i < n * n; ++i) bias[i] = mask.allowed[i] ? Real(0) : -std::numeric_limits<Real>::infinity();
  return Tensor<Real>::from_values({1, n, n}, std::move(bias));
}

}  // namespace

template <typename Real>
Model<Real> Model<Real>::create(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Model m;
  m.config = config;
  const std::size_t c = config.channels, p = config.patch, h = config.heads;
  const double std = config.weight_std;
  m.image_embed = Linear<Real>::create(p * p * 3, c, std, rng);
  m.ray_embed = Linear<Real>::create(p * p * 6, c, std, rng);
  for (std::size_t i = 0; i < config.enc_depth; ++i) {
    EncoderBlock<Real> b;
    b.norm1 = LayerNorm<Real>::create(c);
    b.attn = SelfAttention<Real>::create(c, h, std, rng);
    b.scale1 = layer_scale<Real>(c, config.layerscale_init);
    b.norm2 = LayerNorm<Real>::create(c);
    b.mlp = Mlp<Real>::create(c, config.mlp_ratio, std, rng);
    b.scale2 = layer_scale<Real>(c, config.layerscale_init);
    m.encoder.push_back(std::move(b));
  }
  m.encoder_norm = LayerNorm<Real>::create(c);
  m.shared_k = Linear<Real>::create(c, c, std, rng);
  m.shared_v = Linear<Real>::create(c, c, std, rng);
  for (std::size_t i = 0; i < config.dec_depth; ++i) {
    DecoderBlock<Real> b;
    b.norm_cross = LayerNorm<Real>::create(c);
    b.cross_q = Linear<Real>::create(c, c, std, rng);
    b.cross_out = Linear<Real>::create(c, c, std, rng);
    b.cross_temperature = Tensor<Real>::full({h}, static_cast<Real>(std::sqrt(static_cast<double>(c / h))), true);
    b.scale_cross = layer_scale<Real>(c, config.layerscale_init);
    b.norm_self = LayerNorm<Real>::create(c);
    b.self_attn = SelfAttention<Real>::create(c, h, std, rng);
    b.scale_self = layer_scale<Real>(c, config.layerscale_init);
    b.norm_mlp = LayerNorm<Real>::create(c);
    b.mlp = Mlp<Real>::create(c, config.mlp_ratio, std, rng);
    b.scale_mlp = layer_scale<Real>(c, config.layerscale_init);
    m.decoder.push_back(std::move(b));
  }
  m.head = Linear<Real>::create(c, kGaussiansPerToken * kGaussianColumns, config.head_std, rng);
  if (config.n_static) m.bank.static_tokens = normal_tensor<Real>({config.n_static, c}, config.token_std, rng);
  if (config.n_dynamic) m.bank.dynamic_tokens = normal_tensor<Real>({config.n_dynamic, c}, config.token_std, rng);
  m.bank.time_proj = Linear<Real>::create(config.time_dim, c, std, rng);
  return m;
}

template <typename Real>
std::vector<ParamRef<Real>> Model<Real>::network_parameters() {
  std::vector<ParamRef<Real>> out;
  image_embed.collect(out, "embed.image");
  ray_embed.collect(out, "embed.ray");
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    auto& b = encoder[i];
    const std::string pre = "encoder." + std::to_string(i);
    b.norm1.collect(out, pre + ".norm1");
    b.attn.collect(out, pre + ".attn");
    out.push_back({pre + ".scale1", &b.scale1, true});
    b.norm2.collect(out, pre + ".norm2");
    b.mlp.collect(out, pre + ".mlp");
    out.push_back({pre + ".scale2", &b.scale2, true});
  }
  encoder_norm.collect(out, "encoder.norm");
  shared_k.collect(out, "decoder.shared_k");
  shared_v.collect(out, "decoder.shared_v");
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    auto& b = decoder[i];
    const std::string pre = "decoder." + std::to_string(i);
    b.norm_cross.collect(out, pre + ".norm_cross");
    b.cross_q.collect(out, pre + ".cross_q");
    b.cross_out.collect(out, pre + ".cross_out");
    out.push_back({pre + ".cross_temperature", &b.cross_temperature, false});
    out.push_back({pre + ".scale_cross", &b.scale_cross, true});
    b.norm_self.collect(out, pre + ".norm_self");
    b.self_attn.collect(out, pre + ".self_attn");
    out.push_back({pre + ".scale_self", &b.scale_self, true});
    b.norm_mlp.collect(out, pre + ".norm_mlp");
    b.mlp.collect(out, pre + ".mlp");
    out.push_back({pre + ".scale_mlp", &b.scale_mlp, true});
  }
  head.collect(out, "head");
  bank.time_proj.collect(out, "bank.time_proj");
  return out;
}

template <typename Real>
std::vector<ParamRef<Real>> Model<Real>::parameters() {
  auto out = network_parameters();
  bank.collect_tokens(out);
  return out;
}

template <typename Real>
std::size_t Model<Real>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->numel();
  return n;
}

template <typename Real>
Tensor<Real> Model<Real>::patchify_embed(std::span<const Tensor<Real>> images, std::span<const Camera> cameras) const {
  if (images.empty() || images.size() != cameras.size()) {
    throw ConfigError("patchify_embed: need matching, non-empty image and camera lists");
  }
  const std::size_t p = config.patch;
  const std::size_t h = images[0].dim(0), w = images[0].dim(1);
  config.check_image(static_cast<int>(h), static_cast<int>(w));
  const std::size_t per_view = (h / p) * (w / p);
  const std::size_t n = per_view * images.size();
  std::vector<Real> pix(n * p * p * 3), rays(n * p * p * 6);
  for (std::size_t v = 0; v < images.size(); ++v) {
    const auto& img = images[v];
    if (img.shape() != ad::Shape{h, w, 3}) {
      throw ShapeError("patchify_embed: view " + std::to_string(v) + " has shape " + ad::shape_string(img.shape()) +
                       ", expected " + ad::shape_string({h, w, 3}));
    }
    const Camera& cam = cameras[v];
    if (cam.width != static_cast<int>(w) || cam.height != static_cast<int>(h)) {
      throw ConfigError("patchify_embed: camera " + std::to_string(v) + " size does not match its image");
    }
    const auto pl = plucker_rays(cam);
    const auto iv = img.values();
    for (std::size_t ty = 0; ty < h / p; ++ty)
      for (std::size_t tx = 0; tx < w / p; ++tx) {
        const std::size_t token = v * per_view + ty * (w / p) + tx;
        Real* prow = pix.data() + token * p * p * 3;
        Real* rrow = rays.data() + token * p * p * 6;
        for (std::size_t py = 0; py < p; ++py)
          for (std::size_t px = 0; px < p; ++px) {
            const std::size_t pixel = (ty * p + py) * w + tx * p + px;
            const std::size_t local = py * p + px;
            for (std::size_t ch = 0; ch < 3; ++ch) prow[local * 3 + ch] = iv[pixel * 3 + ch];
            for (std::size_t ch = 0; ch < 6; ++ch) rrow[local * 6 + ch] = static_cast<Real>(pl.values[pixel * 6 + ch]);
          }
      }
  }
  const auto pix_t = Tensor<Real>::from_values({n, p * p * 3}, std::move(pix));
  const auto ray_t = Tensor<Real>::from_values({n, p * p * 6}, std::move(rays));
  return ad::add(image_embed(pix_t), ray_embed(ray_t));
}

template <typename Real>
Tensor<Real> Model<Real>::encode(const Tensor<Real>& embedded) const {
  Tensor<Real> x = embedded;
  for (const auto& b : encoder) {
    x = ad::add(x, ad::mul(b.attn(b.norm1(x), {}), b.scale1));
    x = ad::add(x, ad::mul(b.mlp(b.norm2(x)), b.scale2));
  }
  return encoder_norm(x);
}

template <typename Real>
Encoding<Real> Model<Real>::prepare(const Tensor<Real>& image_tokens) const {
  Encoding<Real> e;
  e.tokens = image_tokens;
  e.keys = ad::l2_normalize(split_heads(shared_k(image_tokens), config.heads));
  e.values = split_heads(shared_v(image_tokens), config.heads);
  return e;
}

template <typename Real>
Encoding<Real> Model<Real>::encode_views(std::span<const Tensor<Real>> images, std::span<const Camera> cameras) const {
  return prepare(encode(patchify_embed(images, cameras)));
}

namespace {

template <typename Real>
void check_tokens(const Tensor<Real>& tokens, const AttentionMask& mask, std::size_t channels) {
  if (tokens.rank() != 2 || tokens.dim(1) != channels || tokens.dim(0) != mask.size()) {
    throw ShapeError("decode: tokens " + ad::shape_string(tokens.shape()) + " do not match a " +
                     std::to_string(mask.size()) + "-token mask with " + std::to_string(channels) + " channels");
  }
}

template <typename Real>
Tensor<Real> decoder_block(const DecoderBlock<Real>& b, const Tensor<Real>& x_in, const Tensor<Real>& keys,
                           const Tensor<Real>& values, const Tensor<Real>& bias, std::size_t heads) {
  Tensor<Real> x = x_in;
  const auto q = split_heads(b.cross_q(b.norm_cross(x)), heads);
  const auto cross = b.cross_out(merge_heads(qk_norm_attention(q, keys, values, b.cross_temperature, {}, true)));
  x = ad::add(x, ad::mul(cross, b.scale_cross));
  x = ad::add(x, ad::mul(b.self_attn(b.norm_self(x), bias), b.scale_self));
  return ad::add(x, ad::mul(b.mlp(b.norm_mlp(x)), b.scale_mlp));
}

}  // namespace

template <typename Real>
Tensor<Real> Model<Real>::decode(const Tensor<Real>& tokens, const Encoding<Real>& encoding,
                                 const AttentionMask& mask) const {
  check_tokens(tokens, mask, config.channels);
  const auto bias = mask_bias<Real>(mask);
  Tensor<Real> x = tokens;
  for (const auto& b : decoder) x = decoder_block(b, x, encoding.keys, encoding.values, bias, config.heads);
  return x;
}

template <typename Real>
Tensor<Real> Model<Real>::decode_per_layer_kv(const Tensor<Real>& tokens, const Tensor<Real>& image_tokens,
                                              const AttentionMask& mask, std::span<const Linear<Real>> layer_k,
                                              std::span<const Linear<Real>> layer_v) const {
  check_tokens(tokens, mask, config.channels);
  if ((!layer_k.empty() && layer_k.size() != decoder.size()) || (!layer_v.empty() && layer_v.size() != decoder.size())) {
    throw ConfigError("decode_per_layer_kv: need one key and value projection per decoder block");
  }
  const auto bias = mask_bias<Real>(mask);
  Tensor<Real> x = tokens;
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const Linear<Real>& kp = layer_k.empty() ? shared_k : layer_k[l];
    const Linear<Real>& vp = layer_v.empty() ? shared_v : layer_v[l];
    const auto keys = ad::l2_normalize(split_heads(kp(image_tokens), config.heads));
    const auto values = split_heads(vp(image_tokens), config.heads);
    x = decoder_block(decoder[l], x, keys, values, bias, config.heads);
  }
  return x;
}

template <typename Real>
Tensor<Real> Model<Real>::regress(const Tensor<Real>& decoded) const {
  const std::size_t n = decoded.dim(0);
  return ad::reshape(head(decoded), {n * kGaussiansPerToken, kGaussianColumns});
}

template <typename Real>
std::vector<std::int32_t> Model<Real>::token_ids() const {
  std::vector<std::int32_t> ids(bank.size() * kGaussiansPerToken);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int32_t>(i / kGaussiansPerToken);
  return ids;
}

template <typename Real>
Tensor<Real> Model<Real>::raw_from(const Encoding<Real>& encoding, std::optional<double> t) const {
  const auto tokens = time_embed(bank, t);
  return regress(decode(tokens, encoding, build_mask(bank.n_static(), bank.n_dynamic())));
}

template <typename Real>
GaussianSet<Real> Model<Real>::gaussians_from(const Encoding<Real>& encoding, std::optional<double> t) const {
  return activate(raw_from(encoding, t), config.activation, token_ids());
}

template <typename Real>
GaussianSet<Real> Model<Real>::forward(std::span<const Tensor<Real>> images, std::span<const Camera> cameras,
                                       std::optional<double> t) const {
  if (bank.n_dynamic() > 0 && !t) throw ConfigError("forward: a model with dynamic tokens needs a timestamp");
  return gaussians_from(encode_views(images, cameras), t);
}

namespace {

template <typename Real>
Tensor<Real> grown(const Tensor<Real>& own, const Tensor<Real>& fallback, std::size_t rows, std::size_t channels,
                   Rng& rng, double noise_std) {
  if (rows == 0) return {};
  const Tensor<Real>& src = own.defined() ? own : fallback;
  const std::size_t keep = own.defined() ? std::min(rows, own.dim(0)) : 0;
  const std::size_t src_rows = src.dim(0);
  std::normal_distribution<double> noise(0.0, noise_std);
  std::vector<Real> values(rows * channels);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* from = src.values().data() + (r % src_rows) * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      values[r * channels + c] = r < keep ? from[c] : static_cast<Real>(from[c] + noise(rng));
    }
  }
  return Tensor<Real>::from_values({rows, channels}, std::move(values), true);
}

}  // namespace

template <typename Real>
void grow_bank(Model<Real>& model, std::size_t n_static, std::size_t n_dynamic, Rng& rng, double noise_std) {
  if (n_static + n_dynamic == 0) throw ConfigError("grow_bank: the bank needs at least one token");
  auto& bank = model.bank;
  const std::size_t c = model.config.channels;
  const auto old_static = bank.static_tokens, old_dynamic = bank.dynamic_tokens;
  bank.static_tokens = grown(old_static, old_dynamic, n_static, c, rng, noise_std);
  bank.dynamic_tokens = grown(old_dynamic, old_static, n_dynamic, c, rng, noise_std);
  model.config.n_static = n_static;
  model.config.n_dynamic = n_dynamic;
}

template <typename Real>
std::uint64_t parameter_digest(const std::vector<ParamRef<Real>>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    const auto v = p.tensor->values();
    mix(v.data(), v.size_bytes());
  }
  return h;
}

template <typename Real>
void set_requires_grad(const std::vector<ParamRef<Real>>& params, bool on) {
  for (const auto& p : params) p.tensor->set_requires_grad(on);
}

#define TOKENSPLAT_INSTANTIATE_MODEL(Real)                                                               \
  template struct TokenBank<Real>;                                                                       \
  template struct Model<Real>;                                                                           \
  template Tensor<Real> time_embed(const TokenBank<Real>&, std::optional<double>);                       \
  template void grow_bank(Model<Real>&, std::size_t, std::size_t, Rng&, double);                         \
  template std::uint64_t parameter_digest(const std::vector<ParamRef<Real>>&);                           \
  template void set_requires_grad(const std::vector<ParamRef<Real>>&, bool);
TOKENSPLAT_INSTANTIATE_MODEL(float)
TOKENSPLAT_INSTANTIATE_MODEL(double)
#undef TOKENSPLAT_INSTANTIATE_MODEL

}  // namespace tokensplat::net
