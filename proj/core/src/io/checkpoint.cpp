// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tokensplat/errors.hpp"
#include "tokensplat/io/config.hpp"

namespace tokensplat::io {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'T', 'K', 'S', 'P'};
constexpr std::uint64_t kMaxRank = 8;

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32:
    case DType::kI32:
      return 4;
    case DType::kF64:
      return 8;
  }
  throw IoError("checkpoint: unknown dtype " + std::to_string(static_cast<int>(d)));
}

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const std::vector<std::uint8_t>& b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<std::uint8_t> raw(std::uint64_t n) {
    need(n);
    std::vector<std::uint8_t> b(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return b;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw IoError("checkpoint: truncated file");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

template <typename Real>
void copy_into(const Block& b, const ad::Shape& shape, std::span<Real> dst) {
  if (b.shape.size() != shape.size() || !std::equal(b.shape.begin(), b.shape.end(), shape.begin())) {
    std::ostringstream msg;
    msg << "checkpoint: block '" << b.name << "' has shape [";
    for (std::size_t i = 0; i < b.shape.size(); ++i) msg << (i ? "," : "") << b.shape[i];
    msg << "], expected " << ad::shape_string(shape);
    throw ConfigError(msg.str());
  }
  if (b.dtype == DType::kF32) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      float v;
      std::memcpy(&v, b.bytes.data() + 4 * i, 4);
      dst[i] = static_cast<Real>(v);
    }
  } else if (b.dtype == DType::kF64) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double v;
      std::memcpy(&v, b.bytes.data() + 8 * i, 8);
      dst[i] = static_cast<Real>(v);
    }
  } else {
    throw IoError("checkpoint: block '" + b.name + "' is not floating point");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw IoError("checkpoint: metadata '" + key + "' is not an integer: '" + text + "'");
  }
}

}  // namespace

std::size_t Block::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<double> Block::as_doubles() const {
  std::vector<double> out(numel());
  copy_into<double>(*this, ad::Shape(shape.begin(), shape.end()), out);
  return out;
}

std::vector<std::int32_t> Block::as_ints() const {
  if (dtype != DType::kI32) throw IoError("checkpoint: block '" + name + "' is not int32");
  std::vector<std::int32_t> out(numel());
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

const Block* Container::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const Block& Container::get(const std::string& name) const {
  if (const auto* b = find(name)) return *b;
  throw IoError("checkpoint: missing block '" + name + "'");
}

const std::string& Container::meta(const std::string& key) const {
  const auto it = metadata.find(key);
  if (it == metadata.end()) throw IoError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

template <typename Real>
Block make_block(std::string name, const ad::Shape& shape, std::span<const Real> values) {
  Block b;
  b.name = std::move(name);
  b.dtype = sizeof(Real) == 4 ? DType::kF32 : DType::kF64;
  b.shape.assign(shape.begin(), shape.end());
  if (b.numel() != values.size()) throw ShapeError("make_block: '" + b.name + "' shape does not match value count");
  b.bytes.resize(values.size() * sizeof(Real));
  if (!values.empty()) std::memcpy(b.bytes.data(), values.data(), b.bytes.size());
  return b;
}

Block make_int_block(std::string name, std::span<const std::int32_t> values) {
  Block b;
  b.name = std::move(name);
  b.dtype = DType::kI32;
  b.shape = {values.size()};
  b.bytes.resize(values.size() * 4);
  if (!values.empty()) std::memcpy(b.bytes.data(), values.data(), b.bytes.size());
  return b;
}

std::vector<std::uint8_t> encode_container(const Container& c) {
  Writer w;
  for (char ch : kMagic) w.pod(ch);
  w.pod(kContainerVersion);
  w.pod(static_cast<std::uint32_t>(c.kind));
  w.pod(static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    w.str(k);
    w.str(v);
  }
  w.pod(static_cast<std::uint32_t>(c.blocks.size()));
  for (const auto& b : c.blocks) {
    if (b.bytes.size() != b.numel() * dtype_size(b.dtype)) {
      throw IoError("checkpoint: block '" + b.name + "' byte count does not match its shape");
    }
    w.str(b.name);
    w.pod(static_cast<std::uint8_t>(b.dtype));
    w.pod(static_cast<std::uint32_t>(b.shape.size()));
    for (auto d : b.shape) w.pod(d);
    w.pod(static_cast<std::uint64_t>(b.bytes.size()));
    w.raw(b.bytes);
  }
  return w.take();
}

Container decode_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char ch : kMagic) {
    if (r.pod<char>() != ch) throw IoError("checkpoint: bad magic");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kContainerVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  Container c;
  const auto kind = r.pod<std::uint32_t>();
  if (kind != 1 && kind != 2) throw IoError("checkpoint: unknown kind " + std::to_string(kind));
  c.kind = static_cast<ContainerKind>(kind);
  const auto n_meta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    c.metadata[k] = r.str();
  }
  const auto n_blocks = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    Block b;
    b.name = r.str();
    b.dtype = static_cast<DType>(r.pod<std::uint8_t>());
    const auto rank = r.pod<std::uint32_t>();
    if (rank > kMaxRank) throw IoError("checkpoint: block '" + b.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) b.shape.push_back(r.pod<std::uint64_t>());
    const auto n = r.pod<std::uint64_t>();
    if (n != b.numel() * dtype_size(b.dtype)) throw IoError("checkpoint: block '" + b.name + "' has a bad byte count");
    b.bytes = r.raw(n);
    c.blocks.push_back(std::move(b));
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return c;
}

void write_container(const std::string& path, const Container& c) {
  const auto bytes = encode_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_container(bytes);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

template <typename Real>
Container checkpoint_container(TrainState<Real>& state, const TrainConfig& train) {
  Container c;
  c.kind = ContainerKind::kModel;
  RunConfig rc;
  rc.network = state.model.config;
  rc.train = train;
  c.metadata["config"] = dump_sections(rc, {"network.", "train."});
  c.metadata["precision"] = sizeof(Real) == 4 ? "32" : "64";
  c.metadata["step"] = std::to_string(state.step);
  c.metadata["optimizer_steps"] = std::to_string(state.optimizer.steps());
  c.metadata["consecutive_skips"] = std::to_string(state.consecutive_skips);
  c.metadata["skipped_steps"] = std::to_string(state.skipped_steps);
  std::ostringstream rng;
  rng << state.rng;
  c.metadata["rng"] = rng.str();
  for (const auto& p : state.model.parameters()) {
    c.blocks.push_back(make_block<Real>("param/" + p.name, p.tensor->shape(), p.tensor->values()));
  }
  for (const auto& [name, slot] : state.optimizer.slots()) {
    c.blocks.push_back(make_block<Real>("adam_m/" + name, slot.shape, slot.m));
    c.blocks.push_back(make_block<Real>("adam_v/" + name, slot.shape, slot.v));
  }
  return c;
}

namespace {

template <typename Real>
net::Model<Real> model_from(const Container& c, RunConfig& rc) {
  if (c.kind != ContainerKind::kModel) throw ConfigError("checkpoint: file holds Gaussians, not a model");
  apply_text(rc, c.meta("config"), "checkpoint config");
  auto model = net::Model<Real>::create(rc.network, rc.train.seed);
  for (auto& p : model.parameters()) {
    copy_into<Real>(c.get("param/" + p.name), p.tensor->shape(), p.tensor->mutable_values());
  }
  return model;
}

}  // namespace

template <typename Real>
TrainState<Real> state_from_container(const Container& c, TrainConfig* train) {
  RunConfig rc;
  TrainState<Real> s{model_from<Real>(c, rc), AdamW<Real>(adamw_config(rc.train)), 0, std::mt19937_64(), 0, 0};
  s.step = parse_u64("step", c.meta("step"));
  s.optimizer.set_steps(parse_u64("optimizer_steps", c.meta("optimizer_steps")));
  s.consecutive_skips = static_cast<int>(parse_u64("consecutive_skips", c.meta("consecutive_skips")));
  s.skipped_steps = parse_u64("skipped_steps", c.meta("skipped_steps"));
  std::istringstream rng(c.meta("rng"));
  rng >> s.rng;
  if (!rng) throw IoError("checkpoint: bad RNG state");
  for (const auto& b : c.blocks) {
    if (b.name.rfind("adam_m/", 0) != 0) continue;
    const std::string name = b.name.substr(7);
    typename AdamW<Real>::Slot slot;
    slot.shape.assign(b.shape.begin(), b.shape.end());
    slot.m.resize(b.numel());
    slot.v.resize(b.numel());
    copy_into<Real>(b, slot.shape, slot.m);
    copy_into<Real>(c.get("adam_v/" + name), slot.shape, slot.v);
    s.optimizer.slots()[name] = std::move(slot);
  }
  if (train) *train = rc.train;
  return s;
}

template <typename Real>
void save_checkpoint(const std::string& path, TrainState<Real>& state, const TrainConfig& train) {
  write_container(path, checkpoint_container(state, train));
}

template <typename Real>
TrainState<Real> load_checkpoint(const std::string& path, TrainConfig* train) {
  return state_from_container<Real>(read_container(path), train);
}

template <typename Real>
net::Model<Real> load_model(const std::string& path) {
  RunConfig rc;
  return model_from<Real>(read_container(path), rc);
}

void save_gaussians(const std::string& path, const GaussianFile& g) {
  if (g.rows.size() % 14 != 0) throw ConfigError("save_gaussians: rows are not a multiple of 14");
  if (!g.token_id.empty() && g.token_id.size() != g.size()) throw ConfigError("save_gaussians: token_id length mismatch");
  Container c;
  c.kind = ContainerKind::kGaussians;
  c.metadata = g.metadata;
  c.blocks.push_back(make_block<double>("gaussians", {g.size(), 14}, g.rows));
  c.blocks.push_back(make_int_block("token_id", g.token_id));
  write_container(path, c);
}

GaussianFile load_gaussians(const std::string& path) {
  const auto c = read_container(path);
  if (c.kind != ContainerKind::kGaussians) throw ConfigError(path + ": file holds a model, not Gaussians");
  GaussianFile g;
  g.metadata = c.metadata;
  const auto& rows = c.get("gaussians");
  if (rows.shape.size() != 2 || rows.shape[1] != 14) throw IoError(path + ": Gaussian block is not M x 14");
  g.rows = rows.as_doubles();
  if (const auto* ids = c.find("token_id")) g.token_id = ids->as_ints();
  if (!g.token_id.empty() && g.token_id.size() != g.size()) throw IoError(path + ": token_id length mismatch");
  return g;
}

ContainerKind peek_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char head[12];
  in.read(head, sizeof head);
  if (!in || std::memcmp(head, kMagic, 4) != 0) throw IoError(path + ": not a checkpoint");
  std::uint32_t kind;
  std::memcpy(&kind, head + 8, 4);
  if (kind != 1 && kind != 2) throw IoError(path + ": unknown kind");
  return static_cast<ContainerKind>(kind);
}

#define TOKENSPLAT_INSTANTIATE(Real)                                                                   \
  template Block make_block<Real>(std::string, const ad::Shape&, std::span<const Real>);              \
  template Container checkpoint_container(TrainState<Real>&, const TrainConfig&);                     \
  template TrainState<Real> state_from_container<Real>(const Container&, TrainConfig*);               \
  template void save_checkpoint(const std::string&, TrainState<Real>&, const TrainConfig&);           \
  template TrainState<Real> load_checkpoint<Real>(const std::string&, TrainConfig*);                  \
  template net::Model<Real> load_model<Real>(const std::string&);
TOKENSPLAT_INSTANTIATE(float)
TOKENSPLAT_INSTANTIATE(double)
#undef TOKENSPLAT_INSTANTIATE

}  // namespace tokensplat::io
