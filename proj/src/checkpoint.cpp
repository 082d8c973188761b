// Copyright 2026 The PVAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pvae/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace pvae::pipeline {
namespace {

constexpr char kMagic[4] = {'P', 'V', 'A', 'E'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char>& data() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> in) : in_(in) {}

  void section(const char* name) { section_ = name; }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const { throw LoadError(section_, what); }

  void need(std::size_t n) const {
    if (remaining() < n) {
      fail("truncated at byte " + std::to_string(in_.size()) + " (needed " +
           std::to_string(n) + " more bytes)");
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const unsigned char> in_;
  std::size_t pos_ = 0;
  const char* section_ = "header";
};

std::uint32_t crc_of(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks to stay within range.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- model <-> tensor list ------------------------------------------------

void append_tensors(const std::string& prefix, const std::vector<nn::NamedTensor>& params,
                    std::vector<StoredTensor>& out) {
  for (const auto& [name, t] : params) {
    out.push_back({prefix + name, t.shape(), {t.data().begin(), t.data().end()}});
  }
}

using TensorIndex = std::map<std::string, const StoredTensor*>;

TensorIndex index_tensors(const Checkpoint& ckpt) {
  TensorIndex idx;
  for (const auto& t : ckpt.tensors) {
    if (!idx.emplace(t.name, &t).second) {
      throw LoadError("tensors", "duplicate tensor '" + t.name + "'");
    }
  }
  return idx;
}

// Copies stored values into `params`, consuming the matching entries.
void fill_parameters(const std::string& prefix, const std::vector<nn::NamedTensor>& params,
                     TensorIndex& idx) {
  for (const auto& [name, t] : params) {
    auto it = idx.find(prefix + name);
    if (it == idx.end()) throw LoadError("tensors", "missing tensor '" + prefix + name + "'");
    const StoredTensor& s = *it->second;
    if (s.shape != t.shape()) {
      throw LoadError("tensors", "tensor '" + s.name + "' has the wrong shape");
    }
    ad::Tensor dst = t;
    std::copy(s.values.begin(), s.values.end(), dst.mutable_data().begin());
    idx.erase(it);
  }
}

void require_consumed(const TensorIndex& idx) {
  if (!idx.empty()) {
    throw LoadError("tensors", "unexpected tensor '" + idx.begin()->first + "'");
  }
}

void put_topology(KeyValueConfig& kv, const std::string& prefix, const vae::Topology& t) {
  kv.set(prefix + "num_bins", std::to_string(t.num_bins));
  kv.set(prefix + "hidden", std::to_string(t.hidden));
  kv.set(prefix + "latent", std::to_string(t.latent));
}

void put_weights(KeyValueConfig& kv, const std::string& prefix, const diploss::LossWeights& w) {
  kv.set(prefix + "beta", num(w.beta));
  kv.set(prefix + "lambda_od", num(w.lambda_od));
  kv.set(prefix + "lambda_d", num(w.lambda_d));
}

template <typename Fn>
auto config_field(Fn fn) {
  try {
    return fn();
  } catch (const LoadError&) {
    throw;
  } catch (const std::exception& e) {
    throw LoadError("config", e.what());
  }
}

vae::Topology get_topology(const KeyValueConfig& kv, const std::string& prefix) {
  return config_field([&] {
    vae::Topology t;
    for (const char* key : {"num_bins", "hidden", "latent"}) {
      if (!kv.has(prefix + key)) throw LoadError("config", "missing key " + prefix + key);
    }
    const auto bins = kv.get_int(prefix + "num_bins", 0);
    const auto hidden = kv.get_int(prefix + "hidden", 0);
    const auto latent = kv.get_int(prefix + "latent", 0);
    if (bins <= 0 || hidden <= 0 || latent <= 0) {
      throw LoadError("config", "non-positive layer size under " + prefix);
    }
    t.num_bins = static_cast<std::size_t>(bins);
    t.hidden = static_cast<std::size_t>(hidden);
    t.latent = static_cast<std::size_t>(latent);
    return t;
  });
}

diploss::LossWeights get_weights(const KeyValueConfig& kv, const std::string& prefix) {
  return config_field([&] {
    diploss::LossWeights w;
    w.beta = kv.get_double(prefix + "beta", w.beta);
    w.lambda_od = kv.get_double(prefix + "lambda_od", w.lambda_od);
    w.lambda_d = kv.get_double(prefix + "lambda_d", w.lambda_d);
    w.validate();
    return w;
  });
}

vae::Role get_role(const KeyValueConfig& kv, const std::string& prefix) {
  return config_field([&] { return vae::role_from_string(kv.raw(prefix + "role")); });
}

void require_kind(const Checkpoint& ckpt, CheckpointKind kind, const char* what) {
  if (ckpt.kind != kind) {
    throw LoadError("kind", std::string("file does not hold ") + what + " (kind " +
                                std::to_string(static_cast<std::uint32_t>(ckpt.kind)) + ")");
  }
}

// Parameters are overwritten from the file, so the initialization RNG only
// has to be deterministic.
vae::VaeModel rebuild_vae(vae::Role role, const vae::Topology& t, TensorIndex& idx,
                          const std::string& prefix) {
  nn::Rng rng(0);
  auto m = vae::make_vae(role, t, rng);
  fill_parameters(prefix, m.named_parameters(), idx);
  return m;
}

nsvae::NsvaeModel rebuild_nsvae(const vae::Topology& t, TensorIndex& idx,
                                const std::string& prefix) {
  nn::Rng rng(0);
  auto m = nsvae::make_nsvae(t, rng);
  fill_parameters(prefix, m.named_parameters(), idx);
  return m;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("file", "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(ckpt.version);
  w.u32(static_cast<std::uint32_t>(ckpt.kind));
  w.str(ckpt.config.to_text());
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    std::size_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.values.size()) {
      throw std::invalid_argument("encode_checkpoint: tensor '" + t.name +
                                  "' value count does not match its shape");
    }
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (double v : t.values) w.f64(v);
  }
  w.u32(crc_of(w.data()));
  return std::move(w.data());
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  Checkpoint ckpt;

  r.section("magic");
  r.need(sizeof(kMagic));
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) r.fail("bad magic, not a PVAE file");
  static_assert(sizeof(kMagic) == 4);
  r.u32();  // step over the magic

  r.section("version");
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(ckpt.version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }

  r.section("kind");
  const std::uint32_t kind = r.u32();
  if (kind > static_cast<std::uint32_t>(CheckpointKind::kBundle)) {
    r.fail("unknown kind " + std::to_string(kind));
  }
  ckpt.kind = static_cast<CheckpointKind>(kind);

  r.section("config");
  const std::string text = r.str();

  r.section("tensors");
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) r.fail("tensor '" + t.name + "' has implausible rank " + std::to_string(rank));
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64();
      if (d != 0 && n > r.remaining() / d) r.fail("tensor '" + t.name + "' exceeds file size");
      n *= d;
      t.shape.push_back(static_cast<std::size_t>(d));
    }
    r.need(n * 8);
    t.values.resize(static_cast<std::size_t>(n));
    for (auto& v : t.values) v = r.f64();
    ckpt.tensors.push_back(std::move(t));
  }

  r.section("checksum");
  const std::size_t body = r.pos();
  const std::uint32_t stored = r.u32();
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes");
  if (stored != crc_of(bytes.first(body))) r.fail("crc32 mismatch, file is corrupted");

  r.section("config");
  try {
    ckpt.config = KeyValueConfig::parse(text);
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
  return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  return decode_checkpoint(bytes);
}

void ModelBundle::validate() const {
  const auto& c = cvae.topology;
  const auto& n = nvae.topology;
  const auto& y = nsvae.topology;
  if (c.latent != n.latent || c.latent != y.latent) {
    throw std::invalid_argument("bundle: latent sizes differ across models");
  }
  if (c.num_bins != n.num_bins || c.num_bins != y.num_bins) {
    throw std::invalid_argument("bundle: bin counts differ across models");
  }
  if (cvae.role != vae::Role::kSpeech || nvae.role != vae::Role::kNoise) {
    throw std::invalid_argument("bundle: expected a speech CVAE and a noise NVAE");
  }
}

Checkpoint to_checkpoint(const TrainedVae& v) {
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::kVae;
  ckpt.config.set("role", vae::to_string(v.model.role));
  put_topology(ckpt.config, "", v.model.topology);
  put_weights(ckpt.config, "", v.weights);
  append_tensors("", v.model.named_parameters(), ckpt.tensors);
  return ckpt;
}

Checkpoint to_checkpoint(const nsvae::NsvaeModel& model) {
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::kNsvae;
  put_topology(ckpt.config, "", model.topology);
  append_tensors("", model.named_parameters(), ckpt.tensors);
  return ckpt;
}

Checkpoint to_checkpoint(const ModelBundle& b) {
  b.validate();
  Checkpoint ckpt;
  ckpt.kind = CheckpointKind::kBundle;
  ckpt.version = b.format_version;
  auto& kv = ckpt.config;
  kv.set("format_version", std::to_string(b.format_version));
  kv.set("cvae.role", vae::to_string(b.cvae.role));
  kv.set("nvae.role", vae::to_string(b.nvae.role));
  put_topology(kv, "cvae.", b.cvae.topology);
  put_topology(kv, "nvae.", b.nvae.topology);
  put_topology(kv, "nsvae.", b.nsvae.topology);
  put_weights(kv, "cvae.", b.cvae_weights);
  put_weights(kv, "nvae.", b.nvae_weights);
  for (const auto& [k, v] : b.run_config.values()) kv.set("run." + k, v);
  append_tensors("cvae/", b.cvae.named_parameters(), ckpt.tensors);
  append_tensors("nvae/", b.nvae.named_parameters(), ckpt.tensors);
  append_tensors("nsvae/", b.nsvae.named_parameters(), ckpt.tensors);
  return ckpt;
}

TrainedVae vae_from_checkpoint(const Checkpoint& ckpt) {
  require_kind(ckpt, CheckpointKind::kVae, "a VAE");
  auto idx = index_tensors(ckpt);
  TrainedVae out{rebuild_vae(get_role(ckpt.config, ""), get_topology(ckpt.config, ""), idx, ""),
                 get_weights(ckpt.config, "")};
  require_consumed(idx);
  return out;
}

nsvae::NsvaeModel nsvae_from_checkpoint(const Checkpoint& ckpt) {
  require_kind(ckpt, CheckpointKind::kNsvae, "an NSVAE");
  auto idx = index_tensors(ckpt);
  auto m = rebuild_nsvae(get_topology(ckpt.config, ""), idx, "");
  require_consumed(idx);
  return m;
}

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
  require_kind(ckpt, CheckpointKind::kBundle, "a model bundle");
  const auto& kv = ckpt.config;
  auto idx = index_tensors(ckpt);
  ModelBundle b;
  b.format_version = ckpt.version;
  const auto stated = config_field([&] { return kv.get_int("format_version", -1); });
  if (stated != static_cast<long long>(ckpt.version)) {
    throw LoadError("config", "format_version does not match the file header");
  }
  b.cvae = rebuild_vae(get_role(kv, "cvae."), get_topology(kv, "cvae."), idx, "cvae/");
  b.nvae = rebuild_vae(get_role(kv, "nvae."), get_topology(kv, "nvae."), idx, "nvae/");
  b.nsvae = rebuild_nsvae(get_topology(kv, "nsvae."), idx, "nsvae/");
  b.cvae_weights = get_weights(kv, "cvae.");
  b.nvae_weights = get_weights(kv, "nvae.");
  for (const auto& [k, v] : kv.values()) {
    if (k.rfind("run.", 0) == 0) b.run_config.set(k.substr(4), v);
  }
  require_consumed(idx);
  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    throw LoadError("contents", e.what());
  }
  return b;
}

void save_vae(const std::string& path, const TrainedVae& v) {
  write_checkpoint(path, to_checkpoint(v));
}
TrainedVae load_vae(const std::string& path) {
  return vae_from_checkpoint(read_checkpoint(path));
}
void save_nsvae(const std::string& path, const nsvae::NsvaeModel& m) {
  write_checkpoint(path, to_checkpoint(m));
}
nsvae::NsvaeModel load_nsvae(const std::string& path) {
  return nsvae_from_checkpoint(read_checkpoint(path));
}
void save_bundle(const std::string& path, const ModelBundle& b) {
  write_checkpoint(path, to_checkpoint(b));
}
ModelBundle load_bundle(const std::string& path) {
  return bundle_from_checkpoint(read_checkpoint(path));
}

}  // namespace pvae::pipeline
