#include "lap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>

namespace lap {

std::string_view to_string(CheckpointErrorCode code) {
  switch (code) {
    case CheckpointErrorCode::Io: return "io";
    case CheckpointErrorCode::BadMagic: return "bad-magic";
    case CheckpointErrorCode::BadVersion: return "bad-version";
    case CheckpointErrorCode::Truncated: return "truncated";
    case CheckpointErrorCode::CountMismatch: return "count-mismatch";
    case CheckpointErrorCode::BadRecord: return "bad-record";
    case CheckpointErrorCode::ShapeMismatch: return "shape-mismatch";
  }
  return "unknown";
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

namespace {

constexpr char kMagic[4] = {'L', 'A', 'P', 'W'};

std::vector<std::uint32_t> dims_of(const Shape& s) {
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
          static_cast<std::uint32_t>(s.w)};
}

std::string dims_str(const std::vector<std::uint32_t>& d) {
  std::string s = "[";
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
  return s + "]";
}

class Writer {
 public:
  void u8(std::uint8_t v) { b_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { b_.insert(b_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(b_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) b_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> b_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::size_t remaining() const { return b_.size() - pos_; }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  /// True when the unread bytes are exactly one length-prefixed config block.
  bool at_config_block() const {
    if (remaining() < 4) return false;
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    return remaining() == 4 + static_cast<std::size_t>(len);
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw CheckpointError(CheckpointErrorCode::Truncated, "need " + std::to_string(n) + " bytes at offset " +
                                                                std::to_string(pos_) + ", file has " +
                                                                std::to_string(remaining()) + " left");
    }
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

NamedTensor read_tensor(Reader& r) {
  NamedTensor t;
  t.name = r.raw(r.u16());
  const std::uint8_t dtype = r.u8();
  if (dtype != 0) {
    throw CheckpointError(CheckpointErrorCode::BadRecord,
                          "tensor '" + t.name + "' has dtype code " + std::to_string(dtype) + " (only 0 = f32 is known)");
  }
  const std::uint8_t ndim = r.u8();
  if (ndim == 0 || ndim > 8) {
    throw CheckpointError(CheckpointErrorCode::BadRecord, "tensor '" + t.name + "' has ndim " + std::to_string(ndim));
  }
  std::uint64_t count = 1;
  for (int i = 0; i < ndim; ++i) {
    t.dims.push_back(r.u32());
    count *= t.dims.back();
  }
  if (count * 4 > r.remaining()) {
    throw CheckpointError(CheckpointErrorCode::Truncated,
                          "tensor '" + t.name + "' " + dims_str(t.dims) + " payload runs past end of file");
  }
  t.data.resize(count);
  for (auto& v : t.data) v = r.f32();
  return t;
}

}  // namespace

Checkpoint capture(LapNet& net, std::int64_t epoch, std::uint64_t seed) {
  Checkpoint c;
  c.config = net.config();
  c.epoch = epoch;
  c.seed = seed;
  for (const ParamRef& p : net.parameters()) {
    NamedTensor t{p.name, dims_of(p.value->shape()), {}};
    t.data.reserve(static_cast<std::size_t>(p.value->size()));
    for (std::int64_t i = 0; i < p.value->size(); ++i) t.data.push_back(static_cast<float>(p.value->data()[i]));
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void restore(const Checkpoint& ckpt, LapNet& net) {
  const ParamList params = net.parameters();
  if (params.size() != ckpt.tensors.size()) {
    throw CheckpointError(CheckpointErrorCode::ShapeMismatch, "network has " + std::to_string(params.size()) +
                                                                  " tensors, checkpoint has " +
                                                                  std::to_string(ckpt.tensors.size()));
  }
  for (const ParamRef& p : params) {
    const NamedTensor* t = ckpt.find(p.name);
    if (!t) throw CheckpointError(CheckpointErrorCode::ShapeMismatch, "checkpoint lacks tensor '" + p.name + "'");
    const auto expected = dims_of(p.value->shape());
    if (t->dims != expected) {
      throw CheckpointError(CheckpointErrorCode::ShapeMismatch, "tensor '" + p.name + "': expected " +
                                                                    dims_str(expected) + ", checkpoint has " +
                                                                    dims_str(t->dims));
    }
    for (std::size_t i = 0; i < t->data.size(); ++i) p.value->data()[i] = static_cast<double>(t->data[i]);
  }
}

std::unique_ptr<LapNet> instantiate(const Checkpoint& ckpt) {
  auto net = std::make_unique<LapNet>(ckpt.config, ckpt.seed);
  restore(ckpt, *net);
  return net;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(Checkpoint::kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const NamedTensor& t : ckpt.tensors) {
    if (t.name.size() > 0xffff) throw CheckpointError(CheckpointErrorCode::BadRecord, "tensor name too long");
    std::uint64_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size()) {
      throw CheckpointError(CheckpointErrorCode::ShapeMismatch, "tensor '" + t.name + "' dims disagree with data");
    }
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name);
    w.u8(0);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.data) w.f32(v);
  }
  const std::string text =
      ckpt.config.to_text() + "epoch = " + std::to_string(ckpt.epoch) + "\nseed = " + std::to_string(ckpt.seed) + "\n";
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  return w.take();
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorCode::BadMagic, "file does not start with LAPW");
  }
  r.seek(4);
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError(CheckpointErrorCode::BadVersion,
                          "version " + std::to_string(version) + ", expected " + std::to_string(Checkpoint::kVersion));
  }
  const std::uint32_t count = r.u32();
  Checkpoint c;
  for (std::uint32_t i = 0; i < count; ++i) {
    if (r.at_config_block()) {
      throw CheckpointError(CheckpointErrorCode::CountMismatch, "header declares " + std::to_string(count) +
                                                                    " tensors, file holds " + std::to_string(i));
    }
    c.tensors.push_back(read_tensor(r));
  }
  if (!r.at_config_block()) {
    // Either more tensor records than declared, or damage in the tail.
    const std::size_t mark = r.pos();
    std::optional<std::size_t> extra;
    try {
      std::size_t n = 0;
      while (!r.at_config_block() && r.remaining() > 0) {
        read_tensor(r);
        ++n;
      }
      if (r.at_config_block()) extra = n;
    } catch (const CheckpointError&) {
    }
    if (extra) {
      throw CheckpointError(CheckpointErrorCode::CountMismatch, "header declares " + std::to_string(count) +
                                                                    " tensors, file holds " +
                                                                    std::to_string(count + *extra));
    }
    r.seek(mark);
    if (r.remaining() < 4) throw CheckpointError(CheckpointErrorCode::Truncated, "config block missing");
    const std::uint32_t len = r.u32();
    if (r.remaining() < len) {
      throw CheckpointError(CheckpointErrorCode::Truncated, "config block cut short");
    }
    throw CheckpointError(CheckpointErrorCode::BadRecord, "trailing bytes after config block");
  }
  const std::string text = r.raw(r.u32());
  KeyValues kv;
  try {
    kv = KeyValues::parse(text);
    c.epoch = kv.get_int("epoch", 0);
    c.seed = static_cast<std::uint64_t>(std::stoull(kv.get("seed", "0")));
    KeyValues net_kv;
    for (const auto& [k, v] : kv.items()) {
      if (k != "epoch" && k != "seed") net_kv.set(k, v);
    }
    c.config = NetworkConfig::from_key_values(net_kv);
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrorCode::BadRecord, std::string("config snapshot: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointErrorCode::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorCode::Io, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorCode::Io, "cannot open " + path);
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

}  // namespace lap
