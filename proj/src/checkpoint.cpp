// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uaglnet {

namespace {

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

template <typename F>
std::string float_bytes(std::span<const F> v) {
  using Bits = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  std::string out;
  out.reserve(v.size() * sizeof(F));
  for (F x : v) put_le(out, std::bit_cast<Bits>(x));
  return out;
}

template <typename F>
std::vector<F> floats_from(const std::string& bytes) {
  using Bits = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
  std::vector<F> out(bytes.size() / sizeof(F));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Bits b = 0;
    for (std::size_t k = 0; k < sizeof(F); ++k) {
      b |= static_cast<Bits>(static_cast<unsigned char>(bytes[i * sizeof(F) + k])) << (8 * k);
    }
    out[i] = std::bit_cast<F>(b);
  }
  return out;
}

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
    case DType::I64: return 8;
  }
  return 0;
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string out = b_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      throw ParseError(std::string("truncated checkpoint while reading ") + what, pos_);
    }
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const NamedArray& Checkpoint::get(const std::string& name) const {
  const auto* a = find(name);
  if (!a) throw ConfigError("checkpoint has no array named '" + name + "'");
  return *a;
}

void Checkpoint::put_f32(const std::string& name, const Shape& shape, std::span<const float> v) {
  arrays.push_back({name, DType::F32, shape, float_bytes(v)});
}

void Checkpoint::put_f64(const std::string& name, const Shape& shape, std::span<const double> v) {
  arrays.push_back({name, DType::F64, shape, float_bytes(v)});
}

template <typename T>
void Checkpoint::put_floats(const std::string& name, const Shape& shape, std::span<const T> v) {
  if constexpr (std::is_same_v<T, float>) {
    put_f32(name, shape, v);
  } else {
    put_f64(name, shape, v);
  }
}

void Checkpoint::put_i64(const std::string& name, std::int64_t v) {
  std::string b;
  put_le(b, static_cast<std::uint64_t>(v));
  arrays.push_back({name, DType::I64, Shape{1}, std::move(b)});
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  arrays.push_back({name, DType::U8, Shape{static_cast<Index>(text.size())}, text});
}

template <typename T>
std::vector<T> Checkpoint::floats(const std::string& name) const {
  const auto& a = get(name);
  if (a.dtype == DType::F32) {
    const auto v = floats_from<float>(a.bytes);
    return std::vector<T>(v.begin(), v.end());
  }
  if (a.dtype == DType::F64) {
    const auto v = floats_from<double>(a.bytes);
    return std::vector<T>(v.begin(), v.end());
  }
  throw ConfigError("checkpoint array '" + name + "' is not floating point");
}

std::int64_t Checkpoint::i64(const std::string& name) const {
  const auto& a = get(name);
  if (a.dtype != DType::I64 || a.bytes.size() != 8) {
    throw ConfigError("checkpoint array '" + name + "' is not a scalar i64");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(a.bytes[i])) << (8 * i);
  return static_cast<std::int64_t>(v);
}

std::string Checkpoint::text(const std::string& name) const {
  const auto& a = get(name);
  if (a.dtype != DType::U8) throw ConfigError("checkpoint array '" + name + "' is not text");
  return a.bytes;
}

std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic, 8);
  put_le(out, kCheckpointVersion);
  put_le(out, static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& a : ck.arrays) {
    if (static_cast<Index>(a.bytes.size()) != numel_of(a.shape) * static_cast<Index>(dtype_size(a.dtype))) {
      throw DimensionError("checkpoint array '" + a.name + "': payload does not match shape " +
                           shape_str(a.shape));
    }
    put_le(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    out.push_back(static_cast<char>(a.dtype));
    put_le(out, static_cast<std::uint32_t>(a.shape.size()));
    for (Index d : a.shape) put_le(out, static_cast<std::uint64_t>(d));
    out += a.bytes;
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 8, kCheckpointMagic) != 0) {
    throw ParseError("not a checkpoint (bad magic)", 0);
  }
  Reader r(bytes);
  r.bytes(8, "magic");
  const auto version_at = r.pos();
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto count = r.le<std::uint32_t>("array count");
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const auto len = r.le<std::uint32_t>("name length");
    a.name = r.bytes(len, "name");
    const auto dtype_at = r.pos();
    const auto dtype = r.le<std::uint8_t>("dtype");
    if (dtype > 3) throw ParseError("unknown dtype " + std::to_string(dtype), dtype_at);
    a.dtype = static_cast<DType>(dtype);
    const auto rank = r.le<std::uint32_t>("rank");
    if (rank > 8) throw ParseError("implausible rank " + std::to_string(rank), r.pos() - 4);
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = static_cast<Index>(r.le<std::uint64_t>("dimension"));
      if (d < 0) throw ParseError("negative dimension", r.pos() - 8);
      a.shape.push_back(d);
    }
    a.bytes = r.bytes(static_cast<std::size_t>(numel_of(a.shape)) * dtype_size(a.dtype), "payload");
    ck.arrays.push_back(std::move(a));
  }
  if (r.pos() != bytes.size()) throw ParseError("trailing bytes after last array", r.pos());
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return decode_checkpoint(os.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.detail(), e.offset());
  }
}

template void Checkpoint::put_floats(const std::string&, const Shape&, std::span<const float>);
template void Checkpoint::put_floats(const std::string&, const Shape&, std::span<const double>);
template std::vector<float> Checkpoint::floats(const std::string&) const;
template std::vector<double> Checkpoint::floats(const std::string&) const;

}  // namespace uaglnet
