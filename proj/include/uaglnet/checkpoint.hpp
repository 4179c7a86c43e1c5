// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format, all integers little-endian:
//
//   magic "UAGLNCKP" | u32 version | u32 array count
//   per array: u32 name length | name | u8 dtype | u32 rank | i64 dims[rank] | raw data
//
// dtype is 0 = f32, 1 = f64, 2 = u8, 3 = i64; raw data is little-endian.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uaglnet/tensor.hpp"

namespace uaglnet {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2, I64 = 3 };

struct NamedArray {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::string bytes;  // little-endian payload
};

inline constexpr char kCheckpointMagic[9] = "UAGLNCKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  const NamedArray& get(const std::string& name) const;  // throws ConfigError when absent

  void put_f32(const std::string& name, const Shape& shape, std::span<const float> v);
  void put_f64(const std::string& name, const Shape& shape, std::span<const double> v);
  void put_i64(const std::string& name, std::int64_t v);
  void put_text(const std::string& name, const std::string& text);
  template <typename T>
  void put_floats(const std::string& name, const Shape& shape, std::span<const T> v);

  /// Float arrays convert between f32 and f64 on read.
  template <typename T>
  std::vector<T> floats(const std::string& name) const;
  std::int64_t i64(const std::string& name) const;
  std::string text(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ck);
/// Malformed input raises ParseError with the byte offset of the problem.
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace uaglnet
