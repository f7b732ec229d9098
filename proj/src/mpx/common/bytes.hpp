// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Opaque byte blobs and big-endian readers/writers. Every integer on the wire
// is big-endian; doubles travel as their IEEE-754 bit pattern.

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpx/common/error.hpp"

namespace mpx {

using Blob = std::vector<std::byte>;
using ByteView = std::span<const std::byte>;

class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(std::size_t reserve) { out_.reserve(reserve); }

  void u8(std::uint8_t v) { out_.push_back(std::byte{v}); }
  void u32(std::uint32_t v) { put_be(v); }
  void u64(std::uint64_t v) { put_be(v); }
  void i32(std::int32_t v) { put_be(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { put_be(static_cast<std::uint64_t>(v)); }
  void f64(double v) { put_be(std::bit_cast<std::uint64_t>(v)); }

  void bytes(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  // u32 length prefix followed by the bytes
  void blob(ByteView b) {
    u32(static_cast<std::uint32_t>(b.size()));
    bytes(b);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    const auto* p = reinterpret_cast<const std::byte*>(s.data());
    out_.insert(out_.end(), p, p + s.size());
  }

  // overwrite a previously written u32 at byte offset `at`
  void patch_u32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      out_[at + i] = std::byte{static_cast<std::uint8_t>(v >> (24 - 8 * i))};
  }

  std::size_t size() const noexcept { return out_.size(); }
  Blob take() && { return std::move(out_); }
  const Blob& view() const noexcept { return out_; }

 private:
  template <class U>
  void put_be(U v) {
    for (int i = sizeof(U) - 1; i >= 0; --i)
      out_.push_back(std::byte{static_cast<std::uint8_t>(v >> (8 * i))});
  }

  Blob out_;
};

class ByteReader {
 public:
  explicit ByteReader(ByteView in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return std::to_integer<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() { return get_be<std::uint32_t>(); }
  std::uint64_t u64() { return get_be<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(get_be<std::uint32_t>()); }
  std::int64_t i64() { return static_cast<std::int64_t>(get_be<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(get_be<std::uint64_t>()); }

  ByteView bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  ByteView blob() { return bytes(u32()); }
  std::string str() {
    auto b = blob();
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
  }

  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n)
      raise(ErrorCode::decode, "truncated input: need " + std::to_string(n) +
                                   " bytes, have " + std::to_string(in_.size() - pos_));
  }
  template <class U>
  U get_be() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v = static_cast<U>((v << 8) | std::to_integer<U>(in_[pos_ + i]));
    pos_ += sizeof(U);
    return v;
  }

  ByteView in_;
  std::size_t pos_ = 0;
};

inline Blob to_blob(std::string_view s) {
  const auto* p = reinterpret_cast<const std::byte*>(s.data());
  return Blob(p, p + s.size());
}

inline std::string to_string(ByteView b) {
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

inline Blob u64_blob(std::uint64_t v) {
  ByteWriter w(8);
  w.u64(v);
  return std::move(w).take();
}

inline std::uint64_t blob_u64(ByteView b) {
  ByteReader r(b);
  return r.u64();
}

}  // namespace mpx
