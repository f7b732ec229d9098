// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Parcel wire format. All integers big-endian.
//
//   u32 magic 0x50585031 "PXP1"
//   u32 total frame length in bytes, including magic and this field
//   u32 per-link sequence number
//   16  destination gid (u32 locality, u64 sequence, u32 kind)
//   u32 action id
//   u8  continuation flag, followed by a 16-byte gid if 1
//   u32 source locality
//   u64 generation hint
//   u32 argument length, followed by the argument bytes

#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>

#include "mpx/common/bytes.hpp"
#include "mpx/common/gid.hpp"

namespace mpx::parcel {

inline constexpr std::uint32_t frame_magic = 0x50585031;
inline constexpr std::size_t max_frame_bytes = 64u << 20;
inline constexpr std::size_t min_frame_bytes = 49;

struct Parcel {
  Gid dest;
  std::uint32_t action = 0;
  Blob args;
  std::optional<Gid> continuation;
  LocalityId source = 0;
  std::uint64_t generation = 0;

  friend bool operator==(const Parcel&, const Parcel&) = default;
};

struct Frame {
  Parcel parcel;
  std::uint32_t link_seq = 0;
};

std::size_t encoded_size(const Parcel& p) noexcept;
Blob encode_frame(const Parcel& p, std::uint32_t link_seq = 0);
// Throws Error(decode) naming the defect: truncated, bad magic, oversize,
// length mismatch, bad continuation flag.
Frame decode_frame(ByteView frame);

// Reassembles frames from a byte stream. A malformed frame is counted and
// skipped by scanning forward to the next magic word, so one bad frame does
// not take the stream down.
class FrameReader {
 public:
  void feed(ByteView bytes);
  // Next complete, well-formed frame, if any.
  std::optional<Frame> next();

  std::uint64_t decode_errors() const noexcept { return decode_errors_; }
  const std::string& last_error() const noexcept { return last_error_; }
  std::size_t buffered() const noexcept { return buf_.size() - pos_; }

 private:
  void reject(const std::string& why, std::size_t skip);
  void compact();

  Blob buf_;
  std::size_t pos_ = 0;
  std::uint64_t decode_errors_ = 0;
  std::string last_error_;
};

}  // namespace mpx::parcel
