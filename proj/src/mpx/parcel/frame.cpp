// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/parcel/frame.hpp"

#include <algorithm>
#include <cstring>

#include "mpx/common/error.hpp"

namespace mpx::parcel {

namespace {

std::uint32_t peek_u32(const std::byte* p) {
  return (std::to_integer<std::uint32_t>(p[0]) << 24) | (std::to_integer<std::uint32_t>(p[1]) << 16) |
         (std::to_integer<std::uint32_t>(p[2]) << 8) | std::to_integer<std::uint32_t>(p[3]);
}

}  // namespace

std::size_t encoded_size(const Parcel& p) noexcept {
  return min_frame_bytes + (p.continuation ? 16 : 0) + p.args.size();
}

Blob encode_frame(const Parcel& p, std::uint32_t link_seq) {
  const std::size_t total = encoded_size(p);
  if (total > max_frame_bytes) raise(ErrorCode::invalid_argument, "parcel exceeds the 64 MiB frame limit");
  ByteWriter w(total);
  w.u32(frame_magic);
  w.u32(static_cast<std::uint32_t>(total));
  w.u32(link_seq);
  p.dest.encode(w);
  w.u32(p.action);
  w.u8(p.continuation ? 1 : 0);
  if (p.continuation) p.continuation->encode(w);
  w.u32(p.source);
  w.u64(p.generation);
  w.u32(static_cast<std::uint32_t>(p.args.size()));
  w.bytes(p.args);
  return std::move(w).take();
}

Frame decode_frame(ByteView frame) {
  if (frame.size() < 8) raise(ErrorCode::decode, "truncated frame header");
  ByteReader r(frame);
  if (r.u32() != frame_magic) raise(ErrorCode::decode, "bad frame magic");
  const std::uint32_t total = r.u32();
  if (total > max_frame_bytes) raise(ErrorCode::decode, "frame length " + std::to_string(total) + " exceeds limit");
  if (total < min_frame_bytes) raise(ErrorCode::decode, "frame length " + std::to_string(total) + " below minimum");
  if (frame.size() < total) raise(ErrorCode::decode, "truncated frame");
  if (frame.size() > total) raise(ErrorCode::decode, "trailing bytes after frame");
  Frame f;
  f.link_seq = r.u32();
  f.parcel.dest = Gid::decode(r);
  f.parcel.action = r.u32();
  const std::uint8_t flag = r.u8();
  if (flag > 1) raise(ErrorCode::decode, "bad continuation flag");
  if (flag) f.parcel.continuation = Gid::decode(r);
  f.parcel.source = r.u32();
  f.parcel.generation = r.u64();
  const std::uint32_t nargs = r.u32();
  if (nargs != r.remaining()) raise(ErrorCode::decode, "argument length does not match frame length");
  auto args = r.bytes(nargs);
  f.parcel.args.assign(args.begin(), args.end());
  return f;
}

void FrameReader::feed(ByteView bytes) {
  compact();
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void FrameReader::compact() {
  if (pos_ > 0 && (pos_ >= 4096 || pos_ == buf_.size())) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
}

void FrameReader::reject(const std::string& why, std::size_t skip) {
  ++decode_errors_;
  last_error_ = why;
  pos_ += skip;
  // resync on the next magic word
  static constexpr std::byte magic[4] = {std::byte{0x50}, std::byte{0x58}, std::byte{0x50}, std::byte{0x31}};
  auto it = std::search(buf_.begin() + static_cast<std::ptrdiff_t>(pos_), buf_.end(), magic, magic + 4);
  std::size_t found = static_cast<std::size_t>(it - buf_.begin());
  // keep a possible partial magic at the tail
  if (it == buf_.end()) found = buf_.size() >= pos_ + 3 ? buf_.size() - 3 : pos_;
  pos_ = std::max(pos_, found);
}

std::optional<Frame> FrameReader::next() {
  for (;;) {
    const std::size_t avail = buf_.size() - pos_;
    if (avail < 8) return std::nullopt;
    const std::byte* head = buf_.data() + pos_;
    if (peek_u32(head) != frame_magic) {
      reject("bad frame magic", 1);
      continue;
    }
    const std::uint32_t total = peek_u32(head + 4);
    if (total > max_frame_bytes) {
      reject("frame length " + std::to_string(total) + " exceeds limit", 4);
      continue;
    }
    if (total < min_frame_bytes) {
      reject("frame length " + std::to_string(total) + " below minimum", 4);
      continue;
    }
    if (avail < total) return std::nullopt;
    try {
      Frame f = decode_frame(ByteView(head, total));
      pos_ += total;
      compact();
      return f;
    } catch (const Error& e) {
      reject(e.what(), 4);
    }
  }
}

}  // namespace mpx::parcel
