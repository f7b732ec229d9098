// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

#include "mpx/common/bytes.hpp"

namespace mpx {

using LocalityId = std::uint32_t;

enum class GidKind : std::uint32_t {
  invalid = 0,
  task = 1,
  future = 2,
  dataflow = 3,
  semaphore = 4,
  mutex = 5,
  full_empty = 6,
  grid_block = 7,
  other = 8,
};

const char* to_string(GidKind kind) noexcept;

// 128-bit global name: 32-bit birth locality, 64-bit sequence, 32-bit kind.
// Sequences with the top bit set are reserved for names derived by
// construction (deterministic per run) rather than minted by a counter.
struct Gid {
  LocalityId locality = 0;
  std::uint64_t sequence = 0;
  GidKind kind = GidKind::invalid;

  static constexpr std::uint64_t derived_bit = 1ull << 63;

  constexpr bool valid() const noexcept { return kind != GidKind::invalid; }
  constexpr bool derived() const noexcept { return (sequence & derived_bit) != 0; }

  friend constexpr auto operator<=>(const Gid&, const Gid&) = default;

  std::string str() const;

  void encode(ByteWriter& w) const {
    w.u32(locality);
    w.u64(sequence);
    w.u32(static_cast<std::uint32_t>(kind));
  }
  static Gid decode(ByteReader& r) {
    Gid g;
    g.locality = r.u32();
    g.sequence = r.u64();
    g.kind = static_cast<GidKind>(r.u32());
    return g;
  }
};

struct GidHash {
  std::size_t operator()(const Gid& g) const noexcept {
    std::uint64_t h = g.sequence * 0x9E3779B97F4A7C15ull;
    h ^= (static_cast<std::uint64_t>(g.locality) << 32 | static_cast<std::uint32_t>(g.kind)) +
         0x632BE59BD9B4E019ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace mpx
