// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// The evolution as a graph of nodes. A step node advances one block of one
// level by one step; a transfer node produces a block's data at the start of
// an epoch; the regrid node builds the next epoch's hierarchy. A node's
// inputs are slices of other nodes' outputs, found by resolving every point
// of its stencil window to the node that produces it:
//   - a point covered by the next finer level reads the coincident fine point
//     (this is the restriction),
//   - a taper point at a substep boundary of the parent is interpolated from
//     the parent,
//   - a taper point between parent steps comes from the patch's edge block.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mpx/amr/structure.hpp"

namespace mpx::amr {

enum class NodeKind : std::uint8_t { step = 0, transfer = 1, regrid = 2 };

struct NodeKey {
  int epoch = 0;
  NodeKind kind = NodeKind::step;
  int level = 0;
  int block = 0;
  long step = 0;  // level units; transfer nodes carry the epoch start step

  bool operator==(const NodeKey&) const = default;
};

// 11 bits epoch (mod 2048) | 3 kind | 3 level | 20 block | 26 step.
std::uint64_t pack(const NodeKey& k) noexcept;
NodeKey unpack(std::uint64_t id) noexcept;
int epoch_of(std::uint64_t id) noexcept;

struct DepSlice {
  std::uint64_t node = 0;
  long lo = 0, hi = 0;  // level indices; empty for an ordering-only input
};

struct Term {
  std::uint32_t dep;  // index into deps
  std::int32_t off;   // point offset inside that dep's slice
  double w;
};

// A window point is a copy (n == 1) or a weighted sum of up to three.
struct Source {
  std::uint8_t n = 0;
  Term t[3];
};

struct NodePlan {
  NodeKey key;
  std::uint64_t id = 0;
  long out_lo = 0, out_hi = 0;
  long win_lo = 0, win_hi = 0;
  bool end_node = false;  // last step of its level in the epoch
  std::vector<DepSlice> deps;
  std::vector<Source> sources;  // per window point (step) or output point (transfer)
};

// Quadratic interpolation to a midpoint (x = 1/2 between nodes 0 and 1 of
// {0,1,2}, or between 1 and 2 of {0,1,2} when leaning left).
inline constexpr double prolong_right[3] = {0.375, 0.75, -0.125};  // nodes j0, j0+1, j0+2
inline constexpr double prolong_left[3] = {-0.125, 0.75, 0.375};   // nodes j0-1, j0, j0+1

class Planner {
 public:
  // `prev` is the previous epoch's hierarchy, null for epoch 0.
  Planner(const Structure& cur, const Structure* prev) : cur_(cur), prev_(prev) {}

  static std::pair<long, long> output_range(const Structure& s, const NodeKey& k);

  NodePlan step(int level, int block, long s) const;
  NodePlan transfer(int level, int block) const;
  NodePlan regrid() const;

  // Producers of the composite solution at the end of the epoch (every
  // point of every level not covered by a finer one).
  NodePlan final_gather() const;

 private:
  struct Ref {
    std::uint64_t node;
    long idx;
  };
  struct Builder;

  Ref direct(const Structure& s, int k, long i, long step) const;
  void value(Builder& b, const Structure& s, int k, long i, long step, Source& out) const;

  const Structure& cur_;
  const Structure* prev_;
};

}  // namespace mpx::amr
