// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Mesh hierarchy for one epoch (a run of coarse steps with fixed refinement).
// Level k has spacing dr0 / 2^k and takes 2^k steps per coarse step. Each
// level above the base is a set of disjoint patches; a patch's interior is
// cut into blocks of `grain` points. Coordinates are level point indices.

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mpx/amr/config.hpp"
#include "mpx/common/bytes.hpp"

namespace mpx::amr {

// Fine ghost points per side of a patch, enough for two RK3 substeps.
inline constexpr long taper_width = 6;
// Points consumed per side by one RK3 step.
inline constexpr long step_radius = 3;
// Parent points kept between a fine patch and its parent's edge.
inline constexpr long nest_margin = 6;

struct Patch {
  long lo = 0, hi = 0;  // interior [lo, hi)
  int first_block = 0;
  int nblocks = 0;
};

struct Block {
  int level = 0;
  int index = 0;  // within the level
  int patch = 0;
  long lo = 0, hi = 0;
  bool left_taper = false;   // owns the taper left of its patch
  bool right_taper = false;
};

struct Level {
  long npoints = 0;  // points spanning [0, rmax] at this spacing
  double dr = 0;
  std::vector<Patch> patches;
  std::vector<Block> blocks;
};

// Contiguous ranges of `g` points over [lo, hi); the last may be short.
std::vector<std::pair<long, long>> granularity_partition(long lo, long hi, int g);

class Structure {
 public:
  int epoch = 0;
  int n_begin = 0;  // coarse steps
  int n_end = 0;
  int grain = 1;
  std::vector<Level> levels;  // only non-empty levels; levels[0] covers everything

  int depth() const noexcept { return static_cast<int>(levels.size()); }
  long start_step(int k) const noexcept { return static_cast<long>(n_begin) << k; }
  long end_step(int k) const noexcept { return static_cast<long>(n_end) << k; }

  // Index of the patch of level k whose interior holds i, or -1.
  int patch_at(int k, long i) const noexcept;
  int block_at(int k, long i) const noexcept;
  // True if level k+1 holds the point coincident with level-k point i.
  bool covered(int k, long i) const noexcept;
  // For a point outside every level-k patch that lies in a patch taper:
  // the patch and whether it is the left taper. Returns -1 otherwise.
  int taper_patch(int k, long i, bool& left) const noexcept;

  std::size_t block_count() const noexcept;

  // Throws invariant_violation naming the offending patch.
  void check_nesting() const;

  Blob encode() const;
  static Structure decode(ByteView b, double dr0);

  std::string describe() const;
};

// Builds the hierarchy for an epoch. `sample(k, i)` returns chi at level-k
// point i for any i inside the new level-k patches.
Structure build_structure(const RunConfig& cfg, int epoch, int n_begin, int n_end,
                          const std::function<double(int, long)>& sample);

// Lays out levels and blocks from per-level patch intervals.
Structure assemble(const RunConfig& cfg, int epoch, int n_begin, int n_end,
                   const std::vector<std::vector<std::pair<long, long>>>& patches);

}  // namespace mpx::amr
