// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Post-run views of the completion log: timestep fronts at wall-clock
// instants and the neighbour-step bound. Log times from different localities
// are measured against each locality's own start.

#pragma once

#include <string>
#include <vector>

#include "mpx/amr/engine.hpp"

namespace mpx::amr {

struct FrontRow {
  double wall_s = 0;
  double r = 0;
  int level = 0;
  long step_finest = 0;  // steps reached in units of the finest level's dt
};

// Every base point, and every finer point stepped by wall time t.
// `max_levels` fixes the finest unit (the configured level count).
std::vector<FrontRow> front_at(const RunResult& res, int max_levels, double t);

struct ConeReport {
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::string first;  // description of the first violation
};

// Replays completions in time order and, after each one, compares the block
// with its same-patch neighbours: steps may differ by at most one. Also
// flags a block that skips a step.
ConeReport check_cone(const RunResult& res);

// Barrier mode: at each recorded coarse boundary every base point has
// reached the same step.
bool flat_at_boundaries(const RunResult& res, int max_levels, std::string* why = nullptr);

// Per-point step never decreases across the snapshots.
bool monotone(const std::vector<std::vector<FrontRow>>& snapshots);

// Radius of the least advanced base point, and whether it lies within the
// finest level's extent (hull of its patches in the hierarchy in force at
// that step) widened by `slack` on each side.
struct Apex {
  double r = 0;
  long step_finest = 0;
  bool in_finest = false;
};
Apex apex(const std::vector<FrontRow>& front, const RunResult& res, int max_levels, double slack);

}  // namespace mpx::amr
