// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Exhaustive interleaving checker for the LCO cores. Simulated tasks run
// small programs against real cells; every schedule of their operations is
// replayed from scratch and checked for deadlock and cell invariants.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpx::lco::mc {

enum class OpKind {
  sem_wait,
  sem_signal,
  mutex_lock,
  mutex_unlock,
  fe_write,
  fe_read_consume,
  fe_read_keep,
  future_get,
  future_set,
  df_write,  // arg = input index
};

struct Op {
  OpKind kind;
  std::uint64_t arg = 0;
};

struct Scenario {
  std::string name;
  std::vector<std::vector<Op>> tasks;
  std::uint64_t sem_initial = 0;
  std::size_t df_arity = 1;
};

struct Report {
  std::uint64_t schedules = 0;
  std::uint64_t deadlocks = 0;
  std::uint64_t violations = 0;
  std::string first_failure;

  bool ok() const noexcept { return schedules > 0 && deadlocks == 0 && violations == 0; }
};

Report explore(const Scenario& s);

// Balanced programs of up to 3 tasks x 4 operations over every cell type.
std::vector<Scenario> standard_scenarios();

}  // namespace mpx::lco::mc
