// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: a flat key=value text file. Unknown keys and malformed
// values are config errors.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpx/common/gid.hpp"
#include "mpx/parcel/transport.hpp"
#include "mpx/runtime/task_runtime.hpp"

namespace mpx::amr {

enum class Mode { barrier, dataflow };

const char* to_string(Mode m) noexcept;
Mode parse_mode(const std::string& s);

struct PhysicsConfig {
  int p = 7;
  double amplitude = 0.1;
  double r0 = 8.0;
  double delta = 1.0;
  double rmax = 30.0;
  double cfl = 0.25;
  bool linear = false;  // drops the chi^p source

  void validate() const;
};

struct RunConfig {
  PhysicsConfig physics;
  int levels = 2;            // refinement levels above the base grid
  int base_points = 2001;
  int grain = 8;             // interior points per block
  Mode mode = Mode::dataflow;
  unsigned workers = 1;
  rt::Policy policy = rt::Policy::local_priority_stealing;
  std::optional<double> theta;  // refinement threshold on |chi|
  int regrid_interval = 8;      // coarse steps per epoch; 0 keeps the initial hierarchy
  int steps = 100;              // coarse steps
  std::vector<double> snapshot_secs{5, 10, 20};
  double wall_budget = 0;       // seconds; 0 runs all steps
  std::uint64_t seed = 0;
  std::map<LocalityId, parcel::Endpoint> localities;

  double dr0() const { return physics.rmax / (base_points - 1); }
  double effective_theta() const { return theta ? *theta : 0.25 * physics.amplitude; }
  std::size_t locality_count() const { return localities.empty() ? 1 : localities.size(); }

  void validate() const;
  // One-line `key=value ...` echo of every setting.
  std::string echo() const;
  // Serialized form understood by `parse_text`.
  std::string to_text() const;
};

// Applies `key=value` to cfg; throws config errors.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_text(const std::string& text, RunConfig base = {});
RunConfig load_file(const std::string& path, RunConfig base = {});

}  // namespace mpx::amr
