// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Desk-scale experiments over the runtime and the solver, and their CSV and
// metric outputs.

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mpx/amr/analysis.hpp"
#include "mpx/amr/cluster.hpp"
#include "mpx/amr/config.hpp"
#include "mpx/amr/engine.hpp"

namespace mpx::harness {

using amr::RunConfig;
using amr::RunResult;

// Flat key=value metrics, written one per line.
using Metrics = std::map<std::string, std::string>;

std::string fmt(double v);  // shortest round-trip form
double median(std::vector<double> v);

// Command options: `key=value` lines, same syntax as run configs.
class Options {
 public:
  static Options parse(const std::string& text);
  std::string get(const std::string& key, const std::string& dflt) const;
  long get_int(const std::string& key, long dflt) const;
  double get_double(const std::string& key, double dflt) const;
  std::vector<long> get_list(const std::string& key, const std::vector<long>& dflt) const;

 private:
  std::map<std::string, std::string> kv_;
};

// ---- sessions ----

// This process's locality. Single-locality sessions host their own worker
// pool; multi-locality ones join a TCP mesh described by the config.
class Session {
 public:
  static std::unique_ptr<Session> open(const RunConfig& cfg, LocalityId self);
  ~Session();

  LocalityId id() const noexcept;
  std::size_t size() const noexcept;
  RunResult run(const RunConfig& cfg);
  // Other localities: serve until locality 0 closes its session.
  void serve();

  struct Impl;

 private:
  explicit Session(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

// ---- task overhead ----

enum class Workload { none, spin, wait };
const char* to_string(Workload w) noexcept;
Workload parse_workload(const std::string& s);

struct TaskBench {
  unsigned workers = 1;
  Workload workload = Workload::none;
  double work_us = 0;
  std::size_t tasks = 0;
  double wall_s = 0;
  double us_per_task = 0;  // wall time / tasks
  double overhead_us = 0;  // per task: wall x workers / tasks - work
};

// Spawns `tasks` tasks from one root task and waits for all of them. `spin`
// burns the CPU for work_us; `wait` holds the worker without using the CPU.
TaskBench bench_tasks(unsigned workers, std::size_t tasks, Workload w, double work_us,
                      rt::Policy policy = rt::Policy::local_priority_stealing, std::uint64_t seed = 1);

// ---- solver experiments ----

// Max per-point difference over chi, Phi, Pi; throws if the grids differ.
double max_state_diff(const std::vector<amr::StateRow>& a, const std::vector<amr::StateRow>& b);

struct SweepRow {
  unsigned workers = 0;
  int grain = 0;
  double median_s = 0;
  std::vector<double> samples;
};
struct SweepSummary {
  unsigned workers = 0;
  int argmin = 0;
  bool interior = false;  // argmin is neither the smallest nor the largest grain
};
std::vector<SweepRow> grain_sweep(RunConfig cfg, const std::vector<unsigned>& workers, const std::vector<int>& grains,
                                  int repeats);
std::vector<SweepSummary> summarize(const std::vector<SweepRow>& rows);

struct CompareRow {
  unsigned workers = 0;
  int levels = 0;
  std::vector<double> barrier_s, dataflow_s;
  double barrier_median = 0, dataflow_median = 0;
  double ratio = 0;  // dataflow / barrier medians
  double max_diff = 0;
};
CompareRow compare_modes(RunConfig cfg, unsigned workers, int repeats);

struct ConvergenceReport {
  std::vector<int> points;
  std::vector<double> diffs;  // |u_h - u_h/2|, |u_h/2 - u_h/4| at coincident points
  double order = 0;
  double rk3 = 0, rk3_oracle = 0;
  double energy_drift = 0;  // relative, linear mode, before the pulse reaches rmax
  double amr_error = 0, fine_estimate = 0;
  double mode_diff = 0;
};
ConvergenceReport convergence_suite();

// ---- outputs ----

void write_state_csv(const std::string& path, const RunConfig& cfg, const std::vector<amr::StateRow>& rows);
void write_front_csv(const std::string& path, const RunConfig& cfg,
                     const std::vector<std::vector<amr::FrontRow>>& snapshots);
void write_metrics(const std::string& path, const Metrics& m);
std::string metrics_text(const Metrics& m);

// ---- commands ----

// Exit-code contract shared by every command.
enum Status { pass = 0, invariant_violation = 1, config_error = 2, runtime_error = 3 };

struct CommandResult {
  Status status = pass;
  Metrics metrics;
  std::string message;
};

// Runs one harness command and writes its files under out_dir. `session`
// is used by evolve and front; the others build their own worker pools.
CommandResult run_command(const std::string& name, Session* session, const RunConfig& cfg, const Options& opts,
                          const std::string& out_dir);

}  // namespace mpx::harness
