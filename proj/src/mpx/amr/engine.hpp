// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Executes the evolution graph on one or more localities.
//
// Every node of an epoch is a dataflow cell on the locality owning its block
// (block index modulo the locality count). Input 0 is a gate; the others are
// the slices named by the node's plan, delivered by their producers as they
// complete. In dataflow mode the gate is open from the start. In barrier mode
// locality 0 opens the gates of one level-step at a time in Berger-Oliger
// order and waits for all of them before the next.
//
// The hierarchy of epoch e+1 is built by a regrid node that depends only on
// the data at the start of epoch e, so the next epoch is laid out while the
// current one is still stepping.

#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mpx/amr/config.hpp"
#include "mpx/amr/structure.hpp"
#include "mpx/parcel/locality.hpp"

namespace mpx::amr {

namespace actions {
inline constexpr std::uint32_t start = 16;
inline constexpr std::uint32_t structure = 17;
inline constexpr std::uint32_t subscribe = 18;
inline constexpr std::uint32_t output = 19;
inline constexpr std::uint32_t release = 20;
inline constexpr std::uint32_t stop = 21;
inline constexpr std::uint32_t collect = 22;
inline constexpr std::uint32_t retire = 23;
inline constexpr std::uint32_t finish = 24;
inline constexpr std::uint32_t shutdown = 25;
}  // namespace actions

struct StateRow {
  double r = 0;
  double chi = 0, Phi = 0, Pi = 0;
  int level = 0;
};

// One completed step node: block interior [lo, hi) of `level` reached `step`.
struct StepRecord {
  double t = 0;  // seconds since the run started on the recording locality
  int epoch = 0;
  int level = 0;
  int block = 0;
  long lo = 0, hi = 0;
  long step = 0;
  LocalityId where = 0;
};

struct RunResult {
  bool completed = false;  // every requested coarse step was taken
  bool blew_up = false;
  bool budget_stop = false;
  std::string diagnostic;
  int coarse_steps = 0;
  double wall_s = 0;

  std::vector<StateRow> state;  // composite solution, sorted by r
  std::vector<StepRecord> log;
  std::vector<Structure> structures;      // by epoch
  std::vector<double> coarse_boundaries;  // barrier mode: time coarse step n+1 finished

  std::uint64_t nodes_run = 0;
  std::uint64_t nodes_skipped = 0;
  // summed over localities
  std::uint64_t parcels_sent = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t gaps = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t failures = 0;
};

class Engine {
 public:
  // Installs itself as the locality's app. The locality's registry must hold
  // the engine actions (see add_actions).
  explicit Engine(parcel::Locality& loc);
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  static void add_actions(parcel::ActionRegistry& reg);

  // Locality 0 only. Blocks until the run ends. The number of localities in
  // `cfg` must match the locality's cluster size.
  RunResult run(const RunConfig& cfg);

  // Tells the other localities to leave wait_shutdown() and waits for their
  // acknowledgement.
  void shutdown_peers();
  // Blocks the calling thread until locality 0 sends shutdown.
  void wait_shutdown();

  struct Run;

 private:
  friend struct Handlers;

  std::shared_ptr<Run> current() const;

  parcel::Locality& loc_;
  mutable std::mutex mu_;
  std::shared_ptr<Run> run_;
  std::uint64_t next_run_ = 1;
  std::shared_ptr<void> shutdown_;
};

}  // namespace mpx::amr
