// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Localities of one process joined by the loopback fabric, each with its own
// worker pool and solver engine.

#pragma once

#include <memory>
#include <vector>

#include "mpx/amr/engine.hpp"
#include "mpx/parcel/locality.hpp"
#include "mpx/parcel/transport.hpp"
#include "mpx/runtime/task_runtime.hpp"

namespace mpx::amr {

class LocalCluster {
 public:
  // `workers` per locality.
  LocalCluster(std::size_t localities, unsigned workers, rt::Policy policy = rt::Policy::local_priority_stealing,
               std::uint64_t seed = 0);
  ~LocalCluster();

  LocalCluster(const LocalCluster&) = delete;
  LocalCluster& operator=(const LocalCluster&) = delete;

  // Runs cfg with its locality map replaced by this cluster's size.
  RunResult run(RunConfig cfg);

  std::size_t size() const noexcept { return locs_.size(); }
  parcel::Locality& locality(std::size_t i) { return *locs_[i]; }
  rt::Runtime& runtime(std::size_t i) { return *runtimes_[i]; }

 private:
  std::vector<std::unique_ptr<rt::Runtime>> runtimes_;
  std::vector<std::unique_ptr<parcel::Locality>> locs_;
  std::vector<std::unique_ptr<Engine>> engines_;
  std::unique_ptr<parcel::LoopbackFabric> fabric_;
};

}  // namespace mpx::amr
