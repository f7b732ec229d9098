// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/amr/cluster.hpp"

#include <chrono>

namespace mpx::amr {

LocalCluster::LocalCluster(std::size_t localities, unsigned workers, rt::Policy policy, std::uint64_t seed) {
  for (std::size_t i = 0; i < localities; ++i) {
    rt::SchedulerConfig c;
    c.workers = workers;
    c.policy = policy;
    c.locality = static_cast<LocalityId>(i);
    c.seed = seed ? seed + i : 0;
    runtimes_.push_back(std::make_unique<rt::Runtime>(c));
    parcel::ActionRegistry reg;
    Engine::add_actions(reg);
    locs_.push_back(
        std::make_unique<parcel::Locality>(static_cast<LocalityId>(i), localities, *runtimes_.back(), std::move(reg)));
    runtimes_.back()->set_actions(locs_.back().get());
    engines_.push_back(std::make_unique<Engine>(*locs_.back()));
  }
  if (localities > 1) {
    fabric_ = std::make_unique<parcel::LoopbackFabric>();
    std::vector<parcel::Locality*> raw;
    for (auto& l : locs_) raw.push_back(l.get());
    fabric_->connect(raw);
  }
}

LocalCluster::~LocalCluster() {
  for (auto& r : runtimes_) {
    try {
      r->quiesce(std::chrono::seconds(30));
    } catch (...) {
    }
  }
  if (fabric_) fabric_->close();
  for (auto& r : runtimes_) r->shutdown();
  engines_.clear();
}

RunResult LocalCluster::run(RunConfig cfg) {
  cfg.localities.clear();
  if (locs_.size() > 1)
    for (std::size_t i = 0; i < locs_.size(); ++i)
      cfg.localities[static_cast<LocalityId>(i)] = parcel::Endpoint{"loopback", static_cast<std::uint16_t>(i + 1)};
  cfg.workers = runtimes_[0]->config().workers;
  cfg.policy = runtimes_[0]->config().policy;
  return engines_[0]->run(cfg);
}

}  // namespace mpx::amr
