// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// A locality: one address space with its own worker pool, parcel port and
// AGAS state. apply() is the action manager: local targets become tasks,
// remote targets become parcels.

#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mpx/agas/agas.hpp"
#include "mpx/parcel/actions.hpp"
#include "mpx/parcel/frame.hpp"
#include "mpx/parcel/transport.hpp"
#include "mpx/runtime/task_runtime.hpp"

namespace mpx::lco {
class LcoBase;
class FutureCell;
}

namespace mpx::parcel {

struct PortCounters {
  std::uint64_t parcels_sent = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t parcels_received = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t gaps = 0;
  std::uint64_t forwarded = 0;
  std::uint64_t local_applies = 0;
  std::uint64_t remote_applies = 0;
  std::uint64_t actions_run = 0;
  std::uint64_t failures = 0;
  std::uint64_t sockets = 0;

  std::string to_text(const std::string& prefix = "") const;
};

struct TransportFailure {
  LocalityId to = 0;
  Parcel parcel;
  std::string what;
};

class Locality : public rt::ActionLookup {
 public:
  Locality(LocalityId id, std::size_t count, rt::Runtime& runtime, ActionRegistry actions);
  ~Locality() override;

  Locality(const Locality&) = delete;
  Locality& operator=(const Locality&) = delete;

  LocalityId id() const noexcept { return id_; }
  std::size_t size() const noexcept { return count_; }
  rt::Runtime& runtime() noexcept { return runtime_; }
  agas::Agas& agas() noexcept { return agas_; }
  const ActionRegistry& actions() const noexcept { return actions_; }

  // Application state reachable from action handlers.
  void set_app(void* app) noexcept { app_.store(app); }
  void* app() const noexcept { return app_.load(); }

  // Throws unknown_action at the call site. Local targets run as a new task
  // with no wire traffic; remote ones are sent as a parcel.
  void apply(const Gid& dest, std::uint32_t action, Blob args,
             std::optional<Gid> continuation = std::nullopt);

  // Delivers a value to an LCO wherever it lives.
  void set_lco(const Gid& target, Blob value);

  Gid register_lco(std::shared_ptr<lco::LcoBase> cell, bool publish = true);

  // A future registered for a single reply, and its gid.
  std::pair<Gid, std::shared_ptr<lco::FutureCell>> reply_future();

  // Sends a fully formed parcel to a specific locality.
  void send_parcel(LocalityId to, Parcel p);

  // Port side.
  void attach(std::unique_ptr<Link> link);
  void on_bytes(LocalityId from, ByteView bytes);
  void on_link_error(LocalityId peer, const std::string& what);
  bool connected_to(LocalityId peer) const;
  void close_links();

  PortCounters counters() const;
  std::vector<TransportFailure> failures() const;

  // rt::ActionLookup
  std::function<void(Blob)> task_entry(std::uint32_t id) const override;

 private:
  struct Peer;

  void dispatch(LocalityId from, Frame f);
  void deliver(Parcel p);
  void run_action(const ActionInfo& info, Parcel p);
  void deliver_set_lco(Parcel p);
  void record_failure(LocalityId to, Parcel p, std::string what);
  Peer* peer(LocalityId id) const;

  LocalityId id_;
  std::size_t count_;
  rt::Runtime& runtime_;
  ActionRegistry actions_;
  agas::Agas agas_;

  std::vector<std::unique_ptr<Peer>> peers_;
  mutable std::mutex peers_mu_;

  std::atomic<std::uint64_t> parcels_sent_{0}, bytes_sent_{0}, parcels_received_{0}, bytes_received_{0},
      duplicates_{0}, gaps_{0}, forwarded_{0}, local_applies_{0}, remote_applies_{0}, actions_run_{0};

  mutable std::mutex fail_mu_;
  std::vector<TransportFailure> failures_;
  std::atomic<void*> app_{nullptr};
};

}  // namespace mpx::parcel
