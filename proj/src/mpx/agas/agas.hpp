// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Global address space. Locality 0 holds the authoritative directory; every
// locality keeps a table of objects it hosts, forward entries for objects
// that moved away, and a cache of remote bindings.
//
// Routing (used by apply) never needs a directory round trip: local table,
// then forward entry, then cache, then the gid's birth locality, which either
// hosts the object or forwards. Explicit resolve() consults the directory.
// Gids with the derived bit are bound to their birth locality by
// construction and are never entered in the directory.

#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>

#include "mpx/common/bytes.hpp"
#include "mpx/common/gid.hpp"

namespace mpx::lco {
class LcoBase;
}

namespace mpx::parcel {
class Locality;
struct Parcel;
}

namespace mpx::agas {

struct LocalRef {
  std::shared_ptr<void> object;
  lco::LcoBase* lco = nullptr;  // set when the object is an LCO
};

struct Resolution {
  LocalityId locality = 0;
  std::uint64_t generation = 0;
  bool is_local = false;
  LocalRef ref;  // valid only when is_local
};

// The gid naming a locality itself; bound by construction.
Gid locality_gid(LocalityId id) noexcept;

class Agas {
 public:
  explicit Agas(parcel::Locality& host);

  // Registers a locally hosted object under a fresh gid. With publish the
  // binding is entered in the directory before this returns (a round trip
  // unless this is locality 0); unpublished gids are reachable only through
  // their birth locality.
  Gid register_object(GidKind kind, LocalRef ref, bool publish = true);
  void unregister(const Gid& gid);
  // Hosts `ref` under a derived gid born here. No directory entry is made.
  void bind_derived(const Gid& gid, LocalRef ref);

  // Authoritative binding. Local and cached entries answer without traffic;
  // otherwise suspends the calling task on a directory round trip. Throws
  // not_found for an unknown gid.
  Resolution resolve(const Gid& gid);

  // Where a parcel for `gid` should go, without any network traffic.
  Resolution route(const Gid& gid);

  // Moves `gid` to this locality, hosting `ref`. Returns the new generation.
  // Throws not_found for an unknown gid.
  std::uint64_t rebind(const Gid& gid, LocalRef ref);

  std::optional<LocalRef> local(const Gid& gid) const;
  std::optional<Resolution> forward_entry(const Gid& gid) const;

  std::uint64_t directory_queries() const noexcept { return directory_queries_.load(); }
  std::size_t directory_size() const;
  std::size_t local_size() const;

  // System action handlers, called by the locality's port.
  void on_bind(const parcel::Parcel& p);
  void on_resolve(const parcel::Parcel& p);
  void on_rebind(const parcel::Parcel& p);
  void on_forward(const parcel::Parcel& p);
  void on_invalidate(const parcel::Parcel& p);

  // Records that `gid` now lives at (loc, gen) if that is newer than what the
  // cache holds.
  void learn(const Gid& gid, LocalityId loc, std::uint64_t gen);

 private:
  struct Entry {
    LocalityId locality;
    std::uint64_t generation;
  };
  struct Hosted {
    LocalRef ref;
    std::uint64_t generation;
  };

  std::optional<Entry> directory_lookup(const Gid& gid) const;
  // Runs on locality 0; returns the new generation or nullopt if unknown.
  std::optional<std::uint64_t> directory_rebind(const Gid& gid, LocalityId to);
  void install_forward(const Gid& gid, LocalityId to, std::uint64_t gen);
  Blob query_directory(std::uint32_t action, Blob args);

  parcel::Locality& host_;
  std::atomic<std::uint64_t> next_seq_{1};
  std::atomic<std::uint64_t> directory_queries_{0};

  mutable std::mutex mu_;
  std::unordered_map<Gid, Hosted, GidHash> local_;
  std::unordered_map<Gid, Entry, GidHash> forward_;
  std::unordered_map<Gid, Entry, GidHash> cache_;
  std::unordered_map<Gid, Entry, GidHash> directory_;  // locality 0 only
};

}  // namespace mpx::agas
