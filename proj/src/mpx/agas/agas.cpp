// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/agas/agas.hpp"

#include "mpx/common/error.hpp"
#include "mpx/lco/lco.hpp"
#include "mpx/parcel/locality.hpp"

namespace mpx::agas {

using parcel::Parcel;
namespace sys = parcel::sys;

Gid locality_gid(LocalityId id) noexcept { return Gid{id, Gid::derived_bit, GidKind::other}; }

Agas::Agas(parcel::Locality& host) : host_(host) {}

Gid Agas::register_object(GidKind kind, LocalRef ref, bool publish) {
  if (kind == GidKind::invalid) raise(ErrorCode::invalid_argument, "cannot register an object of kind invalid");
  const LocalityId self = host_.id();
  Gid g{self, next_seq_.fetch_add(1, std::memory_order_relaxed), kind};
  {
    std::lock_guard lk(mu_);
    local_[g] = Hosted{std::move(ref), 0};
    if (publish && self == 0) directory_[g] = Entry{0, 0};
  }
  if (publish && self != 0) {
    ByteWriter w;
    g.encode(w);
    w.u32(self);
    w.u64(0);
    try {
      query_directory(sys::agas_bind, std::move(w).take());
    } catch (...) {
      unregister(g);
      throw;
    }
  }
  return g;
}

void Agas::bind_derived(const Gid& gid, LocalRef ref) {
  if (!gid.derived() || gid.locality != host_.id())
    raise(ErrorCode::invalid_argument, "bind_derived: " + gid.str() + " is not a derived gid of this locality");
  std::lock_guard lk(mu_);
  local_[gid] = Hosted{std::move(ref), 0};
}

void Agas::unregister(const Gid& gid) {
  std::lock_guard lk(mu_);
  local_.erase(gid);
}

std::optional<LocalRef> Agas::local(const Gid& gid) const {
  std::lock_guard lk(mu_);
  auto it = local_.find(gid);
  if (it == local_.end()) return std::nullopt;
  return it->second.ref;
}

std::optional<Resolution> Agas::forward_entry(const Gid& gid) const {
  std::lock_guard lk(mu_);
  auto it = forward_.find(gid);
  if (it == forward_.end()) return std::nullopt;
  return Resolution{it->second.locality, it->second.generation, false, {}};
}

std::size_t Agas::directory_size() const {
  std::lock_guard lk(mu_);
  return directory_.size();
}

std::size_t Agas::local_size() const {
  std::lock_guard lk(mu_);
  return local_.size();
}

Resolution Agas::route(const Gid& gid) {
  const LocalityId self = host_.id();
  std::lock_guard lk(mu_);
  if (auto it = local_.find(gid); it != local_.end())
    return Resolution{self, it->second.generation, true, it->second.ref};
  if (auto it = forward_.find(gid); it != forward_.end())
    return Resolution{it->second.locality, it->second.generation, false, {}};
  if (auto it = cache_.find(gid); it != cache_.end())
    return Resolution{it->second.locality, it->second.generation, it->second.locality == self, {}};
  return Resolution{gid.locality, 0, gid.locality == self, {}};
}

Resolution Agas::resolve(const Gid& gid) {
  const LocalityId self = host_.id();
  {
    std::lock_guard lk(mu_);
    if (auto it = local_.find(gid); it != local_.end())
      return Resolution{self, it->second.generation, true, it->second.ref};
    if (auto it = forward_.find(gid); it != forward_.end())
      return Resolution{it->second.locality, it->second.generation, false, {}};
    if (auto it = cache_.find(gid); it != cache_.end())
      return Resolution{it->second.locality, it->second.generation, false, {}};
  }
  if (gid.derived()) {
    if (gid.locality >= host_.size()) raise(ErrorCode::not_found, "gid " + gid.str() + " names no locality");
    return Resolution{gid.locality, 0, gid.locality == self, {}};
  }
  std::optional<Entry> found;
  if (self == 0) {
    found = directory_lookup(gid);
  } else {
    ByteWriter w;
    gid.encode(w);
    Blob reply = query_directory(sys::agas_resolve, std::move(w).take());
    ByteReader r(reply);
    if (r.u8()) {
      Entry e;
      e.locality = r.u32();
      e.generation = r.u64();
      found = e;
    }
  }
  if (!found) raise(ErrorCode::not_found, "gid " + gid.str() + " is not registered");
  learn(gid, found->locality, found->generation);
  return Resolution{found->locality, found->generation, found->locality == self, {}};
}

std::uint64_t Agas::rebind(const Gid& gid, LocalRef ref) {
  const LocalityId self = host_.id();
  std::optional<Hosted> previous;
  {
    std::lock_guard lk(mu_);
    if (auto it = local_.find(gid); it != local_.end()) previous = it->second;
    local_[gid] = Hosted{std::move(ref), previous ? previous->generation : 0};
  }
  std::optional<std::uint64_t> gen;
  if (self == 0) {
    gen = directory_rebind(gid, 0);
  } else {
    ByteWriter w;
    gid.encode(w);
    w.u32(self);
    Blob reply = query_directory(sys::agas_rebind, std::move(w).take());
    ByteReader r(reply);
    if (r.u8()) gen = r.u64();
  }
  std::lock_guard lk(mu_);
  if (!gen) {
    if (previous)
      local_[gid] = *previous;
    else
      local_.erase(gid);
    raise(ErrorCode::not_found, "rebind of unknown gid " + gid.str());
  }
  local_[gid].generation = *gen;
  forward_.erase(gid);
  cache_[gid] = Entry{self, *gen};
  return *gen;
}

void Agas::learn(const Gid& gid, LocalityId loc, std::uint64_t gen) {
  std::lock_guard lk(mu_);
  auto it = cache_.find(gid);
  if (it == cache_.end() || it->second.generation <= gen) cache_[gid] = Entry{loc, gen};
}

std::optional<Agas::Entry> Agas::directory_lookup(const Gid& gid) const {
  std::lock_guard lk(mu_);
  auto it = directory_.find(gid);
  if (it == directory_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint64_t> Agas::directory_rebind(const Gid& gid, LocalityId to) {
  LocalityId old;
  std::uint64_t gen;
  {
    std::lock_guard lk(mu_);
    auto it = directory_.find(gid);
    if (it == directory_.end()) return std::nullopt;
    old = it->second.locality;
    gen = ++it->second.generation;
    it->second.locality = to;
  }
  if (old != to) {
    if (old == host_.id()) {
      install_forward(gid, to, gen);
    } else {
      ByteWriter w;
      gid.encode(w);
      w.u32(to);
      w.u64(gen);
      host_.send_parcel(old, Parcel{locality_gid(old), sys::agas_forward, std::move(w).take(), std::nullopt,
                                    host_.id(), gen});
    }
  }
  return gen;
}

void Agas::install_forward(const Gid& gid, LocalityId to, std::uint64_t gen) {
  std::lock_guard lk(mu_);
  local_.erase(gid);
  forward_[gid] = Entry{to, gen};
  auto it = cache_.find(gid);
  if (it == cache_.end() || it->second.generation <= gen) cache_[gid] = Entry{to, gen};
}

Blob Agas::query_directory(std::uint32_t action, Blob args) {
  directory_queries_.fetch_add(1, std::memory_order_relaxed);
  auto [gid, fut] = host_.reply_future();
  try {
    host_.send_parcel(0, Parcel{locality_gid(0), action, std::move(args), gid, host_.id(), 0});
  } catch (...) {
    unregister(gid);
    throw;
  }
  Blob reply = fut->get();
  unregister(gid);
  return reply;
}

// ---------------------------------------------------------------------------
// handlers

namespace {
void reply(parcel::Locality& host, const Parcel& request, Blob value) {
  if (!request.continuation) return;
  host.send_parcel(request.source, Parcel{*request.continuation, sys::set_lco, std::move(value), std::nullopt,
                                          host.id(), 0});
}
}  // namespace

void Agas::on_bind(const Parcel& p) {
  ByteReader r(p.args);
  Gid g = Gid::decode(r);
  Entry e;
  e.locality = r.u32();
  e.generation = r.u64();
  {
    std::lock_guard lk(mu_);
    auto& slot = directory_[g];
    if (slot.generation <= e.generation) slot = e;
  }
  reply(host_, p, {});
}

void Agas::on_resolve(const Parcel& p) {
  ByteReader r(p.args);
  Gid g = Gid::decode(r);
  auto e = directory_lookup(g);
  ByteWriter w;
  w.u8(e ? 1 : 0);
  w.u32(e ? e->locality : 0);
  w.u64(e ? e->generation : 0);
  reply(host_, p, std::move(w).take());
}

void Agas::on_rebind(const Parcel& p) {
  ByteReader r(p.args);
  Gid g = Gid::decode(r);
  LocalityId to = r.u32();
  auto gen = directory_rebind(g, to);
  ByteWriter w;
  w.u8(gen ? 1 : 0);
  w.u64(gen.value_or(0));
  reply(host_, p, std::move(w).take());
}

void Agas::on_forward(const Parcel& p) {
  ByteReader r(p.args);
  Gid g = Gid::decode(r);
  LocalityId to = r.u32();
  std::uint64_t gen = r.u64();
  install_forward(g, to, gen);
}

void Agas::on_invalidate(const Parcel& p) {
  ByteReader r(p.args);
  Gid g = Gid::decode(r);
  LocalityId loc = r.u32();
  std::uint64_t gen = r.u64();
  learn(g, loc, gen);
}

}  // namespace mpx::agas
