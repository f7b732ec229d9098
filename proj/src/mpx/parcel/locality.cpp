// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/parcel/locality.hpp"

#include <iostream>
#include <sstream>

#include "mpx/common/error.hpp"
#include "mpx/lco/lco.hpp"

namespace mpx::parcel {

std::string PortCounters::to_text(const std::string& prefix) const {
  std::ostringstream os;
  auto kv = [&](const char* k, std::uint64_t v) { os << prefix << k << "=" << v << "\n"; };
  kv("parcels_sent", parcels_sent);
  kv("bytes_sent", bytes_sent);
  kv("parcels_received", parcels_received);
  kv("bytes_received", bytes_received);
  kv("decode_errors", decode_errors);
  kv("duplicates", duplicates);
  kv("gaps", gaps);
  kv("forwarded", forwarded);
  kv("local_applies", local_applies);
  kv("remote_applies", remote_applies);
  kv("actions_run", actions_run);
  kv("failures", failures);
  kv("sockets", sockets);
  return os.str();
}

struct Locality::Peer {
  std::unique_ptr<Link> link;
  std::mutex send_mu;
  std::uint32_t next_seq = 1;
  std::mutex recv_mu;
  FrameReader reader;
  std::uint32_t expect_seq = 1;
};

Locality::Locality(LocalityId id, std::size_t count, rt::Runtime& runtime, ActionRegistry actions)
    : id_(id), count_(count), runtime_(runtime), actions_(std::move(actions)), agas_(*this), peers_(count) {
  if (count == 0 || id >= count)
    raise(ErrorCode::config, "locality id " + std::to_string(id) + " outside 0.." + std::to_string(count));
}

Locality::~Locality() { close_links(); }

void Locality::attach(std::unique_ptr<Link> link) {
  const LocalityId p = link->peer();
  if (p >= count_ || p == id_) raise(ErrorCode::invalid_argument, "link to invalid peer " + std::to_string(p));
  auto peer = std::make_unique<Peer>();
  peer->link = std::move(link);
  std::lock_guard lk(peers_mu_);
  peers_[p] = std::move(peer);
}

Locality::Peer* Locality::peer(LocalityId id) const {
  std::lock_guard lk(peers_mu_);
  return id < peers_.size() ? peers_[id].get() : nullptr;
}

bool Locality::connected_to(LocalityId p) const { return peer(p) != nullptr; }

void Locality::close_links() {
  std::vector<Peer*> ps;
  {
    std::lock_guard lk(peers_mu_);
    for (auto& p : peers_)
      if (p) ps.push_back(p.get());
  }
  for (auto* p : ps) p->link->close();
}

PortCounters Locality::counters() const {
  PortCounters c;
  c.parcels_sent = parcels_sent_.load();
  c.bytes_sent = bytes_sent_.load();
  c.parcels_received = parcels_received_.load();
  c.bytes_received = bytes_received_.load();
  c.duplicates = duplicates_.load();
  c.gaps = gaps_.load();
  c.forwarded = forwarded_.load();
  c.local_applies = local_applies_.load();
  c.remote_applies = remote_applies_.load();
  c.actions_run = actions_run_.load();
  {
    std::lock_guard lk(fail_mu_);
    c.failures = failures_.size();
  }
  std::lock_guard lk(peers_mu_);
  for (const auto& p : peers_) {
    if (!p) continue;
    std::lock_guard rk(p->recv_mu);
    c.decode_errors += p->reader.decode_errors();
    c.sockets += p->link->socket_backed();
  }
  return c;
}

std::vector<TransportFailure> Locality::failures() const {
  std::lock_guard lk(fail_mu_);
  return failures_;
}

void Locality::record_failure(LocalityId to, Parcel p, std::string what) {
  std::lock_guard lk(fail_mu_);
  failures_.push_back(TransportFailure{to, std::move(p), std::move(what)});
}

void Locality::on_link_error(LocalityId p, const std::string& what) {
  record_failure(p, Parcel{}, "link to locality " + std::to_string(p) + ": " + what);
}

// ---------------------------------------------------------------------------
// send side

void Locality::send_parcel(LocalityId to, Parcel p) {
  if (to == id_) {
    dispatch(id_, Frame{std::move(p), 0});
    return;
  }
  Peer* pr = peer(to);
  if (!pr) {
    std::string what = "locality " + std::to_string(to) + " is unreachable from " + std::to_string(id_);
    record_failure(to, std::move(p), what);
    raise(ErrorCode::transport, what);
  }
  const std::size_t n = encoded_size(p);
  pr->link->gate().acquire(n);
  try {
    std::lock_guard lk(pr->send_mu);
    pr->link->send(encode_frame(p, pr->next_seq++));
  } catch (const Error& e) {
    pr->link->gate().release(n);
    record_failure(to, std::move(p), e.what());
    throw;
  }
  parcels_sent_.fetch_add(1, std::memory_order_relaxed);
  bytes_sent_.fetch_add(n, std::memory_order_relaxed);
}

void Locality::apply(const Gid& dest, std::uint32_t action, Blob args, std::optional<Gid> continuation) {
  const ActionInfo* info = actions_.find(action);
  if (!info || (!info->fn && action != sys::set_lco))
    raise(ErrorCode::unknown_action, "apply: action id " + std::to_string(action) + " is not registered");
  if (action == sys::set_lco) {
    set_lco(dest, std::move(args));
    return;
  }
  agas::Resolution r = agas_.route(dest);
  Parcel p{dest, action, std::move(args), continuation, id_, r.generation};
  if (r.is_local) {
    local_applies_.fetch_add(1, std::memory_order_relaxed);
    run_action(*info, std::move(p));
  } else {
    remote_applies_.fetch_add(1, std::memory_order_relaxed);
    send_parcel(r.locality, std::move(p));
  }
}

void Locality::set_lco(const Gid& target, Blob value) {
  agas::Resolution r = agas_.route(target);
  if (r.is_local) {
    if (!r.ref.lco) raise(ErrorCode::not_found, "set_lco: " + target.str() + " is not a local LCO");
    r.ref.lco->set_value(std::move(value));
    return;
  }
  send_parcel(r.locality, Parcel{target, sys::set_lco, std::move(value), std::nullopt, id_, r.generation});
}

Gid Locality::register_lco(std::shared_ptr<lco::LcoBase> cell, bool publish) {
  lco::LcoBase* raw = cell.get();
  GidKind kind = raw->kind();
  return agas_.register_object(kind, agas::LocalRef{std::move(cell), raw}, publish);
}

std::pair<Gid, std::shared_ptr<lco::FutureCell>> Locality::reply_future() {
  auto f = std::make_shared<lco::FutureCell>();
  Gid g = register_lco(f, false);
  return {g, f};
}

// ---------------------------------------------------------------------------
// receive side

void Locality::on_bytes(LocalityId from, ByteView bytes) {
  Peer* pr = peer(from);
  if (!pr) return;
  std::vector<Frame> ready;
  {
    std::lock_guard lk(pr->recv_mu);
    bytes_received_.fetch_add(bytes.size(), std::memory_order_relaxed);
    pr->reader.feed(bytes);
    while (auto f = pr->reader.next()) {
      if (f->parcel.action == sys::hello) continue;
      if (f->link_seq < pr->expect_seq) {
        duplicates_.fetch_add(1, std::memory_order_relaxed);
        continue;
      }
      if (f->link_seq > pr->expect_seq) gaps_.fetch_add(f->link_seq - pr->expect_seq, std::memory_order_relaxed);
      pr->expect_seq = f->link_seq + 1;
      ready.push_back(std::move(*f));
    }
  }
  for (auto& f : ready) {
    parcels_received_.fetch_add(1, std::memory_order_relaxed);
    dispatch(from, std::move(f));
  }
}

void Locality::dispatch(LocalityId, Frame f) {
  Parcel& p = f.parcel;
  try {
    switch (p.action) {
      case sys::agas_bind: agas_.on_bind(p); return;
      case sys::agas_resolve: agas_.on_resolve(p); return;
      case sys::agas_rebind: agas_.on_rebind(p); return;
      case sys::agas_forward: agas_.on_forward(p); return;
      case sys::agas_invalidate: agas_.on_invalidate(p); return;
      case sys::set_lco: deliver_set_lco(std::move(p)); return;
      case sys::hello: return;
      default: deliver(std::move(p)); return;
    }
  } catch (const std::exception& e) {
    record_failure(id_, std::move(p), std::string("dispatch: ") + e.what());
  }
}

namespace {
bool hosted_here(const agas::Resolution& r) { return r.is_local; }
}  // namespace

void Locality::deliver(Parcel p) {
  const ActionInfo* info = actions_.find(p.action);
  if (!info || !info->fn) {
    record_failure(id_, std::move(p), "no entry for action id");
    return;
  }
  if (agas_.local(p.dest) || (p.dest.derived() && p.dest.locality == id_)) {
    run_action(*info, std::move(p));
    return;
  }
  if (auto fwd = agas_.forward_entry(p.dest)) {
    forwarded_.fetch_add(1, std::memory_order_relaxed);
    if (p.source != id_) {
      ByteWriter w;
      p.dest.encode(w);
      w.u32(fwd->locality);
      w.u64(fwd->generation);
      send_parcel(p.source, Parcel{agas::locality_gid(p.source), sys::agas_invalidate, std::move(w).take(),
                                   std::nullopt, id_, fwd->generation});
    }
    p.generation = fwd->generation;
    send_parcel(fwd->locality, std::move(p));
    return;
  }
  record_failure(id_, std::move(p), "destination is not hosted here");
}

void Locality::deliver_set_lco(Parcel p) {
  agas::Resolution r = agas_.route(p.dest);
  if (hosted_here(r)) {
    lco::LcoBase* cell = r.ref.lco;
    if (!cell) {
      record_failure(id_, std::move(p), "set_lco target is not an LCO");
      return;
    }
    const GidKind k = cell->kind();
    if (k == GidKind::future || k == GidKind::dataflow || k == GidKind::semaphore) {
      cell->set_value(std::move(p.args));  // never blocks
    } else {
      runtime_.spawn([ref = r.ref, v = std::move(p.args)]() mutable { ref.lco->set_value(std::move(v)); });
    }
    return;
  }
  if (auto fwd = agas_.forward_entry(p.dest)) {
    forwarded_.fetch_add(1, std::memory_order_relaxed);
    p.generation = fwd->generation;
    send_parcel(fwd->locality, std::move(p));
    return;
  }
  record_failure(id_, std::move(p), "set_lco target is not hosted here");
}

void Locality::run_action(const ActionInfo& info, Parcel p) {
  runtime_.spawn([this, &info, p = std::move(p)]() mutable {
    ActionContext ctx{*this, p.dest, p.source};
    try {
      std::optional<Blob> result = info.fn(ctx, std::move(p.args));
      actions_run_.fetch_add(1, std::memory_order_relaxed);
      if (result && p.continuation) set_lco(*p.continuation, std::move(*result));
    } catch (const std::exception& e) {
      record_failure(id_, std::move(p), std::string("action ") + info.name + ": " + e.what());
    }
  });
}

std::function<void(Blob)> Locality::task_entry(std::uint32_t id) const {
  const ActionInfo* info = actions_.find(id);
  if (!info || !info->fn) return {};
  auto* self = const_cast<Locality*>(this);
  return [self, info](Blob args) {
    ActionContext ctx{*self, agas::locality_gid(self->id_), self->id_};
    info->fn(ctx, std::move(args));
    self->actions_run_.fetch_add(1, std::memory_order_relaxed);
  };
}

}  // namespace mpx::parcel
