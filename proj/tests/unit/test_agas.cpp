// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <thread>
#include <unordered_set>

#include "doctest.h"
#include "mpx/lco/lco.hpp"
#include "mpx/parcel/locality.hpp"

using namespace mpx;
using namespace mpx::parcel;
using namespace std::chrono_literals;

namespace {

struct Cluster {
  explicit Cluster(std::size_t n, const std::function<void(ActionRegistry&)>& add = {}) {
    for (std::size_t i = 0; i < n; ++i) {
      rt::SchedulerConfig c;
      c.workers = 2;
      c.locality = static_cast<LocalityId>(i);
      runtimes.push_back(std::make_unique<rt::Runtime>(c));
      ActionRegistry reg;
      if (add) add(reg);
      locs.push_back(std::make_unique<Locality>(static_cast<LocalityId>(i), n, *runtimes.back(), std::move(reg)));
      runtimes.back()->set_actions(locs.back().get());
    }
    std::vector<Locality*> raw;
    for (auto& l : locs) raw.push_back(l.get());
    fabric.connect(raw);
  }
  ~Cluster() {
    for (auto& r : runtimes) r->quiesce(10s);
    fabric.close();
    for (auto& r : runtimes) r->shutdown();
  }
  Locality& operator[](std::size_t i) { return *locs[i]; }
  agas::Agas& agas(std::size_t i) { return locs[i]->agas(); }

  std::vector<std::unique_ptr<rt::Runtime>> runtimes;
  std::vector<std::unique_ptr<Locality>> locs;
  LoopbackFabric fabric;
};

agas::LocalRef obj(int v) { return agas::LocalRef{std::make_shared<int>(v), nullptr}; }

int value_of(const agas::LocalRef& r) { return *static_cast<int*>(r.object.get()); }

}  // namespace

TEST_CASE("register then resolve on the same locality and from locality 0") {
  Cluster c(3);
  Gid g = c.agas(2).register_object(GidKind::other, obj(7));
  CHECK(g.locality == 2);
  auto here = c.agas(2).resolve(g);
  CHECK(here.is_local);
  CHECK(value_of(here.ref) == 7);
  auto from0 = c.agas(0).resolve(g);
  CHECK(from0.locality == 2);
  CHECK(from0.generation == 0);
  CHECK_FALSE(from0.is_local);
  auto from1 = c.agas(1).resolve(g);
  CHECK(from1.locality == 2);
}

TEST_CASE("gids are distinct across localities") {
  Cluster c(2);
  Gid a = c.agas(0).register_object(GidKind::other, obj(1));
  Gid b = c.agas(1).register_object(GidKind::other, obj(2));
  CHECK(a != b);
  CHECK(c.agas(0).directory_size() == 2);
}

TEST_CASE("unknown gids are structured errors") {
  Cluster c(2);
  Gid ghost{1, 12345, GidKind::other};
  for (int i = 0; i < 2; ++i) {
    try {
      c.agas(i).resolve(ghost);
      FAIL("expected not_found");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::not_found);
    }
  }
  CHECK_THROWS_AS(c.agas(1).rebind(ghost, obj(0)), Error);
  CHECK_FALSE(c.agas(1).local(ghost));
}

TEST_CASE("rebind increments the generation and moves the object") {
  Cluster c(3);
  Gid g = c.agas(1).register_object(GidKind::other, obj(1));
  auto gen1 = c.agas(2).rebind(g, obj(2));
  CHECK(gen1 == 1);
  auto r = c.agas(0).resolve(g);
  CHECK(r.locality == 2);
  CHECK(r.generation == 1);
  // old holder now forwards
  auto until = std::chrono::steady_clock::now() + 5s;
  while (!c.agas(1).forward_entry(g) && std::chrono::steady_clock::now() < until) std::this_thread::sleep_for(1ms);
  REQUIRE(c.agas(1).forward_entry(g));
  CHECK(c.agas(1).forward_entry(g)->locality == 2);
  CHECK_FALSE(c.agas(1).local(g));
  // same-locality rebind still bumps
  auto gen2 = c.agas(2).rebind(g, obj(3));
  CHECK(gen2 == 2);
  CHECK(value_of(*c.agas(2).local(g)) == 3);
}

TEST_CASE("generations are monotone across repeated migration") {
  Cluster c(3);
  Gid g = c.agas(0).register_object(GidKind::other, obj(0));
  std::uint64_t last = 0;
  for (int i = 1; i <= 12; ++i) {
    auto gen = c.agas(i % 3).rebind(g, obj(i));
    CHECK(gen > last);
    last = gen;
  }
  auto r = c.agas(1).resolve(g);
  CHECK(r.generation <= last);
  CHECK(c.agas(0).resolve(g).generation == last);
}

TEST_CASE("stale parcel is forwarded once and the sender learns the new binding") {
  std::atomic<int> at1{0}, at2{0};
  Cluster c(3, [&](ActionRegistry& r) {
    r.add(16, "t.hit", [&](ActionContext& ctx, Blob) -> std::optional<Blob> {
      (ctx.locality.id() == 1 ? at1 : at2)++;
      return u64_blob(ctx.locality.id());
    });
  });
  Gid g = c.agas(1).register_object(GidKind::other, obj(0));
  // locality 0 learns the original binding
  CHECK(c.agas(0).resolve(g).locality == 1);
  c.agas(2).rebind(g, obj(1));
  auto until = std::chrono::steady_clock::now() + 5s;
  while (!c.agas(1).forward_entry(g) && std::chrono::steady_clock::now() < until) std::this_thread::sleep_for(1ms);

  auto [cont, fut] = c[0].reply_future();
  c[0].apply(g, 16, {}, cont);
  CHECK(blob_u64(fut->get()) == 2);
  CHECK(at1 == 0);
  CHECK(at2 == 1);
  CHECK(c[1].counters().forwarded == 1);

  until = std::chrono::steady_clock::now() + 5s;
  while (c.agas(0).route(g).locality != 2 && std::chrono::steady_clock::now() < until)
    std::this_thread::sleep_for(1ms);
  CHECK(c.agas(0).route(g).locality == 2);
  auto [cont2, fut2] = c[0].reply_future();
  c[0].apply(g, 16, {}, cont2);
  CHECK(blob_u64(fut2->get()) == 2);
  CHECK(c[1].counters().forwarded == 1);
}

TEST_CASE("local fast path generates no directory traffic") {
  Cluster c(2);
  Gid g = c.agas(1).register_object(GidKind::other, obj(5), false);
  auto q0 = c.agas(1).directory_queries();
  auto b0 = c[1].counters().bytes_sent;
  for (int i = 0; i < 1000; ++i) CHECK(c.agas(1).resolve(g).is_local);
  CHECK(c.agas(1).directory_queries() == q0);
  CHECK(c[1].counters().bytes_sent == b0);
}

TEST_CASE("derived gids route to their birth locality without registration") {
  Cluster c(3);
  Gid d{2, Gid::derived_bit | 42, GidKind::dataflow};
  auto r = c.agas(0).resolve(d);
  CHECK(r.locality == 2);
  CHECK(c.agas(0).directory_queries() == 0);
  CHECK(c.agas(0).route(d).locality == 2);
  Gid nowhere{9, Gid::derived_bit | 1, GidKind::other};
  CHECK_THROWS_AS(c.agas(0).resolve(nowhere), Error);
}

TEST_CASE("a million registrations yield a million distinct gids") {
  rt::SchedulerConfig sc;
  rt::Runtime rt(sc);
  Locality loc(0, 1, rt, ActionRegistry{});
  std::unordered_set<Gid, GidHash> seen;
  seen.reserve(1000000);
  auto shared = std::make_shared<int>(0);
  for (int i = 0; i < 1000000; ++i) {
    Gid g = loc.agas().register_object(GidKind::other, agas::LocalRef{shared, nullptr}, false);
    seen.insert(g);
    loc.agas().unregister(g);
  }
  CHECK(seen.size() == 1000000);
}

TEST_CASE("concurrent registration from several localities stays collision free") {
  Cluster c(3);
  std::vector<std::vector<Gid>> out(3);
  std::vector<std::thread> ts;
  for (int i = 0; i < 3; ++i)
    ts.emplace_back([&, i] {
      for (int k = 0; k < 200; ++k) out[i].push_back(c.agas(i).register_object(GidKind::other, obj(k)));
    });
  for (auto& t : ts) t.join();
  std::unordered_set<Gid, GidHash> all;
  for (auto& v : out) all.insert(v.begin(), v.end());
  CHECK(all.size() == 600);
  CHECK(c.agas(0).directory_size() == 600);
}
