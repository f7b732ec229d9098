// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstring>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "mpx/lco/lco.hpp"
#include "mpx/parcel/frame.hpp"
#include "mpx/parcel/locality.hpp"

using namespace mpx;
using namespace mpx::parcel;
using namespace std::chrono_literals;

namespace {

Parcel random_parcel(std::mt19937_64& rng) {
  Parcel p;
  p.dest = Gid{static_cast<LocalityId>(rng()), rng(), static_cast<GidKind>(rng() % 9)};
  p.action = static_cast<std::uint32_t>(rng());
  if (rng() % 2) p.continuation = Gid{static_cast<LocalityId>(rng()), rng(), static_cast<GidKind>(rng() % 9)};
  p.source = static_cast<LocalityId>(rng());
  p.generation = rng();
  p.args.resize(rng() % 64);
  for (auto& b : p.args) b = std::byte(rng() & 0xff);
  return p;
}

struct Cluster {
  explicit Cluster(std::size_t n, const std::function<void(ActionRegistry&)>& add = {}, unsigned workers = 2) {
    for (std::size_t i = 0; i < n; ++i) {
      rt::SchedulerConfig c;
      c.workers = workers;
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

  std::vector<std::unique_ptr<rt::Runtime>> runtimes;
  std::vector<std::unique_ptr<Locality>> locs;
  LoopbackFabric fabric;
};

}  // namespace

TEST_CASE("zero-arg frame is exactly 49 bytes with the documented layout") {
  Parcel p;
  p.dest = Gid{0, 1, GidKind::invalid};
  p.action = 16;
  Blob f = encode_frame(p, 0);
  REQUIRE(f.size() == 49);
  const unsigned char expect[49] = {
      0x50, 0x58, 0x50, 0x31,                          // magic
      0, 0, 0, 49,                                     // total length
      0, 0, 0, 0,                                      // link sequence
      0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0,  // dest gid
      0, 0, 0, 16,                                     // action
      0,                                               // no continuation
      0, 0, 0, 0,                                      // source
      0, 0, 0, 0, 0, 0, 0, 0,                          // generation
      0, 0, 0, 0};                                     // args length
  CHECK(std::memcmp(f.data(), expect, 49) == 0);
  p.continuation = Gid{1, 2, GidKind::future};
  CHECK(encode_frame(p).size() == 65);
}

TEST_CASE("randomized round trips are bit identical") {
  std::mt19937_64 rng(99);
  int bad = 0;
  for (int i = 0; i < 100000; ++i) {
    Parcel p = random_parcel(rng);
    auto seq = static_cast<std::uint32_t>(rng());
    Blob a = encode_frame(p, seq);
    Frame f = decode_frame(a);
    if (!(f.parcel == p) || f.link_seq != seq || encode_frame(f.parcel, seq) != a) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("decode errors are structured") {
  Parcel p;
  p.args = Blob(10);
  Blob f = encode_frame(p);
  auto code_of = [](ByteView v) {
    try {
      decode_frame(v);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string("ok");
  };
  CHECK(code_of(ByteView(f.data(), 20)).find("truncated") != std::string::npos);
  Blob bad = f;
  bad[0] = std::byte{0};
  CHECK(code_of(bad).find("magic") != std::string::npos);
  Blob huge = f;
  huge[4] = std::byte{0x10};  // 256 MiB
  CHECK(code_of(huge).find("exceeds") != std::string::npos);
  Blob lie = f;
  lie[f.size() - 11] = std::byte{0x7f};  // args length
  CHECK(code_of(lie) != "ok");
}

TEST_CASE("stream reader survives an oversize frame and garbage") {
  Parcel good;
  good.action = 17;
  good.args = to_blob("hello");
  Blob stream;
  auto append = [&](const Blob& b) { stream.insert(stream.end(), b.begin(), b.end()); };
  append(encode_frame(good, 1));
  ByteWriter over;
  over.u32(frame_magic);
  over.u32(65u << 20);
  append(std::move(over).take());
  append(to_blob("garbage bytes"));
  append(encode_frame(good, 2));

  FrameReader r;
  std::vector<Frame> got;
  for (auto b : stream) {  // one byte at a time
    r.feed(ByteView(&b, 1));
    while (auto f = r.next()) got.push_back(*f);
  }
  REQUIRE(got.size() == 2);
  CHECK(got[0].link_seq == 1);
  CHECK(got[1].link_seq == 2);
  CHECK(got[1].parcel == good);
  CHECK(r.decode_errors() >= 1);
}

TEST_CASE("action registry") {
  ActionRegistry a;
  auto noop = [](ActionContext&, Blob) -> std::optional<Blob> { return std::nullopt; };
  CHECK_THROWS_AS(a.add(3, "x", noop), Error);
  a.add(16, "user.a", noop);
  CHECK_THROWS_AS(a.add(16, "user.b", noop), Error);
  ActionRegistry b;
  b.add(16, "user.a", noop);
  CHECK(a.checksum() == b.checksum());
  b.add(17, "user.extra", noop);
  CHECK(a.checksum() != b.checksum());
  auto diff = ActionRegistry::mismatched(a.signature(), b.signature());
  REQUIRE(diff.size() == 1);
  CHECK(diff[0] == 17);
}

TEST_CASE("single locality needs no sockets") {
  Cluster c(1);
  CHECK(c[0].counters().sockets == 0);
}

TEST_CASE("apply to a local gid puts nothing on the wire") {
  std::atomic<int> ran{0};
  Cluster c(2, [&](ActionRegistry& r) {
    r.add(16, "t.inc", [&](ActionContext&, Blob) -> std::optional<Blob> {
      ++ran;
      return std::nullopt;
    });
  });
  auto f = std::make_shared<lco::FutureCell>();
  Gid g = c[0].register_lco(f);
  auto before = c[0].counters();
  c[0].apply(g, 16, {});
  c.runtimes[0]->quiesce(5s);
  auto after = c[0].counters();
  CHECK(ran == 1);
  CHECK(after.bytes_sent == before.bytes_sent);
  CHECK(after.local_applies == before.local_applies + 1);
  CHECK_THROWS_AS(c[0].apply(g, 99, {}), Error);
}

TEST_CASE("remote apply returns its result through a continuation") {
  Cluster c(2, [](ActionRegistry& r) {
    r.add(16, "t.answer", [](ActionContext& ctx, Blob) -> std::optional<Blob> {
      CHECK(ctx.locality.id() == 1);
      return u64_blob(99);
    });
  });
  auto obj = std::make_shared<int>(0);
  Gid remote = c[1].agas().register_object(GidKind::other, agas::LocalRef{obj, nullptr});
  auto [cont, fut] = c[0].reply_future();
  auto before = c[0].counters();
  c[0].apply(remote, 16, {}, cont);
  CHECK(blob_u64(fut->get()) == 99);
  CHECK(c[0].counters().bytes_sent > before.bytes_sent);
  CHECK(c[0].counters().remote_applies == before.remote_applies + 1);
}

TEST_CASE("10^4 parcels between two localities run exactly once") {
  constexpr int n = 10000;
  std::mutex mu;
  std::vector<std::uint64_t> seen;
  std::vector<int> hits(n);
  Cluster c(2, [&](ActionRegistry& r) {
    r.add(16, "t.log", [&](ActionContext&, Blob b) -> std::optional<Blob> {
      auto k = blob_u64(b);
      std::lock_guard lk(mu);
      seen.push_back(k);
      ++hits[k];
      return std::nullopt;
    });
  }, 1);
  Gid target = agas::locality_gid(1);
  for (int k = 0; k < n; ++k) c[0].apply(target, 16, u64_blob(k));
  while (c[1].counters().actions_run < n) std::this_thread::sleep_for(1ms);
  c.runtimes[1]->quiesce(10s);
  int dup = 0, missing = 0;
  for (int h : hits) dup += h > 1, missing += h == 0;
  CHECK(dup == 0);
  CHECK(missing == 0);
  CHECK(seen.size() == static_cast<std::size_t>(n));
  auto rc = c[1].counters();
  CHECK(rc.duplicates == 0);
  CHECK(rc.gaps == 0);
  CHECK(rc.parcels_received == static_cast<std::uint64_t>(n));
}

TEST_CASE("parcel arrival alone instantiates a task") {
  std::atomic<bool> ran{false};
  Cluster c(2, [&](ActionRegistry& r) {
    r.add(16, "t.flag", [&](ActionContext&, Blob) -> std::optional<Blob> {
      ran = true;
      return std::nullopt;
    });
  });
  CHECK(c.runtimes[1]->stats().tasks_spawned == 0);
  c[0].apply(agas::locality_gid(1), 16, {});
  auto until = std::chrono::steady_clock::now() + 5s;
  while (!ran && std::chrono::steady_clock::now() < until) std::this_thread::sleep_for(1ms);
  CHECK(ran);
}

TEST_CASE("remote set_lco fills a future") {
  Cluster c(2);
  auto f = std::make_shared<lco::FutureCell>();
  Gid g = c[1].register_lco(f);
  c[0].set_lco(g, u64_blob(5));
  CHECK(blob_u64(f->get()) == 5);
}

TEST_CASE("unreachable locality is reported with the parcel retained") {
  rt::SchedulerConfig sc;
  rt::Runtime rt(sc);
  ActionRegistry reg;
  reg.add(16, "t.x", [](ActionContext&, Blob) -> std::optional<Blob> { return std::nullopt; });
  Locality loc(0, 2, rt, std::move(reg));
  rt.set_actions(&loc);
  try {
    loc.apply(agas::locality_gid(1), 16, to_blob("keep"));
    FAIL("expected transport error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::transport);
  }
  auto fs = loc.failures();
  REQUIRE(fs.size() == 1);
  CHECK(fs[0].to == 1);
  CHECK(to_string(fs[0].parcel.args) == "keep");
}

TEST_CASE("tcp mesh of two localities") {
  auto make_reg = [](bool extra) {
    ActionRegistry r;
    r.add(16, "t.echo", [](ActionContext&, Blob b) -> std::optional<Blob> { return b; });
    if (extra) r.add(23, "t.extra", [](ActionContext&, Blob) -> std::optional<Blob> { return std::nullopt; });
    return r;
  };
  const std::uint16_t base = static_cast<std::uint16_t>(20000 + (::getpid() % 20000));
  std::map<LocalityId, Endpoint> eps{{0, {"127.0.0.1", base}}, {1, {"127.0.0.1", static_cast<std::uint16_t>(base + 1)}}};

  SUBCASE("handshake and round trip") {
    rt::SchedulerConfig c0, c1;
    c1.locality = 1;
    rt::Runtime r0(c0), r1(c1);
    Locality l0(0, 2, r0, make_reg(false)), l1(1, 2, r1, make_reg(false));
    std::thread t([&] { connect_tcp(l1, eps); });
    connect_tcp(l0, eps);
    t.join();
    CHECK(l0.counters().sockets == 1);
    CHECK(l1.counters().sockets == 1);
    auto [cont, fut] = l0.reply_future();
    l0.apply(agas::locality_gid(1), 16, to_blob("ping"), cont);
    CHECK(to_string(fut->get()) == "ping");
    r0.quiesce(5s);
    r1.quiesce(5s);
    l0.close_links();
    l1.close_links();
  }
  SUBCASE("registry mismatch aborts naming the id") {
    rt::SchedulerConfig c0, c1;
    c1.locality = 1;
    rt::Runtime r0(c0), r1(c1);
    Locality l0(0, 2, r0, make_reg(false)), l1(1, 2, r1, make_reg(true));
    std::string other;
    std::thread t([&] {
      try {
        connect_tcp(l1, eps);
      } catch (const Error& e) {
        other = e.what();
      }
    });
    std::string mine;
    try {
      connect_tcp(l0, eps);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::registry_mismatch);
      mine = e.what();
    }
    t.join();
    CHECK(mine.find("23") != std::string::npos);
    CHECK(other.find("23") != std::string::npos);
  }
}
