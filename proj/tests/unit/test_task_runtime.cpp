// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "mpx/runtime/task_runtime.hpp"

using namespace mpx;
using namespace mpx::rt;
using namespace std::chrono_literals;

namespace {

SchedulerConfig cfg(unsigned workers, Policy policy = Policy::local_priority_stealing) {
  SchedulerConfig c;
  c.workers = workers;
  c.policy = policy;
  return c;
}

class Actions : public ActionLookup {
 public:
  std::atomic<int> hits{0};
  std::function<void(Blob)> task_entry(std::uint32_t id) const override {
    if (id != 16) return {};
    auto* self = const_cast<Actions*>(this);
    return [self](Blob b) { self->hits += static_cast<int>(b.size()); };
  }
};

}  // namespace

TEST_CASE("config validation") {
  SchedulerConfig c;
  c.workers = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.workers = 1;
  c.stack_bytes = SchedulerConfig::min_stack_bytes - 1;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_policy("global-queue") == Policy::global_queue);
  CHECK(parse_policy("local-priority-stealing") == Policy::local_priority_stealing);
  CHECK_THROWS_AS(parse_policy("fifo"), Error);
}

TEST_CASE("single task and a thousand tasks complete") {
  for (auto policy : {Policy::global_queue, Policy::local_priority_stealing}) {
    Runtime rt(cfg(2, policy));
    std::atomic<int> counter{0};
    rt.spawn([&] { ++counter; });
    rt.quiesce(10s);
    CHECK(counter == 1);
    for (int i = 0; i < 1000; ++i) rt.spawn([&] { ++counter; });
    auto s = rt.quiesce(10s);
    CHECK(counter == 1001);
    CHECK(s.tasks_spawned == 1001);
    CHECK(s.tasks_completed == 1001);
  }
}

TEST_CASE("idle quiesce returns immediately") {
  Runtime rt(cfg(1));
  auto s = rt.quiesce(1s);
  CHECK(s.tasks_spawned == 0);
  CHECK(s.tasks_completed == 0);
}

TEST_CASE("spawn after shutdown is rejected") {
  Runtime rt(cfg(1));
  rt.shutdown();
  try {
    rt.spawn([] {});
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::runtime_shut_down);
  }
}

TEST_CASE("spawn by action id") {
  Actions acts;
  Runtime rt(cfg(1));
  rt.set_actions(&acts);
  rt.spawn_action(16, Blob(3));
  rt.quiesce(5s);
  CHECK(acts.hits == 3);
  try {
    rt.spawn_action(99, {});
    FAIL("expected unknown action");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_action);
  }
  CHECK(rt.stats().tasks_spawned == 1);
}

TEST_CASE("suspend and wake handoff") {
  Runtime rt(cfg(1));
  WakeToken a_token;
  std::atomic<bool> done{false};
  rt.spawn([&] {
    a_token = make_wake_token();
    rt.spawn([&] {
      CHECK(a_token.trigger());
      CHECK_FALSE(a_token.trigger());
    });
    wait(a_token);
    done = true;
  });
  auto s = rt.quiesce(5s);
  CHECK(done);
  CHECK(s.suspensions == 1);
  CHECK_FALSE(a_token.trigger());
}

TEST_CASE("permanently suspended task does not block its worker") {
  Runtime rt(cfg(2));
  std::atomic<int> done{0};
  Gid stuck = rt.spawn([] {
    auto t = make_wake_token();
    wait(t);
  });
  for (int i = 0; i < 25; ++i) rt.spawn([&] { ++done; });
  try {
    rt.quiesce(300ms);
    FAIL("expected timeout");
  } catch (const QuiesceTimeout& e) {
    CHECK(e.code() == ErrorCode::timeout);
    REQUIRE(e.suspended().size() == 1);
    CHECK(e.suspended()[0] == stuck);
    CHECK(std::string(e.what()).find(stuck.str()) != std::string::npos);
  }
  CHECK(done == 25);
}

TEST_CASE("chain of 100 tasks each waking the next") {
  Runtime rt(cfg(4));
  constexpr int n = 100;
  std::vector<WakeToken> tokens(n);
  std::atomic<int> registered{0};
  std::mutex log_mu;
  std::vector<int> log;
  for (int i = 0; i < n; ++i) {
    rt.spawn([&, i] {
      if (i > 0) {
        tokens[i] = make_wake_token();
        ++registered;
        wait(tokens[i]);
      } else {
        while (registered < n - 1) std::this_thread::yield();
      }
      {
        std::lock_guard lk(log_mu);
        log.push_back(i);
      }
      if (i + 1 < n) tokens[i + 1].trigger();
    });
  }
  rt.quiesce(10s);
  std::vector<int> expect(n);
  for (int i = 0; i < n; ++i) expect[i] = i;
  CHECK(log == expect);
}

TEST_CASE("stealing") {
  SUBCASE("seeded on one worker") {
    Runtime rt(cfg(2), false);
    std::atomic<int> done{0};
    for (int i = 0; i < 100; ++i)
      rt.spawn([&] {
        auto until = std::chrono::steady_clock::now() + 100us;
        while (std::chrono::steady_clock::now() < until) {}
        ++done;
      }, Priority::normal, 0u);
    rt.start();
    auto s = rt.quiesce(10s);
    CHECK(done == 100);
    CHECK(s.steals > 0);
  }
  SUBCASE("one worker never steals") {
    Runtime rt(cfg(1));
    for (int i = 0; i < 100; ++i) rt.spawn([] {});
    CHECK(rt.quiesce(5s).steals == 0);
  }
  SUBCASE("balance across eight workers") {
    Runtime rt(cfg(8));
    for (int i = 0; i < 100000; ++i)
      rt.spawn([] {
        auto until = std::chrono::steady_clock::now() + 10us;
        while (std::chrono::steady_clock::now() < until) {}
      });
    auto s = rt.quiesce(60s);
    auto [mn, mx] = std::minmax_element(s.completed_by.begin(), s.completed_by.end());
    REQUIRE(*mn > 0);
    CHECK(static_cast<double>(*mx) / static_cast<double>(*mn) <= 3.0);
  }
}

TEST_CASE("each task runs exactly once") {
  for (auto policy : {Policy::global_queue, Policy::local_priority_stealing}) {
    for (unsigned workers : {1u, 2u, 5u, 16u}) {
      Runtime rt(cfg(workers, policy));
      constexpr int n = 2000;
      std::vector<std::atomic<int>> runs(n);
      for (int i = 0; i < n; ++i) rt.spawn([&, i] { runs[i]++; });
      rt.quiesce(30s);
      bool ok = std::all_of(runs.begin(), runs.end(), [](auto& r) { return r.load() == 1; });
      CHECK(ok);
    }
  }
}

TEST_CASE("global queue FIFO with one worker") {
  Runtime rt(cfg(1, Policy::global_queue), false);
  std::vector<int> order;
  for (int i = 0; i < 50; ++i) rt.spawn([&, i] { order.push_back(i); });
  rt.start();
  rt.quiesce(5s);
  std::vector<int> expect(50);
  for (int i = 0; i < 50; ++i) expect[i] = i;
  CHECK(order == expect);
}

TEST_CASE("high priority runs first") {
  for (auto policy : {Policy::global_queue, Policy::local_priority_stealing}) {
    Runtime rt(cfg(1, policy), false);
    std::vector<int> order;
    for (int i = 0; i < 40; ++i) {
      auto prio = i % 3 == 0 ? Priority::high : Priority::normal;
      rt.spawn([&, prio] { order.push_back(static_cast<int>(prio)); }, prio);
    }
    rt.start();
    rt.quiesce(5s);
    REQUIRE(order.size() == 40);
    auto first_normal = std::find(order.begin(), order.end(), 0);
    CHECK(std::find(first_normal, order.end(), 1) == order.end());
  }
}

TEST_CASE("stats are consistent while running") {
  Runtime rt(cfg(2));
  std::atomic<bool> stop{false};
  std::thread observer([&] {
    while (!stop) {
      auto s = rt.stats();
      CHECK(s.tasks_completed <= s.tasks_spawned);
    }
  });
  for (int i = 0; i < 20000; ++i) rt.spawn([] {});
  rt.quiesce(30s);
  stop = true;
  observer.join();
  auto text = rt.stats().to_text();
  CHECK(text.find("tasks_spawned=20000") != std::string::npos);
  CHECK(text.find("worker1.busy_s=") != std::string::npos);
}

TEST_CASE("fuzz: randomized suspend/wake never loses a wakeup") {
  std::mt19937 rng(1234);
  for (int round = 0; round < 20; ++round) {
    unsigned workers = 1 + rng() % 6;
    auto policy = rng() % 2 ? Policy::global_queue : Policy::local_priority_stealing;
    Runtime rt(cfg(workers, policy));
    const int n = 50 + static_cast<int>(rng() % 100);
    std::vector<WakeToken> tokens(n);
    std::atomic<int> finished{0};
    std::vector<unsigned> waker_delay(n);
    for (auto& d : waker_delay) d = rng() % 3;
    for (int i = 0; i < n; ++i) {
      rt.spawn([&, i] {
        int rounds = 1 + i % 3;
        for (int r = 0; r < rounds; ++r) {
          auto tok = make_wake_token();
          std::atomic<bool> posted{false};
          rt.spawn([tok, &posted, d = waker_delay[i]] {
            for (unsigned k = 0; k < d * 50; ++k) std::atomic_signal_fence(std::memory_order_seq_cst);
            tok.trigger();
            posted = true;
          });
          wait(tok);
          while (!posted) {
            // the waker may still be finishing; it owns no further state
            std::this_thread::yield();
          }
        }
        ++finished;
      });
    }
    rt.quiesce(30s);
    CHECK(finished == n);
  }
}

TEST_CASE("waiting outside a task blocks the calling thread") {
  Runtime rt(cfg(1));
  auto tok = make_wake_token();
  rt.spawn([tok] { tok.trigger(); });
  wait(tok);
  CHECK(tok.triggered());
  CHECK_FALSE(this_task::inside());
}
