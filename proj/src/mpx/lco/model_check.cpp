// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/lco/model_check.hpp"

#include <algorithm>
#include <memory>
#include <sstream>

#include "mpx/lco/lco.hpp"

namespace mpx::lco::mc {

namespace {

struct World;

class SimWake final : public rt::WakeTarget {
 public:
  SimWake(World* w, int task) : world_(w), task_(task) {}

 protected:
  void on_fire() override;

 private:
  World* world_;
  int task_;
};

struct SimTask {
  std::size_t pc = 0;
  bool blocked = false;
  WaiterPtr pending;
  OpKind pending_kind{};
};

struct World {
  const Scenario& s;
  std::vector<SimTask> tasks;
  SemaphoreCell sem;
  MutexCell mutex;
  FullEmptyCell fe;
  FutureCell future;
  std::uint32_t df_launches = 0;
  DataflowCell df;

  int holder = -1;
  std::vector<std::uint64_t> fe_written, fe_consumed;
  std::vector<std::uint64_t> future_seen;
  std::uint64_t future_value = 0;
  bool future_was_set = false;
  std::string failure;

  explicit World(const Scenario& sc)
      : s(sc), tasks(sc.tasks.size()), sem(sc.sem_initial),
        df(sc.df_arity, [this](std::vector<Blob>) { ++df_launches; }) {}

  static Gid task_gid(int i) { return Gid{0, static_cast<std::uint64_t>(i) + 1, GidKind::task}; }

  void fail(const std::string& what) {
    if (failure.empty()) failure = what;
  }

  void complete(int i, OpKind kind, const WaiterPtr& w) {
    switch (kind) {
      case OpKind::mutex_lock:
        if (holder != -1)
          fail("task " + std::to_string(i) + " acquired the mutex held by task " + std::to_string(holder));
        holder = i;
        break;
      case OpKind::fe_read_consume:
        fe_consumed.push_back(as_u64(w->value));
        break;
      case OpKind::fe_read_keep:
        if (std::find(fe_written.begin(), fe_written.end(), as_u64(w->value)) == fe_written.end())
          fail("non-consuming read observed a value never written");
        break;
      case OpKind::future_get:
        future_seen.push_back(as_u64(w->value));
        break;
      default:
        break;
    }
  }

  void wake(int i) {
    auto& t = tasks[static_cast<std::size_t>(i)];
    if (!t.blocked) {
      fail("wake of a task that was not blocked");
      return;
    }
    t.blocked = false;
    WaiterPtr w = std::move(t.pending);
    complete(i, t.pending_kind, w);
  }

  void step(int i) {
    auto& t = tasks[static_cast<std::size_t>(i)];
    const Op op = s.tasks[static_cast<std::size_t>(i)][t.pc++];
    auto w = std::make_shared<Waiter>();
    w->token = rt::WakeToken(std::make_shared<SimWake>(this, i));
    bool done = true;
    try {
      switch (op.kind) {
        case OpKind::sem_wait:
          done = sem.begin_wait(w);
          break;
        case OpKind::sem_signal:
          sem.signal();
          break;
        case OpKind::mutex_lock:
          w->owner = task_gid(i);
          done = mutex.begin_lock(w);
          break;
        case OpKind::mutex_unlock:
          if (holder != i) fail("unlock by task " + std::to_string(i) + " which is not the holder");
          holder = -1;
          mutex.unlock(task_gid(i));
          break;
        case OpKind::fe_write:
          fe_written.push_back(op.arg);
          w->value = u64_value(op.arg);
          done = fe.begin_write(w);
          break;
        case OpKind::fe_read_consume:
          done = fe.begin_read(w, FullEmptyCell::ReadMode::consume);
          break;
        case OpKind::fe_read_keep:
          done = fe.begin_read(w, FullEmptyCell::ReadMode::keep);
          break;
        case OpKind::future_get:
          done = future.begin_get(w);
          break;
        case OpKind::future_set:
          future_value = op.arg;
          future_was_set = true;
          future.set(u64_value(op.arg));
          break;
        case OpKind::df_write:
          df.write(op.arg, u64_value(op.arg));
          break;
      }
    } catch (const std::exception& e) {
      fail(std::string("operation threw: ") + e.what());
      return;
    }
    if (done) {
      complete(i, op.kind, w);
    } else {
      t.blocked = true;
      t.pending = std::move(w);
      t.pending_kind = op.kind;
    }
  }

  void check_final() {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].blocked) return;  // reported as deadlock by the caller
    std::uint64_t waits = 0, signals = 0, df_writes = 0;
    for (const auto& prog : s.tasks)
      for (const auto& op : prog) {
        waits += op.kind == OpKind::sem_wait;
        signals += op.kind == OpKind::sem_signal;
        df_writes += op.kind == OpKind::df_write;
      }
    if (sem.count() != s.sem_initial + signals - waits) fail("semaphore count drifted");
    if (holder != -1 || mutex.owner()) fail("mutex still held at the end");
    auto expect = fe_written;
    auto got = fe_consumed;
    if (fe.full()) got.push_back(as_u64(fe.read(FullEmptyCell::ReadMode::keep)));
    std::sort(expect.begin(), expect.end());
    std::sort(got.begin(), got.end());
    if (expect != got) fail("full/empty values were lost or duplicated");
    for (auto v : future_seen)
      if (!future_was_set || v != future_value) fail("future getter saw a different value");
    if (df_writes == s.df_arity && (df_launches != 1 || df.fire_count() != 1))
      fail("dataflow cell fired " + std::to_string(df_launches) + " times");
    if (df_writes < s.df_arity && df_launches != 0) fail("dataflow cell fired early");
  }
};

void SimWake::on_fire() { world_->wake(task_); }

struct Choice {
  std::size_t taken;
  std::size_t options;
};

std::string describe(const std::vector<Choice>& trace, const std::vector<std::vector<int>>& picks) {
  std::ostringstream os;
  os << "schedule:";
  for (std::size_t d = 0; d < trace.size(); ++d) os << " T" << picks[d][trace[d].taken];
  return os.str();
}

}  // namespace

Report explore(const Scenario& s) {
  Report rep;
  std::vector<std::size_t> prefix;
  for (;;) {
    World w(s);
    std::vector<Choice> trace;
    std::vector<std::vector<int>> picks;
    for (;;) {
      std::vector<int> runnable;
      for (std::size_t i = 0; i < w.tasks.size(); ++i)
        if (!w.tasks[i].blocked && w.tasks[i].pc < s.tasks[i].size()) runnable.push_back(static_cast<int>(i));
      if (runnable.empty()) break;
      const std::size_t d = trace.size();
      const std::size_t pick = d < prefix.size() ? prefix[d] : 0;
      trace.push_back({pick, runnable.size()});
      picks.push_back(runnable);
      w.step(runnable[pick]);
    }
    ++rep.schedules;
    bool deadlock = std::any_of(w.tasks.begin(), w.tasks.end(), [](const SimTask& t) { return t.blocked; });
    if (deadlock) {
      ++rep.deadlocks;
      if (rep.first_failure.empty()) rep.first_failure = s.name + ": deadlock; " + describe(trace, picks);
    } else {
      w.check_final();
    }
    if (!w.failure.empty()) {
      ++rep.violations;
      if (rep.first_failure.empty()) rep.first_failure = s.name + ": " + w.failure + "; " + describe(trace, picks);
    }
    // next schedule: bump the deepest choice that still has alternatives
    while (!trace.empty() && trace.back().taken + 1 >= trace.back().options) trace.pop_back();
    if (trace.empty()) break;
    prefix.clear();
    for (const auto& c : trace) prefix.push_back(c.taken);
    ++prefix.back();
  }
  return rep;
}

std::vector<Scenario> standard_scenarios() {
  using K = OpKind;
  std::vector<Scenario> out;
  out.push_back({"semaphore",
                 {{{K::sem_wait}, {K::sem_wait}, {K::sem_signal}},
                  {{K::sem_signal}, {K::sem_wait}},
                  {{K::sem_signal}, {K::sem_signal}}},
                 0, 1});
  out.push_back({"semaphore-initial",
                 {{{K::sem_wait}, {K::sem_wait}, {K::sem_wait}, {K::sem_signal}},
                  {{K::sem_signal}, {K::sem_wait}, {K::sem_signal}},
                  {{K::sem_signal}, {K::sem_wait}}},
                 2, 1});
  out.push_back({"mutex",
                 {{{K::mutex_lock}, {K::mutex_unlock}, {K::mutex_lock}, {K::mutex_unlock}},
                  {{K::mutex_lock}, {K::mutex_unlock}, {K::mutex_lock}, {K::mutex_unlock}},
                  {{K::mutex_lock}, {K::mutex_unlock}, {K::mutex_lock}, {K::mutex_unlock}}},
                 0, 1});
  out.push_back({"full-empty",
                 {{{K::fe_write, 1}, {K::fe_write, 2}},
                  {{K::fe_read_consume}, {K::fe_read_keep}, {K::fe_read_consume}},
                  {{K::fe_write, 3}, {K::fe_read_consume}}},
                 0, 1});
  out.push_back({"full-empty-writers",
                 {{{K::fe_write, 1}, {K::fe_write, 2}, {K::fe_write, 3}, {K::fe_write, 4}},
                  {{K::fe_read_consume}, {K::fe_read_consume}, {K::fe_read_keep}, {K::fe_read_consume}},
                  {{K::fe_read_keep}}},
                 0, 1});
  out.push_back({"future",
                 {{{K::future_get}, {K::future_get}},
                  {{K::future_get}},
                  {{K::future_set, 7}, {K::future_get}}},
                 0, 1});
  out.push_back({"dataflow",
                 {{{K::df_write, 2}}, {{K::df_write, 0}}, {{K::df_write, 1}}},
                 0, 3});
  out.push_back({"mixed",
                 {{{K::future_get}, {K::sem_signal}, {K::df_write, 0}},
                  {{K::sem_wait}, {K::fe_write, 4}, {K::df_write, 1}},
                  {{K::future_set, 9}, {K::fe_read_consume}, {K::mutex_lock}, {K::mutex_unlock}}},
                 0, 2});
  return out;
}

}  // namespace mpx::lco::mc
