// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/runtime/task_runtime.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <boost/context/fiber.hpp>
#include <boost/context/stack_context.hpp>

namespace mpx::rt {

namespace ctx = boost::context;

const char* to_string(Policy p) noexcept {
  switch (p) {
    case Policy::global_queue: return "global-queue";
    case Policy::local_priority_stealing: return "local-priority-stealing";
  }
  return "?";
}

Policy parse_policy(std::string_view name) {
  if (name == "global-queue" || name == "global") return Policy::global_queue;
  if (name == "local-priority-stealing" || name == "local" || name == "local-priority")
    return Policy::local_priority_stealing;
  raise(ErrorCode::config, "unknown scheduling policy '" + std::string(name) + "'");
}

void SchedulerConfig::validate() const {
  if (workers < 1) raise(ErrorCode::config, "workers must be >= 1");
  if (stack_bytes < min_stack_bytes)
    raise(ErrorCode::config, "stack budget below minimum of " +
                                 std::to_string(min_stack_bytes) + " bytes");
}

std::string RuntimeStats::to_text() const {
  std::ostringstream os;
  os << "tasks_spawned=" << tasks_spawned << "\n"
     << "tasks_completed=" << tasks_completed << "\n"
     << "steals=" << steals << "\n"
     << "suspensions=" << suspensions << "\n"
     << "task_exceptions=" << task_exceptions << "\n";
  for (std::size_t w = 0; w < busy_seconds.size(); ++w)
    os << "worker" << w << ".busy_s=" << busy_seconds[w] << "\n"
       << "worker" << w << ".completed=" << completed_by[w] << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// stacks

namespace {

// Thread-local free list of equally sized stacks.
class StackPool {
 public:
  explicit StackPool(std::size_t size) : size_(size) {}

  ctx::stack_context allocate() {
    auto& cache = local();
    void* base = nullptr;
    if (cache.size == size_ && !cache.free.empty()) {
      base = cache.free.back();
      cache.free.pop_back();
    } else {
      base = std::malloc(size_);
      if (!base) throw std::bad_alloc();
    }
    ctx::stack_context sc;
    sc.size = size_;
    sc.sp = static_cast<char*>(base) + size_;
    return sc;
  }

  void deallocate(ctx::stack_context& sc) noexcept {
    void* base = static_cast<char*>(sc.sp) - sc.size;
    auto& cache = local();
    if (cache.size != sc.size) {
      for (void* p : cache.free) std::free(p);
      cache.free.clear();
      cache.size = sc.size;
    }
    if (cache.free.size() < 256)
      cache.free.push_back(base);
    else
      std::free(base);
  }

 private:
  struct Cache {
    std::size_t size = 0;
    std::vector<void*> free;
    ~Cache() {
      for (void* p : free) std::free(p);
    }
  };
  static Cache& local() {
    thread_local Cache c;
    return c;
  }

  std::size_t size_;
};

}  // namespace

// ---------------------------------------------------------------------------
// task

struct TaskRecord : std::enable_shared_from_this<TaskRecord> {
  Gid gid;
  Runtime::Task fn;
  Priority priority = Priority::normal;
  std::atomic<TaskState> state{TaskState::pending};
  std::atomic<bool> wake_pending{false};
  ctx::fiber context;
  ctx::fiber caller;  // the worker's context while running
  Runtime::Impl* rt = nullptr;
  int last_worker = -1;
};

using TaskPtr = std::shared_ptr<TaskRecord>;

namespace {

struct WorkerTls {
  Runtime::Impl* rt = nullptr;
  int worker = -1;
  TaskRecord* task = nullptr;
};

thread_local WorkerTls tls;

// Accessed only through these non-inlined functions: a task may resume on a
// different thread after suspending, so a cached TLS address would be stale.
[[gnu::noipa]] WorkerTls& tls_ref() noexcept { return tls; }

struct alignas(64) LocalQueue {
  std::mutex mu;
  std::deque<TaskPtr> q[2];  // indexed by priority
  std::minstd_rand rng;       // victim choice, touched only by the owner
};

}  // namespace

// ---------------------------------------------------------------------------
// runtime impl

struct Runtime::Impl {
  explicit Impl(SchedulerConfig c, Runtime* o)
      : cfg(std::move(c)), owner(o), stacks(cfg.stack_bytes),
        locals(cfg.policy == Policy::local_priority_stealing ? cfg.workers : 0),
        busy_ns(cfg.workers), completed_by(cfg.workers) {
    std::random_device rd;
    for (std::size_t w = 0; w < locals.size(); ++w)
      locals[w].rng.seed(cfg.seed ? static_cast<std::uint32_t>(cfg.seed * 2654435761u + w + 1) : rd());
  }

  SchedulerConfig cfg;
  Runtime* owner;
  StackPool stacks;

  // global queue policy
  std::mutex gmu;
  std::deque<TaskPtr> gq[2];
  // local priority policy
  std::vector<LocalQueue> locals;

  std::atomic<std::uint64_t> queued{0};
  std::atomic<std::uint64_t> next_seq{1};
  std::atomic<unsigned> rr{0};

  std::atomic<std::uint64_t> spawned{0};
  std::atomic<std::uint64_t> completed{0};
  std::atomic<std::uint64_t> steals{0};
  std::atomic<std::uint64_t> suspensions{0};
  std::atomic<std::uint64_t> exceptions{0};
  std::vector<std::atomic<std::uint64_t>> busy_ns;
  std::vector<std::atomic<std::uint64_t>> completed_by;

  std::mutex park_mu;
  std::condition_variable park_cv;
  std::atomic<int> sleepers{0};

  std::mutex idle_mu;
  std::condition_variable idle_cv;

  mutable std::mutex susp_mu;
  std::unordered_map<TaskRecord*, std::shared_ptr<TaskRecord>> suspended;

  std::atomic<bool> accepting{true};
  std::atomic<bool> stopping{false};
  bool started = false;
  std::vector<std::thread> threads;

  // ---- queues

  void push(TaskPtr t, std::optional<unsigned> hint) {
    const int prio = static_cast<int>(t->priority);
    if (cfg.policy == Policy::global_queue) {
      std::lock_guard lk(gmu);
      gq[prio].push_back(std::move(t));
    } else {
      unsigned w;
      if (hint) {
        w = *hint % cfg.workers;
      } else if (tls_ref().rt == this && tls_ref().worker >= 0) {
        w = static_cast<unsigned>(tls_ref().worker);
      } else {
        w = rr.fetch_add(1, std::memory_order_relaxed) % cfg.workers;
      }
      std::lock_guard lk(locals[w].mu);
      locals[w].q[prio].push_back(std::move(t));
    }
    queued.fetch_add(1, std::memory_order_seq_cst);
    if (sleepers.load(std::memory_order_seq_cst) > 0) {
      { std::lock_guard lk(park_mu); }
      park_cv.notify_one();
    }
  }

  TaskPtr pop_own(int w) {
    TaskPtr t;
    if (cfg.policy == Policy::global_queue) {
      std::lock_guard lk(gmu);
      for (int p = 1; p >= 0; --p) {
        if (!gq[p].empty()) {
          t = std::move(gq[p].front());
          gq[p].pop_front();
          break;
        }
      }
    } else {
      auto& lq = locals[w];
      std::lock_guard lk(lq.mu);
      for (int p = 1; p >= 0; --p) {
        if (!lq.q[p].empty()) {  // owner end: LIFO
          t = std::move(lq.q[p].back());
          lq.q[p].pop_back();
          break;
        }
      }
    }
    if (t) queued.fetch_sub(1, std::memory_order_relaxed);
    return t;
  }

  // Uniform random victim, up to workers-1 attempts; thieves take the FIFO end.
  TaskPtr steal_one(int thief) {
    if (cfg.policy != Policy::local_priority_stealing || cfg.workers < 2) return nullptr;
    auto& rng = locals[thief].rng;
    for (unsigned attempt = 0; attempt + 1 < cfg.workers; ++attempt) {
      unsigned v = rng() % (cfg.workers - 1);
      if (v >= static_cast<unsigned>(thief)) ++v;
      auto& lq = locals[v];
      std::unique_lock lk(lq.mu, std::try_to_lock);
      if (!lk.owns_lock()) continue;
      for (int p = 1; p >= 0; --p) {
        if (!lq.q[p].empty()) {
          TaskPtr t = std::move(lq.q[p].front());
          lq.q[p].pop_front();
          lk.unlock();
          queued.fetch_sub(1, std::memory_order_relaxed);
          steals.fetch_add(1, std::memory_order_relaxed);
          return t;
        }
      }
    }
    return nullptr;
  }

  // ---- lifecycle

  void start() {
    if (started) return;
    started = true;
    threads.reserve(cfg.workers);
    for (unsigned w = 0; w < cfg.workers; ++w)
      threads.emplace_back([this, w] { worker_main(static_cast<int>(w)); });
  }

  void shutdown() {
    accepting.store(false);
    if (!started) start();  // drain anything queued before start
    stopping.store(true);
    {
      std::lock_guard lk(park_mu);
    }
    park_cv.notify_all();
    for (auto& t : threads)
      if (t.joinable()) t.join();
    threads.clear();
    // Suspended tasks can never resume now. Their stacks are intentionally
    // leaked: unwinding them would run destructors against objects the
    // program may already have torn down.
    std::lock_guard lk(susp_mu);
    for (auto& [raw, t] : suspended) {
      auto* leak = new ctx::fiber(std::move(raw->context));
      (void)leak;
    }
    suspended.clear();
  }

  // ---- worker

  void worker_main(int w) {
    tls_ref() = WorkerTls{this, w, nullptr};
    unsigned idle_rounds = 0;
    for (;;) {
      TaskPtr t = pop_own(w);
      if (!t) t = steal_one(w);
      if (t) {
        idle_rounds = 0;
        run(w, std::move(t));
        continue;
      }
      if (stopping.load(std::memory_order_acquire) && queued.load() == 0) break;
      park(idle_rounds++);
    }
    tls_ref() = WorkerTls{};
  }

  // Exponential backoff: a few yields, then condition waits of growing length.
  void park(unsigned round) {
    if (round < 4) {
      std::this_thread::yield();
      return;
    }
    const auto wait_us = std::chrono::microseconds(std::min<unsigned>(2000, 25u << std::min(round - 4, 7u)));
    std::unique_lock lk(park_mu);
    sleepers.fetch_add(1, std::memory_order_seq_cst);
    if (queued.load(std::memory_order_seq_cst) == 0 && !stopping.load())
      park_cv.wait_for(lk, wait_us);
    sleepers.fetch_sub(1, std::memory_order_seq_cst);
  }

  void run(int w, TaskPtr t) {
    TaskRecord* raw = t.get();
    auto& me = tls_ref();
    me.task = raw;
    raw->last_worker = w;
    raw->state.store(TaskState::running, std::memory_order_relaxed);
    const auto t0 = Clock::now();
    if (!raw->context) {
      raw->context = ctx::fiber(std::allocator_arg, stacks, [raw](ctx::fiber&& caller) {
        raw->caller = std::move(caller);
        try {
          raw->fn();
        } catch (const ctx::detail::forced_unwind&) {
          throw;
        } catch (const std::exception& e) {
          raw->rt->exceptions.fetch_add(1, std::memory_order_relaxed);
          std::cerr << "mpx: task " << raw->gid.str() << " threw: " << e.what() << "\n";
        } catch (...) {
          raw->rt->exceptions.fetch_add(1, std::memory_order_relaxed);
          std::cerr << "mpx: task " << raw->gid.str() << " threw a non-std exception\n";
        }
        raw->fn = nullptr;
        return std::move(raw->caller);
      });
    }
    raw->context = std::move(raw->context).resume();
    const auto t1 = Clock::now();
    busy_ns[w].fetch_add(static_cast<std::uint64_t>(
                             std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()),
                         std::memory_order_relaxed);
    tls_ref().task = nullptr;

    if (!raw->context) {
      raw->state.store(TaskState::terminated, std::memory_order_release);
      completed_by[w].fetch_add(1, std::memory_order_relaxed);
      const auto done = completed.fetch_add(1, std::memory_order_acq_rel) + 1;
      if (done == spawned.load(std::memory_order_acquire)) {
        { std::lock_guard lk(idle_mu); }
        idle_cv.notify_all();
      }
      return;
    }

    // The task switched out to wait on a token.
    suspensions.fetch_add(1, std::memory_order_relaxed);
    {
      std::lock_guard lk(susp_mu);
      suspended.emplace(raw, t);
    }
    raw->state.store(TaskState::suspended, std::memory_order_seq_cst);
    if (raw->wake_pending.exchange(false, std::memory_order_seq_cst)) make_ready(std::move(t));
  }

  void make_ready(TaskPtr t) {
    TaskState expect = TaskState::suspended;
    if (!t->state.compare_exchange_strong(expect, TaskState::pending)) return;
    {
      std::lock_guard lk(susp_mu);
      suspended.erase(t.get());
    }
    push(std::move(t), std::nullopt);
  }

  // Wake protocol: the waker raises wake_pending and whoever (waker or the
  // worker finishing the switch-out) claims the flag after observing the
  // suspended state requeues the task. Exactly one of them succeeds.
  void wake(const TaskPtr& t) {
    if (t->state.load(std::memory_order_acquire) == TaskState::terminated) return;
    t->wake_pending.store(true, std::memory_order_seq_cst);
    if (t->state.load(std::memory_order_seq_cst) == TaskState::suspended &&
        t->wake_pending.exchange(false, std::memory_order_seq_cst))
      make_ready(t);
  }

  // Called on the task's own stack.
  void suspend_self(TaskRecord* self) {
    self->caller = std::move(self->caller).resume();
  }

  Gid spawn(Runtime::Task fn, Priority prio, std::optional<unsigned> hint) {
    if (!accepting.load(std::memory_order_acquire))
      raise(ErrorCode::runtime_shut_down, "spawn rejected: runtime has been shut down");
    auto t = std::make_shared<TaskRecord>();
    t->gid = Gid{cfg.locality, next_seq.fetch_add(1, std::memory_order_relaxed), GidKind::task};
    t->fn = std::move(fn);
    t->priority = prio;
    t->rt = this;
    Gid g = t->gid;
    spawned.fetch_add(1, std::memory_order_acq_rel);
    push(std::move(t), hint);
    return g;
  }

  RuntimeStats stats() const {
    RuntimeStats s;
    // completed first so that completed <= spawned holds for the snapshot
    s.tasks_completed = completed.load(std::memory_order_acquire);
    s.tasks_spawned = spawned.load(std::memory_order_acquire);
    s.steals = steals.load();
    s.suspensions = suspensions.load();
    s.task_exceptions = exceptions.load();
    for (unsigned w = 0; w < cfg.workers; ++w) {
      s.busy_seconds.push_back(static_cast<double>(busy_ns[w].load()) * 1e-9);
      s.completed_by.push_back(completed_by[w].load());
    }
    return s;
  }
};

// Token target for a task.
class TaskWake final : public WakeTarget {
 public:
  explicit TaskWake(TaskPtr t) : task_(std::move(t)) {}
  TaskRecord* task() const noexcept { return task_.get(); }

 protected:
  void on_fire() override { task_->rt->wake(task_); }

 private:
  TaskPtr task_;
};

// ---------------------------------------------------------------------------
// public surface

Runtime::Runtime(SchedulerConfig cfg, bool start_now) {
  cfg.validate();
  impl_ = std::make_unique<Impl>(std::move(cfg), this);
  if (start_now) impl_->start();
}

Runtime::~Runtime() { shutdown(); }

void Runtime::start() { impl_->start(); }

void Runtime::shutdown() {
  if (impl_ && (impl_->accepting.load() || !impl_->threads.empty())) impl_->shutdown();
}

Gid Runtime::spawn(Task fn, Priority prio, std::optional<unsigned> worker_hint) {
  return impl_->spawn(std::move(fn), prio, worker_hint);
}

Gid Runtime::spawn_action(std::uint32_t action_id, Blob args, Priority prio) {
  std::function<void(Blob)> entry;
  if (actions_) entry = actions_->task_entry(action_id);
  if (!entry) raise(ErrorCode::unknown_action, "spawn: action id " + std::to_string(action_id) + " is not registered");
  return impl_->spawn([entry = std::move(entry), args = std::move(args)]() mutable { entry(std::move(args)); },
                      prio, std::nullopt);
}

RuntimeStats Runtime::quiesce(std::chrono::milliseconds timeout) {
  auto& im = *impl_;
  if (!im.started) im.start();
  const auto deadline = Clock::now() + timeout;
  std::unique_lock lk(im.idle_mu);
  while (im.completed.load(std::memory_order_acquire) != im.spawned.load(std::memory_order_acquire)) {
    if (im.idle_cv.wait_until(lk, std::min(deadline, Clock::now() + std::chrono::milliseconds(5))) ==
            std::cv_status::timeout &&
        Clock::now() >= deadline) {
      auto susp = suspended_tasks();
      std::string msg = "quiesce timed out with " +
                        std::to_string(im.spawned.load() - im.completed.load()) +
                        " unfinished tasks; suspended:";
      for (const auto& g : susp) msg += " " + g.str();
      throw QuiesceTimeout(std::move(susp), msg);
    }
  }
  return im.stats();
}

RuntimeStats Runtime::stats() const { return impl_->stats(); }

const SchedulerConfig& Runtime::config() const noexcept { return impl_->cfg; }

std::vector<Gid> Runtime::suspended_tasks() const {
  std::lock_guard lk(impl_->susp_mu);
  std::vector<Gid> out;
  for (auto& [raw, t] : impl_->suspended) out.push_back(raw->gid);
  std::sort(out.begin(), out.end());
  return out;
}

Runtime* Runtime::current() noexcept {
  auto& me = tls_ref();
  return me.rt ? me.rt->owner : nullptr;
}

namespace this_task {
bool inside() noexcept { return tls_ref().task != nullptr; }
Gid gid() noexcept {
  auto* t = tls_ref().task;
  return t ? t->gid : Gid{};
}
int worker() noexcept { return tls_ref().worker; }
}  // namespace this_task

WakeToken make_wake_token() {
  auto& me = tls_ref();
  if (me.task) {
    return WakeToken(std::make_shared<TaskWake>(me.task->shared_from_this()));
  }
  return WakeToken(std::make_shared<ThreadWake>());
}

void wait(const WakeToken& token) {
  if (!token.valid()) raise(ErrorCode::invalid_argument, "wait on an empty wake token");
  if (auto* tw = dynamic_cast<TaskWake*>(token.target())) {
    TaskRecord* self = tls_ref().task;
    if (tw->task() != self)
      raise(ErrorCode::contract_violation, "wait: token belongs to a different task");
    // A stale wake from an earlier token can resume us early; re-check.
    while (!token.triggered()) self->rt->suspend_self(self);
    return;
  }
  if (auto* th = dynamic_cast<ThreadWake*>(token.target())) {
    if (tls_ref().task)
      raise(ErrorCode::contract_violation, "wait: thread token used inside a task");
    th->wait();
    return;
  }
  raise(ErrorCode::contract_violation, "wait: token has a foreign target");
}

}  // namespace mpx::rt
