// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Local control objects. Every cell exposes a non-blocking core (begin_*
// calls that either complete immediately or enqueue a Waiter and wake it
// later) and blocking wrappers on top that suspend the calling task.

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "mpx/common/bytes.hpp"
#include "mpx/common/error.hpp"
#include "mpx/common/gid.hpp"
#include "mpx/runtime/task_runtime.hpp"
#include "mpx/runtime/wake.hpp"

namespace mpx::lco {

struct Waiter {
  rt::WakeToken token;
  Blob value;     // payload delivered to readers, or carried by writers
  Gid owner;      // requesting task for mutex locks
};
using WaiterPtr = std::shared_ptr<Waiter>;

// A waiter whose token belongs to the caller (task or OS thread).
WaiterPtr make_waiter();

// Base for anything a set-lco continuation may target.
class LcoBase {
 public:
  virtual ~LcoBase() = default;
  virtual void set_value(Blob v) = 0;
  virtual GidKind kind() const noexcept = 0;
};

class FutureCell final : public LcoBase {
 public:
  using Continuation = std::function<void(const Blob&)>;

  // Core. Returns true and fills w->value if the slot is full; otherwise w is
  // woken once set() runs.
  bool begin_get(const WaiterPtr& w);
  // Throws ErrorCode::double_set on a second call; the first value stays.
  void set(Blob v);

  Blob get();
  bool ready() const;
  std::optional<Blob> try_get() const;
  std::uint32_t set_count() const;
  // Runs `c` with the value on set (immediately if already set).
  void on_set(Continuation c);

  void set_value(Blob v) override { set(std::move(v)); }
  GidKind kind() const noexcept override { return GidKind::future; }

 private:
  mutable std::mutex mu_;
  std::optional<Blob> slot_;
  std::deque<WaiterPtr> waiters_;
  std::vector<Continuation> continuations_;
  std::uint32_t set_count_ = 0;
};

class DataflowCell final : public LcoBase {
 public:
  // Invoked exactly once with all inputs. It should hand the work to a new
  // task; see spawning_continuation().
  using Launcher = std::function<void(std::vector<Blob>)>;

  DataflowCell(std::size_t arity, Launcher launcher);

  // Throws invalid_argument for an index out of range and duplicate_write if
  // the slot was already filled. Returns true if this write fired the cell.
  bool write(std::size_t index, Blob v);

  std::size_t arity() const noexcept { return slots_.size(); }
  bool fired() const;
  std::uint32_t fire_count() const;
  std::size_t filled() const;

  // set_value fills the lowest empty slot.
  void set_value(Blob v) override;
  GidKind kind() const noexcept override { return GidKind::dataflow; }

 private:
  mutable std::mutex mu_;
  std::vector<std::optional<Blob>> slots_;
  std::size_t filled_ = 0;
  std::uint32_t fire_count_ = 0;
  Launcher launcher_;
};

// Addresses one input of a dataflow cell, so that a continuation gid can name
// a specific slot.
class DataflowInput final : public LcoBase {
 public:
  DataflowInput(std::shared_ptr<DataflowCell> cell, std::size_t index)
      : cell_(std::move(cell)), index_(index) {}
  void set_value(Blob v) override { cell_->write(index_, std::move(v)); }
  GidKind kind() const noexcept override { return GidKind::dataflow; }

 private:
  std::shared_ptr<DataflowCell> cell_;
  std::size_t index_;
};

// Launcher that spawns `fn(inputs)` as a new task on `runtime`.
DataflowCell::Launcher spawning_continuation(rt::Runtime& runtime,
                                             std::function<void(std::vector<Blob>)> fn,
                                             rt::Priority prio = rt::Priority::normal);

class SemaphoreCell final : public LcoBase {
 public:
  explicit SemaphoreCell(std::uint64_t initial = 0) : count_(initial) {}

  bool begin_wait(const WaiterPtr& w);
  // Hands the permit directly to the oldest waiter if there is one.
  void signal(std::uint64_t n = 1);

  void wait();
  std::uint64_t count() const;
  std::size_t waiting() const;

  void set_value(Blob) override { signal(); }
  GidKind kind() const noexcept override { return GidKind::semaphore; }

 private:
  mutable std::mutex mu_;
  std::uint64_t count_;
  std::deque<WaiterPtr> waiters_;
};

class MutexCell final : public LcoBase {
 public:
  // w->owner names the locking task.
  bool begin_lock(const WaiterPtr& w);
  // Throws not_owner unless `caller` holds the lock. Ownership passes to the
  // oldest waiter.
  void unlock(const Gid& caller);

  // Blocking forms use the current task gid as owner.
  void lock();
  void unlock();
  std::optional<Gid> owner() const;

  void set_value(Blob) override;
  GidKind kind() const noexcept override { return GidKind::mutex; }

 private:
  mutable std::mutex mu_;
  std::optional<Gid> owner_;
  std::deque<WaiterPtr> waiters_;
};

class FullEmptyCell final : public LcoBase {
 public:
  enum class ReadMode { consume, keep };

  FullEmptyCell() = default;
  explicit FullEmptyCell(Blob initial) : value_(std::move(initial)), full_(true) {}

  bool begin_read(const WaiterPtr& w, ReadMode mode);
  // w->value carries the value to store; completes once it is stored.
  bool begin_write(const WaiterPtr& w);

  Blob read(ReadMode mode = ReadMode::consume);
  void write(Blob v);
  bool full() const;

  void set_value(Blob v) override { write(std::move(v)); }
  GidKind kind() const noexcept override { return GidKind::full_empty; }

 private:
  struct Reader {
    WaiterPtr w;
    ReadMode mode;
  };
  // Serves queued readers and writers until neither can proceed. Returns the
  // waiters to wake once the lock is released.
  void settle(std::vector<WaiterPtr>& wake);

  mutable std::mutex mu_;
  Blob value_;
  bool full_ = false;
  std::deque<Reader> readers_;
  std::deque<WaiterPtr> writers_;
};

// Convenience typed views over blob values.
inline Blob u64_value(std::uint64_t v) { return u64_blob(v); }
inline std::uint64_t as_u64(const Blob& b) { return blob_u64(b); }

}  // namespace mpx::lco
