// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/lco/lco.hpp"

#include <string>

namespace mpx::lco {

namespace {

void wake_all(std::vector<WaiterPtr>& ws) {
  for (auto& w : ws) w->token.trigger();
  ws.clear();
}

void block_until(const WaiterPtr& w, bool done) {
  if (!done) rt::wait(w->token);
}

}  // namespace

WaiterPtr make_waiter() {
  auto w = std::make_shared<Waiter>();
  w->token = rt::make_wake_token();
  return w;
}

// ---------------------------------------------------------------------------
// future

bool FutureCell::begin_get(const WaiterPtr& w) {
  std::lock_guard lk(mu_);
  if (slot_) {
    w->value = *slot_;
    return true;
  }
  waiters_.push_back(w);
  return false;
}

void FutureCell::set(Blob v) {
  std::deque<WaiterPtr> ws;
  std::vector<Continuation> cs;
  {
    std::lock_guard lk(mu_);
    if (slot_) {
      set_count_ = 1;
      raise(ErrorCode::double_set, "future already holds a value");
    }
    slot_ = std::move(v);
    set_count_ = 1;
    ws.swap(waiters_);
    cs.swap(continuations_);
    for (auto& w : ws) w->value = *slot_;
  }
  for (auto& w : ws) w->token.trigger();
  for (auto& c : cs) c(*slot_);
}

Blob FutureCell::get() {
  auto w = make_waiter();
  block_until(w, begin_get(w));
  return std::move(w->value);
}

bool FutureCell::ready() const {
  std::lock_guard lk(mu_);
  return slot_.has_value();
}

std::optional<Blob> FutureCell::try_get() const {
  std::lock_guard lk(mu_);
  return slot_;
}

std::uint32_t FutureCell::set_count() const {
  std::lock_guard lk(mu_);
  return set_count_;
}

void FutureCell::on_set(Continuation c) {
  {
    std::lock_guard lk(mu_);
    if (!slot_) {
      continuations_.push_back(std::move(c));
      return;
    }
  }
  c(*slot_);
}

// ---------------------------------------------------------------------------
// dataflow

DataflowCell::DataflowCell(std::size_t arity, Launcher launcher)
    : slots_(arity), launcher_(std::move(launcher)) {
  if (arity == 0) raise(ErrorCode::invalid_argument, "dataflow arity must be >= 1");
}

bool DataflowCell::write(std::size_t index, Blob v) {
  std::vector<Blob> inputs;
  Launcher launcher;
  {
    std::lock_guard lk(mu_);
    if (index >= slots_.size())
      raise(ErrorCode::invalid_argument, "dataflow input " + std::to_string(index) +
                                             " out of range for arity " +
                                             std::to_string(slots_.size()));
    if (slots_[index])
      raise(ErrorCode::duplicate_write, "dataflow input " + std::to_string(index) + " already written");
    slots_[index] = std::move(v);
    if (++filled_ < slots_.size()) return false;
    ++fire_count_;
    inputs.reserve(slots_.size());
    for (auto& s : slots_) inputs.push_back(std::move(*s));
    launcher = std::move(launcher_);
    launcher_ = nullptr;
  }
  if (launcher) launcher(std::move(inputs));
  return true;
}

void DataflowCell::set_value(Blob v) {
  std::size_t index = 0;
  {
    std::lock_guard lk(mu_);
    while (index < slots_.size() && slots_[index]) ++index;
  }
  write(index, std::move(v));
}

bool DataflowCell::fired() const {
  std::lock_guard lk(mu_);
  return fire_count_ > 0;
}

std::uint32_t DataflowCell::fire_count() const {
  std::lock_guard lk(mu_);
  return fire_count_;
}

std::size_t DataflowCell::filled() const {
  std::lock_guard lk(mu_);
  return filled_;
}

DataflowCell::Launcher spawning_continuation(rt::Runtime& runtime,
                                             std::function<void(std::vector<Blob>)> fn,
                                             rt::Priority prio) {
  return [&runtime, fn = std::move(fn), prio](std::vector<Blob> inputs) {
    runtime.spawn([fn, inputs = std::move(inputs)]() mutable { fn(std::move(inputs)); }, prio);
  };
}

// ---------------------------------------------------------------------------
// semaphore

bool SemaphoreCell::begin_wait(const WaiterPtr& w) {
  std::lock_guard lk(mu_);
  if (count_ > 0 && waiters_.empty()) {
    --count_;
    return true;
  }
  waiters_.push_back(w);
  return false;
}

void SemaphoreCell::signal(std::uint64_t n) {
  std::vector<WaiterPtr> wake;
  {
    std::lock_guard lk(mu_);
    while (n > 0 && !waiters_.empty()) {
      wake.push_back(std::move(waiters_.front()));
      waiters_.pop_front();
      --n;
    }
    count_ += n;
  }
  wake_all(wake);
}

void SemaphoreCell::wait() {
  auto w = make_waiter();
  block_until(w, begin_wait(w));
}

std::uint64_t SemaphoreCell::count() const {
  std::lock_guard lk(mu_);
  return count_;
}

std::size_t SemaphoreCell::waiting() const {
  std::lock_guard lk(mu_);
  return waiters_.size();
}

// ---------------------------------------------------------------------------
// mutex

bool MutexCell::begin_lock(const WaiterPtr& w) {
  if (!w->owner.valid()) raise(ErrorCode::invalid_argument, "mutex lock needs an owner gid");
  std::lock_guard lk(mu_);
  if (!owner_) {
    owner_ = w->owner;
    return true;
  }
  waiters_.push_back(w);
  return false;
}

void MutexCell::unlock(const Gid& caller) {
  WaiterPtr next;
  {
    std::lock_guard lk(mu_);
    if (!owner_ || *owner_ != caller)
      raise(ErrorCode::not_owner, "mutex unlock by " + caller.str() + " which does not own it");
    if (waiters_.empty()) {
      owner_.reset();
      return;
    }
    next = std::move(waiters_.front());
    waiters_.pop_front();
    owner_ = next->owner;
  }
  next->token.trigger();
}

namespace {
Gid caller_gid() {
  Gid g = rt::this_task::gid();
  if (!g.valid()) raise(ErrorCode::contract_violation, "blocking mutex operations must run inside a task");
  return g;
}
}  // namespace

void MutexCell::lock() {
  auto w = make_waiter();
  w->owner = caller_gid();
  block_until(w, begin_lock(w));
}

void MutexCell::unlock() { unlock(caller_gid()); }

std::optional<Gid> MutexCell::owner() const {
  std::lock_guard lk(mu_);
  return owner_;
}

void MutexCell::set_value(Blob) {
  raise(ErrorCode::invalid_argument, "a mutex cannot be the target of a value continuation");
}

// ---------------------------------------------------------------------------
// full/empty

void FullEmptyCell::settle(std::vector<WaiterPtr>& wake) {
  for (;;) {
    if (full_ && !readers_.empty()) {
      Reader r = std::move(readers_.front());
      readers_.pop_front();
      if (r.mode == ReadMode::consume) {
        r.w->value = std::move(value_);
        value_.clear();
        full_ = false;
      } else {
        r.w->value = value_;
      }
      wake.push_back(std::move(r.w));
      continue;
    }
    if (!full_ && !writers_.empty()) {
      WaiterPtr w = std::move(writers_.front());
      writers_.pop_front();
      value_ = std::move(w->value);
      w->value.clear();
      full_ = true;
      wake.push_back(std::move(w));
      continue;
    }
    return;
  }
}

bool FullEmptyCell::begin_read(const WaiterPtr& w, ReadMode mode) {
  std::vector<WaiterPtr> wake;
  bool done = false;
  {
    std::lock_guard lk(mu_);
    if (full_ && readers_.empty()) {
      if (mode == ReadMode::consume) {
        w->value = std::move(value_);
        value_.clear();
        full_ = false;
        settle(wake);
      } else {
        w->value = value_;
      }
      done = true;
    } else {
      readers_.push_back(Reader{w, mode});
    }
  }
  wake_all(wake);
  return done;
}

bool FullEmptyCell::begin_write(const WaiterPtr& w) {
  std::vector<WaiterPtr> wake;
  bool done = false;
  {
    std::lock_guard lk(mu_);
    if (!full_ && writers_.empty()) {
      value_ = std::move(w->value);
      w->value.clear();
      full_ = true;
      settle(wake);
      done = true;
    } else {
      writers_.push_back(w);
    }
  }
  wake_all(wake);
  return done;
}

Blob FullEmptyCell::read(ReadMode mode) {
  auto w = make_waiter();
  block_until(w, begin_read(w, mode));
  return std::move(w->value);
}

void FullEmptyCell::write(Blob v) {
  auto w = make_waiter();
  w->value = std::move(v);
  block_until(w, begin_write(w));
}

bool FullEmptyCell::full() const {
  std::lock_guard lk(mu_);
  return full_;
}

}  // namespace mpx::lco
