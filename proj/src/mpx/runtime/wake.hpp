// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>

namespace mpx::rt {

// Something that can be woken exactly once: a suspended task, a blocked OS
// thread, or a simulated task in the LCO model checker.
class WakeTarget {
 public:
  virtual ~WakeTarget() = default;

  // Returns false (and does nothing) if this target was already fired.
  bool fire() {
    if (fired_.exchange(true, std::memory_order_acq_rel)) return false;
    on_fire();
    return true;
  }
  bool fired() const noexcept { return fired_.load(std::memory_order_acquire); }

 protected:
  virtual void on_fire() = 0;

 private:
  std::atomic<bool> fired_{false};
};

class WakeToken {
 public:
  WakeToken() = default;
  explicit WakeToken(std::shared_ptr<WakeTarget> t) : target_(std::move(t)) {}

  // First call wakes the owner and returns true; later calls are rejected.
  bool trigger() const { return target_ && target_->fire(); }
  bool triggered() const noexcept { return target_ && target_->fired(); }
  bool valid() const noexcept { return static_cast<bool>(target_); }
  WakeTarget* target() const noexcept { return target_.get(); }

 private:
  std::shared_ptr<WakeTarget> target_;
};

// Blocks an OS thread that is not a runtime task.
class ThreadWake final : public WakeTarget {
 public:
  void wait() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return done_; });
  }

 protected:
  void on_fire() override {
    {
      std::lock_guard lk(mu_);
      done_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  bool done_ = false;
};

// A token for the caller: the current task if called inside one, otherwise
// the calling OS thread.
WakeToken make_wake_token();

// Suspends the current task (or blocks the calling thread) until `token`,
// obtained from make_wake_token() by the same caller, is triggered. Returns
// immediately if it already was.
void wait(const WakeToken& token);

}  // namespace mpx::rt
