// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Cooperative user-level task scheduler. Tasks run on stackful contexts on a
// fixed pool of worker threads and are never preempted: the only way a task
// gives up its worker is by suspending on a wake token.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpx/common/bytes.hpp"
#include "mpx/common/error.hpp"
#include "mpx/common/gid.hpp"
#include "mpx/runtime/wake.hpp"

namespace mpx::rt {

enum class Policy { global_queue, local_priority_stealing };

const char* to_string(Policy p) noexcept;
Policy parse_policy(std::string_view name);

// Two levels: normal (0) and high (1).
enum class Priority : int { normal = 0, high = 1 };

enum class TaskState : std::uint8_t { pending, running, suspended, terminated };

struct SchedulerConfig {
  static constexpr std::size_t min_stack_bytes = 16 * 1024;

  unsigned workers = 1;
  Policy policy = Policy::local_priority_stealing;
  std::size_t stack_bytes = 64 * 1024;
  LocalityId locality = 0;  // birth locality stamped into task gids
  std::uint64_t seed = 0;   // victim selection; 0 draws from random_device

  void validate() const;
};

struct RuntimeStats {
  std::uint64_t tasks_spawned = 0;
  std::uint64_t tasks_completed = 0;
  std::uint64_t steals = 0;
  std::uint64_t suspensions = 0;
  std::uint64_t task_exceptions = 0;
  std::vector<double> busy_seconds;          // per worker
  std::vector<std::uint64_t> completed_by;   // per worker

  // flat key=value lines
  std::string to_text() const;
};

class QuiesceTimeout : public Error {
 public:
  QuiesceTimeout(std::vector<Gid> suspended, const std::string& what)
      : Error(ErrorCode::timeout, what), suspended_(std::move(suspended)) {}
  const std::vector<Gid>& suspended() const noexcept { return suspended_; }

 private:
  std::vector<Gid> suspended_;
};

// Resolves action ids for spawn-by-id; the parcel layer provides one.
class ActionLookup {
 public:
  virtual ~ActionLookup() = default;
  // Returns an empty function if `id` is not registered.
  virtual std::function<void(Blob)> task_entry(std::uint32_t id) const = 0;
};

class Runtime {
 public:
  using Task = std::function<void()>;
  using Clock = std::chrono::steady_clock;

  explicit Runtime(SchedulerConfig cfg, bool start_now = true);
  ~Runtime();

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  void start();
  // Stops accepting new work, lets the workers drain their queues and joins
  // them. Tasks still suspended at that point are abandoned.
  void shutdown();

  Gid spawn(Task fn, Priority prio = Priority::normal,
            std::optional<unsigned> worker_hint = std::nullopt);

  void set_actions(const ActionLookup* actions) noexcept { actions_ = actions; }
  // Unknown ids are rejected here, not when the task would run.
  Gid spawn_action(std::uint32_t action_id, Blob args, Priority prio = Priority::normal);

  // Waits until every spawned task has terminated. Throws QuiesceTimeout
  // naming the suspended tasks if that does not happen within `timeout`.
  RuntimeStats quiesce(std::chrono::milliseconds timeout = std::chrono::hours(24));

  RuntimeStats stats() const;
  const SchedulerConfig& config() const noexcept;
  std::vector<Gid> suspended_tasks() const;

  // The runtime owning the calling task, or nullptr outside tasks.
  static Runtime* current() noexcept;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
  const ActionLookup* actions_ = nullptr;
};

namespace this_task {
bool inside() noexcept;
Gid gid() noexcept;          // invalid gid outside a task
int worker() noexcept;       // -1 outside a worker thread
}  // namespace this_task

}  // namespace mpx::rt
