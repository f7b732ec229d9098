// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mpx/common/bytes.hpp"
#include "mpx/common/gid.hpp"
#include "mpx/runtime/wake.hpp"

namespace mpx::parcel {

class Locality;

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

// Parses `host:port`.
Endpoint parse_endpoint(const std::string& text);

// Bounded byte budget for queued outgoing frames. Senders beyond the budget
// suspend (or block, outside tasks) until the writer drains.
class FlowGate {
 public:
  explicit FlowGate(std::size_t limit) : limit_(limit) {}
  void acquire(std::size_t n);
  void release(std::size_t n);
  void open_all();  // on close: release every blocked sender

 private:
  std::mutex mu_;
  std::size_t queued_ = 0;
  std::size_t limit_;
  bool closed_ = false;
  std::deque<rt::WakeToken> waiters_;
};

// One connection to a peer locality. Frames handed to send() reach the
// peer's port in order. Callers reserve the frame's bytes on gate() first;
// send() itself never blocks and returns the bytes to the gate once the
// frame has left.
class Link {
 public:
  virtual ~Link() = default;
  virtual LocalityId peer() const noexcept = 0;
  virtual FlowGate& gate() noexcept = 0;
  // Throws Error(transport) if the link is down.
  virtual void send(Blob frame) = 0;
  virtual void close() = 0;
  virtual bool socket_backed() const noexcept = 0;
};

// Connects localities living in one process. Each locality gets a receive
// thread fed by in-memory queues; no sockets are opened.
class LoopbackFabric {
 public:
  explicit LoopbackFabric(std::size_t buffer_bytes = 16u << 20);
  ~LoopbackFabric();

  LoopbackFabric(const LoopbackFabric&) = delete;
  LoopbackFabric& operator=(const LoopbackFabric&) = delete;

  // Attaches links between every pair of the given localities.
  void connect(const std::vector<Locality*>& localities);
  void close();

  struct Inbox;

 private:
  std::size_t buffer_bytes_;
  std::vector<std::unique_ptr<Inbox>> inboxes_;
};

struct TcpOptions {
  std::chrono::milliseconds connect_timeout{15000};
  std::size_t buffer_bytes = 16u << 20;
};

// Builds the full TCP mesh for `self`: one connection per unordered pair, the
// higher id connecting to the lower. Both sides exchange a hello with their
// action registry and abort with registry_mismatch naming the differing ids.
// Throws transport on partial connectivity after the timeout.
void connect_tcp(Locality& self, const std::map<LocalityId, Endpoint>& endpoints,
                 const TcpOptions& opts = {});

}  // namespace mpx::parcel
