// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/parcel/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <set>
#include <sstream>

#include "mpx/common/error.hpp"
#include "mpx/parcel/actions.hpp"
#include "mpx/parcel/frame.hpp"
#include "mpx/parcel/locality.hpp"

namespace mpx::parcel {

Endpoint parse_endpoint(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
    raise(ErrorCode::config, "endpoint '" + text + "' is not host:port");
  Endpoint e;
  e.host = text.substr(0, colon);
  try {
    auto port = std::stoul(text.substr(colon + 1));
    if (port == 0 || port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    raise(ErrorCode::config, "endpoint '" + text + "' has a bad port");
  }
  return e;
}

// ---------------------------------------------------------------------------
// flow control

void FlowGate::acquire(std::size_t n) {
  for (;;) {
    rt::WakeToken token;
    {
      std::lock_guard lk(mu_);
      if (closed_ || queued_ == 0 || queued_ + n <= limit_) {
        queued_ += n;
        return;
      }
      token = rt::make_wake_token();
      waiters_.push_back(token);
    }
    rt::wait(token);
  }
}

void FlowGate::release(std::size_t n) {
  std::deque<rt::WakeToken> wake;
  {
    std::lock_guard lk(mu_);
    queued_ -= std::min(n, queued_);
    if (queued_ < limit_) wake.swap(waiters_);
  }
  for (auto& t : wake) t.trigger();
}

void FlowGate::open_all() {
  std::deque<rt::WakeToken> wake;
  {
    std::lock_guard lk(mu_);
    closed_ = true;
    wake.swap(waiters_);
  }
  for (auto& t : wake) t.trigger();
}

// ---------------------------------------------------------------------------
// loopback

struct LoopbackFabric::Inbox {
  struct Item {
    LocalityId from;
    Blob bytes;
    FlowGate* gate;
  };

  explicit Inbox(Locality* l) : loc(l), thread([this] { run(); }) {}
  ~Inbox() { stop(); }

  void push(Item it) {
    {
      std::lock_guard lk(mu);
      if (stopping) raise(ErrorCode::transport, "loopback link is closed");
      q.push_back(std::move(it));
    }
    cv.notify_one();
  }

  void stop() {
    {
      std::lock_guard lk(mu);
      if (stopping && !thread.joinable()) return;
      stopping = true;
    }
    cv.notify_all();
    if (thread.joinable()) thread.join();
  }

  void run() {
    for (;;) {
      Item it;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return stopping || !q.empty(); });
        if (q.empty()) return;
        it = std::move(q.front());
        q.pop_front();
      }
      const std::size_t n = it.bytes.size();
      loc->on_bytes(it.from, it.bytes);
      it.gate->release(n);
    }
  }

  Locality* loc;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Item> q;
  bool stopping = false;
  std::thread thread;
};

namespace {

class LoopbackLink final : public Link {
 public:
  LoopbackLink(LocalityId self, LocalityId peer, LoopbackFabric::Inbox* inbox, std::size_t buffer)
      : self_(self), peer_(peer), inbox_(inbox), gate_(buffer) {}

  LocalityId peer() const noexcept override { return peer_; }
  FlowGate& gate() noexcept override { return gate_; }
  void send(Blob frame) override {
    if (closed_) raise(ErrorCode::transport, "loopback link to locality " + std::to_string(peer_) + " is closed");
    inbox_->push({self_, std::move(frame), &gate_});
  }
  void close() override {
    closed_ = true;
    gate_.open_all();
  }
  bool socket_backed() const noexcept override { return false; }

 private:
  LocalityId self_, peer_;
  LoopbackFabric::Inbox* inbox_;
  FlowGate gate_;
  std::atomic<bool> closed_{false};
};

}  // namespace

LoopbackFabric::LoopbackFabric(std::size_t buffer_bytes) : buffer_bytes_(buffer_bytes) {}

LoopbackFabric::~LoopbackFabric() { close(); }

void LoopbackFabric::connect(const std::vector<Locality*>& localities) {
  std::map<LocalityId, Inbox*> by_id;
  for (Locality* l : localities) {
    inboxes_.push_back(std::make_unique<Inbox>(l));
    by_id[l->id()] = inboxes_.back().get();
  }
  for (Locality* a : localities)
    for (Locality* b : localities)
      if (a != b) a->attach(std::make_unique<LoopbackLink>(a->id(), b->id(), by_id[b->id()], buffer_bytes_));
}

void LoopbackFabric::close() {
  for (auto& in : inboxes_) in->stop();
}

// ---------------------------------------------------------------------------
// tcp

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  raise(ErrorCode::transport, what + ": " + std::strerror(errno));
}

void write_all(int fd, const std::byte* p, std::size_t n) {
  while (n > 0) {
    ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      sys_fail("send");
    }
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

bool read_exact(int fd, std::byte* p, std::size_t n, std::chrono::steady_clock::time_point deadline) {
  while (n > 0) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return false;
    pollfd pfd{fd, POLLIN, 0};
    int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    ssize_t k = ::recv(fd, p, n, 0);
    if (k == 0) return false;
    if (k < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += k;
    n -= static_cast<std::size_t>(k);
  }
  return true;
}

class TcpLink final : public Link {
 public:
  TcpLink(Locality& loc, LocalityId peer, int fd, std::size_t buffer)
      : loc_(loc), peer_(peer), fd_(fd), gate_(buffer) {}
  ~TcpLink() override { close(); }

  void start() {
    writer_ = std::thread([this] { write_loop(); });
    reader_ = std::thread([this] { read_loop(); });
  }

  LocalityId peer() const noexcept override { return peer_; }
  FlowGate& gate() noexcept override { return gate_; }
  bool socket_backed() const noexcept override { return true; }

  void send(Blob frame) override {
    {
      std::lock_guard lk(mu_);
      if (closing_ || broken_)
        raise(ErrorCode::transport, "tcp link to locality " + std::to_string(peer_) + " is down");
      q_.push_back(std::move(frame));
    }
    cv_.notify_one();
  }

  void close() override {
    {
      std::lock_guard lk(mu_);
      if (closed_) return;
      closing_ = true;
    }
    cv_.notify_all();
    if (writer_.joinable()) writer_.join();  // flushes what was queued
    ::shutdown(fd_, SHUT_RDWR);
    if (reader_.joinable()) reader_.join();
    ::close(fd_);
    gate_.open_all();
    std::lock_guard lk(mu_);
    closed_ = true;
  }

 private:
  void write_loop() {
    for (;;) {
      Blob frame;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return closing_ || !q_.empty(); });
        if (q_.empty()) return;
        frame = std::move(q_.front());
        q_.pop_front();
      }
      try {
        write_all(fd_, frame.data(), frame.size());
      } catch (const Error& e) {
        {
          std::lock_guard lk(mu_);
          broken_ = true;
        }
        loc_.on_link_error(peer_, e.what());
        gate_.open_all();
        return;
      }
      gate_.release(frame.size());
    }
  }

  void read_loop() {
    std::vector<std::byte> buf(64 * 1024);
    for (;;) {
      ssize_t k = ::recv(fd_, buf.data(), buf.size(), 0);
      if (k < 0 && errno == EINTR) continue;
      if (k <= 0) {
        bool expected;
        {
          std::lock_guard lk(mu_);
          expected = closing_;
        }
        if (!expected) loc_.on_link_error(peer_, k == 0 ? "peer closed the connection" : std::strerror(errno));
        return;
      }
      loc_.on_bytes(peer_, ByteView(buf.data(), static_cast<std::size_t>(k)));
    }
  }

  Locality& loc_;
  LocalityId peer_;
  int fd_;
  FlowGate gate_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Blob> q_;
  bool closing_ = false, broken_ = false, closed_ = false;
  std::thread writer_, reader_;
};

Blob hello_frame(const Locality& loc) {
  ByteWriter w;
  w.u32(loc.id());
  w.u32(static_cast<std::uint32_t>(loc.size()));
  w.u64(loc.actions().checksum());
  auto sig = loc.actions().signature();
  w.u32(static_cast<std::uint32_t>(sig.size()));
  for (const auto& [id, name] : sig) {
    w.u32(id);
    w.str(name);
  }
  Parcel p;
  p.dest = agas::locality_gid(loc.id());
  p.action = sys::hello;
  p.source = loc.id();
  p.args = std::move(w).take();
  return encode_frame(p, 0);
}

struct Hello {
  LocalityId id;
  std::uint32_t count;
  std::uint64_t checksum;
  std::vector<std::pair<std::uint32_t, std::string>> signature;
};

Hello read_hello(int fd, std::chrono::steady_clock::time_point deadline) {
  std::byte head[8];
  if (!read_exact(fd, head, 8, deadline)) raise(ErrorCode::transport, "handshake: no hello from peer");
  ByteReader hr(ByteView(head, 8));
  if (hr.u32() != frame_magic) raise(ErrorCode::transport, "handshake: peer is not speaking the parcel protocol");
  const std::uint32_t total = hr.u32();
  if (total < min_frame_bytes || total > max_frame_bytes) raise(ErrorCode::transport, "handshake: bad hello length");
  Blob frame(total);
  std::memcpy(frame.data(), head, 8);
  if (!read_exact(fd, frame.data() + 8, total - 8, deadline)) raise(ErrorCode::transport, "handshake: truncated hello");
  Frame f = decode_frame(frame);
  if (f.parcel.action != sys::hello) raise(ErrorCode::transport, "handshake: first frame is not a hello");
  ByteReader r(f.parcel.args);
  Hello h;
  h.id = r.u32();
  h.count = r.u32();
  h.checksum = r.u64();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto id = r.u32();
    h.signature.emplace_back(id, r.str());
  }
  return h;
}

void verify_hello(const Locality& self, const Hello& h, std::optional<LocalityId> expect) {
  if (expect && h.id != *expect)
    raise(ErrorCode::transport, "handshake: expected locality " + std::to_string(*expect) + ", peer says " +
                                    std::to_string(h.id));
  if (h.count != self.size())
    raise(ErrorCode::config, "handshake: locality " + std::to_string(h.id) + " expects " + std::to_string(h.count) +
                                 " localities, this one " + std::to_string(self.size()));
  if (h.checksum != self.actions().checksum()) {
    auto ids = ActionRegistry::mismatched(self.actions().signature(), h.signature);
    std::ostringstream os;
    os << "action registry mismatch with locality " << h.id << "; differing action ids:";
    for (auto id : ids) os << " " << id;
    raise(ErrorCode::registry_mismatch, os.str());
  }
}

int make_listener(const Endpoint& e) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(e.port);
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd);
    sys_fail("bind port " + std::to_string(e.port));
  }
  if (::listen(fd, 64) < 0) {
    ::close(fd);
    sys_fail("listen");
  }
  return fd;
}

int dial(const Endpoint& e, std::chrono::steady_clock::time_point deadline) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  for (;;) {
    addrinfo* res = nullptr;
    if (::getaddrinfo(e.host.c_str(), std::to_string(e.port).c_str(), &hints, &res) == 0 && res) {
      int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
      if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
        ::freeaddrinfo(res);
        return fd;
      }
      if (fd >= 0) ::close(fd);
      ::freeaddrinfo(res);
    }
    if (std::chrono::steady_clock::now() >= deadline)
      raise(ErrorCode::transport, "could not connect to " + e.host + ":" + std::to_string(e.port));
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

void tune(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

void connect_tcp(Locality& self, const std::map<LocalityId, Endpoint>& endpoints, const TcpOptions& opts) {
  const LocalityId me = self.id();
  if (self.size() <= 1) return;
  for (LocalityId l = 0; l < self.size(); ++l)
    if (!endpoints.count(l)) raise(ErrorCode::config, "no endpoint configured for locality " + std::to_string(l));

  const auto deadline = std::chrono::steady_clock::now() + opts.connect_timeout;
  const Blob hello = hello_frame(self);
  std::vector<std::unique_ptr<TcpLink>> links;

  const bool accepts = me + 1 < self.size();
  int lfd = accepts ? make_listener(endpoints.at(me)) : -1;
  struct ListenerGuard {
    int fd;
    ~ListenerGuard() {
      if (fd >= 0) ::close(fd);
    }
  } guard{lfd};

  for (LocalityId peer = 0; peer < me; ++peer) {
    int fd = dial(endpoints.at(peer), deadline);
    tune(fd);
    try {
      write_all(fd, hello.data(), hello.size());
      Hello h = read_hello(fd, deadline);
      verify_hello(self, h, peer);
    } catch (...) {
      ::close(fd);
      throw;
    }
    links.push_back(std::make_unique<TcpLink>(self, peer, fd, opts.buffer_bytes));
  }

  std::set<LocalityId> pending;
  for (LocalityId peer = me + 1; peer < self.size(); ++peer) pending.insert(peer);
  while (!pending.empty()) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    pollfd pfd{lfd, POLLIN, 0};
    int r = left.count() > 0 ? ::poll(&pfd, 1, static_cast<int>(left.count())) : 0;
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) {
      std::ostringstream os;
      os << "partial connectivity: locality " << me << " heard nothing from";
      for (auto p : pending) os << " " << p;
      raise(ErrorCode::transport, os.str());
    }
    int fd = ::accept(lfd, nullptr, nullptr);
    if (fd < 0) continue;
    tune(fd);
    try {
      Hello h = read_hello(fd, deadline);
      write_all(fd, hello.data(), hello.size());
      verify_hello(self, h, std::nullopt);
      if (!pending.erase(h.id))
        raise(ErrorCode::transport, "unexpected connection from locality " + std::to_string(h.id));
      links.push_back(std::make_unique<TcpLink>(self, h.id, fd, opts.buffer_bytes));
    } catch (...) {
      ::close(fd);
      throw;
    }
  }

  for (auto& l : links) {
    TcpLink* raw = l.get();
    self.attach(std::move(l));
    raw->start();
  }
}

}  // namespace mpx::parcel
