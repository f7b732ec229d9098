// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/amr/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "mpx/amr/physics.hpp"
#include "mpx/amr/plan.hpp"
#include "mpx/lco/lco.hpp"

namespace mpx::amr {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Wakes one waiter after `arm(n)` and n set_value calls.
class CountdownCell final : public lco::LcoBase {
 public:
  void arm(std::size_t n) {
    remaining_.store(n);
    if (n == 0) done_.signal();
  }
  void wait() { done_.wait(); }
  void set_value(Blob) override {
    if (remaining_.fetch_sub(1) == 1) done_.signal();
  }
  GidKind kind() const noexcept override { return GidKind::semaphore; }

 private:
  std::atomic<std::size_t> remaining_{0};
  lco::SemaphoreCell done_;
};

// In-memory slice: header, then the chi, Phi and Pi runs.
struct SliceHeader {
  std::int64_t lo;
  std::int64_t n;
  std::int64_t skipped;
};

Blob alloc_slice(long lo, long n, bool skipped) {
  Blob b(sizeof(SliceHeader) + 3 * static_cast<std::size_t>(n) * sizeof(double));
  SliceHeader h{lo, n, skipped ? 1 : 0};
  std::memcpy(b.data(), &h, sizeof h);
  return b;
}

double* slice_values(Blob& b) { return reinterpret_cast<double*>(b.data() + sizeof(SliceHeader)); }

struct SliceView {
  long lo = 0, n = 0;
  bool skipped = false;
  const double* chi = nullptr;
  const double* Phi = nullptr;
  const double* Pi = nullptr;

  explicit SliceView(const Blob& b) {
    if (b.size() < sizeof(SliceHeader)) return;  // gate inputs carry nothing
    SliceHeader h;
    std::memcpy(&h, b.data(), sizeof h);
    lo = static_cast<long>(h.lo);
    n = static_cast<long>(h.n);
    skipped = h.skipped != 0;
    chi = reinterpret_cast<const double*>(b.data() + sizeof(SliceHeader));
    Phi = chi + n;
    Pi = Phi + n;
  }
};

Blob skipped_slice() { return alloc_slice(0, 0, true); }

Blob fields_slice(const Fields& f, long lo) {
  const long n = static_cast<long>(f.size());
  Blob b = alloc_slice(lo, n, false);
  double* d = slice_values(b);
  std::copy(f.chi.begin(), f.chi.end(), d);
  std::copy(f.Phi.begin(), f.Phi.end(), d + n);
  std::copy(f.Pi.begin(), f.Pi.end(), d + 2 * n);
  return b;
}

Blob sub_slice(const Blob& full, long lo, long hi) {
  SliceView v(full);
  if (v.skipped || lo == hi) return alloc_slice(lo, 0, v.skipped);
  if (lo < v.lo || hi > v.lo + v.n)
    raise(ErrorCode::internal, "slice [" + std::to_string(lo) + "," + std::to_string(hi) + ") outside output [" +
                                   std::to_string(v.lo) + "," + std::to_string(v.lo + v.n) + ")");
  const long n = hi - lo;
  Blob b = alloc_slice(lo, n, false);
  double* d = slice_values(b);
  const long off = lo - v.lo;
  std::copy(v.chi + off, v.chi + off + n, d);
  std::copy(v.Phi + off, v.Phi + off + n, d + n);
  std::copy(v.Pi + off, v.Pi + off + n, d + 2 * n);
  return b;
}

void encode_slice(ByteWriter& w, const Blob& native) {
  SliceView v(native);
  w.u8(v.skipped ? 1 : 0);
  w.i64(v.lo);
  w.u64(static_cast<std::uint64_t>(v.n));
  for (long i = 0; i < 3 * v.n; ++i) w.f64(v.chi[i]);
}

Blob decode_slice(ByteReader& r) {
  const bool skipped = r.u8() != 0;
  const long lo = static_cast<long>(r.i64());
  const long n = static_cast<long>(r.u64());
  if (n < 0 || static_cast<std::size_t>(n) > r.remaining() / 24) raise(ErrorCode::decode, "bad slice length");
  Blob b = alloc_slice(lo, n, skipped);
  double* d = slice_values(b);
  for (long i = 0; i < 3 * n; ++i) d[i] = r.f64();
  return b;
}

struct SliceKey {
  std::uint64_t node;
  long lo, hi;
  bool operator==(const SliceKey&) const = default;
};

struct SliceKeyHash {
  std::size_t operator()(const SliceKey& k) const noexcept {
    std::uint64_t h = k.node * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.lo) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.hi) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

enum StopReason : std::uint8_t { stop_budget = 1, stop_blowup = 2, stop_error = 3 };

Gid sync_gid(std::uint64_t run, std::uint64_t tag) {
  return Gid{0, Gid::derived_bit | (run << 32) | tag, GidKind::semaphore};
}

struct Baseline {
  std::uint64_t parcels = 0, bytes = 0, duplicates = 0, gaps = 0, decode_errors = 0, failures = 0;
};

Baseline snapshot(const parcel::Locality& loc) {
  const auto c = loc.counters();
  return Baseline{c.parcels_sent, c.bytes_sent, c.duplicates, c.gaps, c.decode_errors, c.failures};
}

}  // namespace

struct Engine::Run {
  struct Waiter {
    std::shared_ptr<lco::DataflowCell> cell;
    std::uint32_t slot;
    long lo, hi;
  };
  struct Remote {
    LocalityId loc;
    long lo, hi;
  };
  struct Entry {
    std::shared_ptr<const Blob> out;
    std::vector<Waiter> waiters;
    std::vector<Remote> remotes;
  };
  struct Mirror {
    std::optional<Blob> value;
    std::vector<Waiter> waiters;
  };
  struct EpochSync {
    std::shared_ptr<CountdownCell> done;
    Gid gid;
    // set once the next epoch's hierarchy exists (1) or will not (0)
    std::shared_ptr<lco::FutureCell> next;
  };

  std::uint64_t id = 0;
  RunConfig cfg;
  parcel::Locality* loc = nullptr;
  LocalityId self = 0;
  std::size_t nloc = 1;
  Clock::time_point t0;
  int epoch_len = 8;
  Baseline base;
  std::atomic<bool> stopped{false};

  std::mutex mu;
  std::map<int, std::shared_ptr<const Structure>> structures;
  int next_epoch = 0;
  bool instantiating = false;
  std::unordered_map<std::uint64_t, Entry> store;
  std::unordered_map<SliceKey, Mirror, SliceKeyHash> mirrors;
  std::unordered_map<std::uint64_t, std::vector<std::shared_ptr<lco::DataflowCell>>> gated;  // by phase
  std::unordered_set<std::uint64_t> released;  // barrier phases opened so far, block field zero
  std::vector<StepRecord> log;
  std::uint64_t nodes_run = 0, nodes_skipped = 0;

  // locality 0
  std::map<int, EpochSync> sync;
  std::shared_ptr<CountdownCell> phase;
  std::string diagnostic;
  bool blew_up = false;
  bool budget_stop = false;
  bool errored = false;
  std::vector<double> boundaries;

  bool root() const noexcept { return self == 0; }

  LocalityId owner(std::uint64_t node) const noexcept {
    NodeKey k = unpack(node);
    if (k.kind == NodeKind::regrid) return 0;
    return static_cast<LocalityId>(static_cast<std::size_t>(k.block) % nloc);
  }

  bool budget_exceeded() const { return cfg.wall_budget > 0 && since(t0) > cfg.wall_budget; }
};

// Action handlers and node execution; everything here runs inside tasks.
struct Handlers {
  using Run = Engine::Run;
  using RunPtr = std::shared_ptr<Run>;

  static Engine& engine(parcel::ActionContext& ctx) {
    auto* e = static_cast<Engine*>(ctx.locality.app());
    if (!e) raise(ErrorCode::internal, "no engine on locality " + std::to_string(ctx.locality.id()));
    return *e;
  }

  // The active run if `id` names it.
  static RunPtr find(parcel::ActionContext& ctx, std::uint64_t id) {
    RunPtr r = engine(ctx).current();
    return r && r->id == id ? r : nullptr;
  }

  static ByteWriter header(const Run& run) {
    ByteWriter w;
    w.u64(run.id);
    return w;
  }

  static void send(Run& run, LocalityId to, std::uint32_t action, Blob args) {
    run.loc->apply(agas::locality_gid(to), action, std::move(args));
  }

  static void broadcast_others(Run& run, std::uint32_t action, const Blob& args) {
    for (LocalityId l = 0; l < run.nloc; ++l)
      if (l != run.self) send(run, l, action, args);
  }

  // ---- slice exchange ----

  static void subscribe(const RunPtr& run, std::uint64_t node, long lo, long hi,
                        const std::shared_ptr<lco::DataflowCell>& cell, std::uint32_t slot) {
    const LocalityId owner = run->owner(node);
    if (owner == run->self) {
      std::shared_ptr<const Blob> ready;
      {
        std::lock_guard lk(run->mu);
        auto& e = run->store[node];
        if (e.out)
          ready = e.out;
        else
          e.waiters.push_back(Run::Waiter{cell, slot, lo, hi});
      }
      if (ready) cell->write(slot, sub_slice(*ready, lo, hi));
      return;
    }
    std::optional<Blob> ready;
    bool request = false;
    {
      std::lock_guard lk(run->mu);
      auto& m = run->mirrors[SliceKey{node, lo, hi}];
      if (m.value) {
        ready = *m.value;
      } else {
        request = m.waiters.empty();
        m.waiters.push_back(Run::Waiter{cell, slot, lo, hi});
      }
    }
    if (ready) {
      cell->write(slot, std::move(*ready));
    } else if (request) {
      ByteWriter w = header(*run);
      w.u64(node);
      w.i64(lo);
      w.i64(hi);
      w.u32(run->self);
      send(*run, owner, actions::subscribe, std::move(w).take());
    }
  }

  static void send_output(Run& run, LocalityId to, std::uint64_t node, long lo, long hi, const Blob& full) {
    ByteWriter w = header(run);
    w.u64(node);
    w.i64(lo);
    w.i64(hi);
    encode_slice(w, sub_slice(full, lo, hi));
    send(run, to, actions::output, std::move(w).take());
  }

  static void publish(const RunPtr& run, std::uint64_t node, Blob out) {
    auto full = std::make_shared<const Blob>(std::move(out));
    std::vector<Run::Waiter> waiters;
    std::vector<Run::Remote> remotes;
    {
      std::lock_guard lk(run->mu);
      auto& e = run->store[node];
      e.out = full;
      waiters.swap(e.waiters);
      remotes.swap(e.remotes);
    }
    for (auto& w : waiters) w.cell->write(w.slot, sub_slice(*full, w.lo, w.hi));
    for (auto& r : remotes) send_output(*run, r.loc, node, r.lo, r.hi, *full);
  }

  static void on_subscribe(const RunPtr& run, ByteReader& r) {
    const std::uint64_t node = r.u64();
    const long lo = static_cast<long>(r.i64());
    const long hi = static_cast<long>(r.i64());
    const LocalityId from = r.u32();
    std::shared_ptr<const Blob> ready;
    {
      std::lock_guard lk(run->mu);
      auto& e = run->store[node];
      if (e.out)
        ready = e.out;
      else
        e.remotes.push_back(Run::Remote{from, lo, hi});
    }
    if (ready) send_output(*run, from, node, lo, hi, *ready);
  }

  static void on_output(const RunPtr& run, ByteReader& r) {
    const std::uint64_t node = r.u64();
    const long lo = static_cast<long>(r.i64());
    const long hi = static_cast<long>(r.i64());
    Blob slice = decode_slice(r);
    std::vector<Run::Waiter> waiters;
    {
      std::lock_guard lk(run->mu);
      auto& m = run->mirrors[SliceKey{node, lo, hi}];
      if (m.value) return;
      m.value = slice;
      waiters.swap(m.waiters);
    }
    for (auto& w : waiters) w.cell->write(w.slot, Blob(slice));
  }

  // ---- stop ----

  static void note_stop(Run& run, std::uint8_t reason, const std::string& what) {
    std::lock_guard lk(run.mu);
    if (reason == stop_budget) run.budget_stop = true;
    if (reason == stop_blowup) run.blew_up = true;
    if (reason == stop_error) run.errored = true;
    if (reason != stop_budget && run.diagnostic.empty()) run.diagnostic = what;
  }

  static void request_stop(Run& run, std::uint8_t reason, const std::string& what) {
    const bool first = !run.stopped.exchange(true);
    if (run.root()) {
      note_stop(run, reason, what);
      if (!first) return;
      ByteWriter w = header(run);
      w.u8(reason);
      w.str(what);
      broadcast_others(run, actions::stop, std::move(w).take());
      return;
    }
    ByteWriter w = header(run);
    w.u8(reason);
    w.str(what);
    send(run, 0, actions::stop, std::move(w).take());
  }

  // ---- graph construction ----

  static void signal_root(Run& run, const Gid& g) { run.loc->set_lco(g, Blob{}); }

  static void make_node(const RunPtr& run, const std::shared_ptr<const Structure>& s, NodePlan plan) {
    auto p = std::make_shared<const NodePlan>(std::move(plan));
    auto cell = std::make_shared<lco::DataflowCell>(
        1 + p->deps.size(),
        lco::spawning_continuation(run->loc->runtime(), [run, s, p](std::vector<Blob> in) {
          try {
            execute(run, *s, *p, std::move(in));
          } catch (const std::exception& e) {
            request_stop(*run, stop_error, std::string("node failed: ") + e.what());
            finish_node(run, *s, *p, false);
          }
        }));
    bool open = run->cfg.mode == Mode::dataflow || p->key.kind == NodeKind::regrid;
    if (!open) {
      std::lock_guard lk(run->mu);
      if (run->released.count(phase_of(p->key)))
        open = true;
      else
        run->gated[phase_of(p->key)].push_back(cell);
    }
    for (std::size_t d = 0; d < p->deps.size(); ++d)
      subscribe(run, p->deps[d].node, p->deps[d].lo, p->deps[d].hi, cell, static_cast<std::uint32_t>(d + 1));
    if (open) cell->write(0, Blob{});
  }

  static void instantiate(const RunPtr& run, const std::shared_ptr<const Structure>& s,
                          const std::shared_ptr<const Structure>& prev) {
    Planner pl(*s, prev.get());
    for (int k = 0; k < s->depth(); ++k) {
      for (const Block& b : s->levels[k].blocks) {
        if (static_cast<std::size_t>(b.index) % run->nloc != run->self) continue;
        make_node(run, s, pl.transfer(k, b.index));
        for (long st = s->start_step(k) + 1; st <= s->end_step(k); ++st) make_node(run, s, pl.step(k, b.index, st));
      }
    }
    if (run->root() && s->n_end < run->cfg.steps) make_node(run, s, pl.regrid());
  }

  // Instantiates epochs strictly in order, whatever order they arrive in.
  static void add_structure(const RunPtr& run, std::shared_ptr<const Structure> s) {
    {
      std::lock_guard lk(run->mu);
      run->structures[s->epoch] = std::move(s);
      if (run->instantiating) return;
      run->instantiating = true;
    }
    for (;;) {
      std::shared_ptr<const Structure> cur, prev;
      {
        std::lock_guard lk(run->mu);
        auto it = run->structures.find(run->next_epoch);
        if (it == run->structures.end()) {
          run->instantiating = false;
          return;
        }
        cur = it->second;
        if (run->next_epoch > 0) prev = run->structures.at(run->next_epoch - 1);
        ++run->next_epoch;
      }
      instantiate(run, cur, prev);
    }
  }

  static std::uint64_t phase_of(NodeKey k) {
    k.block = 0;
    return pack(k);
  }

  // Opens the gates of one level-step. Cells not made yet open on creation.
  static void on_release(const RunPtr& run, int epoch, NodeKind kind, int level, long step) {
    std::vector<std::shared_ptr<lco::DataflowCell>> open;
    {
      std::lock_guard lk(run->mu);
      const std::uint64_t phase = phase_of(NodeKey{epoch, kind, level, 0, step});
      run->released.insert(phase);
      auto g = run->gated.find(phase);
      if (g != run->gated.end()) {
        open = std::move(g->second);
        run->gated.erase(g);
      }
    }
    // Alternate the sweep direction so each phase starts on the blocks the
    // previous one touched last.
    if (step % 2 == 0) std::reverse(open.begin(), open.end());
    for (auto& c : open) c->write(0, Blob{});
  }

  static void retire(Run& run, int epoch) {
    const int tag = epoch & 0x7ff;
    std::lock_guard lk(run.mu);
    for (auto it = run.store.begin(); it != run.store.end();)
      it = epoch_of(it->first) == tag ? run.store.erase(it) : std::next(it);
    for (auto it = run.mirrors.begin(); it != run.mirrors.end();)
      it = epoch_of(it->first.node) == tag ? run.mirrors.erase(it) : std::next(it);
    for (auto it = run.released.begin(); it != run.released.end();)
      it = epoch_of(*it) == tag ? run.released.erase(it) : std::next(it);
  }

  // ---- execution ----

  static void gather(const NodePlan& p, const std::vector<SliceView>& views, Fields& u) {
    for (std::size_t q = 0; q < p.sources.size(); ++q) {
      const Source& src = p.sources[q];
      const Term& t0 = src.t[0];
      const SliceView& v0 = views[t0.dep + 1];
      if (src.n == 1) {
        u.chi[q] = v0.chi[t0.off];
        u.Phi[q] = v0.Phi[t0.off];
        u.Pi[q] = v0.Pi[t0.off];
        continue;
      }
      const Term& t1 = src.t[1];
      const Term& t2 = src.t[2];
      const SliceView& v1 = views[t1.dep + 1];
      const SliceView& v2 = views[t2.dep + 1];
      u.chi[q] = t0.w * v0.chi[t0.off] + t1.w * v1.chi[t1.off] + t2.w * v2.chi[t2.off];
      u.Phi[q] = t0.w * v0.Phi[t0.off] + t1.w * v1.Phi[t1.off] + t2.w * v2.Phi[t2.off];
      u.Pi[q] = t0.w * v0.Pi[t0.off] + t1.w * v1.Pi[t1.off] + t2.w * v2.Pi[t2.off];
    }
  }

  static void execute(const RunPtr& run, const Structure& s, const NodePlan& p, std::vector<Blob> in) {
    if (p.key.kind == NodeKind::regrid) {
      regrid(run, s, p, in);
      return;
    }
    std::vector<SliceView> views;
    views.reserve(in.size());
    bool skip = run->stopped.load();
    for (const Blob& b : in) {
      views.emplace_back(b);
      skip = skip || views.back().skipped;
    }
    if (!skip && run->budget_exceeded()) {
      request_stop(*run, stop_budget, "wall budget reached");
      skip = true;
    }
    const int k = p.key.level;
    const Level& L = s.levels[k];
    Fields out;
    if (!skip) {
      if (p.key.kind == NodeKind::transfer) {
        const auto n = static_cast<std::size_t>(p.out_hi - p.out_lo);
        if (p.sources.empty()) {
          out = initial_data(run->cfg.physics, L.dr, p.out_lo, n);
        } else {
          out.resize(n);
          gather(p, views, out);
        }
      } else {
        Fields u(static_cast<std::size_t>(p.win_hi - p.win_lo));
        gather(p, views, u);
        Window w{L.dr, p.win_lo, p.win_hi == L.npoints ? L.npoints : 0};
        out = rk3_window(run->cfg.physics, w, run->cfg.physics.cfl * L.dr, u,
                         static_cast<std::size_t>(p.out_lo - p.win_lo), static_cast<std::size_t>(p.out_hi - p.win_lo));
      }
      if (!out.finite()) {
        const Block& b = L.blocks[p.key.block];
        request_stop(*run, stop_blowup,
                     "non-finite values at level " + std::to_string(k) + " block " + std::to_string(b.index) +
                         " (r in [" + std::to_string(b.lo * L.dr) + ", " + std::to_string((b.hi - 1) * L.dr) +
                         "]) step " + std::to_string(p.key.step) + "; last good step " +
                         std::to_string(p.key.step - 1));
        skip = true;
      }
    }
    finish_node(run, s, p, !skip, skip ? skipped_slice() : fields_slice(out, p.out_lo));
  }

  // Publishes the node's output, logs it and signals locality 0.
  static void finish_node(const RunPtr& run, const Structure& s, const NodePlan& p, bool ran, Blob out = {}) {
    if (p.key.kind == NodeKind::regrid) {
      Run::EpochSync* here;
      {
        std::lock_guard lk(run->mu);
        here = &run->sync.at(s.epoch);
      }
      if (!here->next->ready()) here->next->set(u64_blob(0));
      return;
    }
    StepRecord rec;
    const bool logged = ran && p.key.kind == NodeKind::step;
    if (logged) {
      const Block& b = s.levels[p.key.level].blocks[p.key.block];
      rec = StepRecord{since(run->t0), s.epoch, p.key.level, b.index, b.lo, b.hi, p.key.step, run->self};
    }
    {
      std::lock_guard lk(run->mu);
      if (logged) run->log.push_back(rec);
      (ran ? run->nodes_run : run->nodes_skipped)++;
    }
    publish(run, p.id, ran ? std::move(out) : skipped_slice());
    if (p.end_node) signal_root(*run, sync_gid(run->id, 1 + static_cast<std::uint64_t>(s.epoch)));
    if (run->cfg.mode == Mode::barrier) signal_root(*run, sync_gid(run->id, 0));
  }

  // Chi on level k of the new hierarchy, from the epoch-start data of `cur`
  // (interpolated from the parent where the old level did not reach).
  struct Sampler {
    const Structure& cur;
    std::vector<std::vector<double>> chi;
    std::vector<std::vector<char>> have;

    double operator()(int k, long i) const {
      if (k < cur.depth() && i >= 0 && i < static_cast<long>(chi[k].size()) && have[k][i]) return chi[k][i];
      if (k == 0) raise(ErrorCode::internal, "base sample missing at " + std::to_string(i));
      if (i % 2 == 0) return (*this)(k - 1, i / 2);
      const long j0 = (i - 1) / 2;
      return prolong_right[0] * (*this)(k - 1, j0) + prolong_right[1] * (*this)(k - 1, j0 + 1) +
             prolong_right[2] * (*this)(k - 1, j0 + 2);
    }
  };

  static void regrid(const RunPtr& run, const Structure& cur, const NodePlan& p, const std::vector<Blob>& in) {
    Run::EpochSync* here;
    {
      std::lock_guard lk(run->mu);
      here = &run->sync.at(cur.epoch);
    }
    bool skip = run->stopped.load();
    for (const Blob& b : in) skip = skip || SliceView(b).skipped;
    if (skip) {
      here->next->set(u64_blob(0));
      return;
    }
    Sampler smp{cur, {}, {}};
    for (int k = 0; k < cur.depth(); ++k) {
      smp.chi.emplace_back(static_cast<std::size_t>(cur.levels[k].npoints));
      smp.have.emplace_back(static_cast<std::size_t>(cur.levels[k].npoints), 0);
    }
    for (std::size_t d = 0; d < p.deps.size(); ++d) {
      SliceView v(in[d + 1]);
      const int k = unpack(p.deps[d].node).level;
      for (long i = 0; i < v.n; ++i) {
        smp.chi[k][v.lo + i] = v.chi[i];
        smp.have[k][v.lo + i] = 1;
      }
    }
    const int nb = cur.n_end;
    const int ne = std::min(cur.n_end + run->epoch_len, run->cfg.steps);
    std::shared_ptr<const Structure> next;
    try {
      if (run->cfg.regrid_interval > 0) {
        next = std::make_shared<const Structure>(build_structure(run->cfg, cur.epoch + 1, nb, ne, std::cref(smp)));
      } else {
        std::vector<std::vector<std::pair<long, long>>> patches;
        for (const Level& l : cur.levels) {
          patches.emplace_back();
          for (const Patch& q : l.patches) patches.back().emplace_back(q.lo, q.hi);
        }
        next = std::make_shared<const Structure>(assemble(run->cfg, cur.epoch + 1, nb, ne, patches));
      }
    } catch (const Error& e) {
      request_stop(*run, stop_error, e.what());
      here->next->set(u64_blob(0));
      return;
    }
    open_epoch(*run, *next);
    ByteWriter w = header(*run);
    w.blob(next->encode());
    broadcast_others(*run, actions::structure, std::move(w).take());
    add_structure(run, next);
    here->next->set(u64_blob(1));
  }

  // Root: sync objects for an epoch, made before anyone can signal them.
  static void open_epoch(Run& run, const Structure& s) {
    Run::EpochSync es;
    es.done = std::make_shared<CountdownCell>();
    es.done->arm(s.block_count());
    es.gid = sync_gid(run.id, 1 + static_cast<std::uint64_t>(s.epoch));
    es.next = std::make_shared<lco::FutureCell>();
    run.loc->agas().bind_derived(es.gid, agas::LocalRef{es.done, es.done.get()});
    if (s.n_end >= run.cfg.steps) es.next->set(u64_blob(0));
    std::lock_guard lk(run.mu);
    run.sync[s.epoch] = std::move(es);
  }

  // ---- driver (locality 0) ----

  static void release(const RunPtr& run, int epoch, NodeKind kind, int level, long step, std::size_t count) {
    if (run->budget_exceeded() && !run->stopped) request_stop(*run, stop_budget, "wall budget reached");
    ByteWriter w = header(*run);
    w.u32(static_cast<std::uint32_t>(epoch));
    w.u8(static_cast<std::uint8_t>(kind));
    w.u32(static_cast<std::uint32_t>(level));
    w.i64(step);
    run->phase->arm(count);
    broadcast_others(*run, actions::release, std::move(w).take());
    on_release(run, epoch, kind, level, step);
    run->phase->wait();
  }

  static void advance(const RunPtr& run, const Structure& s, int k, long step) {
    release(run, s.epoch, NodeKind::step, k, step, s.levels[k].blocks.size());
    if (k + 1 < s.depth()) {
      advance(run, s, k + 1, 2 * step - 1);
      advance(run, s, k + 1, 2 * step);
    }
  }

  static std::vector<StateRow> final_state(const RunPtr& run, const std::shared_ptr<const Structure>& s,
                                           const std::shared_ptr<const Structure>& prev) {
    NodePlan p = Planner(*s, prev.get()).final_gather();
    auto done = std::make_shared<lco::FutureCell>();
    auto inputs = std::make_shared<std::vector<Blob>>();
    auto cell = std::make_shared<lco::DataflowCell>(p.deps.size(), [done, inputs](std::vector<Blob> in) {
      *inputs = std::move(in);
      done->set(Blob{});
    });
    for (std::size_t d = 0; d < p.deps.size(); ++d)
      subscribe(run, p.deps[d].node, p.deps[d].lo, p.deps[d].hi, cell, static_cast<std::uint32_t>(d));
    done->get();
    std::vector<SliceView> views;
    views.emplace_back(Blob{});  // gather() expects input 0 to be the gate
    for (const Blob& b : *inputs) {
      views.emplace_back(b);
      if (views.back().skipped) return {};
    }
    Fields u(p.sources.size());
    gather(p, views, u);
    std::vector<StateRow> rows;
    rows.reserve(p.sources.size());
    std::size_t q = 0;
    for (int k = 0; k < s->depth(); ++k)
      for (const Block& b : s->levels[k].blocks)
        for (long i = b.lo; i < b.hi; ++i) {
          if (k + 1 < s->depth() && s->covered(k, i)) continue;
          rows.push_back(StateRow{static_cast<double>(i) * s->levels[k].dr, u.chi[q], u.Phi[q], u.Pi[q], k});
          ++q;
        }
    std::stable_sort(rows.begin(), rows.end(), [](const StateRow& a, const StateRow& b) {
      return a.r < b.r || (a.r == b.r && a.level < b.level);
    });
    return rows;
  }

  static void drive(const RunPtr& run, RunResult& res) {
    const RunConfig& cfg = run->cfg;
    run->phase = std::make_shared<CountdownCell>();
    run->loc->agas().bind_derived(sync_gid(run->id, 0), agas::LocalRef{run->phase, run->phase.get()});

    auto analytic = [&](int k, long i) {
      const double dr = cfg.dr0() / static_cast<double>(1L << k);
      return initial_point(cfg.physics, static_cast<double>(i) * dr).chi;
    };
    const int ne0 = std::min(run->epoch_len, cfg.steps);
    auto s0 = std::make_shared<const Structure>(build_structure(cfg, 0, 0, ne0, analytic));
    open_epoch(*run, *s0);
    {
      ByteWriter w = header(*run);
      w.blob(s0->encode());
      broadcast_others(*run, actions::structure, std::move(w).take());
    }
    add_structure(run, s0);

    int e = 0;
    std::shared_ptr<const Structure> cur = s0, prev;
    for (;;) {
      if (cfg.mode == Mode::barrier) {
        for (int k = 0; k < cur->depth(); ++k)
          release(run, e, NodeKind::transfer, k, cur->start_step(k), cur->levels[k].blocks.size());
        for (int n = cur->n_begin; n < cur->n_end; ++n) {
          advance(run, *cur, 0, n + 1);
          std::lock_guard lk(run->mu);
          run->boundaries.push_back(since(run->t0));
        }
      }
      Run::EpochSync* es;
      {
        std::lock_guard lk(run->mu);
        es = &run->sync.at(e);
      }
      es->done->wait();
      if (!run->stopped) res.coarse_steps = cur->n_end;
      const bool more = blob_u64(es->next->get()) != 0;
      if (!more) break;
      if (e >= 1) {
        ByteWriter w = header(*run);
        w.u32(static_cast<std::uint32_t>(e - 1));
        broadcast_others(*run, actions::retire, std::move(w).take());
        retire(*run, e - 1);
      }
      ++e;
      prev = cur;
      {
        std::lock_guard lk(run->mu);
        cur = run->structures.at(e);
      }
    }
    res.completed = !run->stopped && res.coarse_steps == cfg.steps;
    if (res.completed) res.state = final_state(run, cur, prev);
  }

  // ---- reports ----

  static void encode_report(Run& run, ByteWriter& w, bool with_log = true) {
    std::lock_guard lk(run.mu);
    const Baseline now = snapshot(*run.loc);
    w.u64(run.nodes_run);
    w.u64(run.nodes_skipped);
    w.u64(now.parcels - run.base.parcels);
    w.u64(now.bytes - run.base.bytes);
    w.u64(now.duplicates - run.base.duplicates);
    w.u64(now.gaps - run.base.gaps);
    w.u64(now.decode_errors - run.base.decode_errors);
    w.u64(now.failures - run.base.failures);
    w.u64(with_log ? run.log.size() : 0);
    for (const auto& r : with_log ? run.log : std::vector<StepRecord>{}) {
      w.f64(r.t);
      w.u32(static_cast<std::uint32_t>(r.epoch));
      w.u32(static_cast<std::uint32_t>(r.level));
      w.u32(static_cast<std::uint32_t>(r.block));
      w.i64(r.lo);
      w.i64(r.hi);
      w.i64(r.step);
    }
  }

  static void merge_report(RunResult& res, ByteView b, LocalityId from) {
    ByteReader r(b);
    res.nodes_run += r.u64();
    res.nodes_skipped += r.u64();
    res.parcels_sent += r.u64();
    res.bytes_sent += r.u64();
    res.duplicates += r.u64();
    res.gaps += r.u64();
    res.decode_errors += r.u64();
    res.failures += r.u64();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      StepRecord rec;
      rec.t = r.f64();
      rec.epoch = static_cast<int>(r.u32());
      rec.level = static_cast<int>(r.u32());
      rec.block = static_cast<int>(r.u32());
      rec.lo = static_cast<long>(r.i64());
      rec.hi = static_cast<long>(r.i64());
      rec.step = static_cast<long>(r.i64());
      rec.where = from;
      res.log.push_back(rec);
    }
  }

  // ---- action entry points ----

  static std::optional<Blob> on_start(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    const std::uint64_t id = r.u64();
    RunConfig cfg = parse_text(r.str());
    auto run = std::make_shared<Run>();
    run->id = id;
    run->cfg = std::move(cfg);
    run->loc = &ctx.locality;
    run->self = ctx.locality.id();
    run->nloc = ctx.locality.size();
    run->epoch_len = run->cfg.regrid_interval > 0 ? run->cfg.regrid_interval : 16;
    run->base = snapshot(ctx.locality);
    run->t0 = Clock::now();
    Engine& e = engine(ctx);
    {
      std::lock_guard lk(e.mu_);
      e.run_ = run;
    }
    return Blob{};
  }

  static std::optional<Blob> on_structure(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    RunPtr run = find(ctx, r.u64());
    if (!run) return std::nullopt;
    auto s = std::make_shared<const Structure>(Structure::decode(r.blob(), run->cfg.dr0()));
    add_structure(run, std::move(s));
    return std::nullopt;
  }

  static std::optional<Blob> on_subscribe_action(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    if (RunPtr run = find(ctx, r.u64())) on_subscribe(run, r);
    return std::nullopt;
  }

  static std::optional<Blob> on_output_action(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    if (RunPtr run = find(ctx, r.u64())) on_output(run, r);
    return std::nullopt;
  }

  static std::optional<Blob> on_release_action(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    RunPtr run = find(ctx, r.u64());
    if (!run) return std::nullopt;
    const int epoch = static_cast<int>(r.u32());
    const auto kind = static_cast<NodeKind>(r.u8());
    const int level = static_cast<int>(r.u32());
    const long step = static_cast<long>(r.i64());
    on_release(run, epoch, kind, level, step);
    return std::nullopt;
  }

  static std::optional<Blob> on_stop(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    RunPtr run = find(ctx, r.u64());
    if (!run) return std::nullopt;
    const std::uint8_t reason = r.u8();
    const std::string what = r.str();
    if (run->root())
      request_stop(*run, reason, what);
    else
      run->stopped = true;
    return std::nullopt;
  }

  static std::optional<Blob> on_collect(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    RunPtr run = find(ctx, r.u64());
    ByteWriter w;
    if (!run) raise(ErrorCode::internal, "collect for an unknown run");
    encode_report(*run, w);
    return std::move(w).take();
  }

  static std::optional<Blob> on_retire(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    if (RunPtr run = find(ctx, r.u64())) retire(*run, static_cast<int>(r.u32()));
    return std::nullopt;
  }

  static void clear(Run& run) {
    std::lock_guard lk(run.mu);
    run.store.clear();
    run.mirrors.clear();
    run.gated.clear();
    run.released.clear();
  }

  static std::optional<Blob> on_finish(parcel::ActionContext& ctx, Blob args) {
    ByteReader r(args);
    const std::uint64_t id = r.u64();
    Engine& e = engine(ctx);
    RunPtr run;
    {
      std::lock_guard lk(e.mu_);
      if (e.run_ && e.run_->id == id) run.swap(e.run_);
    }
    if (run) clear(*run);
    return Blob{};
  }

  static std::optional<Blob> on_shutdown(parcel::ActionContext& ctx, Blob) {
    Engine& e = engine(ctx);
    std::shared_ptr<lco::FutureCell> f;
    {
      std::lock_guard lk(e.mu_);
      f = std::static_pointer_cast<lco::FutureCell>(e.shutdown_);
    }
    if (!f->ready()) f->set(Blob{});
    return Blob{};
  }

  // Sends `args` to `to` and waits for the action's reply.
  static Blob call(parcel::Locality& loc, LocalityId to, std::uint32_t action, Blob args) {
    auto [gid, fut] = loc.reply_future();
    loc.apply(agas::locality_gid(to), action, std::move(args), gid);
    Blob v = fut->get();
    loc.agas().unregister(gid);
    return v;
  }
};

Engine::Engine(parcel::Locality& loc) : loc_(loc), shutdown_(std::make_shared<lco::FutureCell>()) {
  loc_.set_app(this);
}

Engine::~Engine() { loc_.set_app(nullptr); }

std::shared_ptr<Engine::Run> Engine::current() const {
  std::lock_guard lk(mu_);
  return run_;
}

void Engine::add_actions(parcel::ActionRegistry& reg) {
  reg.add(actions::start, "amr.start", &Handlers::on_start);
  reg.add(actions::structure, "amr.structure", &Handlers::on_structure);
  reg.add(actions::subscribe, "amr.subscribe", &Handlers::on_subscribe_action);
  reg.add(actions::output, "amr.output", &Handlers::on_output_action);
  reg.add(actions::release, "amr.release", &Handlers::on_release_action);
  reg.add(actions::stop, "amr.stop", &Handlers::on_stop);
  reg.add(actions::collect, "amr.collect", &Handlers::on_collect);
  reg.add(actions::retire, "amr.retire", &Handlers::on_retire);
  reg.add(actions::finish, "amr.finish", &Handlers::on_finish);
  reg.add(actions::shutdown, "amr.shutdown", &Handlers::on_shutdown);
}

RunResult Engine::run(const RunConfig& cfg) {
  cfg.validate();
  if (loc_.id() != 0) raise(ErrorCode::invalid_argument, "runs are driven from locality 0");
  if (cfg.locality_count() != loc_.size())
    raise(ErrorCode::config, "config names " + std::to_string(cfg.locality_count()) + " localities, cluster has " +
                                 std::to_string(loc_.size()));
  auto run = std::make_shared<Run>();
  {
    std::lock_guard lk(mu_);
    if (run_) raise(ErrorCode::invalid_argument, "a run is already active");
    run->id = next_run_++;
    run_ = run;
  }
  run->cfg = cfg;
  run->loc = &loc_;
  run->self = 0;
  run->nloc = loc_.size();
  run->epoch_len = cfg.regrid_interval > 0 ? cfg.regrid_interval : 16;
  run->base = snapshot(loc_);

  const std::string text = cfg.to_text();
  for (LocalityId l = 1; l < run->nloc; ++l) {
    ByteWriter w;
    w.u64(run->id);
    w.str(text);
    Handlers::call(loc_, l, actions::start, std::move(w).take());
  }

  RunResult res;
  std::optional<Error> failure;
  auto done = std::make_shared<lco::FutureCell>();
  run->t0 = Clock::now();
  loc_.runtime().spawn([&, run, done] {
    try {
      Handlers::drive(run, res);
    } catch (const Error& e) {
      failure.emplace(e);
    } catch (const std::exception& e) {
      failure.emplace(ErrorCode::internal, e.what());
    }
    done->set(Blob{});
  });
  done->get();
  res.wall_s = since(run->t0);

  {
    std::lock_guard lk(run->mu);
    res.log = run->log;
    for (auto& [e, s] : run->structures) res.structures.push_back(*s);
    res.coarse_boundaries = run->boundaries;
    res.blew_up = run->blew_up;
    res.budget_stop = run->budget_stop;
    res.diagnostic = run->diagnostic;
  }
  {
    ByteWriter w;
    Handlers::encode_report(*run, w, false);
    Handlers::merge_report(res, w.view(), 0);
  }
  for (LocalityId l = 1; l < run->nloc; ++l) {
    ByteWriter w;
    w.u64(run->id);
    Blob rep = Handlers::call(loc_, l, actions::collect, std::move(w).take());
    Handlers::merge_report(res, rep, l);
  }
  for (LocalityId l = 1; l < run->nloc; ++l) {
    ByteWriter w;
    w.u64(run->id);
    Handlers::call(loc_, l, actions::finish, std::move(w).take());
  }
  loc_.agas().unregister(sync_gid(run->id, 0));
  for (auto& [e, s] : run->sync) loc_.agas().unregister(s.gid);
  Handlers::clear(*run);
  {
    std::lock_guard lk(mu_);
    run_.reset();
  }
  std::stable_sort(res.log.begin(), res.log.end(), [](const StepRecord& a, const StepRecord& b) { return a.t < b.t; });
  if (failure) throw *failure;
  if (run->errored) raise(ErrorCode::internal, res.diagnostic);
  return res;
}

void Engine::shutdown_peers() {
  for (LocalityId l = 1; l < loc_.size(); ++l) Handlers::call(loc_, l, actions::shutdown, Blob{});
}

void Engine::wait_shutdown() { std::static_pointer_cast<lco::FutureCell>(shutdown_)->get(); }

}  // namespace mpx::amr
