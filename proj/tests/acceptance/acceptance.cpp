// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion with the measured values.
// Exits 0 once every criterion has been evaluated; --strict exits 1 if any
// criterion failed. --only AC4,AC9 restricts the run.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mpx/amr/physics.hpp"
#include "mpx/harness/harness.hpp"
#include "mpx/lco/lco.hpp"
#include "mpx/lco/model_check.hpp"
#include "mpx/parcel/frame.hpp"

using namespace mpx;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;
using harness::fmt;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& id, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  if (s > limit_s) {
    v.pass = false;
    v.detail += "; over the time limit";
  }
  if (!v.pass) ++failures;
  std::printf("%s %s %s (%.1f s of %.0f s)\n", id.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str(), s, limit_s);
  std::fflush(stdout);
}

// ---- AC1 ----

Verdict unigrid_equivalence() {
  amr::RunConfig cfg;
  cfg.levels = 0;
  cfg.steps = 100;
  cfg.base_points = 2001;
  amr::LocalCluster c(1, 1);
  amr::RunResult r = c.run(cfg);
  if (!r.completed) return {false, "run did not complete"};

  const int n = cfg.base_points;
  const double dr = cfg.dr0();
  amr::Fields u = amr::initial_data(cfg.physics, dr, 0, static_cast<std::size_t>(n));
  for (int s = 0; s < cfg.steps; ++s)
    u = amr::rk3_window(cfg.physics, amr::Window{dr, 0, n}, cfg.physics.cfl * dr, u, 0, static_cast<std::size_t>(n));

  if (r.state.size() != static_cast<std::size_t>(n)) return {false, "point count " + std::to_string(r.state.size())};
  std::size_t differ = 0;
  for (int i = 0; i < n; ++i) {
    const auto& row = r.state[i];
    if (row.chi != u.chi[i] || row.Phi != u.Phi[i] || row.Pi != u.Pi[i]) ++differ;
  }
  return {differ == 0, "levels=0 vs plain RK3 loop, 100 steps, 2001 points: " + std::to_string(differ) +
                           " points differ bitwise"};
}

// ---- AC2, AC3 ----

Verdict convergence_order(harness::ConvergenceReport& c) {
  c = harness::convergence_suite();
  return {std::fabs(c.order - 2.0) <= 0.2, "self-convergence order " + fmt(c.order) + " (|d1|=" + fmt(c.diffs[0]) +
                                               ", |d2|=" + fmt(c.diffs[1]) + "), expected 2.0 +- 0.2"};
}

Verdict rk3_scalar() {
  const double h = 0.1;
  const double y = amr::rk3_scalar(1.0, h, [](double v) { return -v; });
  // Exact one-step map of a three-stage third-order scheme on y' = -y.
  const double oracle = 1.0 - h + h * h / 2.0 - h * h * h / 6.0;
  const double err = std::fabs(y - oracle);
  return {err <= 1e-12, "y1=" + fmt(y) + " oracle=" + fmt(oracle) + " |diff|=" + fmt(err) + " (limit 1e-12)"};
}

// ---- AC4 ----

Verdict mode_equivalence() {
  double worst = 0;
  std::string where;
  int runs = 0;
  for (unsigned w : {1u, 2u, 4u, 8u}) {
    amr::LocalCluster c(1, w);
    for (int levels : {0, 1, 2})
      for (int g : {1, 8, 64}) {
        amr::RunConfig cfg;
        cfg.levels = levels;
        cfg.grain = g;
        cfg.steps = 100;
        cfg.mode = amr::Mode::barrier;
        amr::RunResult b = c.run(cfg);
        cfg.mode = amr::Mode::dataflow;
        amr::RunResult d = c.run(cfg);
        if (!b.completed || !d.completed)
          return {false, "incomplete run at workers=" + std::to_string(w) + " levels=" + std::to_string(levels) +
                             " grain=" + std::to_string(g)};
        const double diff = harness::max_state_diff(b.state, d.state);
        if (diff > worst || where.empty()) {
          worst = std::max(worst, diff);
          where = "workers=" + std::to_string(w) + " levels=" + std::to_string(levels) + " grain=" + std::to_string(g);
        }
        runs += 2;
      }
  }
  return {worst <= 1e-12, std::to_string(runs) + " runs, max |barrier - dataflow| = " + fmt(worst) + " at " + where +
                              " (limit 1e-12)"};
}

// ---- AC5 ----

Verdict causality_cone() {
  std::mt19937_64 rng(20260101);
  const unsigned workers[] = {1, 2, 3, 4, 8};
  const int grains[] = {2, 4, 8, 16, 32, 64};
  std::size_t checks = 0, violations = 0;
  std::string first;
  for (int i = 0; i < 20; ++i) {
    amr::RunConfig cfg;
    cfg.levels = 2;
    cfg.steps = 40;
    cfg.grain = grains[rng() % 6];
    cfg.seed = 1 + rng() % 1000000;
    const unsigned w = workers[rng() % 5];
    amr::LocalCluster c(1, w, rt::Policy::local_priority_stealing, cfg.seed);
    amr::RunResult r = c.run(cfg);
    if (!r.completed) return {false, "run " + std::to_string(i) + " did not complete"};
    amr::ConeReport rep = amr::check_cone(r);
    checks += rep.checks;
    violations += rep.violations;
    if (rep.violations && first.empty()) first = rep.first;
  }
  return {violations == 0 && checks > 0, "20 dataflow runs, " + std::to_string(checks) + " neighbour checks, " +
                                             std::to_string(violations) + " violations" +
                                             (first.empty() ? "" : " first: " + first)};
}

// ---- AC6 ----

Verdict barrier_removal() {
  amr::RunConfig cfg;
  cfg.levels = 2;
  cfg.steps = 100;
  harness::CompareRow four = harness::compare_modes(cfg, 4, 5);
  harness::CompareRow one = harness::compare_modes(cfg, 1, 5);
  const bool ok4 = four.dataflow_median <= four.barrier_median;
  const bool ok1 = std::fabs(one.ratio - 1.0) <= 0.05;
  return {ok4 && ok1, "workers=4 levels=2 dataflow/barrier median " + fmt(four.dataflow_median) + "/" +
                          fmt(four.barrier_median) + " = " + fmt(four.ratio) + " (need <= 1); workers=1 ratio " +
                          fmt(one.ratio) + " (need 1 +- 0.05)"};
}

// ---- AC7 ----

Verdict task_overhead() {
  harness::TaskBench zero = harness::bench_tasks(1, 1000000, harness::Workload::none, 0);
  const std::size_t n = 20000;
  harness::TaskBench w1 = harness::bench_tasks(1, n, harness::Workload::wait, 115);
  harness::TaskBench w8 = harness::bench_tasks(8, n, harness::Workload::wait, 115);
  harness::TaskBench s1 = harness::bench_tasks(1, n, harness::Workload::spin, 115);
  harness::TaskBench s8 = harness::bench_tasks(8, n, harness::Workload::spin, 115);
  const double speedup = w1.wall_s / w8.wall_s;
  const double spin_speedup = s1.wall_s / s8.wall_s;
  const unsigned cores = std::thread::hardware_concurrency();
  return {zero.overhead_us <= 20 && speedup >= 5,
          "zero-work overhead " + fmt(zero.overhead_us) + " us/task (limit 20); 115 us wait workload speedup 8 vs 1 "
          "workers " + fmt(speedup) + " (need >= 5); busy-spin workload speedup " + fmt(spin_speedup) + " on " +
              std::to_string(cores) + " hardware threads"};
}

// ---- AC8 ----

Verdict granularity() {
  amr::RunConfig cfg;
  cfg.levels = 2;
  cfg.steps = 20;
  std::vector<int> grains;
  for (int g = 1; g <= 256; g *= 2) grains.push_back(g);
  auto rows = harness::grain_sweep(cfg, {2, 4, 8}, grains, 3);
  auto sums = harness::summarize(rows);
  bool interior = true;
  int lo = 0, hi = 0;
  std::string detail;
  for (const auto& s : sums) {
    interior = interior && s.interior;
    lo = lo ? std::min(lo, s.argmin) : s.argmin;
    hi = std::max(hi, s.argmin);
    detail += "workers=" + std::to_string(s.workers) + " argmin g=" + std::to_string(s.argmin) +
              (s.interior ? " interior; " : " at the edge; ");
  }
  const double spread = static_cast<double>(hi) / lo;
  return {interior && spread <= 4, detail + "argmin spread " + fmt(spread) + "x (limit 4x); " +
                                       std::to_string(std::thread::hardware_concurrency()) + " hardware threads"};
}

// ---- AC9 ----

std::uint16_t free_port() {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  a.sin_port = 0;
  socklen_t len = sizeof a;
  if (fd < 0 || ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0 ||
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len) != 0)
    throw std::runtime_error("cannot find a free port");
  ::close(fd);
  return ntohs(a.sin_port);
}

std::map<std::string, std::string> read_metrics(const std::string& path) {
  std::map<std::string, std::string> m;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::vector<std::vector<double>> rows;
  std::ifstream in(path);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

Verdict round_trips() {
  std::mt19937_64 rng(4242);
  int bad = 0;
  for (int i = 0; i < 100000; ++i) {
    parcel::Parcel p;
    p.dest = Gid{static_cast<LocalityId>(rng()), rng(), static_cast<GidKind>(rng() % 9)};
    p.action = static_cast<std::uint32_t>(rng());
    if (rng() % 2) p.continuation = Gid{static_cast<LocalityId>(rng()), rng(), static_cast<GidKind>(rng() % 9)};
    p.source = static_cast<LocalityId>(rng());
    p.generation = rng();
    p.args.resize(rng() % 256);
    for (auto& b : p.args) b = std::byte(rng() & 0xff);
    const auto seq = static_cast<std::uint32_t>(rng());
    Blob f = parcel::encode_frame(p, seq);
    parcel::Frame back = parcel::decode_frame(f);
    if (!(back.parcel == p) || back.link_seq != seq || parcel::encode_frame(back.parcel, seq) != f) ++bad;
  }
  return {bad == 0, std::to_string(bad) + " of 100000 round trips differ"};
}

Verdict parcel_layer() {
  Verdict codec = round_trips();
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("mpx_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string base = "levels=2\nsteps=100\ngrain=8\nmode=barrier\nworkers=2\n";
  {
    std::ofstream(dir / "one.cfg") << base;
    std::ofstream two(dir / "two.cfg");
    two << base << "locality0=127.0.0.1:" << free_port() << "\nlocality1=127.0.0.1:" << free_port() << "\n";
  }
  auto run = [&](const std::string& name) {
    const std::string cmd = std::string("\"") + MPX_CLI_PATH + "\" evolve --config \"" + (dir / (name + ".cfg")).string() +
                            "\" --out \"" + (dir / name).string() + "\" > \"" + (dir / (name + ".txt")).string() +
                            "\" 2>&1";
    return std::system(cmd.c_str());
  };
  const int rc1 = run("one");
  const int rc2 = run("two");
  if (rc1 != 0 || rc2 != 0)
    return {false, "cli exit status one=" + std::to_string(rc1) + " two=" + std::to_string(rc2)};
  auto a = read_csv((dir / "one" / "state.csv").string());
  auto b = read_csv((dir / "two" / "state.csv").string());
  double diff = a.size() == b.size() && !a.empty() ? 0 : INFINITY;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) diff = std::max(diff, std::fabs(a[i][j] - b[i][j]));
  auto m = read_metrics((dir / "two.txt").string());
  const bool clean = m["duplicates"] == "0" && m["gaps"] == "0" && m["decode_errors"] == "0" &&
                     m["transport_failures"] == "0" && m["parcels_sent"] != "0" && !m["parcels_sent"].empty();
  fs::remove_all(dir);
  return {codec.pass && diff <= 1e-12 && clean,
          codec.detail + "; 2-locality TCP barrier run vs 1-locality: " + std::to_string(b.size()) +
              " rows, max diff " + fmt(diff) + " (limit 1e-12); parcels " + m["parcels_sent"] + ", bytes " +
              m["bytes_sent"] + ", duplicates " + m["duplicates"] + ", gaps " + m["gaps"] + ", decode errors " +
              m["decode_errors"] + ", failures " + m["transport_failures"]};
}

// ---- AC10 ----

Verdict lco_suite() {
  std::vector<std::string> bad;

  std::mt19937 rng(10);
  int misfires = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t arity = 1 + rng() % 16;
    int fires = 0;
    lco::DataflowCell d(arity, [&](std::vector<Blob> in) {
      ++fires;
      for (std::size_t i = 0; i < in.size(); ++i) misfires += lco::as_u64(in[i]) != i;
    });
    std::vector<std::size_t> order(arity);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < arity; ++i) {
      d.write(order[i], lco::u64_value(order[i]));
      misfires += i + 1 < arity && fires != 0;
    }
    misfires += fires != 1;
  }
  if (misfires) bad.push_back(std::to_string(misfires) + " dataflow misfires");

  {
    lco::FutureCell f;
    f.set(lco::u64_value(1));
    bool threw = false;
    try {
      f.set(lco::u64_value(2));
    } catch (const Error& e) {
      threw = e.code() == ErrorCode::double_set;
    }
    if (!threw || lco::as_u64(f.get()) != 1 || f.set_count() != 1) bad.push_back("future accepted a second write");
  }

  {
    rt::SchedulerConfig sc;
    sc.workers = 8;
    rt::Runtime rt(sc);
    lco::SemaphoreCell s(0);
    std::atomic<int> passed{0};
    for (int i = 0; i < 5000; ++i) {
      rt.spawn([&] {
        s.wait();
        ++passed;
      });
      rt.spawn([&] { s.signal(); });
    }
    lco::MutexCell m;
    long counter = 0;
    for (int i = 0; i < 100; ++i)
      rt.spawn([&] {
        for (int k = 0; k < 100; ++k) {
          m.lock();
          long v = counter;
          if (k % 10 == 0) std::this_thread::yield();
          counter = v + 1;
          m.unlock();
        }
      });
    rt.quiesce(60s);
    if (passed != 5000 || s.count() != 0) bad.push_back("semaphore passed " + std::to_string(passed.load()));
    if (counter != 10000) bad.push_back("mutex counter " + std::to_string(counter));
  }

  std::uint64_t schedules = 0;
  for (const auto& sc : lco::mc::standard_scenarios()) {
    auto rep = lco::mc::explore(sc);
    schedules += rep.schedules;
    if (!rep.ok()) bad.push_back("interleaving check '" + sc.name + "': " + rep.first_failure);
  }

  std::string detail = "10^4 dataflow write orders, write-once future, 5000 semaphore pairs, 100x100 mutex "
                       "increments, " + std::to_string(schedules) + " interleavings explored";
  for (const auto& b : bad) detail += "; " + b;
  return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--strict") {
      strict = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string id;
      while (std::getline(ss, id, ',')) only.insert(id);
    } else {
      std::fprintf(stderr, "usage: %s [--strict] [--only AC1,AC2,...]\n", argv[0]);
      return 2;
    }
  }
  auto want = [&](const char* id) { return only.empty() || only.count(id); };

  harness::ConvergenceReport conv;
  if (want("AC1")) report("AC1", 10, unigrid_equivalence);
  if (want("AC2")) report("AC2", 60, [&] { return convergence_order(conv); });
  if (want("AC3")) report("AC3", 1, rk3_scalar);
  if (want("AC4")) report("AC4", 300, mode_equivalence);
  if (want("AC5")) report("AC5", 300, causality_cone);
  if (want("AC6")) report("AC6", 600, barrier_removal);
  if (want("AC7")) report("AC7", 600, task_overhead);
  if (want("AC8")) report("AC8", 900, granularity);
  if (want("AC9")) report("AC9", 300, parcel_layer);
  if (want("AC10")) report("AC10", 120, lco_suite);
  std::printf("%d criteria failed\n", failures);
  return strict && failures ? 1 : 0;
}
