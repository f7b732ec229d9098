// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/harness/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "mpx/amr/physics.hpp"
#include "mpx/common/error.hpp"
#include "mpx/parcel/transport.hpp"

namespace mpx::harness {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// options

Options Options::parse(const std::string& text) {
  Options o;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) raise(ErrorCode::config, "option line '" + line + "' is not key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    o.kv_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return o;
}

std::string Options::get(const std::string& key, const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

long Options::get_int(const std::string& key, long dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  long v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size())
    raise(ErrorCode::config, key + ": '" + it->second + "' is not an integer");
  return v;
}

double Options::get_double(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used == it->second.size()) return v;
  } catch (const std::exception&) {
  }
  raise(ErrorCode::config, key + ": '" + it->second + "' is not a number");
}

std::vector<long> Options::get_list(const std::string& key, const std::vector<long>& dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  std::vector<long> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    long v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || p != item.data() + item.size() || v < 1)
      raise(ErrorCode::config, key + ": '" + item + "' is not a positive integer");
    out.push_back(v);
  }
  if (out.empty()) raise(ErrorCode::config, key + " is empty");
  return out;
}

// ---------------------------------------------------------------------------
// sessions

struct Session::Impl {
  LocalityId self = 0;
  std::size_t count = 1;
  std::unique_ptr<amr::LocalCluster> cluster;
  // multi-locality
  std::unique_ptr<rt::Runtime> runtime;
  std::unique_ptr<parcel::Locality> loc;
  std::unique_ptr<amr::Engine> engine;
};

Session::Session(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

std::unique_ptr<Session> Session::open(const RunConfig& cfg, LocalityId self) {
  cfg.validate();
  auto im = std::make_unique<Impl>();
  im->self = self;
  im->count = cfg.locality_count();
  if (self >= im->count)
    raise(ErrorCode::config, "locality " + std::to_string(self) + " is not in the config");
  if (im->count == 1) {
    im->cluster = std::make_unique<amr::LocalCluster>(1, cfg.workers, cfg.policy, cfg.seed);
  } else {
    rt::SchedulerConfig sc;
    sc.workers = cfg.workers;
    sc.policy = cfg.policy;
    sc.locality = self;
    sc.seed = cfg.seed ? cfg.seed + self : 0;
    im->runtime = std::make_unique<rt::Runtime>(sc);
    parcel::ActionRegistry reg;
    amr::Engine::add_actions(reg);
    im->loc = std::make_unique<parcel::Locality>(self, im->count, *im->runtime, std::move(reg));
    im->runtime->set_actions(im->loc.get());
    im->engine = std::make_unique<amr::Engine>(*im->loc);
    try {
      parcel::connect_tcp(*im->loc, cfg.localities);
    } catch (...) {
      im->loc->close_links();
      im->runtime->shutdown();
      throw;
    }
  }
  return std::unique_ptr<Session>(new Session(std::move(im)));
}

Session::~Session() {
  if (!impl_->loc) return;
  try {
    if (impl_->self == 0) impl_->engine->shutdown_peers();
    impl_->runtime->quiesce(std::chrono::seconds(30));
  } catch (...) {
  }
  impl_->loc->close_links();
  impl_->runtime->shutdown();
  impl_->engine.reset();
}

LocalityId Session::id() const noexcept { return impl_->self; }
std::size_t Session::size() const noexcept { return impl_->count; }

RunResult Session::run(const RunConfig& cfg) {
  if (impl_->cluster) return impl_->cluster->run(cfg);
  return impl_->engine->run(cfg);
}

void Session::serve() {
  if (impl_->engine) impl_->engine->wait_shutdown();
}

// ---------------------------------------------------------------------------
// task overhead

const char* to_string(Workload w) noexcept {
  switch (w) {
    case Workload::none: return "none";
    case Workload::spin: return "spin";
    case Workload::wait: return "wait";
  }
  return "?";
}

Workload parse_workload(const std::string& s) {
  if (s == "none") return Workload::none;
  if (s == "spin") return Workload::spin;
  if (s == "wait") return Workload::wait;
  raise(ErrorCode::config, "unknown workload '" + s + "' (none, spin, wait)");
}

TaskBench bench_tasks(unsigned workers, std::size_t tasks, Workload w, double work_us, rt::Policy policy,
                      std::uint64_t seed) {
  rt::SchedulerConfig sc;
  sc.workers = workers;
  sc.policy = policy;
  sc.seed = seed;
  rt::Runtime runtime(sc);
  const auto work = std::chrono::nanoseconds(static_cast<long>(work_us * 1000.0));
  std::function<void()> body;
  switch (w) {
    case Workload::none:
      body = [] {};
      break;
    case Workload::spin:
      body = [work] {
        const auto until = Clock::now() + work;
        while (Clock::now() < until) {
        }
      };
      break;
    case Workload::wait:
      body = [work] {
        const auto until = Clock::now() + work;
        while (Clock::now() < until) std::this_thread::yield();
      };
      break;
  }
  const auto t0 = Clock::now();
  runtime.spawn([&] {
    for (std::size_t i = 0; i < tasks; ++i) runtime.spawn(body);
  });
  runtime.quiesce();
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  runtime.shutdown();
  TaskBench b;
  b.workers = workers;
  b.workload = w;
  b.work_us = w == Workload::none ? 0 : work_us;
  b.tasks = tasks;
  b.wall_s = wall;
  b.us_per_task = wall * 1e6 / static_cast<double>(tasks);
  b.overhead_us = b.us_per_task * workers - b.work_us;
  return b;
}

// ---------------------------------------------------------------------------
// solver experiments

double max_state_diff(const std::vector<amr::StateRow>& a, const std::vector<amr::StateRow>& b) {
  if (a.size() != b.size()) raise(ErrorCode::invariant_violation, "states have different point counts");
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].r != b[i].r || a[i].level != b[i].level)
      raise(ErrorCode::invariant_violation, "states differ in layout at row " + std::to_string(i));
    d = std::max({d, std::fabs(a[i].chi - b[i].chi), std::fabs(a[i].Phi - b[i].Phi), std::fabs(a[i].Pi - b[i].Pi)});
    if (std::isnan(a[i].chi) != std::isnan(b[i].chi)) d = INFINITY;
  }
  return d;
}

std::vector<SweepRow> grain_sweep(RunConfig cfg, const std::vector<unsigned>& workers, const std::vector<int>& grains,
                                  int repeats) {
  std::vector<SweepRow> rows;
  for (unsigned w : workers) {
    amr::LocalCluster c(1, w, cfg.policy, cfg.seed);
    cfg.grain = grains.front();
    c.run(cfg);  // warm-up
    for (int g : grains) {
      SweepRow row;
      row.workers = w;
      row.grain = g;
      cfg.grain = g;
      for (int i = 0; i < repeats; ++i) row.samples.push_back(c.run(cfg).wall_s);
      row.median_s = median(row.samples);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<SweepSummary> summarize(const std::vector<SweepRow>& rows) {
  std::map<unsigned, std::vector<const SweepRow*>> by;
  for (const auto& r : rows) by[r.workers].push_back(&r);
  std::vector<SweepSummary> out;
  for (auto& [w, v] : by) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i]->median_s < v[best]->median_s) best = i;
    out.push_back(SweepSummary{w, v[best]->grain, best > 0 && best + 1 < v.size()});
  }
  return out;
}

CompareRow compare_modes(RunConfig cfg, unsigned workers, int repeats) {
  CompareRow row;
  row.workers = workers;
  row.levels = cfg.levels;
  amr::LocalCluster c(1, workers, cfg.policy, cfg.seed);
  cfg.mode = amr::Mode::dataflow;
  c.run(cfg);  // warm-up
  for (int i = 0; i < repeats; ++i) {
    cfg.mode = amr::Mode::barrier;
    RunResult b = c.run(cfg);
    cfg.mode = amr::Mode::dataflow;
    RunResult d = c.run(cfg);
    if (!b.completed || !d.completed) raise(ErrorCode::invariant_violation, "comparison run did not complete");
    row.barrier_s.push_back(b.wall_s);
    row.dataflow_s.push_back(d.wall_s);
    row.max_diff = std::max(row.max_diff, max_state_diff(b.state, d.state));
  }
  row.barrier_median = median(row.barrier_s);
  row.dataflow_median = median(row.dataflow_s);
  row.ratio = row.dataflow_median / row.barrier_median;
  return row;
}

namespace {

// Explicit Runge-Kutta in Butcher form, written independently of the solver.
double butcher_rk3(double y, double h, double (*f)(double)) {
  static constexpr double a[3][3] = {{0, 0, 0}, {1, 0, 0}, {0.25, 0.25, 0}};
  static constexpr double b[3] = {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0};
  double k[3];
  for (int i = 0; i < 3; ++i) {
    double yi = y;
    for (int j = 0; j < i; ++j) yi += h * a[i][j] * k[j];
    k[i] = f(yi);
  }
  return y + h * (b[0] * k[0] + b[1] * k[1] + b[2] * k[2]);
}

double decay(double y) { return -y; }

std::vector<double> at_coarse(const RunResult& r, int stride) {
  std::vector<double> v;
  for (std::size_t i = 0; i < r.state.size(); i += static_cast<std::size_t>(stride)) {
    v.push_back(r.state[i].chi);
    v.push_back(r.state[i].Phi);
    v.push_back(r.state[i].Pi);
  }
  return v;
}

double rms_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace

ConvergenceReport convergence_suite() {
  ConvergenceReport rep;
  amr::LocalCluster c(1, 1);

  // self-convergence, linear unigrid at fixed physical time
  RunConfig cfg;
  cfg.physics.linear = true;
  cfg.levels = 0;
  cfg.grain = 64;
  std::vector<RunResult> runs;
  for (int m = 1; m <= 4; m *= 2) {
    cfg.base_points = 400 * m + 1;
    cfg.steps = 200 * m;
    rep.points.push_back(cfg.base_points);
    runs.push_back(c.run(cfg));
    if (!runs.back().completed) raise(ErrorCode::invariant_violation, "convergence run did not complete");
  }
  auto u1 = at_coarse(runs[0], 1), u2 = at_coarse(runs[1], 2), u4 = at_coarse(runs[2], 4);
  rep.diffs = {rms_diff(u1, u2), rms_diff(u2, u4)};
  rep.order = std::log2(rep.diffs[0] / rep.diffs[1]);

  rep.rk3 = amr::rk3_scalar(1.0, 0.1, decay);
  rep.rk3_oracle = butcher_rk3(1.0, 0.1, decay);

  // energy, linear mode, until the outgoing pulse nears rmax
  {
    amr::PhysicsConfig ph;
    ph.linear = true;
    const int n = 1001;
    const double dr = ph.rmax / (n - 1);
    const double t_end = ph.rmax - ph.r0 - 4 * ph.delta;
    const int steps = static_cast<int>(t_end / (ph.cfl * dr));
    const double e0 = amr::energy(amr::initial_data(ph, dr, 0, n), dr);
    const double e1 = amr::energy(amr::evolve_unigrid(ph, n, steps), dr);
    rep.energy_drift = std::fabs(e1 - e0) / e0;
  }

  // refined run against a globally fine unigrid run
  {
    RunConfig a;
    a.levels = 2;
    a.steps = 100;
    a.grain = 32;
    a.theta = a.physics.amplitude / 20;
    RunResult r = c.run(a);
    if (!r.completed) raise(ErrorCode::invariant_violation, "refined run did not complete");
    const int nf = (a.base_points - 1) * 4 + 1;
    amr::Fields fine = amr::evolve_unigrid(a.physics, nf, a.steps * 4);
    amr::Fields half = amr::evolve_unigrid(a.physics, (nf - 1) / 2 + 1, a.steps * 2);
    for (std::size_t i = 0; i < half.size(); ++i)
      rep.fine_estimate = std::max(rep.fine_estimate, std::fabs(half.chi[i] - fine.chi[2 * i]) / 3.0);
    const double drf = a.physics.rmax / (nf - 1);
    for (const auto& row : r.state) {
      const auto j = static_cast<std::size_t>(std::lround(row.r / drf));
      rep.amr_error = std::max(rep.amr_error, std::fabs(row.chi - fine.chi[j]));
    }
  }

  {
    RunConfig m;
    m.levels = 2;
    m.steps = 100;
    m.mode = amr::Mode::barrier;
    RunResult b = c.run(m);
    m.mode = amr::Mode::dataflow;
    RunResult d = c.run(m);
    rep.mode_diff = max_state_diff(b.state, d.state);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// outputs

namespace {

std::ofstream open_out(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) raise(ErrorCode::config, "cannot write '" + path + "'");
  return out;
}

}  // namespace

void write_state_csv(const std::string& path, const RunConfig& cfg, const std::vector<amr::StateRow>& rows) {
  auto out = open_out(path);
  out << "# " << cfg.echo() << "\n";
  out << "r,chi,Phi,Pi,level\n";
  for (const auto& r : rows)
    out << fmt(r.r) << ',' << fmt(r.chi) << ',' << fmt(r.Phi) << ',' << fmt(r.Pi) << ',' << r.level << '\n';
}

void write_front_csv(const std::string& path, const RunConfig& cfg,
                     const std::vector<std::vector<amr::FrontRow>>& snapshots) {
  auto out = open_out(path);
  out << "# " << cfg.echo() << "\n";
  out << "wall_s,r,level,step_finest_units\n";
  for (const auto& snap : snapshots)
    for (const auto& r : snap) out << fmt(r.wall_s) << ',' << fmt(r.r) << ',' << r.level << ',' << r.step_finest << '\n';
}

std::string metrics_text(const Metrics& m) {
  std::string s;
  for (const auto& [k, v] : m) s += k + "=" + v + "\n";
  return s;
}

void write_metrics(const std::string& path, const Metrics& m) {
  auto out = open_out(path);
  out << metrics_text(m);
}

// ---------------------------------------------------------------------------
// commands

namespace {

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir.empty() ? "." : dir) / file).string();
}

std::vector<unsigned> as_unsigned(const std::vector<long>& v) { return {v.begin(), v.end()}; }

void run_metrics(Metrics& m, const RunResult& r) {
  m["completed"] = r.completed ? "1" : "0";
  m["wall_s"] = fmt(r.wall_s);
  m["coarse_steps"] = std::to_string(r.coarse_steps);
  m["nodes_run"] = std::to_string(r.nodes_run);
  m["nodes_skipped"] = std::to_string(r.nodes_skipped);
  m["epochs"] = std::to_string(r.structures.size());
  m["parcels_sent"] = std::to_string(r.parcels_sent);
  m["bytes_sent"] = std::to_string(r.bytes_sent);
  m["duplicates"] = std::to_string(r.duplicates);
  m["gaps"] = std::to_string(r.gaps);
  m["decode_errors"] = std::to_string(r.decode_errors);
  m["transport_failures"] = std::to_string(r.failures);
  m["blew_up"] = r.blew_up ? "1" : "0";
  if (!r.diagnostic.empty()) m["diagnostic"] = r.diagnostic;
}

CommandResult cmd_evolve(Session& s, const RunConfig& cfg, const std::string& out) {
  CommandResult res;
  RunResult r = s.run(cfg);
  run_metrics(res.metrics, r);
  if (r.completed) write_state_csv(join(out, "state.csv"), cfg, r.state);
  if (r.blew_up) {
    res.status = invariant_violation;
    res.message = r.diagnostic;
  }
  write_metrics(join(out, "evolve.txt"), res.metrics);
  return res;
}

CommandResult cmd_front(Session& s, RunConfig cfg, const Options& opts, const std::string& out) {
  CommandResult res;
  if (cfg.snapshot_secs.empty()) raise(ErrorCode::config, "front needs snapshot_secs");
  std::vector<double> snaps = cfg.snapshot_secs;
  std::sort(snaps.begin(), snaps.end());
  if (cfg.wall_budget == 0) cfg.wall_budget = snaps.back();
  cfg.steps = static_cast<int>(opts.get_int("steps", (1L << 24) >> cfg.levels));
  RunResult r = s.run(cfg);
  run_metrics(res.metrics, r);
  std::vector<std::vector<amr::FrontRow>> fronts;
  for (double t : snaps) fronts.push_back(amr::front_at(r, cfg.levels, t));
  write_front_csv(join(out, "front.csv"), cfg, fronts);

  amr::ConeReport cone = amr::check_cone(r);
  res.metrics["cone_checks"] = std::to_string(cone.checks);
  res.metrics["cone_violations"] = std::to_string(cone.violations);
  const bool mono = amr::monotone(fronts);
  res.metrics["monotone"] = mono ? "1" : "0";
  std::vector<std::string> bad;
  if (cone.violations) bad.push_back("cone bound violated: " + cone.first);
  if (!mono) bad.push_back("front decreased between snapshots");
  if (cfg.mode == amr::Mode::barrier) {
    std::string why;
    const bool flat = amr::flat_at_boundaries(r, cfg.levels, &why);
    res.metrics["flat_at_boundaries"] = flat ? "1" : "0";
    res.metrics["boundaries_checked"] = std::to_string(r.coarse_boundaries.size());
    if (!flat) bad.push_back("barrier front not flat: " + why);
  }
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    long lo = 0, hi = 0;
    bool first = true;
    for (const auto& row : fronts[i]) {
      if (row.level != 0) continue;
      lo = first ? row.step_finest : std::min(lo, row.step_finest);
      hi = first ? row.step_finest : std::max(hi, row.step_finest);
      first = false;
    }
    const std::string key = "snapshot" + std::to_string(i);
    res.metrics[key + "_wall_s"] = fmt(snaps[i]);
    res.metrics[key + "_min_step"] = std::to_string(lo);
    res.metrics[key + "_max_step"] = std::to_string(hi);
    if (cfg.levels > 0) {
      amr::Apex a = amr::apex(fronts[i], r, cfg.levels, cfg.physics.delta);
      res.metrics[key + "_apex_r"] = fmt(a.r);
      res.metrics[key + "_apex_in_finest"] = a.in_finest ? "1" : "0";
    }
  }
  if (!bad.empty()) {
    res.status = invariant_violation;
    for (const auto& b : bad) res.message += (res.message.empty() ? "" : "; ") + b;
  }
  write_metrics(join(out, "front.txt"), res.metrics);
  return res;
}

CommandResult cmd_compare(const RunConfig& cfg, const Options& opts, const std::string& out) {
  CommandResult res;
  const auto workers = as_unsigned(opts.get_list("workers_list", {1, 4}));
  const int repeats = static_cast<int>(opts.get_int("repeats", 5));
  auto csv = open_out(join(out, "compare.csv"));
  csv << "# " << cfg.echo() << "\n";
  csv << "workers,levels,mode,repeat,wall_s\n";
  double worst = 0;
  for (unsigned w : workers) {
    CompareRow row = compare_modes(cfg, w, repeats);
    for (int i = 0; i < repeats; ++i) {
      csv << w << ',' << row.levels << ",barrier," << i << ',' << fmt(row.barrier_s[i]) << '\n';
      csv << w << ',' << row.levels << ",dataflow," << i << ',' << fmt(row.dataflow_s[i]) << '\n';
    }
    const std::string k = "workers" + std::to_string(w);
    res.metrics[k + "_barrier_median_s"] = fmt(row.barrier_median);
    res.metrics[k + "_dataflow_median_s"] = fmt(row.dataflow_median);
    res.metrics[k + "_ratio"] = fmt(row.ratio);
    res.metrics[k + "_max_diff"] = fmt(row.max_diff);
    worst = std::max(worst, row.max_diff);
  }
  res.metrics["max_diff"] = fmt(worst);
  if (!(worst <= 1e-12)) {
    res.status = invariant_violation;
    res.message = "barrier and dataflow states differ by " + fmt(worst);
  }
  write_metrics(join(out, "compare.txt"), res.metrics);
  return res;
}

CommandResult cmd_sweep(RunConfig cfg, const Options& opts, const std::string& out) {
  CommandResult res;
  const auto workers = as_unsigned(opts.get_list("workers_list", {2, 4, 8}));
  std::vector<int> grains;
  for (long g : opts.get_list("grains", {1, 2, 4, 8, 16, 32, 64, 128, 256})) grains.push_back(static_cast<int>(g));
  const int repeats = static_cast<int>(opts.get_int("repeats", 3));
  cfg.steps = static_cast<int>(opts.get_int("steps", 20));
  auto rows = grain_sweep(cfg, workers, grains, repeats);
  auto csv = open_out(join(out, "sweep.csv"));
  csv << "# " << cfg.echo() << "\n";
  csv << "workers,grain,median_s,samples\n";
  for (const auto& r : rows) {
    csv << r.workers << ',' << r.grain << ',' << fmt(r.median_s) << ',';
    for (std::size_t i = 0; i < r.samples.size(); ++i) csv << (i ? ";" : "") << fmt(r.samples[i]);
    csv << '\n';
  }
  int lo = 0, hi = 0;
  bool all_interior = true;
  for (const auto& s : summarize(rows)) {
    const std::string k = "workers" + std::to_string(s.workers);
    res.metrics[k + "_argmin_grain"] = std::to_string(s.argmin);
    res.metrics[k + "_interior_minimum"] = s.interior ? "1" : "0";
    all_interior = all_interior && s.interior;
    lo = lo ? std::min(lo, s.argmin) : s.argmin;
    hi = std::max(hi, s.argmin);
  }
  res.metrics["argmin_spread"] = fmt(static_cast<double>(hi) / lo);
  res.metrics["all_interior"] = all_interior ? "1" : "0";
  write_metrics(join(out, "sweep.txt"), res.metrics);
  return res;
}

std::vector<double> double_list(const Options& opts, const std::string& key, const std::string& dflt) {
  std::vector<double> out;
  std::stringstream ss(opts.get(key, dflt));
  std::string item;
  while (std::getline(ss, item, ',')) {
    Options one = Options::parse("v=" + item);
    const double v = one.get_double("v", -1);
    if (!(v >= 0)) raise(ErrorCode::config, key + ": '" + item + "' is not a non-negative number");
    out.push_back(v);
  }
  return out;
}

CommandResult cmd_overhead(const RunConfig& cfg, const Options& opts, const std::string& out) {
  CommandResult res;
  const auto tasks = static_cast<std::size_t>(opts.get_int("tasks", 1000000));
  const auto work_tasks = static_cast<std::size_t>(opts.get_int("work_tasks", 20000));
  const auto work = double_list(opts, "work_us", "0,1,5,25,115");
  const auto workers = as_unsigned(opts.get_list("workers_list", {1, 2, 4, 8}));
  std::vector<Workload> loads;
  {
    std::stringstream ss(opts.get("workloads", "spin,wait"));
    std::string item;
    while (std::getline(ss, item, ',')) loads.push_back(parse_workload(item));
  }
  auto csv = open_out(join(out, "overhead.csv"));
  csv << "# " << cfg.echo() << " tasks=" << tasks << " work_tasks=" << work_tasks << "\n";
  csv << "workers,workload,work_us,tasks,wall_s,us_per_task,overhead_us,speedup\n";
  auto bench = [&](Workload l, double us) {
    const std::size_t n = l == Workload::none ? tasks : work_tasks;
    const std::string k = std::string(to_string(l)) + (l == Workload::none ? "" : "_" + fmt(us) + "us");
    double base = 0;
    for (unsigned w : workers) {
      TaskBench b = bench_tasks(w, n, l, us, cfg.policy, cfg.seed ? cfg.seed : 1);
      if (w == workers.front()) base = b.wall_s;
      const double speedup = base / b.wall_s;
      csv << w << ',' << to_string(l) << ',' << fmt(b.work_us) << ',' << n << ',' << fmt(b.wall_s) << ','
          << fmt(b.us_per_task) << ',' << fmt(b.overhead_us) << ',' << fmt(speedup) << '\n';
      const std::string kw = k + "_workers" + std::to_string(w);
      res.metrics[kw + "_overhead_us_per_task"] = fmt(b.overhead_us);
      res.metrics[kw + "_speedup"] = fmt(speedup);
    }
  };
  for (double us : work) {
    if (us == 0) {
      bench(Workload::none, 0);
      continue;
    }
    for (Workload l : loads)
      if (l != Workload::none) bench(l, us);
  }
  write_metrics(join(out, "overhead.txt"), res.metrics);
  return res;
}

CommandResult cmd_convergence(const std::string& out) {
  CommandResult res;
  ConvergenceReport c = convergence_suite();
  auto& m = res.metrics;
  m["order"] = fmt(c.order);
  m["diff_h"] = fmt(c.diffs[0]);
  m["diff_h2"] = fmt(c.diffs[1]);
  m["rk3"] = fmt(c.rk3);
  m["rk3_oracle"] = fmt(c.rk3_oracle);
  m["rk3_error"] = fmt(std::fabs(c.rk3 - c.rk3_oracle));
  m["energy_drift"] = fmt(c.energy_drift);
  m["amr_error"] = fmt(c.amr_error);
  m["fine_estimate"] = fmt(c.fine_estimate);
  m["mode_diff"] = fmt(c.mode_diff);
  std::vector<std::string> bad;
  if (!(std::fabs(c.order - 2.0) <= 0.2)) bad.push_back("order " + fmt(c.order));
  if (!(std::fabs(c.rk3 - c.rk3_oracle) <= 1e-12)) bad.push_back("rk3 step off the oracle");
  if (!(c.energy_drift <= 0.01)) bad.push_back("energy drift " + fmt(c.energy_drift));
  if (!(c.amr_error <= 4 * c.fine_estimate)) bad.push_back("refined run error " + fmt(c.amr_error));
  if (!(c.mode_diff <= 1e-12)) bad.push_back("mode difference " + fmt(c.mode_diff));
  m["pass"] = bad.empty() ? "1" : "0";
  if (!bad.empty()) {
    res.status = invariant_violation;
    for (const auto& b : bad) res.message += (res.message.empty() ? "" : "; ") + b;
  }
  write_metrics(join(out, "convergence.txt"), m);
  return res;
}

}  // namespace

CommandResult run_command(const std::string& name, Session* session, const RunConfig& cfg, const Options& opts,
                          const std::string& out_dir) {
  if (name == "evolve" || name == "front") {
    std::unique_ptr<Session> own;
    if (!session) {
      if (cfg.locality_count() > 1) raise(ErrorCode::config, name + " on several localities needs a session");
      own = Session::open(cfg, 0);
      session = own.get();
    }
    return name == "evolve" ? cmd_evolve(*session, cfg, out_dir) : cmd_front(*session, cfg, opts, out_dir);
  }
  if (name == "compare") return cmd_compare(cfg, opts, out_dir);
  if (name == "sweep") return cmd_sweep(cfg, opts, out_dir);
  if (name == "overhead") return cmd_overhead(cfg, opts, out_dir);
  if (name == "convergence") return cmd_convergence(out_dir);
  raise(ErrorCode::config, "unknown command '" + name + "'");
}

}  // namespace mpx::harness
