// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// mpx: runs the solver and runtime experiments.
//
//   mpx <command> [--config FILE] [--workers N] [--policy NAME] [--mode M]
//       [--grain G] [--levels L] [--set key=value]... [--opt key=value]...
//       [--out DIR]
//
// With several localities in the config, evolve and front start one process
// per extra locality from this binary (`--locality N`) and host locality 0.

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mpx/mpx.h"

extern char** environ;

namespace {

constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

struct Args {
  std::string config;
  std::optional<unsigned> workers;
  std::string policy, mode;
  std::optional<int> grain, levels;
  unsigned locality = 0;
  std::string out = ".";
  std::vector<std::string> set, opt;
  // command options with their own flags
  std::string workers_list, grains, work_us, workloads;
  std::optional<long> repeats, steps, tasks, work_tasks;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_text(const Args& a) {
  std::string t = a.config.empty() ? "" : read_file(a.config);
  if (!t.empty() && t.back() != '\n') t += '\n';
  if (a.workers) t += "workers=" + std::to_string(*a.workers) + "\n";
  if (!a.policy.empty()) t += "policy=" + a.policy + "\n";
  if (!a.mode.empty()) t += "mode=" + a.mode + "\n";
  if (a.grain) t += "grain=" + std::to_string(*a.grain) + "\n";
  if (a.levels) t += "levels=" + std::to_string(*a.levels) + "\n";
  for (const auto& s : a.set) t += s + "\n";
  return t;
}

std::string options_text(const Args& a) {
  std::string t;
  auto add = [&](const char* k, const std::string& v) {
    if (!v.empty()) t += std::string(k) + "=" + v + "\n";
  };
  auto add_n = [&](const char* k, const std::optional<long>& v) {
    if (v) t += std::string(k) + "=" + std::to_string(*v) + "\n";
  };
  add("workers_list", a.workers_list);
  add("grains", a.grains);
  add("work_us", a.work_us);
  add("workloads", a.workloads);
  add_n("repeats", a.repeats);
  add_n("steps", a.steps);
  add_n("tasks", a.tasks);
  add_n("work_tasks", a.work_tasks);
  for (const auto& s : a.opt) t += s + "\n";
  return t;
}

int fail(mpx_status s) {
  std::cerr << "mpx: " << mpx_last_error() << "\n";
  return static_cast<int>(s);
}

// Locality N > 0: join the mesh and serve until locality 0 is done.
int serve(const std::string& cfg, unsigned locality) {
  mpx_session* s = nullptr;
  if (mpx_status st = mpx_session_open(cfg.c_str(), locality, &s); st != MPX_OK) return fail(st);
  mpx_status st = mpx_session_serve(s);
  mpx_session_close(s);
  return st == MPX_OK ? 0 : fail(st);
}

std::vector<pid_t> spawn_peers(const std::string& command, const std::string& cfg_path, std::size_t count) {
  std::vector<pid_t> pids;
  for (std::size_t i = 1; i < count; ++i) {
    std::vector<std::string> argv_s = {"/proc/self/exe", command,   "--locality",
                                       std::to_string(i), "--config", cfg_path};
    std::vector<char*> argv;
    for (auto& s : argv_s) argv.push_back(s.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawn(&pid, "/proc/self/exe", nullptr, nullptr, argv.data(), environ) != 0) {
      for (pid_t p : pids) kill(p, SIGTERM);
      throw std::runtime_error("cannot start locality " + std::to_string(i));
    }
    pids.push_back(pid);
  }
  return pids;
}

bool reap(const std::vector<pid_t>& pids, bool terminate) {
  bool ok = true;
  for (pid_t p : pids) {
    if (terminate) kill(p, SIGTERM);
    int st = 0;
    if (waitpid(p, &st, 0) < 0 || !WIFEXITED(st) || WEXITSTATUS(st) != 0) ok = false;
  }
  return ok;
}

int run(const std::string& command, const Args& a) {
  const std::string cfg = config_text(a);
  size_t localities = 1;
  if (mpx_status st = mpx_config_check(cfg.c_str(), &localities); st != MPX_OK) return fail(st);
  if (a.locality != 0) return serve(cfg, a.locality);

  const bool distributed = localities > 1 && (command == "evolve" || command == "front");
  std::vector<pid_t> peers;
  mpx_session* session = nullptr;
  if (distributed) {
    char* norm = nullptr;
    if (mpx_status st = mpx_config_normalize(cfg.c_str(), &norm); st != MPX_OK) return fail(st);
    std::filesystem::create_directories(a.out);
    const std::string path = (std::filesystem::path(a.out) / "cluster.cfg").string();
    {
      std::ofstream f(path);
      f << norm;
    }
    mpx_string_free(norm);
    peers = spawn_peers(command, path, localities);
    if (mpx_status st = mpx_session_open(cfg.c_str(), 0, &session); st != MPX_OK) {
      int rc = fail(st);
      reap(peers, true);
      return rc;
    }
  }

  char* metrics = nullptr;
  mpx_status st = mpx_command(session, command.c_str(), cfg.c_str(), options_text(a).c_str(), a.out.c_str(), &metrics);
  const std::string message = mpx_last_error();
  if (metrics) {
    std::cout << metrics;
    mpx_string_free(metrics);
  }
  if (session) mpx_session_close(session);
  if (!reap(peers, false)) {
    std::cerr << "mpx: a peer locality exited abnormally\n";
    if (st == MPX_OK) st = MPX_RUNTIME_ERROR;
  }
  if (!message.empty()) std::cerr << "mpx: " << message << "\n";
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mpx: dataflow AMR solver and runtime experiments"};
  app.require_subcommand(1);
  Args a;
  std::string chosen;
  const std::pair<const char*, const char*> commands[] = {
      {"evolve", "run the solver and dump the final state"},
      {"front", "timestep fronts at wall-clock instants"},
      {"compare", "barrier vs dataflow wall time"},
      {"sweep", "wall time against grain size"},
      {"overhead", "task management overhead and speedup"},
      {"convergence", "convergence and mode-equivalence checks"},
  };
  for (const auto& [name, about] : commands) {
    CLI::App* sub = app.add_subcommand(name, about);
    sub->add_option("--config", a.config, "key=value config file");
    sub->add_option("--workers", a.workers, "worker threads per locality");
    sub->add_option("--policy", a.policy, "global-queue or local-priority-stealing");
    sub->add_option("--mode", a.mode, "barrier or dataflow");
    sub->add_option("--grain", a.grain, "interior points per block");
    sub->add_option("--levels", a.levels, "refinement levels");
    sub->add_option("--locality", a.locality, "join as this locality (started by locality 0)");
    sub->add_option("--out", a.out, "output directory");
    sub->add_option("--set", a.set, "extra config setting key=value");
    sub->add_option("--opt", a.opt, "extra command option key=value");
    sub->add_option("--workers-list", a.workers_list, "comma-separated worker counts");
    sub->add_option("--grains", a.grains, "comma-separated grain sizes");
    sub->add_option("--work-us", a.work_us, "comma-separated task workloads in microseconds");
    sub->add_option("--workloads", a.workloads, "spin, wait");
    sub->add_option("--repeats", a.repeats, "repeats per configuration");
    sub->add_option("--steps", a.steps, "coarse steps");
    sub->add_option("--tasks", a.tasks, "zero-work tasks");
    sub->add_option("--work-tasks", a.work_tasks, "tasks per nonzero workload");
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_config;
  }
  try {
    return run(chosen, a);
  } catch (const std::exception& e) {
    std::cerr << "mpx: " << e.what() << "\n";
    return exit_runtime;
  }
}
