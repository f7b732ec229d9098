// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// Links the shared library only.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mpx/mpx.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("mpx_capi_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string("\"") + MPX_CLI_PATH + "\" " + args + " > \"" + log + "\" 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string metric(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  return {};
}

}  // namespace

TEST_CASE("config checks through the C interface") {
  size_t n = 0;
  CHECK(mpx_config_check("levels=1\n", &n) == MPX_OK);
  CHECK(n == 1);
  CHECK(mpx_config_check("locality0=127.0.0.1:7000\nlocality1=127.0.0.1:7001\n", &n) == MPX_OK);
  CHECK(n == 2);
  CHECK(mpx_config_check("levels=99\n", &n) == MPX_CONFIG_ERROR);
  CHECK(std::string(mpx_last_error()).find("levels") != std::string::npos);
  char* text = nullptr;
  REQUIRE(mpx_config_normalize("grain=4\n", &text) == MPX_OK);
  CHECK(std::string(text).find("grain=4\n") != std::string::npos);
  mpx_string_free(text);
  CHECK(std::string(mpx_version()).size() > 0);
}

TEST_CASE("commands report status codes") {
  TempDir dir;
  char* m = nullptr;
  CHECK(mpx_command(nullptr, "nope", "", "", dir.path.c_str(), &m) == MPX_CONFIG_ERROR);
  CHECK(m == nullptr);

  REQUIRE(mpx_command(nullptr, "evolve", "levels=1\nsteps=8\ngrain=32\n", "", dir.path.c_str(), &m) == MPX_OK);
  REQUIRE(m != nullptr);
  CHECK(metric(m, "completed") == "1");
  mpx_string_free(m);
  const std::string csv = slurp(dir / "state.csv");
  CHECK(csv.rfind("# p=7 ", 0) == 0);
  CHECK(csv.find("\nr,chi,Phi,Pi,level\n") != std::string::npos);

  CHECK(mpx_command(nullptr, "evolve", "levels=0\nbase_points=201\namplitude=0.4\nsteps=4000\ngrain=32\n", "",
                    dir.path.c_str(), &m) == MPX_INVARIANT_VIOLATION);
  CHECK(metric(m, "blew_up") == "1");
  CHECK(std::string(mpx_last_error()).find("non-finite") != std::string::npos);
  mpx_string_free(m);

  CHECK(mpx_command(nullptr, "sweep", "", "grains=0,4\n", dir.path.c_str(), nullptr) == MPX_CONFIG_ERROR);
}

TEST_CASE("session lifecycle on one locality") {
  mpx_session* s = nullptr;
  REQUIRE(mpx_session_open("workers=2\nlevels=1\nsteps=8\n", 0, &s) == MPX_OK);
  TempDir dir;
  CHECK(mpx_command(s, "evolve", "workers=2\nlevels=1\nsteps=8\n", "", dir.path.c_str(), nullptr) == MPX_OK);
  CHECK(mpx_session_serve(s) == MPX_OK);
  mpx_session_close(s);
  CHECK(mpx_session_open("levels=1\n", 3, &s) == MPX_CONFIG_ERROR);
}

TEST_CASE("cli exit codes") {
  TempDir dir;
  CHECK(cli("evolve --set bogus=1 --out " + dir.path.string(), dir / "a.log") == 2);
  CHECK(cli("evolve --levels 9 --out " + dir.path.string(), dir / "b.log") == 2);
  CHECK(cli("frobnicate", dir / "c.log") == 2);
  CHECK(cli("evolve --config /nonexistent.cfg", dir / "d.log") != 0);
  CHECK(cli("evolve --levels 1 --set steps=8 --grain 32 --out " + dir.path.string(), dir / "e.log") == 0);
  CHECK(slurp(dir / "e.log").find("completed=1") != std::string::npos);
}

TEST_CASE("two processes over TCP match one in barrier mode") {
  TempDir dir;
  const int base = 20000 + ::getpid() % 20000;
  {
    std::ofstream(dir / "one.cfg") << "levels=1\nsteps=16\ngrain=16\nmode=barrier\n";
    std::ofstream(dir / "two.cfg") << "levels=1\nsteps=16\ngrain=16\nmode=barrier\nlocality0=127.0.0.1:" << base
                                   << "\nlocality1=127.0.0.1:" << base + 1 << "\n";
  }
  REQUIRE(cli("evolve --config " + (dir / "one.cfg") + " --out " + (dir / "one"), dir / "one.log") == 0);
  REQUIRE(cli("evolve --config " + (dir / "two.cfg") + " --out " + (dir / "two"), dir / "two.log") == 0);
  auto body = [](std::string csv) { return csv.substr(csv.find('\n') + 1); };
  CHECK(body(slurp(dir / "one/state.csv")) == body(slurp(dir / "two/state.csv")));
  const std::string log = slurp(dir / "two.log");
  CHECK(metric(log, "duplicates") == "0");
  CHECK(metric(log, "gaps") == "0");
  CHECK(metric(log, "transport_failures") == "0");
  CHECK(metric(log, "parcels_sent") != "0");
}

TEST_CASE("front over two processes keeps the cone bound") {
  TempDir dir;
  const int base = 40000 + ::getpid() % 20000;
  std::ofstream(dir / "f.cfg") << "levels=1\ngrain=16\nworkers=2\nsnapshot_secs=0.2,0.4\nlocality0=127.0.0.1:" << base
                               << "\nlocality1=127.0.0.1:" << base + 1 << "\n";
  REQUIRE(cli("front --config " + (dir / "f.cfg") + " --out " + (dir / "f"), dir / "f.log") == 0);
  const std::string log = slurp(dir / "f.log");
  CHECK(metric(log, "cone_violations") == "0");
  CHECK(metric(log, "monotone") == "1");
  const std::string csv = slurp(dir / "f/front.csv");
  CHECK(csv.find("\nwall_s,r,level,step_finest_units\n") != std::string::npos);
}
