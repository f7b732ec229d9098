// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/amr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mpx/common/error.hpp"

namespace mpx::amr {

const char* to_string(Mode m) noexcept { return m == Mode::barrier ? "barrier" : "dataflow"; }

Mode parse_mode(const std::string& s) {
  if (s == "barrier") return Mode::barrier;
  if (s == "dataflow") return Mode::dataflow;
  raise(ErrorCode::config, "mode must be barrier or dataflow, got '" + s + "'");
}

void PhysicsConfig::validate() const {
  if (p < 1 || p % 2 == 0) raise(ErrorCode::config, "p must be an odd positive integer");
  if (!(cfl > 0 && cfl <= 0.5)) raise(ErrorCode::config, "cfl must lie in (0, 0.5]");
  if (!(r0 > 0 && r0 < rmax)) raise(ErrorCode::config, "r0 must lie in (0, rmax)");
  if (!(delta > 0)) raise(ErrorCode::config, "delta must be positive");
  if (!std::isfinite(amplitude)) raise(ErrorCode::config, "amplitude must be finite");
}

void RunConfig::validate() const {
  physics.validate();
  if (levels < 0 || levels > 7) raise(ErrorCode::config, "levels must lie in 0..7");
  if (base_points < 16) raise(ErrorCode::config, "base_points must be >= 16");
  if (grain < 1) raise(ErrorCode::config, "grain must be >= 1");
  if (workers < 1) raise(ErrorCode::config, "workers must be >= 1");
  if (regrid_interval < 0) raise(ErrorCode::config, "regrid_interval must be >= 0");
  if (steps < 0) raise(ErrorCode::config, "steps must be >= 0");
  if (wall_budget < 0) raise(ErrorCode::config, "wall budget must be >= 0");
  if (theta && !(*theta > 0)) raise(ErrorCode::config, "theta must be positive");
  for (double s : snapshot_secs)
    if (!(s >= 0)) raise(ErrorCode::config, "snapshot_secs entries must be >= 0");
  if (!localities.empty()) {
    LocalityId expect = 0;
    for (const auto& [id, ep] : localities)
      if (id != expect++) raise(ErrorCode::config, "locality ids must be dense from 0");
  }
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    raise(ErrorCode::config, key + ": '" + v + "' is not a number");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) raise(ErrorCode::config, key + ": '" + v + "' is not an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  raise(ErrorCode::config, key + ": '" + v + "' is not a boolean");
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  auto& ph = c.physics;
  if (key == "p") ph.p = static_cast<int>(to_int(key, value));
  else if (key == "amplitude") ph.amplitude = to_double(key, value);
  else if (key == "r0") ph.r0 = to_double(key, value);
  else if (key == "delta") ph.delta = to_double(key, value);
  else if (key == "rmax") ph.rmax = to_double(key, value);
  else if (key == "cfl") ph.cfl = to_double(key, value);
  else if (key == "linear") ph.linear = to_bool(key, value);
  else if (key == "levels") c.levels = static_cast<int>(to_int(key, value));
  else if (key == "base_points") c.base_points = static_cast<int>(to_int(key, value));
  else if (key == "grain") c.grain = static_cast<int>(to_int(key, value));
  else if (key == "mode") c.mode = parse_mode(value);
  else if (key == "workers") {
    auto w = to_int(key, value);
    if (w < 1) raise(ErrorCode::config, "workers must be >= 1");
    c.workers = static_cast<unsigned>(w);
  } else if (key == "policy") c.policy = rt::parse_policy(value);
  else if (key == "theta") c.theta = to_double(key, value);
  else if (key == "regrid_interval") c.regrid_interval = static_cast<int>(to_int(key, value));
  else if (key == "steps") c.steps = static_cast<int>(to_int(key, value));
  else if (key == "wall_budget") c.wall_budget = to_double(key, value);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "snapshot_secs") {
    c.snapshot_secs.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) c.snapshot_secs.push_back(to_double(key, item));
    }
  } else if (key.rfind("locality", 0) == 0 && key.size() > 8) {
    auto id = to_int(key, key.substr(8));
    if (id < 0) raise(ErrorCode::config, key + ": negative locality id");
    c.localities[static_cast<LocalityId>(id)] = parcel::parse_endpoint(value);
  } else {
    raise(ErrorCode::config, "unknown config key '" + key + "'");
  }
}

RunConfig parse_text(const std::string& text, RunConfig c) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) raise(ErrorCode::config, "line " + std::to_string(n) + ": expected key=value");
    apply_setting(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

RunConfig load_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::config, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), std::move(base));
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "p=" << physics.p << "\n"
     << "amplitude=" << num(physics.amplitude) << "\n"
     << "r0=" << num(physics.r0) << "\n"
     << "delta=" << num(physics.delta) << "\n"
     << "rmax=" << num(physics.rmax) << "\n"
     << "cfl=" << num(physics.cfl) << "\n"
     << "linear=" << (physics.linear ? 1 : 0) << "\n"
     << "levels=" << levels << "\n"
     << "base_points=" << base_points << "\n"
     << "grain=" << grain << "\n"
     << "mode=" << to_string(mode) << "\n"
     << "workers=" << workers << "\n"
     << "policy=" << rt::to_string(policy) << "\n"
     << "theta=" << num(effective_theta()) << "\n"
     << "regrid_interval=" << regrid_interval << "\n"
     << "steps=" << steps << "\n"
     << "wall_budget=" << num(wall_budget) << "\n"
     << "seed=" << seed << "\n"
     << "snapshot_secs=";
  for (std::size_t i = 0; i < snapshot_secs.size(); ++i) os << (i ? "," : "") << num(snapshot_secs[i]);
  os << "\n";
  for (const auto& [id, ep] : localities) os << "locality" << id << "=" << ep.host << ":" << ep.port << "\n";
  return os.str();
}

std::string RunConfig::echo() const {
  std::string t = to_text();
  for (auto& ch : t)
    if (ch == '\n') ch = ' ';
  while (!t.empty() && t.back() == ' ') t.pop_back();
  return t;
}

}  // namespace mpx::amr
