// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/parcel/actions.hpp"

#include <algorithm>

#include "mpx/common/error.hpp"

namespace mpx::parcel {

ActionRegistry::ActionRegistry() {
  add_system(sys::agas_bind, "agas.bind");
  add_system(sys::agas_resolve, "agas.resolve");
  add_system(sys::agas_rebind, "agas.rebind");
  add_system(sys::agas_forward, "agas.forward");
  add_system(sys::agas_invalidate, "agas.invalidate");
  add_system(sys::set_lco, "lco.set");
  add_system(sys::hello, "port.hello");
}

void ActionRegistry::add_system(std::uint32_t id, std::string name) {
  actions_[id] = ActionInfo{id, std::move(name), nullptr};
}

void ActionRegistry::add(std::uint32_t id, std::string name, ActionFn fn) {
  if (id <= sys::last_reserved)
    raise(ErrorCode::invalid_argument, "action id " + std::to_string(id) + " is reserved");
  if (actions_.count(id))
    raise(ErrorCode::invalid_argument, "action id " + std::to_string(id) + " registered twice");
  if (!fn) raise(ErrorCode::invalid_argument, "action " + name + " has no entry function");
  actions_[id] = ActionInfo{id, std::move(name), std::move(fn)};
}

const ActionInfo* ActionRegistry::find(std::uint32_t id) const {
  auto it = actions_.find(id);
  return it == actions_.end() ? nullptr : &it->second;
}

std::vector<std::pair<std::uint32_t, std::string>> ActionRegistry::signature() const {
  std::vector<std::pair<std::uint32_t, std::string>> out;
  for (const auto& [id, info] : actions_) out.emplace_back(id, info.name);
  return out;
}

std::uint64_t ActionRegistry::checksum() const {
  // FNV-1a over the big-endian id and the name of every entry
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (const auto& [id, info] : actions_) {
    for (int s = 24; s >= 0; s -= 8) mix(static_cast<std::uint8_t>(id >> s));
    for (char c : info.name) mix(static_cast<std::uint8_t>(c));
    mix(0);
  }
  return h;
}

std::vector<std::uint32_t> ActionRegistry::mismatched(
    const std::vector<std::pair<std::uint32_t, std::string>>& a,
    const std::vector<std::pair<std::uint32_t, std::string>>& b) {
  std::map<std::uint32_t, std::string> ma(a.begin(), a.end()), mb(b.begin(), b.end());
  std::vector<std::uint32_t> out;
  for (const auto& [id, name] : ma) {
    auto it = mb.find(id);
    if (it == mb.end() || it->second != name) out.push_back(id);
  }
  for (const auto& [id, name] : mb)
    if (!ma.count(id)) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mpx::parcel
