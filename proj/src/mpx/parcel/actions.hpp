// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpx/common/bytes.hpp"
#include "mpx/common/gid.hpp"

namespace mpx::parcel {

class Locality;

// Ids 0-15 are reserved for the runtime itself.
namespace sys {
inline constexpr std::uint32_t agas_bind = 0;
inline constexpr std::uint32_t agas_resolve = 1;
inline constexpr std::uint32_t agas_rebind = 2;
inline constexpr std::uint32_t agas_forward = 3;
inline constexpr std::uint32_t agas_invalidate = 4;
inline constexpr std::uint32_t set_lco = 5;
inline constexpr std::uint32_t hello = 6;
inline constexpr std::uint32_t last_reserved = 15;
}  // namespace sys

inline constexpr std::uint32_t first_user_action = 16;

struct ActionContext {
  Locality& locality;
  Gid dest;
  LocalityId source;
};

// Runs inside a task on the destination locality. A returned value is
// delivered to the parcel's continuation, if it has one.
using ActionFn = std::function<std::optional<Blob>(ActionContext&, Blob args)>;

struct ActionInfo {
  std::uint32_t id;
  std::string name;
  ActionFn fn;
};

class ActionRegistry {
 public:
  ActionRegistry();

  // Throws invalid_argument for a reserved or duplicate id.
  void add(std::uint32_t id, std::string name, ActionFn fn);
  const ActionInfo* find(std::uint32_t id) const;
  bool contains(std::uint32_t id) const { return find(id) != nullptr; }

  // (id, name) pairs in id order, system entries included.
  std::vector<std::pair<std::uint32_t, std::string>> signature() const;
  std::uint64_t checksum() const;

  // Ids present on only one side, or with differing names.
  static std::vector<std::uint32_t> mismatched(const std::vector<std::pair<std::uint32_t, std::string>>& a,
                                               const std::vector<std::pair<std::uint32_t, std::string>>& b);

 private:
  friend class Locality;
  void add_system(std::uint32_t id, std::string name);
  std::map<std::uint32_t, ActionInfo> actions_;
};

}  // namespace mpx::parcel
