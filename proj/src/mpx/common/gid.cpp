// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/common/gid.hpp"

#include <cstdio>

namespace mpx {

const char* to_string(GidKind kind) noexcept {
  switch (kind) {
    case GidKind::invalid: return "invalid";
    case GidKind::task: return "task";
    case GidKind::future: return "future";
    case GidKind::dataflow: return "dataflow";
    case GidKind::semaphore: return "semaphore";
    case GidKind::mutex: return "mutex";
    case GidKind::full_empty: return "fe";
    case GidKind::grid_block: return "grid-block";
    case GidKind::other: return "other";
  }
  return "?";
}

std::string Gid::str() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "{%u:%016llx:%s}", locality,
                static_cast<unsigned long long>(sequence), to_string(kind));
  return buf;
}

}  // namespace mpx
