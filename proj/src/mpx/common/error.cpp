// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/common/error.hpp"

namespace mpx {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::runtime_shut_down: return "runtime_shut_down";
    case ErrorCode::unknown_action: return "unknown_action";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::double_set: return "double_set";
    case ErrorCode::duplicate_write: return "duplicate_write";
    case ErrorCode::not_owner: return "not_owner";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::transport: return "transport";
    case ErrorCode::decode: return "decode";
    case ErrorCode::config: return "config";
    case ErrorCode::contract_violation: return "contract_violation";
    case ErrorCode::blow_up: return "blow_up";
    case ErrorCode::invariant_violation: return "invariant_violation";
    case ErrorCode::registry_mismatch: return "registry_mismatch";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace mpx
