// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mpx {

enum class ErrorCode {
  invalid_argument,
  runtime_shut_down,
  unknown_action,
  timeout,
  double_set,
  duplicate_write,
  not_owner,
  not_found,
  transport,
  decode,
  config,
  contract_violation,
  blow_up,
  invariant_violation,
  registry_mismatch,
  internal,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace mpx
