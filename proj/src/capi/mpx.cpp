// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/mpx.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "mpx/amr/config.hpp"
#include "mpx/common/error.hpp"
#include "mpx/harness/harness.hpp"

struct mpx_session {
  std::unique_ptr<mpx::harness::Session> impl;
};

namespace {

thread_local std::string last_error;

mpx_status status_of(mpx::ErrorCode c) {
  switch (c) {
    case mpx::ErrorCode::config:
    case mpx::ErrorCode::invalid_argument:
      return MPX_CONFIG_ERROR;
    case mpx::ErrorCode::invariant_violation:
    case mpx::ErrorCode::contract_violation:
    case mpx::ErrorCode::blow_up:
      return MPX_INVARIANT_VIOLATION;
    default:
      return MPX_RUNTIME_ERROR;
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

template <class F>
mpx_status guarded(F&& f) {
  last_error.clear();
  try {
    return f();
  } catch (const mpx::Error& e) {
    last_error = std::string(mpx::to_string(e.code())) + ": " + e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return MPX_RUNTIME_ERROR;
  } catch (...) {
    last_error = "unknown error";
    return MPX_RUNTIME_ERROR;
  }
}

mpx::amr::RunConfig parse(const char* text) {
  auto cfg = mpx::amr::parse_text(text ? text : "");
  cfg.validate();
  return cfg;
}

}  // namespace

extern "C" {

const char* mpx_version(void) { return "0.1.0"; }

const char* mpx_last_error(void) { return last_error.c_str(); }

void mpx_string_free(char* s) { std::free(s); }

mpx_status mpx_config_check(const char* config_text, size_t* localities) {
  return guarded([&] {
    auto cfg = parse(config_text);
    if (localities) *localities = cfg.locality_count();
    return MPX_OK;
  });
}

mpx_status mpx_config_normalize(const char* config_text, char** text) {
  return guarded([&] {
    if (!text) mpx::raise(mpx::ErrorCode::invalid_argument, "text is null");
    *text = dup(parse(config_text).to_text());
    return MPX_OK;
  });
}

mpx_status mpx_session_open(const char* config_text, unsigned locality, mpx_session** out) {
  return guarded([&] {
    if (!out) mpx::raise(mpx::ErrorCode::invalid_argument, "out is null");
    *out = nullptr;
    auto s = std::make_unique<mpx_session>();
    s->impl = mpx::harness::Session::open(parse(config_text), locality);
    *out = s.release();
    return MPX_OK;
  });
}

void mpx_session_close(mpx_session* session) {
  try {
    delete session;
  } catch (...) {
  }
}

mpx_status mpx_session_serve(mpx_session* session) {
  return guarded([&] {
    if (!session) mpx::raise(mpx::ErrorCode::invalid_argument, "session is null");
    session->impl->serve();
    return MPX_OK;
  });
}

mpx_status mpx_command(mpx_session* session, const char* command, const char* config_text, const char* options_text,
                       const char* out_dir, char** metrics) {
  if (metrics) *metrics = nullptr;
  return guarded([&] {
    if (!command) mpx::raise(mpx::ErrorCode::invalid_argument, "command is null");
    auto cfg = parse(config_text);
    auto opts = mpx::harness::Options::parse(options_text ? options_text : "");
    auto r = mpx::harness::run_command(command, session ? session->impl.get() : nullptr, cfg, opts,
                                       out_dir ? out_dir : ".");
    if (metrics) *metrics = dup(mpx::harness::metrics_text(r.metrics));
    last_error = r.message;
    return static_cast<mpx_status>(r.status);
  });
}

}  // extern "C"
