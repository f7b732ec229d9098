// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

// C interface to the mpx runtime and solver harness.
//
// Configurations and command options are `key=value` lines. Functions return
// an mpx_status; on failure mpx_last_error() describes the error on the
// calling thread until the next call.

#ifndef MPX_MPX_H_
#define MPX_MPX_H_

#include <stddef.h>

#if defined(_WIN32)
#define MPX_API __declspec(dllexport)
#else
#define MPX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mpx_status {
  MPX_OK = 0,
  MPX_INVARIANT_VIOLATION = 1,
  MPX_CONFIG_ERROR = 2,
  MPX_RUNTIME_ERROR = 3,
} mpx_status;

typedef struct mpx_session mpx_session;

MPX_API const char* mpx_version(void);
MPX_API const char* mpx_last_error(void);
MPX_API void mpx_string_free(char* s);

// Validates a configuration and reports how many localities it names.
MPX_API mpx_status mpx_config_check(const char* config_text, size_t* localities);
// Writes the normalized configuration to *text (free with mpx_string_free).
MPX_API mpx_status mpx_config_normalize(const char* config_text, char** text);

// Joins the configured localities as `locality`. With several localities
// this blocks until every peer has connected.
MPX_API mpx_status mpx_session_open(const char* config_text, unsigned locality, mpx_session** out);
// Locality 0 releases its peers; the others must have returned from serve.
MPX_API void mpx_session_close(mpx_session* session);
// Localities other than 0: serve runs until locality 0 closes its session.
MPX_API mpx_status mpx_session_serve(mpx_session* session);

// Runs a harness command (evolve, front, compare, sweep, overhead,
// convergence) and writes its files under out_dir. evolve and front run on
// `session` when given. *metrics, if non-null, receives the key=value metrics
// (free with mpx_string_free). Invariant failures return
// MPX_INVARIANT_VIOLATION with the metrics still filled in.
MPX_API mpx_status mpx_command(mpx_session* session, const char* command, const char* config_text,
                               const char* options_text, const char* out_dir, char** metrics);

#ifdef __cplusplus
}
#endif

#endif  // MPX_MPX_H_
