#ifndef FAASFORGE_H
#define FAASFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ForgeStatus {
  FORGE_STATUS_OK = 0,
  FORGE_STATUS_NULL_ARGUMENT = 1,
  FORGE_STATUS_INVALID_UTF8 = 2,
  FORGE_STATUS_INVALID_JSON = 3,
  FORGE_STATUS_INVALID_ARGUMENT = 4,
  FORGE_STATUS_NOT_FOUND = 5,
  FORGE_STATUS_DUPLICATE = 6,
  FORGE_STATUS_UNKNOWN_RUNTIME = 7,
  FORGE_STATUS_DEPLOY_FAILED = 8,
  FORGE_STATUS_GUEST_ERROR = 9,
  FORGE_STATUS_TIMEOUT = 10,
  FORGE_STATUS_BUSY = 11,
  FORGE_STATUS_INTERNAL = 12,
} ForgeStatus;

// An embedded platform with its own async runtime.
typedef struct ForgePlatform ForgePlatform;

typedef struct ForgeSimulator ForgeSimulator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread; do not free it.
const char *forge_last_error(void);

// Library version as a static NUL-terminated string.
const char *forge_version(void);

// Frees a string returned through an `out` pointer.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library that has not
// been freed yet.
void forge_string_free(char *s);

// Creates a platform. `config_json` is a platform config object, or NULL
// for defaults.
//
// # Safety
// `config_json` must be NULL or a valid C string; `out` must be writable.
enum ForgeStatus forge_platform_new(const char *config_json, struct ForgePlatform **out);

// Stops every guest and frees the handle.
//
// # Safety
// `p` must be NULL or a live handle from [`forge_platform_new`].
void forge_platform_free(struct ForgePlatform *p);

// Deploys a function descriptor (JSON, source files base64) and writes the
// deployment record as JSON to `out`.
//
// # Safety
// Pointers must be valid; `out` must be writable.
enum ForgeStatus forge_platform_deploy(const struct ForgePlatform *p,
                                       const char *descriptor_json,
                                       char **out);

// Invokes a running function with `len` bytes of payload. Writes the HTTP
// status and the response body (lossy UTF-8, not JSON-encoded).
//
// # Safety
// `payload` must point to `len` readable bytes (or be NULL with `len` 0);
// `out_status` and `out_body` must be writable.
enum ForgeStatus forge_platform_invoke(const struct ForgePlatform *p,
                                       const char *name,
                                       const uint8_t *payload,
                                       size_t len,
                                       uint16_t *out_status,
                                       char **out_body);

// Stops a function and frees its name.
//
// # Safety
// Pointers must be valid.
enum ForgeStatus forge_platform_remove(const struct ForgePlatform *p, const char *name);

// Writes every deployment record as a JSON array.
//
// # Safety
// Pointers must be valid; `out` must be writable.
enum ForgeStatus forge_platform_list(const struct ForgePlatform *p, char **out);

// Creates a simulator from a device state JSON, or the built-in home when
// `state_json` is NULL.
//
// # Safety
// `state_json` must be NULL or a valid C string; `out` must be writable.
enum ForgeStatus forge_sim_new(const char *state_json, struct ForgeSimulator **out);

// # Safety
// `s` must be NULL or a live handle from [`forge_sim_new`].
void forge_sim_free(struct ForgeSimulator *s);

// Writes the full device state, event log and clock as JSON.
//
// # Safety
// Pointers must be valid; `out` must be writable.
enum ForgeStatus forge_sim_state(const struct ForgeSimulator *s, char **out);

// Sets one attribute; `value_json` is a JSON scalar such as `"on"`, `40`
// or `true`.
//
// # Safety
// Pointers must be valid C strings.
enum ForgeStatus forge_sim_set(const struct ForgeSimulator *s,
                               const char *device,
                               const char *attribute,
                               const char *value_json);

// Applies one stimulus (JSON, e.g. `{"at": 5, "kind": "fire_sensor",
// "device": "hallway_motion"}`).
//
// # Safety
// Pointers must be valid C strings.
enum ForgeStatus forge_sim_apply(const struct ForgeSimulator *s, const char *stimulus_json);

// Extracts the handler from a model response and writes the artifact JSON.
//
// # Safety
// Pointers must be valid C strings; `out` must be writable.
enum ForgeStatus forge_extract_function(const char *raw_text, const char *runtime, char **out);

// Classifies a failure. `stage` is one of `generation`, `extraction`,
// `deployment`, `invocation`; `code` may be NULL when no code was produced.
//
// # Safety
// Pointers must be valid C strings (or NULL for `code`); `out` must be
// writable.
enum ForgeStatus forge_classify_failure(const char *stage,
                                        const char *evidence,
                                        const char *code,
                                        const char *runtime,
                                        char **out);

// Computes the metric report for guest source.
//
// # Safety
// Pointers must be valid C strings; `out` must be writable.
enum ForgeStatus forge_metrics_analyze(const char *code, const char *runtime, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAASFORGE_H */
