#ifndef EDGEDISP_H
#define EDGEDISP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EdStatus {
  ED_STATUS_OK = 0,
  ED_STATUS_NULL_POINTER = 1,
  ED_STATUS_INVALID_UTF8 = 2,
  ED_STATUS_INVALID_ARGUMENT = 3,
  ED_STATUS_IO = 4,
  ED_STATUS_PARSE = 5,
  ED_STATUS_UNKNOWN_POLICY = 6,
  ED_STATUS_BUDGET_EXCEEDED = 7,
  ED_STATUS_SCHEMA_VERSION = 8,
  ED_STATUS_PANIC = 99,
} EdStatus;

/**
 * A validated problem instance.
 */
typedef struct EdInstance EdInstance;

/**
 * The recorded output of one simulation run.
 */
typedef struct EdRun EdRun;

typedef struct EdDims {
  size_t num_aps;
  size_t num_servers;
  size_t num_job_types;
  size_t slots_per_interval;
  size_t max_queue_len;
  double discount;
} EdDims;

typedef struct EdRunSummary {
  uint64_t intervals;
  double mean_cost;
  double mean_jobs_in_system;
  double mean_response_intervals;
  double mean_response_slots;
  double drop_rate;
  uint64_t arrivals;
  uint64_t completions;
  uint64_t drops;
} EdRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * Valid until the next call into the library on the same thread.
 */
const char *ed_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ed_version(void);

/**
 * Loads and validates an instance JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum EdStatus ed_instance_load(const char *path, struct EdInstance **out);

/**
 * Parses and validates an instance from a JSON string.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum EdStatus ed_instance_from_json(const char *json, struct EdInstance **out);

/**
 * Generates the default synthetic benchmark instance for `seed`.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum EdStatus ed_instance_generate(uint64_t seed, struct EdInstance **out);

/**
 * # Safety
 * `inst` must be null or a handle from this library not yet freed.
 */
void ed_instance_free(struct EdInstance *inst);

/**
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum EdStatus ed_instance_dims(const struct EdInstance *inst, struct EdDims *out);

/**
 * Approximate discounted cost of holding the selfish table from the
 * empty state.
 *
 * # Safety
 * `inst` must be a live handle and `out` writable.
 */
enum EdStatus ed_approx_value_empty(const struct EdInstance *inst, double *out);

/**
 * Simulates `intervals` broadcast intervals under the named policy
 * (`static`, `random`, `selfish`, `queue_aware` or `mdp`).
 *
 * # Safety
 * `inst` must be a live handle, `policy` NUL-terminated and `out` writable.
 */
enum EdStatus ed_simulate(const struct EdInstance *inst,
                          const char *policy,
                          uint64_t intervals,
                          uint64_t seed,
                          struct EdRun **out);

/**
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum EdStatus ed_run_summary(const struct EdRun *run, struct EdRunSummary *out);

/**
 * Copies up to `capacity` per-interval costs into `buf` and stores the
 * total number available in `len`. Pass `buf = NULL` to query the length.
 *
 * # Safety
 * `run` must be a live handle, `buf` null or valid for `capacity`
 * doubles, and `len` writable.
 */
enum EdStatus ed_run_costs(const struct EdRun *run, double *buf, size_t capacity, size_t *len);

/**
 * # Safety
 * `run` must be null or a handle from this library not yet freed.
 */
void ed_run_free(struct EdRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDGEDISP_H */
