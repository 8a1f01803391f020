#ifndef NOONSIM_H
#define NOONSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  NOONSIM_STATUS_OK = 0,
  NOONSIM_STATUS_NULL_POINTER = 1,
  NOONSIM_STATUS_INVALID_UTF8 = 2,
  /**
   * Invalid configuration or parameters.
   */
  NOONSIM_STATUS_CONFIG = 3,
  /**
   * Integrator or integrity failure during a run.
   */
  NOONSIM_STATUS_RUNTIME = 4,
  NOONSIM_STATUS_OUT_OF_RANGE = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  NOONSIM_STATUS_PANIC = 6,
} NoonsimStatus;

/**
 * Parsed and resolved configuration.
 */
typedef struct NoonsimConfig NoonsimConfig;

/**
 * Outcome of a run.
 */
typedef struct NoonsimResult NoonsimResult;

/**
 * Observables at one output time.
 */
typedef struct {
  double t_us;
  /**
   * Fidelity with the target state of steps 1, 2 and 3.
   */
  double fidelity[3];
  /**
   * Qudit level populations.
   */
  double populations[5];
  /**
   * Mean photon number in cavities 1 and 2.
   */
  double nbar[2];
  double leakage;
} NoonsimSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *noonsim_version(void);

/**
 * Message of the last failed call on this thread, or NULL.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *noonsim_last_error(void);

/**
 * Parses a JSON configuration.
 *
 * # Safety
 * `json` must be NULL or a NUL-terminated string; `out` must be NULL or writable.
 */
NoonsimStatus noonsim_config_from_json(const char *json, NoonsimConfig **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from [`noonsim_config_from_json`] not yet freed.
 */
void noonsim_config_free(NoonsimConfig *cfg);

/**
 * Writes the SHA-256 hex digest of the resolved configuration (64 characters
 * plus NUL) into `buf`, which must hold at least `len` bytes.
 *
 * # Safety
 * `cfg` must be a live handle; `buf` must be writable for `len` bytes.
 */
NoonsimStatus noonsim_config_hash(const NoonsimConfig *cfg, char *buf, size_t len);

/**
 * Runs the protocol described by `cfg`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be NULL or writable.
 */
NoonsimStatus noonsim_run(const NoonsimConfig *cfg, NoonsimResult **out);

/**
 * # Safety
 * `res` must be NULL or a handle from [`noonsim_run`] not yet freed.
 */
void noonsim_result_free(NoonsimResult *res);

/**
 * Number of integrated steps (1 to 3), or 0 for NULL.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
size_t noonsim_result_step_count(const NoonsimResult *res);

/**
 * Fidelity `F_p(τ_p)` for step `step` in 1..=3.
 *
 * # Safety
 * `res` must be a live handle; `out` must be writable.
 */
NoonsimStatus noonsim_result_step_fidelity(const NoonsimResult *res, size_t step, double *out);

/**
 * Fidelity of the last integrated step at the end of the run.
 *
 * # Safety
 * `res` must be a live handle; `out` must be writable.
 */
NoonsimStatus noonsim_result_final_fidelity(const NoonsimResult *res, double *out);

/**
 * Number of output samples, or 0 for NULL.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
size_t noonsim_result_sample_count(const NoonsimResult *res);

/**
 * Copies sample `index` into `out`.
 *
 * # Safety
 * `res` must be a live handle; `out` must be writable.
 */
NoonsimStatus noonsim_result_sample(const NoonsimResult *res, size_t index, NoonsimSample *out);

/**
 * Number of warnings attached to the run, or 0 for NULL.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
size_t noonsim_result_warning_count(const NoonsimResult *res);

/**
 * Warning `index` as a NUL-terminated string owned by the result, or NULL when out of range.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
const char *noonsim_result_warning(const NoonsimResult *res, size_t index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOONSIM_H */
