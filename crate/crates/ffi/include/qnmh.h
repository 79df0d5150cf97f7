#ifndef QNMH_H
#define QNMH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QnmhStatus {
  QNMH_STATUS_OK = 0,
  QNMH_STATUS_NULL_POINTER = 1,
  QNMH_STATUS_INVALID_ARGUMENT = 2,
  QNMH_STATUS_BUFFER_TOO_SMALL = 3,
  QNMH_STATUS_CONFIG = 4,
  QNMH_STATUS_MODEL = 5,
  QNMH_STATUS_TARGET = 6,
  QNMH_STATUS_SAMPLER = 7,
  QNMH_STATUS_DIAGNOSTICS = 8,
  QNMH_STATUS_IO = 9,
  QNMH_STATUS_PANIC = 10,
} QnmhStatus;

typedef enum QnmhModel {
  QNMH_MODEL_LGSS = 0,
  QNMH_MODEL_SV = 1,
} QnmhModel;

typedef enum QnmhBackend {
  QNMH_BACKEND_KALMAN = 0,
  QNMH_BACKEND_PARTICLE = 1,
} QnmhBackend;

/**
 * Observations `y_1..y_T`, optionally with the simulated states.
 */
typedef struct QnmhDataSet QnmhDataSet;

/**
 * Log-posterior of a model's parameters given a data set.
 */
typedef struct QnmhTarget QnmhTarget;

/**
 * Output of one chain.
 */
typedef struct QnmhTrace QnmhTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *qnmh_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *qnmh_version(void);

/**
 * Simulates `steps` observations from `model` at natural parameters `theta`.
 *
 * # Safety
 * `theta` holds `dim` values; `out` is writable.
 */
enum QnmhStatus qnmh_dataset_simulate(enum QnmhModel model,
                                      const double *theta,
                                      uintptr_t dim,
                                      uintptr_t steps,
                                      uint64_t seed,
                                      struct QnmhDataSet **out);

/**
 * Wraps `len` observations.
 *
 * # Safety
 * `y` holds `len` values; `out` is writable.
 */
enum QnmhStatus qnmh_dataset_new(const double *y, uintptr_t len, struct QnmhDataSet **out);

/**
 * Number of observations, 0 for a null handle.
 *
 * # Safety
 * `data` is null or a live handle.
 */
uintptr_t qnmh_dataset_len(const struct QnmhDataSet *data);

/**
 * Copies the observations into `buf`; `*len` receives the count.
 *
 * # Safety
 * `data` is a live handle; `buf` has room for `cap` values; `len` is null or writable.
 */
enum QnmhStatus qnmh_dataset_observations(const struct QnmhDataSet *data,
                                          double *buf,
                                          uintptr_t cap,
                                          uintptr_t *len);

/**
 * # Safety
 * `data` is null or a handle not yet freed.
 */
void qnmh_dataset_free(struct QnmhDataSet *data);

/**
 * Posterior target for `model` on `data`. `particles` and `lag` are used by
 * the particle backend only.
 *
 * # Safety
 * `data` is a live handle; `out` is writable.
 */
enum QnmhStatus qnmh_target_new(enum QnmhModel model,
                                const struct QnmhDataSet *data,
                                enum QnmhBackend backend,
                                uintptr_t particles,
                                uintptr_t lag,
                                struct QnmhTarget **out);

/**
 * Parameter dimension, 0 for a null handle.
 *
 * # Safety
 * `target` is null or a live handle.
 */
uintptr_t qnmh_target_dim(const struct QnmhTarget *target);

/**
 * Log-target at unconstrained `theta_bar`. When `gradient` is non-null it
 * receives `dim` values (NaN where the density is zero). `seed` drives the
 * particle backend.
 *
 * # Safety
 * `target` is a live handle; `theta_bar` holds `dim` values; `log_target`
 * is writable; `gradient` is null or has room for `dim` values.
 */
enum QnmhStatus qnmh_target_evaluate(const struct QnmhTarget *target,
                                     const double *theta_bar,
                                     uintptr_t dim,
                                     uint64_t seed,
                                     double *log_target,
                                     double *gradient);

/**
 * # Safety
 * `target` is null or a handle not yet freed.
 */
void qnmh_target_free(struct QnmhTarget *target);

/**
 * Runs one chain on `target` with the proposal and chain settings of a
 * `qnmh` TOML config (keys not given take their defaults; `data` is
 * ignored). pMH proposals run their pilot chain first.
 *
 * # Safety
 * `target` is a live handle; `config_toml` is a nul-terminated string;
 * `out` is writable.
 */
enum QnmhStatus qnmh_run_chain(const struct QnmhTarget *target,
                               const char *config_toml,
                               uint64_t seed,
                               struct QnmhTrace **out);

/**
 * Number of records (iterations), 0 for a null handle.
 *
 * # Safety
 * `trace` is null or a live handle.
 */
uintptr_t qnmh_trace_len(const struct QnmhTrace *trace);

/**
 * Parameter dimension, 0 for a null handle.
 *
 * # Safety
 * `trace` is null or a live handle.
 */
uintptr_t qnmh_trace_dim(const struct QnmhTrace *trace);

/**
 * Natural-coordinate states, row-major `len x dim`.
 *
 * # Safety
 * `trace` is a live handle; `buf` has room for `cap` values; `len` is null or writable.
 */
enum QnmhStatus qnmh_trace_states(const struct QnmhTrace *trace,
                                  double *buf,
                                  uintptr_t cap,
                                  uintptr_t *len);

/**
 * Log-target of each state.
 *
 * # Safety
 * As [`qnmh_trace_states`].
 */
enum QnmhStatus qnmh_trace_log_target(const struct QnmhTrace *trace,
                                      double *buf,
                                      uintptr_t cap,
                                      uintptr_t *len);

/**
 * Acceptance indicator (0 or 1) of each iteration.
 *
 * # Safety
 * As [`qnmh_trace_states`].
 */
enum QnmhStatus qnmh_trace_accepted(const struct QnmhTrace *trace,
                                    uint8_t *buf,
                                    uintptr_t cap,
                                    uintptr_t *len);

/**
 * Post-burn-in acceptance rate, NaN for a null handle.
 *
 * # Safety
 * `trace` is null or a live handle.
 */
double qnmh_trace_acceptance_rate(const struct QnmhTrace *trace);

/**
 * Writes the trace CSV (`time_us` included only when `record_timing` is non-zero).
 *
 * # Safety
 * `trace` is a live handle; `path` is a nul-terminated string.
 */
enum QnmhStatus qnmh_trace_write_csv(const struct QnmhTrace *trace,
                                     const char *path,
                                     uint8_t record_timing);

/**
 * # Safety
 * `trace` is null or a handle not yet freed.
 */
void qnmh_trace_free(struct QnmhTrace *trace);

/**
 * Inefficiency factor of a series of `len` values.
 *
 * # Safety
 * `series` holds `len` values; `out` is writable.
 */
enum QnmhStatus qnmh_iact(const double *series, uintptr_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QNMH_H */
