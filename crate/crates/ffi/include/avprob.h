#ifndef AVPROB_H
#define AVPROB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AvStatus {
  AV_STATUS_OK = 0,
  AV_STATUS_NULL_POINTER = 1,
  AV_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration or arguments.
   */
  AV_STATUS_USAGE = 3,
  /**
   * Unreadable or inconsistent input data.
   */
  AV_STATUS_DATA = 4,
  /**
   * Numerical failure inside the model.
   */
  AV_STATUS_NUMERIC = 5,
  AV_STATUS_PANIC = 6,
} AvStatus;

/**
 * Opaque ensemble handle.
 */
typedef struct AvEnsemble AvEnsemble;

typedef struct AvVerdict {
  /**
   * Same-author score in `[0, 1]`; exactly 0.5 for a non-response.
   */
  double value;
  bool is_nonresponse;
} AvVerdict;

typedef struct AvScores {
  double auc;
  double c_at_1;
  double f_05_u;
  double f1;
  double brier;
  double overall;
} AvScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load the bundle directory at `path` into a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer. The
 * handle written to `out` must be released with [`av_ensemble_free`].
 */
enum AvStatus av_ensemble_load(const char *path, struct AvEnsemble **out);

/**
 * Number of ensemble members.
 *
 * # Safety
 * `handle` must come from [`av_ensemble_load`]; `out` must be valid.
 */
enum AvStatus av_ensemble_len(const struct AvEnsemble *handle, size_t *out);

/**
 * Score one pair of texts. With `use_detector` false every trial is
 * answered.
 *
 * # Safety
 * `handle` must come from [`av_ensemble_load`]; the texts must be
 * NUL-terminated; `out` must be valid.
 */
enum AvStatus av_ensemble_score(const struct AvEnsemble *handle,
                                const char *text1,
                                const char *text2,
                                bool use_detector,
                                struct AvVerdict *out);

/**
 * Release a handle. Null is ignored.
 *
 * # Safety
 * `handle` must come from [`av_ensemble_load`] and not be used afterwards.
 */
void av_ensemble_free(struct AvEnsemble *handle);

/**
 * Evaluation metrics for `n` answers. `truth[i]` is nonzero for
 * same-author trials; a value of exactly 0.5 is a non-response.
 *
 * # Safety
 * `values` and `truth` must point to `n` readable elements; `out` must be
 * valid.
 */
enum AvStatus av_evaluate(const double *values,
                          const uint8_t *truth,
                          size_t n,
                          struct AvScores *out);

/**
 * Copy the calling thread's last error message into `buf` (truncated and
 * NUL-terminated). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null with `len == 0`.
 */
size_t av_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *av_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVPROB_H */
