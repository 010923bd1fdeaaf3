#ifndef ZILN_UPLIFT_H
#define ZILN_UPLIFT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible FFI call.
 */
typedef enum ZilnUpliftStatus {
  ZILN_UPLIFT_STATUS_OK = 0,
  ZILN_UPLIFT_STATUS_NULL_POINTER = 1,
  ZILN_UPLIFT_STATUS_INVALID_UTF8 = 2,
  ZILN_UPLIFT_STATUS_IO = 3,
  ZILN_UPLIFT_STATUS_PARSE = 4,
  ZILN_UPLIFT_STATUS_CONFIG = 5,
  ZILN_UPLIFT_STATUS_NUMERIC = 6,
  ZILN_UPLIFT_STATUS_SHAPE_MISMATCH = 7,
  ZILN_UPLIFT_STATUS_PANIC = 99,
} ZilnUpliftStatus;

/**
 * Opaque scoring handle wrapping a loaded forest or gated-net artifact.
 */
typedef struct ZilnUpliftModel ZilnUpliftModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a model artifact (forest or net JSON; the kind is detected) and
 * store the handle in `out`. The handle must be released with
 * [`ziln_uplift_model_free`].
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum ZilnUpliftStatus ziln_uplift_model_load(const char *path, struct ZilnUpliftModel **out);

/**
 * Release a handle returned by [`ziln_uplift_model_load`]. NULL is a no-op.
 *
 * # Safety
 * `model` must be NULL or a pointer obtained from `ziln_uplift_model_load`
 * that has not been freed yet.
 */
void ziln_uplift_model_free(struct ZilnUpliftModel *model);

/**
 * Feature-vector width the model expects; 0 on NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t ziln_uplift_model_n_features(const struct ZilnUpliftModel *model);

/**
 * Predicted uplift for one feature row of length `len`.
 *
 * # Safety
 * `model` must be a live handle, `features` must point to `len` readable
 * doubles, and `out` must be a valid pointer.
 */
enum ZilnUpliftStatus ziln_uplift_predict(const struct ZilnUpliftModel *model,
                                          const double *features,
                                          size_t len,
                                          double *out);

/**
 * Predicted uplift for `n_rows` rows stored row-major with `n_features`
 * columns; writes `n_rows` doubles to `out`.
 *
 * # Safety
 * `model` must be a live handle, `features` must point to
 * `n_rows * n_features` readable doubles, and `out` to `n_rows` writable
 * doubles.
 */
enum ZilnUpliftStatus ziln_uplift_predict_batch(const struct ZilnUpliftModel *model,
                                                const double *features,
                                                size_t n_rows,
                                                size_t n_features,
                                                double *out);

/**
 * Expected outcome `pi * exp(mu + sigma^2 / 2)` of one ZILN branch.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ZilnUpliftStatus ziln_uplift_expected_value(double pi, double mu, double sigma, double *out);

/**
 * Copy the last error message of this thread into `buffer` (NUL
 * terminated, truncated to `capacity`). Returns the full message length in
 * bytes excluding the terminator, or 0 when no error is recorded.
 *
 * # Safety
 * `buffer` must be NULL (to query the length) or point to `capacity`
 * writable bytes.
 */
size_t ziln_uplift_last_error_message(char *buffer, size_t capacity);

/**
 * Static library version string; do not free.
 */
const char *ziln_uplift_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZILN_UPLIFT_H */
