/* C interface to the adact training engine.
 *
 * All functions return an AdactStatus; ADACT_STATUS_OK means success and any
 * other value means the out-parameters were left untouched. After a failure,
 * adact_last_error() on the same thread describes what went wrong. */

#ifndef ADACT_H
#define ADACT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code for every fallible call in this ABI.
 *
 * Values other than `Ok` leave out-parameters untouched; call
 * `adact_last_error` on the same thread for the human-readable message.
 */
typedef enum AdactStatus {
  ADACT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  ADACT_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  ADACT_STATUS_INVALID_UTF8 = 2,
  /**
   * Buffer lengths disagree with the model or batch geometry.
   */
  ADACT_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * A value was NaN or infinite where a finite number is required.
   */
  ADACT_STATUS_NON_FINITE = 4,
  /**
   * An argument is outside its documented domain.
   */
  ADACT_STATUS_INVALID_ARGUMENT = 5,
  /**
   * An API was used out of order.
   */
  ADACT_STATUS_CONTRACT_VIOLATION = 6,
  /**
   * A model description is internally inconsistent.
   */
  ADACT_STATUS_INVALID_SPEC = 7,
  /**
   * A dataset file is malformed.
   */
  ADACT_STATUS_DATA_ERROR = 8,
  /**
   * An experiment config failed validation.
   */
  ADACT_STATUS_CONFIG_ERROR = 9,
  /**
   * A learning-rate schedule doesn't cover a requested epoch.
   */
  ADACT_STATUS_SCHEDULE_ERROR = 10,
  /**
   * Run directories being compared are incompatible.
   */
  ADACT_STATUS_COMPARE_ERROR = 11,
  /**
   * A checkpoint file is corrupt or from an unknown version.
   */
  ADACT_STATUS_CHECKPOINT_ERROR = 12,
  /**
   * The operating system reported an I/O failure.
   */
  ADACT_STATUS_IO_ERROR = 13,
  /**
   * A panic was caught at the boundary; state may be stale but memory is intact.
   */
  ADACT_STATUS_PANIC = 14,
} AdactStatus;

/**
 * A loaded model plus the seed recorded in its checkpoint. Opaque to C.
 */
typedef struct AdactModel AdactModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf`.
 *
 * Returns the full message length in bytes (excluding the NUL terminator).
 * At most `cap - 1` bytes are copied and the result is always
 * NUL-terminated; pass a null `buf` or zero `cap` to query the length alone.
 *
 * # Safety
 * `buf` must be null or valid for writing `cap` bytes.
 */
size_t adact_last_error(char *buf, size_t cap);

/**
 * Returns the library version as a static NUL-terminated string.
 */
const char *adact_version(void);

/**
 * Loads a model checkpoint from `path` into a fresh handle.
 *
 * On success `*out` owns the model; release it with `adact_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writing one
 * pointer.
 */
enum AdactStatus adact_model_load(const char *path, struct AdactModel **out);

/**
 * Releases a handle returned by `adact_model_load`. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a pointer obtained from `adact_model_load` that
 * has not already been freed.
 */
void adact_model_free(struct AdactModel *model);

/**
 * Writes the seed recorded in the model's checkpoint to `*out`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing one `uint64_t`.
 */
enum AdactStatus adact_model_seed(const struct AdactModel *model, uint64_t *out);

/**
 * Writes the per-sample input length (product of the input shape) to `*out`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing one `size_t`.
 */
enum AdactStatus adact_model_input_len(const struct AdactModel *model, size_t *out);

/**
 * Writes the number of output classes to `*out`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing one `size_t`.
 */
enum AdactStatus adact_model_classes(const struct AdactModel *model, size_t *out);

/**
 * Runs inference on a batch packed row-major into `input`.
 *
 * `input_len` must be a positive multiple of the per-sample input length;
 * the quotient is the batch size `n`, and `out_len` must equal
 * `n * classes`. Logits are written to `out` in batch order, one row of
 * `classes` values per sample.
 *
 * # Safety
 * `model` must be a live handle, `input` valid for reading `input_len`
 * doubles, and `out` valid for writing `out_len` doubles.
 */
enum AdactStatus adact_model_infer(const struct AdactModel *model,
                                   const double *input,
                                   size_t input_len,
                                   double *out,
                                   size_t out_len);

/**
 * Evaluates an adaptive activation elementwise: `out[i] = g(z[i])`.
 *
 * `kind` is one of `"asigmoid"`, `"atanh"`, `"arelu"` and `(a, b, c, d)` are
 * its four scalars. Passing `n == 0` is a no-op.
 *
 * # Safety
 * `kind` must be a NUL-terminated string; `z` must be valid for reading and
 * `out` for writing `n` doubles when `n > 0`.
 */
enum AdactStatus adact_activation_forward(const char *kind,
                                          double a,
                                          double b,
                                          double c,
                                          double d,
                                          const double *z,
                                          size_t n,
                                          double *out);

/**
 * Backpropagates through an adaptive activation.
 *
 * Given inputs `z` and the loss gradient `upstream` at the activation's
 * output, writes the gradient with respect to `z` into `out_dz` (length `n`)
 * and the gradients with respect to `(a, b, c, d)` into `out_dparams`
 * (length 4). Either output pointer may be null to skip that gradient.
 *
 * # Safety
 * `kind` must be a NUL-terminated string; `z` and `upstream` must be valid
 * for reading `n` doubles; `out_dz` must be null or valid for writing `n`
 * doubles; `out_dparams` must be null or valid for writing 4 doubles.
 */
enum AdactStatus adact_activation_backward(const char *kind,
                                           double a,
                                           double b,
                                           double c,
                                           double d,
                                           const double *z,
                                           const double *upstream,
                                           size_t n,
                                           double *out_dz,
                                           double *out_dparams);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADACT_H */
