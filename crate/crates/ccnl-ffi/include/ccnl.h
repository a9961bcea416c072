#ifndef CCNL_H
#define CCNL_H

/* Generated by cbindgen from the ccnl-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum CcnlStatus {
  CCNL_STATUS_OK = 0,
  CCNL_STATUS_NULL_ARGUMENT = 1,
  CCNL_STATUS_INVALID_UTF8 = 2,
  CCNL_STATUS_LOAD_FAILED = 3,
  CCNL_STATUS_PREDICT_FAILED = 4,
  CCNL_STATUS_METRIC_FAILED = 5,
} CcnlStatus;

/**
 * Opaque model handle.
 */
typedef struct CcnlModelHandle CcnlModelHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the most recent error message for this thread into `buffer`
 * (NUL-terminated, truncated to `length` bytes). Returns the full
 * message length in bytes, excluding the NUL. A `buffer` of NULL or a
 * `length` of 0 only queries the length.
 */
uintptr_t ccnl_last_error(char *buffer, uintptr_t length);

/**
 * Static version string of the underlying library, NUL-terminated.
 */
const char *ccnl_version(void);

/**
 * Load a model checkpoint from `path` into a new handle written to
 * `out`. On failure `out` is untouched.
 */
enum CcnlStatus ccnl_model_load(const char *path, struct CcnlModelHandle **out);

/**
 * Release a handle returned by `ccnl_model_load`. NULL is a no-op.
 */
void ccnl_model_free(struct CcnlModelHandle *handle);

/**
 * Classify one (source-language, translated) text pair. Writes the
 * predicted label (0 or 1) to `out_label` and, when `out_probs` is not
 * NULL, the two class probabilities to `out_probs[0..2]`.
 */
enum CcnlStatus ccnl_predict(const struct CcnlModelHandle *handle,
                             const char *source_text,
                             const char *target_text,
                             uint8_t *out_label,
                             double *out_probs);

/**
 * Macro-averaged F1 over two parallel label arrays of `length` entries
 * (labels must be 0 or 1). Writes the score to `out`.
 */
enum CcnlStatus ccnl_macro_f1(const uint8_t *gold,
                              const uint8_t *predicted,
                              uintptr_t length,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCNL_H */
