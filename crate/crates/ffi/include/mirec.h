#ifndef MIREC_H
#define MIREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MirecStatus {
  MIREC_STATUS_OK = 0,
  MIREC_STATUS_NULL_POINTER = 1,
  MIREC_STATUS_INVALID_ARGUMENT = 2,
  MIREC_STATUS_IO = 3,
  MIREC_STATUS_DATA = 4,
  MIREC_STATUS_CHECKPOINT = 5,
  MIREC_STATUS_HASH_MISMATCH = 6,
  MIREC_STATUS_OUT_OF_RANGE = 7,
  MIREC_STATUS_INTERNAL = 8,
} MirecStatus;

/**
 * Opaque handle to a loaded model and its dataset.
 */
typedef struct MirecModel MirecModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads the run in `run_dir` against the prepared dataset in
 * `dataset_dir`. `lambda_p` weighs the many-shot (or first) model of
 * two-component runs and is ignored otherwise.
 *
 * # Safety
 * Both paths must be NUL-terminated strings; `out` must be writable.
 */
enum MirecStatus mirec_model_open(const char *dataset_dir,
                                  const char *run_dir,
                                  double lambda_p,
                                  struct MirecModel **out);

/**
 * Releases a handle from [`mirec_model_open`]. Null is ignored.
 *
 * # Safety
 * `model` must come from [`mirec_model_open`] and not be used afterwards.
 */
void mirec_model_free(struct MirecModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
uint32_t mirec_model_num_users(const struct MirecModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
uint32_t mirec_model_num_items(const struct MirecModel *model);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
uint32_t mirec_model_embedding_dim(const struct MirecModel *model);

/**
 * Score of one user/item pair (dense ids).
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum MirecStatus mirec_model_score(const struct MirecModel *model,
                                   uint32_t user,
                                   uint32_t item,
                                   double *out);

/**
 * Writes up to `k` best items for `user` into `items` and `scores`
 * (both of capacity `k`), best first, ties to the smaller id. With
 * `exclude_seen` the user's training and validation items are skipped.
 * `written` receives the number of entries filled.
 *
 * # Safety
 * `model` must be a live handle; `items` and `scores` must hold `k`
 * elements; `written` must be writable.
 */
enum MirecStatus mirec_model_top_k(const struct MirecModel *model,
                                   uint32_t user,
                                   size_t k,
                                   bool exclude_seen,
                                   uint32_t *items,
                                   double *scores,
                                   size_t *written);

/**
 * `score + lambda_c · ln(p)`, the popularity-corrected logit. Fails for
 * `p` outside (0, 1].
 *
 * # Safety
 * `out` must be writable.
 */
enum MirecStatus mirec_corrected_score(double score, double p, double lambda_c, double *out);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *mirec_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mirec_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIREC_H */
