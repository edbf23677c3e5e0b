#ifndef COGNITRAJ_H
#define COGNITRAJ_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgtStatus {
  CGT_STATUS_OK = 0,
  CGT_STATUS_NULL_POINTER = 1,
  CGT_STATUS_INVALID_ARGUMENT = 2,
  CGT_STATUS_BUFFER_TOO_SMALL = 3,
  CGT_STATUS_IO = 4,
  CGT_STATUS_MODEL = 5,
  CGT_STATUS_UNDEFINED = 6,
  CGT_STATUS_PANIC = 7,
} CgtStatus;

/**
 * Opaque trained model.
 */
typedef struct CgtModel CgtModel;

/**
 * Relative kinematics of agent i with respect to agent j.
 */
typedef struct CgtPair {
  double dp_x;
  double dp_y;
  double dv_x;
  double dv_y;
  double da_x;
  double da_y;
} CgtPair;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *cgt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cgt_version(void);

/**
 * Time-to-collision. `*out_approaching` is 0 for a separating pair, in which
 * case `*out_seconds` is set to +infinity.
 *
 * # Safety
 * `pair`, `out_seconds` and `out_approaching` must be valid pointers.
 */
enum CgtStatus cgt_ttc(const struct CgtPair *pair, double *out_seconds, int32_t *out_approaching);

/**
 * Time exposed TTC over `len` TTC values; +infinity marks a separating frame.
 *
 * # Safety
 * `ttc` must point to `len` doubles and `out` must be valid.
 */
enum CgtStatus cgt_tet(const double *ttc, size_t len, double ttc_star, double tau_sc, double *out);

/**
 * Time integrated TTC; same conventions as [`cgt_tet`].
 *
 * # Safety
 * `ttc` must point to `len` doubles and `out` must be valid.
 */
enum CgtStatus cgt_tit(const double *ttc, size_t len, double ttc_star, double tau_sc, double *out);

/**
 * Subjective risk perception of a pair.
 *
 * # Safety
 * `pair` and `out` must be valid pointers.
 */
enum CgtStatus cgt_spr(const struct CgtPair *pair, double *out);

/**
 * Dynamic risk volatility of a pair.
 *
 * # Safety
 * `pair` and `out` must be valid pointers.
 */
enum CgtStatus cgt_drv(const struct CgtPair *pair, double *out);

/**
 * Loads a checkpoint written by the library or the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CgtStatus cgt_model_load(const char *path, struct CgtModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`cgt_model_load`] and not be used afterwards.
 */
void cgt_model_free(struct CgtModel *model);

/**
 * Number of predicted modes and future frames.
 *
 * # Safety
 * All pointers must be valid.
 */
enum CgtStatus cgt_model_shape(const struct CgtModel *model, size_t *out_modes, size_t *out_frames);

/**
 * Predicts one window given as JSON (the format of the CLI's window files).
 *
 * `positions` receives `modes × frames × 2` absolute coordinates, mode-major;
 * `confidences` receives `modes` values summing to one.
 *
 * # Safety
 * `model` must be a live handle, `window_json` NUL-terminated, and the output
 * buffers must hold the stated number of doubles.
 */
enum CgtStatus cgt_model_predict(const struct CgtModel *model,
                                 const char *window_json,
                                 double *positions,
                                 size_t positions_len,
                                 double *confidences,
                                 size_t confidences_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COGNITRAJ_H */
