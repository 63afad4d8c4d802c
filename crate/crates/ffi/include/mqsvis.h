#ifndef MQSVIS_H
#define MQSVIS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of blur widths reported by [`mqs_model_tile`].
 */
#define MQS_BLUR_WIDTHS 4

typedef enum MqsStatus {
  MQS_STATUS_OK = 0,
  MQS_STATUS_NULL_POINTER = 1,
  MQS_STATUS_DOMAIN = 2,
  MQS_STATUS_DEGENERATE_PRESELECTION = 3,
  MQS_STATUS_TABLE_RANGE = 4,
  MQS_STATUS_MARGIN_TOO_SMALL = 5,
  MQS_STATUS_EMPTY_DISTRIBUTION = 6,
  MQS_STATUS_IO = 7,
  MQS_STATUS_BUFFER_TOO_SMALL = 8,
  MQS_STATUS_PANIC = 9,
} MqsStatus;

/**
 * Opaque model handle.
 */
typedef struct MqsModel MqsModel;

/**
 * Sums of one tile work item, see the partial-file format.
 */
typedef struct MqsTilePartial {
  double prob_sum;
  double overlap_sum;
  /**
   * Blurred overlaps for `3σ̄ = 1, 1.5, 15, 150`; valid for the first
   * `blur_count` entries.
   */
  double blur_overlap[MQS_BLUR_WIDTHS];
  uint32_t blur_count;
  double sum_k;
  double sum_l;
  double sum_k2;
  double sum_l2;
  double sum_kl;
  double max_p;
} MqsTilePartial;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call into this library on the same
 * thread.
 */
const char *mqs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mqs_version(void);

/**
 * Builds a model for mean photon parameter `m`, threshold `dth` and
 * reflectivity `r` (0 selects the theoretical projector), and computes its
 * normalization. `eps_rel <= 0` selects the default precision.
 *
 * # Safety
 * `out` must be valid for writing one pointer. Free the handle with
 * [`mqs_model_free`].
 */
enum MqsStatus mqs_model_new(double m,
                             uint64_t dth,
                             double r,
                             double eps_rel,
                             struct MqsModel **out);

/**
 * # Safety
 * `model` must come from [`mqs_model_new`] and not be used afterwards. Null
 * is ignored.
 */
void mqs_model_free(struct MqsModel *model);

/**
 * `|N|²` of the model.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing.
 */
enum MqsStatus mqs_model_norm_sq(const struct MqsModel *model, double *out);

/**
 * `p_Φ(k, l)`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing.
 */
enum MqsStatus mqs_model_probability(const struct MqsModel *model,
                                     uint64_t k,
                                     uint64_t l,
                                     double *out);

/**
 * `E[kᵖ lᵠ]` of the preselected state.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing.
 */
enum MqsStatus mqs_model_moment(const struct MqsModel *model, uint32_t p, uint32_t q, double *out);

/**
 * Fills `buf` with `p_Φ(k, l)` for `k ∈ [k0, k1)`, `l ∈ [l0, l1)`, row-major
 * in `k`. `len` is the capacity of `buf` in elements.
 *
 * # Safety
 * `model` must be a live handle and `buf` valid for `len` writes.
 */
enum MqsStatus mqs_model_grid(const struct MqsModel *model,
                              uint64_t k0,
                              uint64_t k1,
                              uint64_t l0,
                              uint64_t l1,
                              double *buf,
                              size_t len);

/**
 * Computes the work item `(x, y)` of a tiling with edge `size`. With `blur`
 * set, the four default Weierstrass widths are applied.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writing.
 */
enum MqsStatus mqs_model_tile(const struct MqsModel *model,
                              uint64_t x,
                              uint64_t y,
                              uint64_t size,
                              bool blur,
                              struct MqsTilePartial *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MQSVIS_H */
