/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef DABEA_H
#define DABEA_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#define DABEA_NUM_CLASSES 7

#define DABEA_POOL_AVG 0

#define DABEA_POOL_MAX 1

#define DABEA_POOL_EXTREME 2

#define DABEA_LAYOUT_SHARED 0

#define DABEA_LAYOUT_PER_CLASS 1

#define DABEA_ZERO_SUPPORT_EXCLUDE 0

#define DABEA_ZERO_SUPPORT_ZERO 1

/**
 * Result of every fallible call.
 */
typedef enum DabeaStatus {
  DABEA_STATUS_OK = 0,
  /**
   * Bad argument or configuration.
   */
  DABEA_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Input data failed validation or could not be read.
   */
  DABEA_STATUS_VALIDATION = 2,
  /**
   * Non-finite values or divergence.
   */
  DABEA_STATUS_NUMERIC = 3,
  /**
   * A required pointer was null.
   */
  DABEA_STATUS_NULL_POINTER = 4,
  /**
   * A string argument was not valid UTF-8.
   */
  DABEA_STATUS_UTF8 = 5,
  /**
   * Internal panic caught at the boundary.
   */
  DABEA_STATUS_PANIC = 6,
} DabeaStatus;

/**
 * Bagged predictions `[N × 7 × n × M]`.
 */
typedef struct DabeaBag DabeaBag;

/**
 * Fusion weights with the channel ids they were trained on.
 */
typedef struct DabeaFusion DabeaFusion;

/**
 * Image ids with ground-truth classes.
 */
typedef struct DabeaLabels DabeaLabels;

/**
 * Pooled probabilities `[N × 7]`.
 */
typedef struct DabeaPooled DabeaPooled;

/**
 * One base model's predictions for `k` augmented views per image.
 */
typedef struct DabeaPredictions DabeaPredictions;

/**
 * Fused per-slot probabilities `[N × n × 7]`.
 */
typedef struct DabeaSlots DabeaSlots;

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *dabea_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dabea_version(void);

/**
 * Numerically stable softmax of seven logits.
 *
 * # Safety
 * `logits` and `out` must each point to 7 doubles.
 */
enum DabeaStatus dabea_softmax(const double *logits, double *out);

/**
 * Stub-model learning rate at `epoch`: `lr0 · 0.94^⌊epoch/2⌋`.
 */
double dabea_lr_schedule(uintptr_t epoch, double lr0);

/**
 * Builds a label set; `classes[i]` is the class index of `ids[i]`.
 *
 * # Safety
 * `ids` must point to `n` NUL-terminated strings and `classes` to `n` values.
 */
enum DabeaStatus dabea_labels_new(const char *const *ids,
                                  const uintptr_t *classes,
                                  uintptr_t n,
                                  struct DabeaLabels **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DabeaStatus dabea_labels_load(const char *path_, struct DabeaLabels **out);

/**
 * # Safety
 * `labels` must be a live handle; `path` a NUL-terminated string.
 */
enum DabeaStatus dabea_labels_save(const struct DabeaLabels *labels, const char *path_);

/**
 * Number of images, or 0 for a null handle.
 *
 * # Safety
 * `labels` must be null or a live handle.
 */
uintptr_t dabea_labels_len(const struct DabeaLabels *labels);

/**
 * # Safety
 * `labels` must be null or a handle not yet freed.
 */
void dabea_labels_free(struct DabeaLabels *labels);

/**
 * Builds a prediction set from `n · k · 7` probabilities laid out
 * image-major, then augmentation, then class.
 *
 * # Safety
 * `model_id` must be NUL-terminated, `ids` point to `n` strings and `probs`
 * to `n · k · 7` doubles.
 */
enum DabeaStatus dabea_predictions_new(const char *model_id,
                                       const char *const *ids,
                                       uintptr_t n,
                                       uintptr_t k,
                                       const double *probs,
                                       struct DabeaPredictions **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DabeaStatus dabea_predictions_load(const char *path_,
                                        bool renormalize,
                                        struct DabeaPredictions **out);

/**
 * Synthetic predictions: softmax of `strength · onehot(label) + noise`.
 *
 * # Safety
 * `labels` must be a live handle and `model_id` NUL-terminated.
 */
enum DabeaStatus dabea_predictions_synth(const struct DabeaLabels *labels,
                                         uintptr_t k,
                                         double strength,
                                         double noise_sd,
                                         uint64_t seed,
                                         const char *model_id,
                                         struct DabeaPredictions **out);

/**
 * # Safety
 * `set` must be a live handle; `path` a NUL-terminated string.
 */
enum DabeaStatus dabea_predictions_save(const struct DabeaPredictions *set, const char *path_);

/**
 * Writes the image count and `k` of a prediction set.
 *
 * # Safety
 * `set` must be a live handle; outputs may be null.
 */
enum DabeaStatus dabea_predictions_dims(const struct DabeaPredictions *set,
                                        uintptr_t *num_images,
                                        uintptr_t *k);

/**
 * # Safety
 * `set` must be null or a handle not yet freed.
 */
void dabea_predictions_free(struct DabeaPredictions *set);

/**
 * Bags `m` prediction sets over the same images into `n` slots each.
 *
 * # Safety
 * `sets` must point to `m` live handles.
 */
enum DabeaStatus dabea_bag_new(const struct DabeaPredictions *const *sets,
                               uintptr_t m,
                               uintptr_t n,
                               uint64_t seed,
                               struct DabeaBag **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DabeaStatus dabea_bag_load(const char *path_, struct DabeaBag **out);

/**
 * # Safety
 * `b` must be a live handle; `path` a NUL-terminated string.
 */
enum DabeaStatus dabea_bag_save(const struct DabeaBag *b, const char *path_);

/**
 * Writes the image, slot and channel counts of a bag.
 *
 * # Safety
 * `b` must be a live handle; outputs may be null.
 */
enum DabeaStatus dabea_bag_dims(const struct DabeaBag *b,
                                uintptr_t *num_images,
                                uintptr_t *slots,
                                uintptr_t *channels);

/**
 * # Safety
 * `b` must be null or a handle not yet freed.
 */
void dabea_bag_free(struct DabeaBag *b);

/**
 * Shared-layout fusion weights from `m` channel weights and one bias.
 *
 * # Safety
 * `w` must point to `m` doubles.
 */
enum DabeaStatus dabea_fusion_new_shared(const double *w,
                                         uintptr_t m,
                                         double b,
                                         struct DabeaFusion **out);

/**
 * Trains the fusion layer with full-batch Adam. When `loss_history` is not
 * null it receives up to `loss_len` values (loss before training, then after
 * each epoch).
 *
 * # Safety
 * `b` and `labels` must be live handles; `loss_history` null or valid for
 * `loss_len` doubles.
 */
enum DabeaStatus dabea_fusion_train(const struct DabeaBag *b,
                                    const struct DabeaLabels *labels,
                                    uintptr_t epochs,
                                    double lr,
                                    uint32_t layout,
                                    uint64_t seed,
                                    double *loss_history,
                                    uintptr_t loss_len,
                                    struct DabeaFusion **out);

/**
 * Copies the channel weights (`M` shared, or `7·M` class-major per class)
 * into `buf` and writes the total count to `count`. Pass a null `buf` to
 * query the count.
 *
 * # Safety
 * `f` must be a live handle; `buf` null or valid for `len` doubles.
 */
enum DabeaStatus dabea_fusion_weights(const struct DabeaFusion *f,
                                      double *buf,
                                      uintptr_t len,
                                      uintptr_t *count);

/**
 * Bias of `class` (the shared bias for the shared layout).
 *
 * # Safety
 * `f` must be a live handle.
 */
enum DabeaStatus dabea_fusion_bias(const struct DabeaFusion *f, uintptr_t class_, double *out);

/**
 * # Safety
 * `f` must be a live handle; `path` a NUL-terminated string.
 */
enum DabeaStatus dabea_fusion_save(const struct DabeaFusion *f, const char *path_);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum DabeaStatus dabea_fusion_load(const char *path_, struct DabeaFusion **out);

/**
 * # Safety
 * `f` must be null or a handle not yet freed.
 */
void dabea_fusion_free(struct DabeaFusion *f);

/**
 * Applies fusion weights to every slot of a bag.
 *
 * # Safety
 * `b` and `f` must be live handles.
 */
enum DabeaStatus dabea_fusion_forward(const struct DabeaBag *b,
                                      const struct DabeaFusion *f,
                                      struct DabeaSlots **out);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void dabea_slots_free(struct DabeaSlots *s);

/**
 * Pools slots with one of the `DABEA_POOL_*` strategies.
 *
 * # Safety
 * `s` must be a live handle.
 */
enum DabeaStatus dabea_pool(const struct DabeaSlots *s,
                            uint32_t strategy,
                            struct DabeaPooled **out);

/**
 * Number of pooled images, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
uintptr_t dabea_pooled_len(const struct DabeaPooled *p);

/**
 * Copies the 7 pooled probabilities of image `i` into `out`.
 *
 * # Safety
 * `p` must be a live handle and `out` valid for 7 doubles.
 */
enum DabeaStatus dabea_pooled_row(const struct DabeaPooled *p, uintptr_t i, double *out);

/**
 * Writes the argmax class of every image into `classes`.
 *
 * # Safety
 * `p` must be a live handle and `classes` valid for `len` values.
 */
enum DabeaStatus dabea_pooled_predict(const struct DabeaPooled *p,
                                      uintptr_t *classes,
                                      uintptr_t len);

/**
 * # Safety
 * `p` must be a live handle; `path` a NUL-terminated string.
 */
enum DabeaStatus dabea_pooled_save(const struct DabeaPooled *p, const char *path_);

/**
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void dabea_pooled_free(struct DabeaPooled *p);

/**
 * Balanced accuracy of the pooled argmax predictions, with one of the
 * `DABEA_ZERO_SUPPORT_*` policies.
 *
 * # Safety
 * `p` and `labels` must be live handles.
 */
enum DabeaStatus dabea_balanced_accuracy(const struct DabeaPooled *p,
                                         const struct DabeaLabels *labels,
                                         uint32_t zero_support,
                                         double *out);

/**
 * Runs the full pipeline from a config file (null for defaults) and writes
 * the balanced accuracy to `out`.
 *
 * # Safety
 * `config_path` must be null or NUL-terminated; `out` may be null.
 */
enum DabeaStatus dabea_pipeline_run(const char *config_path, double *out);

#endif  /* DABEA_H */
