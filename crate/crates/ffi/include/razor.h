#ifndef RAZOR_H
#define RAZOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call. Values 2 to 4 match the command-line exit codes.
 */
typedef enum RazorStatus {
  RAZOR_STATUS_OK = 0,
  RAZOR_STATUS_INVALID_ARGUMENT = 2,
  RAZOR_STATUS_DATA_ERROR = 3,
  RAZOR_STATUS_NUMERIC_ERROR = 4,
  RAZOR_STATUS_NULL_POINTER = 5,
  RAZOR_STATUS_PANIC = 6,
} RazorStatus;

typedef struct RazorDataset RazorDataset;

typedef struct RazorInputConfig RazorInputConfig;

typedef struct RazorPretrained RazorPretrained;

typedef struct RazorMetrics {
  size_t fields;
  size_t dims;
  size_t params;
} RazorMetrics;

typedef struct RazorEvalReport {
  /**
   * False when the test set holds a single class; `auc` is then NaN.
   */
  bool auc_defined;
  double auc;
  double logloss;
  size_t examples;
  struct RazorMetrics metrics;
} RazorEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call on the same thread.
 */
const char *razor_last_error(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void razor_string_free(char *s);

/**
 * Loads a CSV dataset described by a TOML schema.
 *
 * # Safety
 * Pointer arguments must be valid; `out` receives a new handle.
 */
enum RazorStatus razor_dataset_load(const char *schema_path,
                                    const char *csv_path,
                                    struct RazorDataset **out);

/**
 * Generates the synthetic train and test sets described by `config_toml`.
 *
 * # Safety
 * Pointer arguments must be valid; `config_toml` may be null.
 */
enum RazorStatus razor_dataset_synthetic(const char *config_toml,
                                         struct RazorDataset **out_train,
                                         struct RazorDataset **out_test);

/**
 * Number of examples, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t razor_dataset_len(const struct RazorDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t razor_dataset_num_fields(const struct RazorDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void razor_dataset_free(struct RazorDataset *dataset);

/**
 * Pretrains on `train`, monitoring `eval` when it is not null.
 *
 * # Safety
 * Pointer arguments must be valid; `eval` and `config_toml` may be null.
 */
enum RazorStatus razor_pretrain(const struct RazorDataset *train,
                                const struct RazorDataset *eval,
                                const char *config_toml,
                                struct RazorPretrained **out);

/**
 * # Safety
 * Pointer arguments must be valid.
 */
enum RazorStatus razor_checkpoint_save(const struct RazorPretrained *state, const char *path);

/**
 * # Safety
 * Pointer arguments must be valid; `out` receives a new handle.
 */
enum RazorStatus razor_checkpoint_load(const char *path, struct RazorPretrained **out);

/**
 * # Safety
 * `state` must be null or a live handle.
 */
size_t razor_pretrained_num_fields(const struct RazorPretrained *state);

/**
 * # Safety
 * `state` must be null or a live handle.
 */
size_t razor_pretrained_num_regions(const struct RazorPretrained *state);

/**
 * Copies the region weights of `field` into `buf`, which must hold
 * `razor_pretrained_num_regions` values.
 *
 * # Safety
 * Pointer arguments must be valid and `buf` writable for `len` values.
 */
enum RazorStatus razor_pretrained_alpha(const struct RazorPretrained *state,
                                        size_t field,
                                        double *buf,
                                        size_t len);

/**
 * # Safety
 * `state` must be null or a handle not yet freed.
 */
void razor_pretrained_free(struct RazorPretrained *state);

/**
 * Pruned width of one field from its region weights.
 *
 * # Safety
 * `alpha` and `candidates` must point to `num_regions` values each.
 */
enum RazorStatus razor_cpt_prune(const double *alpha,
                                 const size_t *candidates,
                                 size_t num_regions,
                                 double cpt,
                                 size_t *out_dim);

/**
 * Derives an input configuration at `cpt`; `dataset` supplies the schema.
 *
 * # Safety
 * Pointer arguments must be valid; `out` receives a new handle.
 */
enum RazorStatus razor_derive(const struct RazorPretrained *state,
                              const struct RazorDataset *dataset,
                              double cpt,
                              struct RazorInputConfig **out);

/**
 * Every field at width `dim`: the fixed-dimension baseline.
 *
 * # Safety
 * Pointer arguments must be valid; `out` receives a new handle.
 */
enum RazorStatus razor_input_config_uniform(const struct RazorDataset *dataset,
                                            size_t dim,
                                            struct RazorInputConfig **out);

/**
 * Width assigned to `field`, 0 when pruned or out of range.
 *
 * # Safety
 * `config` must be null or a live handle.
 */
size_t razor_input_config_dim(const struct RazorInputConfig *config, size_t field);

/**
 * # Safety
 * Pointer arguments must be valid.
 */
enum RazorStatus razor_input_config_metrics(const struct RazorInputConfig *config,
                                            const struct RazorDataset *dataset,
                                            struct RazorMetrics *out);

/**
 * The configuration as JSON; free with [`razor_string_free`].
 *
 * # Safety
 * `config` must be null or a live handle.
 */
char *razor_input_config_to_json(const struct RazorInputConfig *config);

/**
 * # Safety
 * Pointer arguments must be valid; `out` receives a new handle.
 */
enum RazorStatus razor_input_config_from_json(const char *json, struct RazorInputConfig **out);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void razor_input_config_free(struct RazorInputConfig *config);

/**
 * Builds the compact model for `config`, retrains it on `train` and
 * evaluates it on `test`.
 *
 * # Safety
 * Pointer arguments must be valid; `config_toml` may be null.
 */
enum RazorStatus razor_retrain_eval(const struct RazorDataset *train,
                                    const struct RazorDataset *test,
                                    const struct RazorInputConfig *config,
                                    const char *config_toml,
                                    struct RazorEvalReport *out);

/**
 * Rank AUC of `scores` against 0/1 `labels`. Writes NaN when only one
 * class is present.
 *
 * # Safety
 * `scores` and `labels` must point to `len` values each.
 */
enum RazorStatus razor_auc(const double *scores, const uint8_t *labels, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAZOR_H */
