#ifndef CSCORE_H
#define CSCORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_ARGUMENT = 2,
  CS_STATUS_DIMENSION_MISMATCH = 3,
  CS_STATUS_IO = 4,
  CS_STATUS_PARSE = 5,
  CS_STATUS_CONFIG = 6,
  CS_STATUS_DEGENERATE = 7,
  CS_STATUS_INTERNAL = 8,
} CsStatus;

/**
 * Parsed and validated run configuration.
 */
typedef struct CsConfig CsConfig;

/**
 * Feature matrix with labels.
 */
typedef struct CsDataset CsDataset;

/**
 * Per-example consistency scores.
 */
typedef struct CsScores CsScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *cs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Loads and validates a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CsStatus cs_config_load(const char *path, struct CsConfig **out);

/**
 * Parses and validates a configuration from TOML text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CsStatus cs_config_parse(const char *text, struct CsConfig **out);

/**
 * Applies one `key=value` override and revalidates.
 *
 * # Safety
 * `cfg` must come from this library; `assignment` must be NUL-terminated.
 */
enum CsStatus cs_config_set(struct CsConfig *cfg, const char *assignment);

/**
 * # Safety
 * `cfg` must be null or a handle from this library not yet freed.
 */
void cs_config_free(struct CsConfig *cfg);

/**
 * Builds the dataset a configuration describes, with or without its label
 * flips.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a writable pointer.
 */
enum CsStatus cs_dataset_from_config(const struct CsConfig *cfg,
                                     bool with_flips,
                                     struct CsDataset **out);

/**
 * Copies `n × dim` row-major features and `n` labels into a new dataset.
 *
 * # Safety
 * `features` must hold `n * dim` values, `labels` `n` values.
 */
enum CsStatus cs_dataset_new(const float *features,
                             const uint32_t *labels,
                             size_t n,
                             size_t dim,
                             size_t num_classes,
                             struct CsDataset **out);

/**
 * # Safety
 * `d` must be a live handle.
 */
size_t cs_dataset_len(const struct CsDataset *d);

/**
 * # Safety
 * `d` must be a live handle.
 */
size_t cs_dataset_dim(const struct CsDataset *d);

/**
 * Writes the labels of `d` into `out` (length `len` must equal the dataset size).
 *
 * # Safety
 * `d` must be a live handle and `out` hold `len` values.
 */
enum CsStatus cs_dataset_labels(const struct CsDataset *d, uint32_t *out, size_t len);

/**
 * Writes 1 for examples whose label was flipped and 0 otherwise. Fails if
 * the dataset carries no corruption mask.
 *
 * # Safety
 * `d` must be a live handle and `out` hold `len` values.
 */
enum CsStatus cs_dataset_corruption_mask(const struct CsDataset *d, uint8_t *out, size_t len);

/**
 * # Safety
 * `d` must be null or a handle from this library not yet freed.
 */
void cs_dataset_free(struct CsDataset *d);

/**
 * Holdout estimation over the configured ratios and runs, then the integral
 * score. Seeded from the configuration's master seed.
 *
 * # Safety
 * `cfg` and `d` must be live handles and `out` a writable pointer.
 */
enum CsStatus cs_estimate(const struct CsConfig *cfg,
                          const struct CsDataset *d,
                          struct CsScores **out);

/**
 * # Safety
 * `s` must be a live handle.
 */
size_t cs_scores_len(const struct CsScores *s);

/**
 * Copies the scores into `out` (NaN where undefined).
 *
 * # Safety
 * `s` must be a live handle and `out` hold `len` values.
 */
enum CsStatus cs_scores_copy(const struct CsScores *s, double *out, size_t len);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void cs_scores_free(struct CsScores *s);

/**
 * Holdout accuracy from `runs × n` row-major 0/1 matrices: `mask` marks the
 * training subset of each run, `loss` the misclassified examples.
 *
 * # Safety
 * `mask` and `loss` must hold `runs * n` bytes, `out` `n` values.
 */
enum CsStatus cs_aggregate(const uint8_t *mask,
                           const uint8_t *loss,
                           size_t runs,
                           size_t n,
                           double *out);

/**
 * Kernel density scores of `n × dim` row-major points with bandwidth `h`.
 * Any of the three outputs may be null to skip it.
 *
 * # Safety
 * `points` must hold `n * dim` values, `labels` `n`, each non-null output `n`.
 */
enum CsStatus cs_kernel_scores(const double *points,
                               const uint32_t *labels,
                               size_t n,
                               size_t dim,
                               double bandwidth,
                               double *plain,
                               double *same_class,
                               double *signed_);

/**
 * Local outlier factor of `n × dim` row-major points.
 *
 * # Safety
 * `points` must hold `n * dim` values and `out` `n`.
 */
enum CsStatus cs_lof(const double *points, size_t n, size_t dim, size_t k_neighbors, double *out);

/**
 * Spearman ρ (`kendall = false`) or Kendall τ-b (`kendall = true`) over the
 * pairs where neither side is NaN.
 *
 * # Safety
 * `a` and `b` must hold `n` values and `out` be writable.
 */
enum CsStatus cs_rank_correlation(const double *a,
                                  const double *b,
                                  size_t n,
                                  bool kendall,
                                  double *out);

/**
 * One proxy score per example of `d`, oriented so that higher means more
 * consistent. `kind` is a proxy name such as `"C_L"` or `"cum_pL"`.
 * Geometric proxies use input space; learning-speed proxies and forgetting
 * train the configured proxy model on all of `d`.
 *
 * # Safety
 * `cfg` and `d` must be live handles, `kind` NUL-terminated, `out` hold `len` values.
 */
enum CsStatus cs_proxy(const struct CsConfig *cfg,
                       const struct CsDataset *d,
                       const char *kind,
                       double *out,
                       size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSCORE_H */
