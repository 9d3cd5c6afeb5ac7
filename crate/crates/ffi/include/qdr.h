#ifndef QDR_H
#define QDR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QdrStatus {
  QDR_STATUS_OK = 0,
  QDR_STATUS_NULL_ARGUMENT = 1,
  QDR_STATUS_INVALID_ARGUMENT = 2,
  QDR_STATUS_INVALID_QUERY = 3,
  QDR_STATUS_IO = 4,
  QDR_STATUS_CORRUPT_INDEX = 5,
  QDR_STATUS_BUILD_FAILED = 6,
  QDR_STATUS_PANIC = 7,
} QdrStatus;

/**
 * A built or loaded index.
 */
typedef struct QdrIndex QdrIndex;

/**
 * Ranked answers of one query plus its search statistics.
 */
typedef struct QdrResults QdrResults;

/**
 * Build parameters. Start from `qdr_build_params_default`.
 */
typedef struct QdrBuildParams {
  double delta;
  double tau_cluster;
  double tau_dup;
  size_t max_entries;
  double tau_merge;
  /**
   * Non-zero when object attributes are already in [0, 1], smaller better.
   */
  uint8_t prenormalized;
} QdrBuildParams;

/**
 * Ranking parameters. Start from `qdr_query_options_default`; a
 * non-positive `d_max` means the diagonal of the data bounds.
 */
typedef struct QdrQueryOptions {
  double alpha;
  double beta;
  double tau_relax;
  double d_max;
} QdrQueryOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library; static storage.
 */
const char *qdr_version(void);

/**
 * Message for the last failed call on this thread, or an empty string.
 * Valid until the next call into this library on the same thread.
 */
const char *qdr_last_error_message(void);

struct QdrBuildParams qdr_build_params_default(void);

struct QdrQueryOptions qdr_query_options_default(void);

/**
 * Builds an index from an object file and an optional embedding file
 * (`embeddings_path` may be null). `params` may be null for defaults.
 *
 * # Safety
 * Pointers must be null or valid for their documented use.
 */
enum QdrStatus qdr_index_build_from_files(const char *objects_path,
                                          const char *embeddings_path,
                                          const struct QdrBuildParams *params,
                                          struct QdrIndex **out);

/**
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum QdrStatus qdr_index_load(const char *path, struct QdrIndex **out);

/**
 * # Safety
 * `index` must come from this library; `path` must be a valid C string.
 */
enum QdrStatus qdr_index_save(const struct QdrIndex *index, const char *path);

/**
 * # Safety
 * `index` must be null or a handle from this library not yet freed.
 */
void qdr_index_free(struct QdrIndex *index);

/**
 * Number of indexed objects, 0 for a null handle.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
size_t qdr_index_object_count(const struct QdrIndex *index);

/**
 * Attribute dimension, which is the required weight count.
 *
 * # Safety
 * `index` must be null or a live handle.
 */
size_t qdr_index_attribute_dimension(const struct QdrIndex *index);

/**
 * Runs a top-`kappa` query. `options` may be null for defaults.
 *
 * # Safety
 * `keywords` must point to `n_keywords` C strings and `weights` to
 * `n_weights` doubles; `out` must be valid.
 */
enum QdrStatus qdr_query(const struct QdrIndex *index,
                         double x,
                         double y,
                         const char *const *keywords,
                         size_t n_keywords,
                         const double *weights,
                         size_t n_weights,
                         size_t kappa,
                         const struct QdrQueryOptions *options,
                         struct QdrResults **out);

/**
 * # Safety
 * `results` must be null or a live handle.
 */
size_t qdr_results_len(const struct QdrResults *results);

/**
 * Object id at rank `i` (0-based), owned by `results`; null when out of
 * range.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
const char *qdr_results_id(const struct QdrResults *results, size_t i);

/**
 * Score at rank `i`; NaN when out of range.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
double qdr_results_score(const struct QdrResults *results, size_t i);

/**
 * Distance to the query location at rank `i`; NaN when out of range.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
double qdr_results_distance(const struct QdrResults *results, size_t i);

/**
 * Keyword relevance at rank `i`; 0 when out of range.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
uint32_t qdr_results_phi(const struct QdrResults *results, size_t i);

/**
 * Tree nodes expanded while answering.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
uint64_t qdr_results_node_accesses(const struct QdrResults *results);

/**
 * # Safety
 * `results` must be null or a handle from this library not yet freed.
 */
void qdr_results_free(struct QdrResults *results);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QDR_H */
