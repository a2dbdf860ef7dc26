#ifndef REFCONS_H
#define REFCONS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_POINTER = 1,
  RC_STATUS_INVALID_UTF8 = 2,
  RC_STATUS_IO = 3,
  RC_STATUS_PARSE = 4,
  RC_STATUS_VALIDATION = 5,
  RC_STATUS_CONFIG = 6,
  RC_STATUS_DOMAIN = 7,
  RC_STATUS_NUMERICAL = 8,
  RC_STATUS_INCONSISTENT = 9,
  RC_STATUS_BUFFER_TOO_SMALL = 10,
  RC_STATUS_PANIC = 11,
} RcStatus;

typedef enum RcMethod {
  RC_METHOD_FISHER = 0,
  RC_METHOD_GEKS = 1,
  RC_METHOD_TORNQVIST = 2,
  RC_METHOD_CCD = 3,
  RC_METHOD_GEARY_KHAMIS = 4,
  RC_METHOD_MARKET_RATE = 5,
} RcMethod;

typedef enum RcBoundStyle {
  RC_BOUND_STYLE_LASPEYRES = 0,
  RC_BOUND_STYLE_PAASCHE = 1,
} RcBoundStyle;

/**
 * Opaque pooled dataset.
 */
typedef struct RcDataset RcDataset;

/**
 * Opaque generalised star system result.
 */
typedef struct RcGss RcGss;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to fit). Returns the untruncated length including the NUL.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t rc_last_error(char *buf, size_t cap);

/**
 * Parses a direct-format CSV held in memory.
 *
 * # Safety
 * `csv` must be a NUL-terminated string; `out` must be writable.
 */
enum RcStatus rc_dataset_parse(const char *csv, struct RcDataset **out);

/**
 * Loads a direct-format CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RcStatus rc_dataset_load(const char *path, struct RcDataset **out);

/**
 * # Safety
 * `ds` must be null or a handle from this library not yet freed.
 */
void rc_dataset_free(struct RcDataset *ds);

/**
 * Number of countries, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t rc_dataset_len(const struct RcDataset *ds);

/**
 * Number of goods, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t rc_dataset_goods(const struct RcDataset *ds);

/**
 * Copies the id of country `i`. `needed` (optional) receives the buffer
 * size required.
 *
 * # Safety
 * `ds` must be a live handle; `buf` must point to `cap` writable bytes.
 */
enum RcStatus rc_dataset_id(const struct RcDataset *ds,
                            size_t i,
                            char *buf,
                            size_t cap,
                            size_t *needed);

/**
 * Revealed-preference test. On a violation `cycle` receives the vertex
 * positions of a witness and `cycle_len` its length; pass `cycle_cap = 0`
 * to skip the witness.
 *
 * # Safety
 * `ds` must be a live handle, `satisfied` writable, `cycle` null or
 * `cycle_cap` long, `cycle_len` null or writable.
 */
enum RcStatus rc_check(const struct RcDataset *ds,
                       bool homothetic,
                       bool *satisfied,
                       size_t *cycle,
                       size_t cycle_cap,
                       size_t *cycle_len);

/**
 * Index matrix, `out[i * n + j]` = price level of `i` relative to `j`.
 *
 * # Safety
 * `ds` must be a live handle; `out` must hold `cap` doubles.
 */
enum RcStatus rc_index_matrix(const struct RcDataset *ds,
                              enum RcMethod method,
                              double *out,
                              size_t cap);

/**
 * Multilateral bounds over a consistent dataset; fails with
 * `Inconsistent` otherwise.
 *
 * # Safety
 * `ds` must be a live handle; `lower` and `upper` must hold `cap` doubles.
 */
enum RcStatus rc_bounds(const struct RcDataset *ds,
                        enum RcBoundStyle style,
                        double *lower,
                        double *upper,
                        size_t cap);

/**
 * Runs the generalised star system with a greedy hub.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum RcStatus rc_gss_run(const struct RcDataset *ds, struct RcGss **out);

/**
 * # Safety
 * `gss` must be null or a handle from this library not yet freed.
 */
void rc_gss_free(struct RcGss *gss);

/**
 * Countries covered by the result; outsiders without an extension are
 * left out.
 *
 * # Safety
 * `gss` must be null or a live handle.
 */
size_t rc_gss_len(const struct RcGss *gss);

/**
 * # Safety
 * `gss` must be a live handle; `buf` must point to `cap` writable bytes.
 */
enum RcStatus rc_gss_id(const struct RcGss *gss, size_t i, char *buf, size_t cap, size_t *needed);

/**
 * Whether country `i` of the result belongs to the hub.
 *
 * # Safety
 * `gss` must be null or a live handle.
 */
bool rc_gss_in_hub(const struct RcGss *gss, size_t i);

/**
 * Bilateral parities or bounds of a star system result: `what` is 0 for
 * values, 1 for lower bounds, 2 for upper bounds.
 *
 * # Safety
 * `gss` must be a live handle; `out` must hold `cap` doubles.
 */
enum RcStatus rc_gss_matrix(const struct RcGss *gss, uint32_t what, double *out, size_t cap);

/**
 * Each country's parity against the base country.
 *
 * # Safety
 * `gss` must be a live handle; `out` must hold `cap` doubles.
 */
enum RcStatus rc_gss_ppp_vs_base(const struct RcGss *gss, double *out, size_t cap);

/**
 * Population-weighted Gini coefficient.
 *
 * # Safety
 * `per_capita` and `populations` must each hold `n` doubles; `out` must be
 * writable.
 */
enum RcStatus rc_gini(const double *per_capita, const double *populations, size_t n, double *out);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REFCONS_H */
