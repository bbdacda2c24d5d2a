#ifndef NUMPROBE_H
#define NUMPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NpStatus {
  NP_STATUS_OK = 0,
  NP_STATUS_NULL_ARGUMENT = 1,
  NP_STATUS_INVALID_UTF8 = 2,
  NP_STATUS_INVALID_ARGUMENT = 3,
  NP_STATUS_NUMERAL = 4,
  NP_STATUS_VECTOR_FILE = 5,
  NP_STATUS_CONFIG = 6,
  NP_STATUS_EXPERIMENT = 7,
  NP_STATUS_IO = 8,
  NP_STATUS_BUFFER_TOO_SMALL = 9,
  NP_STATUS_PANIC = 10,
} NpStatus;

typedef enum NpFormat {
  NP_FORMAT_DIGITS = 0,
  NP_FORMAT_WORDS = 1,
  NP_FORMAT_FLOAT1 = 2,
  NP_FORMAT_NEGATIVE_DIGITS = 3,
} NpFormat;

/**
 * A parsed experiment manifest.
 */
typedef struct NpManifest NpManifest;

/**
 * A loaded text vector file.
 */
typedef struct NpTable NpTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *np_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *np_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void np_string_free(char *s);

/**
 * Renders `scaled` (tenths for `Float1`) and stores a new string in `*out`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum NpStatus np_render(int64_t scaled, enum NpFormat format, char **out);

/**
 * Parses a canonical surface into its scaled value.
 *
 * # Safety
 * `surface` must be NUL-terminated; `out` must be valid.
 */
enum NpStatus np_parse(const char *surface, enum NpFormat format, int64_t *out);

/**
 * Loads a text vector file. `expected_dim` of 0 accepts any dimension.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be valid.
 */
enum NpStatus np_table_load(const char *path, size_t expected_dim, struct NpTable **out);

/**
 * # Safety
 * `table` must come from [`np_table_load`] or be null.
 */
void np_table_free(struct NpTable *table);

/**
 * Vector dimension, or 0 for a null handle.
 *
 * # Safety
 * `table` must be a live handle or null.
 */
size_t np_table_dim(const struct NpTable *table);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `table` must be a live handle or null.
 */
size_t np_table_len(const struct NpTable *table);

/**
 * Copies the vector for `surface` into `out`, which holds `len` doubles.
 *
 * # Safety
 * `table` must be live, `surface` NUL-terminated, `out` valid for `len` writes.
 */
enum NpStatus np_table_get(const struct NpTable *table,
                           const char *surface,
                           double *out,
                           size_t len);

/**
 * Parses and validates a manifest file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be valid.
 */
enum NpStatus np_manifest_load(const char *path, struct NpManifest **out);

/**
 * # Safety
 * `manifest` must come from [`np_manifest_load`] or be null.
 */
void np_manifest_free(struct NpManifest *manifest);

/**
 * Number of experiments, or 0 for a null handle.
 *
 * # Safety
 * `manifest` must be a live handle or null.
 */
size_t np_manifest_len(const struct NpManifest *manifest);

/**
 * Runs every experiment and writes reports into `out_dir`. Returns
 * `Experiment` if any experiment failed; reports are written regardless.
 *
 * # Safety
 * `manifest` must be live; `out_dir` NUL-terminated.
 */
enum NpStatus np_manifest_run(const struct NpManifest *manifest, const char *out_dir);

/**
 * Number of model families [`np_gradcheck`] accepts.
 */
size_t np_gradcheck_family_count(void);

/**
 * Largest relative error between analytic and finite-difference gradients
 * for model family `family` (`0..np_gradcheck_family_count()`).
 *
 * # Safety
 * `out` must be valid.
 */
enum NpStatus np_gradcheck(size_t family, uint64_t seed, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NUMPROBE_H */
