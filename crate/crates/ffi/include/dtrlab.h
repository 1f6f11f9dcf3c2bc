/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef DTRLAB_H
#define DTRLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Values 2 to 4 match the command-line exit codes.
typedef enum DtrStatus {
  DTR_OK = 0,
  // A required pointer argument was NULL.
  DTR_NULL_POINTER = 1,
  // Invalid configuration, formula, method name or generator spec.
  DTR_CONFIG_ERROR = 2,
  // Invalid data, shapes, I/O or parse errors.
  DTR_DATA_ERROR = 3,
  // Singular systems, non-convergence and other numerical failures.
  DTR_NUMERICAL_ERROR = 4,
  // A string argument was not valid UTF-8.
  DTR_INVALID_UTF8 = 5,
  // An index argument was out of range.
  DTR_OUT_OF_RANGE = 6,
  // The library panicked; this is a bug.
  DTR_PANIC = 7,
} DtrStatus;

// Opaque dataset handle.
typedef struct DtrDataset DtrDataset;

// Opaque fitted-method handle.
typedef struct DtrFit DtrFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *dtr_version(void);

// Message of the last failure on this thread, or an empty string. The
// pointer is owned by the library.
const char *dtr_last_error(void);

// Frees a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void dtr_string_free(char *s);

// Parses CSV text: wide format, or long format when `long_format` is nonzero.
//
// # Safety
// `csv` must be a NUL-terminated string; `out` must be writable.
enum DtrStatus dtr_dataset_from_csv(const char *csv, int32_t long_format, struct DtrDataset **out);

// Loads a CSV file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DtrStatus dtr_dataset_load(const char *path, int32_t long_format, struct DtrDataset **out);

// Simulates `n` trajectories from the built-in `case1` or `case2` generator.
//
// # Safety
// `case_name` must be a NUL-terminated string; `out` must be writable.
enum DtrStatus dtr_dataset_simulate(const char *case_name,
                                    size_t n,
                                    uint64_t seed,
                                    struct DtrDataset **out);

// Number of trajectories.
//
// # Safety
// `data` must be a live handle; `out` must be writable.
enum DtrStatus dtr_dataset_len(const struct DtrDataset *data, size_t *out);

// Number of decision stages.
//
// # Safety
// `data` must be a live handle; `out` must be writable.
enum DtrStatus dtr_dataset_stage_count(const struct DtrDataset *data, size_t *out);

// Wide-format CSV of the dataset. Free the result with `dtr_string_free`.
//
// # Safety
// `data` must be a live handle; `out` must be writable.
enum DtrStatus dtr_dataset_to_csv(const struct DtrDataset *data, char **out);

// # Safety
// `data` must be NULL or a handle that has not been freed.
void dtr_dataset_free(struct DtrDataset *data);

// Fits `method` (q, a1, a2, a3, a4, dwols, ctree, ipwe, aipwe, bowl).
// `config` is either a preset name (`case1`, `case2`) or TOML model
// specification text. `seed` drives trees and cross-validation.
//
// # Safety
// String arguments must be NUL-terminated; `data` must be a live handle;
// `out` must be writable.
enum DtrStatus dtr_fit(const struct DtrDataset *data,
                       const char *method,
                       const char *config,
                       uint64_t seed,
                       struct DtrFit **out);

// Number of estimated parameters.
//
// # Safety
// `fit` must be a live handle; `out` must be writable.
enum DtrStatus dtr_fit_parameter_count(const struct DtrFit *fit, size_t *out);

// Copies up to `len` parameters into `buf` and stores the total count in
// `count` (which may be NULL).
//
// # Safety
// `fit` must be a live handle; `buf` must hold `len` doubles.
enum DtrStatus dtr_fit_parameters(const struct DtrFit *fit, double *buf, size_t len, size_t *count);

// Label of parameter `index`, such as `psi2[L2]`. Free with `dtr_string_free`.
//
// # Safety
// `fit` must be a live handle; `out` must be writable.
enum DtrStatus dtr_fit_parameter_label(const struct DtrFit *fit, size_t index, char **out);

// Human-readable rule of stage `stage` (1-based), e.g. `treat if L2 < 353.20`.
//
// # Safety
// `fit` must be a live handle; `out` must be writable.
enum DtrStatus dtr_fit_rule(const struct DtrFit *fit, size_t stage, char **out);

// The fitted regime as JSON, loadable by `dtrlab evaluate`. Free with
// `dtr_string_free`.
//
// # Safety
// `fit` must be a live handle; `out` must be writable.
enum DtrStatus dtr_fit_regime_json(const struct DtrFit *fit, char **out);

// Recommended action (0 or 1) of the fitted regime for trajectory `row`
// (0-based) of `data` at stage `stage` (1-based).
//
// # Safety
// Handles must be live; `action` must be writable.
enum DtrStatus dtr_fit_decide(const struct DtrFit *fit,
                              const struct DtrDataset *data,
                              size_t row,
                              size_t stage,
                              uint8_t *action);

// # Safety
// `fit` must be NULL or a handle that has not been freed.
void dtr_fit_free(struct DtrFit *fit);

// Monte Carlo value of a regime (JSON, as from `dtr_fit_regime_json`)
// under the built-in `case1` or `case2` generator, from `draws` simulated
// trajectories.
//
// # Safety
// String arguments must be NUL-terminated; `value` must be writable.
enum DtrStatus dtr_mc_value(const char *case_name,
                            const char *regime_json,
                            size_t draws,
                            uint64_t seed,
                            double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTRLAB_H */
