#ifndef DRIFTLENS_H
#define DRIFTLENS_H

/* C interface to driftlens.
 *
 * Conventions:
 *   - Every fallible call returns dl_status. On failure the message is kept
 *     per thread and read with dl_last_error().
 *   - Reports cross the boundary as UTF-8 JSON strings. Strings handed out
 *     through char** are owned by the caller and released with
 *     dl_string_free().
 *   - Options are "plan" JSON objects (the same layout as an explain plan
 *     file); every key is optional. NULL means all defaults.
 *   - Handles are opaque; free them with the matching *_free function.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DL_API __declspec(dllexport)
#else
#define DL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dl_status {
  DL_OK = 0,
  DL_INVALID_ARGUMENT = 1,
  DL_IO = 2,
  DL_MISSING_COLUMN = 3,
  DL_NON_NUMERIC_CELL = 4,
  DL_EMPTY_DATASET = 5,
  DL_CONSTANT_TIME = 6,
  DL_DEGENERATE_SPLIT = 7,
  DL_TOO_FEW_SAMPLES = 8,
  DL_SINGLE_CLASS = 9,
  DL_DIMENSION_MISMATCH = 10,
  DL_WRONG_MODEL_KIND = 11,
  DL_DOMAIN_ERROR = 12,
  DL_DISCONNECTED_GRAPH = 13,
  DL_EMPTY_GROUP = 14,
  DL_K_TOO_LARGE = 15,
  DL_SINGULAR_FIT = 16,
  DL_NO_TARGET_SAMPLES = 17,
  DL_EMPTY_RESERVOIR = 18,
  DL_UNKNOWN_KIND = 19,
  DL_TOO_MANY_FEATURES = 20,
  DL_CYCLIC_GRAPH = 21,
  DL_INDEX_OUT_OF_RANGE = 22,
  DL_SINGLE_CLASS_TRUTH = 23,
  DL_MISMATCHED_DATASET = 24,
  DL_PARSE = 25,
  DL_PARTIAL_FAILURE = 26, /* output was produced, but some parts failed */
  DL_INTERNAL = 27
} dl_status;

typedef struct dl_dataset dl_dataset;

DL_API const char* dl_version(void);
/* "Ok", "InvalidArgument", ... */
DL_API const char* dl_status_name(dl_status status);
/* Message of the last failed call on this thread; "" when none. */
DL_API const char* dl_last_error(void);
DL_API void dl_string_free(char* s);

/* Worker pool cap; 0 restores the default (available parallelism). */
DL_API dl_status dl_set_threads(size_t n);

/* Key-value config text to JSON. */
DL_API dl_status dl_parse_config(const char* text, char** json_out);
DL_API dl_status dl_load_config(const char* path, char** json_out);

/* Plan JSON with every default filled in (the form echoed into outputs). */
DL_API dl_status dl_plan_resolve(const char* plan_json, char** resolved_json);

/* Row-major n x d values; times need not be sorted (rows are ordered by time).
 * names may be NULL (x0, x1, ...). */
DL_API dl_status dl_dataset_from_arrays(const double* values, size_t n, size_t d, const double* times,
                                        const char* const* names, dl_dataset** out);
/* time_col NULL means "t". */
DL_API dl_status dl_dataset_load_csv(const char* path, const char* time_col, dl_dataset** out);
DL_API dl_status dl_dataset_save_csv(const dl_dataset* ds, const char* path, const char* time_col);
DL_API dl_status dl_dataset_shape(const dl_dataset* ds, size_t* n, size_t* d);
DL_API void dl_dataset_free(dl_dataset* ds);

/* Synthetic stream ("perturb" standardizes the base stream first, so
 * "shift:5" moves a feature by five standard deviations). Request keys: kind (base | perturb | bayes | sensor |
 * two_cluster), n, seed, and per kind: base, perturbation, n_features,
 * agrawal_function; mode (complete | shallow); n_sensors, fault_times,
 * fault_sensors; change_point, static_share. truth_json may be NULL. */
DL_API dl_status dl_generate(const char* request_json, dl_dataset** out, char** truth_json);

/* Drift locus at plan.grouping "localize@<cp|auto>". */
DL_API dl_status dl_localize(const dl_dataset* ds, const char* plan_json, char** report_json);
/* Segmentation under plan.grouping "segment@<embedding>". */
DL_API dl_status dl_segment(const dl_dataset* ds, const char* plan_json, char** segmentation_json);
/* grouping_json: output of dl_localize or dl_segment on the same dataset. */
DL_API dl_status dl_prototypes(const dl_dataset* ds, const char* grouping_json, const char* plan_json,
                               char** prototypes_json);
/* Full explanation bundle. Returns DL_PARTIAL_FAILURE with a bundle when
 * some methods failed. */
DL_API dl_status dl_explain(const dl_dataset* ds, const char* plan_json, char** bundle_json);
/* Benchmark grid. Writes the results CSV when results_csv is not NULL;
 * summary_json receives {records, summary}. */
DL_API dl_status dl_eval(const char* grid_json, const char* results_csv, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif
