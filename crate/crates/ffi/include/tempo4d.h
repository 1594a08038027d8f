#ifndef TEMPO4D_H
#define TEMPO4D_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum T4dStatus {
  T4dStatus_Ok = 0,
  T4dStatus_NullPointer = 1,
  T4dStatus_InvalidUtf8 = 2,
  T4dStatus_Io = 3,
  T4dStatus_Parse = 4,
  T4dStatus_InvalidInput = 5,
  T4dStatus_DegenerateMesh = 6,
  T4dStatus_Numeric = 7,
  T4dStatus_Contract = 8,
  T4dStatus_Internal = 9,
} T4dStatus;

/**
 * Metric selector for [`t4d_report_get`].
 */
typedef enum T4dMetric {
  T4dMetric_Cd = 0,
  T4dMetric_FScore = 1,
  T4dMetric_Precision = 2,
  T4dMetric_Recall = 3,
  T4dMetric_DeltaCd = 4,
  T4dMetric_FeatureCosine = 5,
  T4dMetric_FeatureDtw = 6,
  T4dMetric_OccupancyKl = 7,
} T4dMetric;

/**
 * Opaque evaluation report.
 */
typedef struct T4dReport T4dReport;

/**
 * Opaque mesh sequence with its optional normalization record.
 */
typedef struct T4dSequence T4dSequence;

/**
 * Evaluation parameters, plain-old-data for C callers.
 */
typedef struct T4dMetricParams {
  size_t points_per_frame;
  double tau;
  size_t grid_resolution;
  double epsilon;
  uint64_t seed;
} T4dMetricParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread, or NULL when no error has been
 * recorded. Valid until the next failing call on the same thread.
 */
const char *t4d_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by a `tempo4d` function and
 * not yet freed.
 */
void t4d_string_free(char *s);

/**
 * Load every OBJ in `dir` matching `pattern` (NULL for `*.obj`),
 * lexicographically ordered.
 *
 * # Safety
 * `dir` and `pattern` must be NULL or valid C strings; `out` must point
 * to writable storage for one pointer.
 */
enum T4dStatus t4d_sequence_load(const char *dir, const char *pattern, struct T4dSequence **out);

/**
 * Number of frames in a sequence; zero for NULL.
 *
 * # Safety
 * `seq` must be NULL or a live sequence handle.
 */
size_t t4d_sequence_frame_count(const struct T4dSequence *seq);

/**
 * Vertex count of one frame; zero when out of range.
 *
 * # Safety
 * `seq` must be NULL or a live sequence handle.
 */
size_t t4d_sequence_vertex_count(const struct T4dSequence *seq, size_t frame);

/**
 * Normalize the sequence in place around `rest_frame` and return the
 * normalization record as JSON (caller frees via [`t4d_string_free`]).
 * `record_json` may be NULL if the record is not wanted.
 *
 * # Safety
 * `seq` must be a live sequence handle.
 */
enum T4dStatus t4d_sequence_normalize(struct T4dSequence *seq,
                                      size_t rest_frame,
                                      char **record_json);

/**
 * Undo a previous normalization using the stored record.
 *
 * # Safety
 * `seq` must be a live sequence handle.
 */
enum T4dStatus t4d_sequence_denormalize(struct T4dSequence *seq);

/**
 * Write the sequence as zero-padded OBJ frames; reports frames written.
 *
 * # Safety
 * `seq` must be a live handle, `dir` a valid C string; `frames_written`
 * may be NULL.
 */
enum T4dStatus t4d_sequence_save(const struct T4dSequence *seq,
                                 const char *dir,
                                 size_t *frames_written);

/**
 * # Safety
 * `seq` must be NULL or a live handle; it is invalid afterwards.
 */
void t4d_sequence_free(struct T4dSequence *seq);

/**
 * Library defaults: 4096 points, tau 0.02, grid 32, epsilon 1e-8.
 */
struct T4dMetricParams t4d_metric_params_default(void);

/**
 * Evaluate predicted vs ground-truth sequences.
 *
 * # Safety
 * `pred` and `gt` must be live handles, `params` NULL (defaults) or
 * valid, `out` writable.
 */
enum T4dStatus t4d_evaluate(const struct T4dSequence *pred,
                            const struct T4dSequence *gt,
                            const struct T4dMetricParams *params,
                            struct T4dReport **out);

/**
 * One metric value; NaN for a NULL report.
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
double t4d_report_get(const struct T4dReport *report, enum T4dMetric metric);

/**
 * Full report as JSON (caller frees via [`t4d_string_free`]).
 *
 * # Safety
 * `report` must be a live handle, `json` writable.
 */
enum T4dStatus t4d_report_to_json(const struct T4dReport *report, char **json);

/**
 * # Safety
 * `report` must be NULL or a live handle; it is invalid afterwards.
 */
void t4d_report_free(struct T4dReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEMPO4D_H */
