#ifndef MODISPI_H
#define MODISPI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ModispiStatus {
  MODISPI_STATUS_OK = 0,
  MODISPI_STATUS_INVALID_INPUT = 1,
  MODISPI_STATUS_DEGENERATE_FIT = 2,
  MODISPI_STATUS_NUMERIC = 3,
  MODISPI_STATUS_FORMAT = 4,
  MODISPI_STATUS_IO = 5,
  MODISPI_STATUS_NULL_POINTER = 6,
  MODISPI_STATUS_BUFFER_TOO_SMALL = 7,
  MODISPI_STATUS_PANIC = 8,
} ModispiStatus;

// Features of one clean/degraded pair.
typedef struct ModispiFeatures ModispiFeatures;

// Loaded transformer checkpoint.
typedef struct ModispiModel ModispiModel;

// Pipeline settings bound to one configuration.
typedef struct ModispiPipeline ModispiPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *modispi_version(void);

// Message of the last failed call on this thread, empty after a success.
// Valid until the next call on the same thread.
const char *modispi_last_error(void);

// Time constant (ms) and 3 dB cutoff (Hz) of the temporal filter for a
// level code (0 normal, 1 mild, 2 moderate, 3 severe).
//
// # Safety
// Output pointers must be valid for writes.
enum ModispiStatus modispi_tau_for_level(int32_t level, double *tau_ms, double *f_cutoff_hz);

// Severity level code from a left-ear audiogram.
//
// # Safety
// `frequencies_hz` and `thresholds_db_hl` must each hold `len` values;
// `level` must be valid for writes.
enum ModispiStatus modispi_classify_severity(const double *frequencies_hz,
                                             const double *thresholds_db_hl,
                                             size_t len,
                                             int32_t *level);

// `1 / (1 + exp(-a (x - b)))`.
double modispi_logistic_map(double x, double a, double b);

// Least-squares logistic fit of `(x, y)` pairs.
//
// # Safety
// `x` and `y` must each hold `len` values; outputs must be valid for writes.
enum ModispiStatus modispi_fit_logistic(const double *x,
                                        const double *y,
                                        size_t len,
                                        double *a,
                                        double *b);

// RMSE and Pearson correlation of `[0, 1]` predictions against `[0, 100]`
// targets. `rho_defined` is 0 when either side has zero variance, and
// `rho` is then NaN.
//
// # Safety
// `predictions` and `targets` must each hold `len` values; outputs must be
// valid for writes.
enum ModispiStatus modispi_evaluate(const double *predictions,
                                    const double *targets,
                                    size_t len,
                                    double *rmse,
                                    double *rho,
                                    int32_t *rho_defined);

// Creates a pipeline from settings JSON, or defaults when `settings_json`
// is null.
//
// # Safety
// `settings_json` must be null or a NUL-terminated string; `out` must be
// valid for writes.
enum ModispiStatus modispi_pipeline_new(const char *settings_json, struct ModispiPipeline **out);

// # Safety
// `pipeline` must be null or a handle from [`modispi_pipeline_new`] not yet freed.
void modispi_pipeline_free(struct ModispiPipeline *pipeline);

// Runs the full feature path on a clean/degraded pair for a level code.
//
// # Safety
// `pipeline` must be a live handle; `clean` and `spin` must hold the given
// number of samples; `out` must be valid for writes.
enum ModispiStatus modispi_pipeline_features(const struct ModispiPipeline *pipeline,
                                             const double *clean,
                                             size_t clean_len,
                                             const double *spin,
                                             size_t spin_len,
                                             double sample_rate_hz,
                                             int32_t level,
                                             struct ModispiFeatures **out);

// # Safety
// `features` must be null or a handle from [`modispi_pipeline_features`] not yet freed.
void modispi_features_free(struct ModispiFeatures *features);

// Spectral (rows) and temporal (cols) modulation channel counts.
//
// # Safety
// `features` must be a live handle; outputs must be valid for writes.
enum ModispiStatus modispi_features_ncc_dims(const struct ModispiFeatures *features,
                                             size_t *rows,
                                             size_t *cols);

// Copies the NCC matrix row-major; missing entries are NaN.
//
// # Safety
// `features` must be a live handle; `buffer` must hold `capacity` values.
enum ModispiStatus modispi_features_ncc_values(const struct ModispiFeatures *features,
                                               double *buffer,
                                               size_t capacity);

// Mean of the defined NCC entries.
//
// # Safety
// `features` must be a live handle; `summary` must be valid for writes.
enum ModispiStatus modispi_features_ncc_summary(const struct ModispiFeatures *features,
                                                double *summary);

// Model input image shape: channels x height x width.
//
// # Safety
// `features` must be a live handle; outputs must be valid for writes.
enum ModispiStatus modispi_features_image_dims(const struct ModispiFeatures *features,
                                               size_t *channels,
                                               size_t *height,
                                               size_t *width);

// Copies the image, channel-major then row-major.
//
// # Safety
// `features` must be a live handle; `buffer` must hold `capacity` values.
enum ModispiStatus modispi_features_image_copy(const struct ModispiFeatures *features,
                                               double *buffer,
                                               size_t capacity);

// Loads a transformer checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum ModispiStatus modispi_model_load(const char *path, struct ModispiModel **out);

// # Safety
// `model` must be null or a handle from [`modispi_model_load`] not yet freed.
void modispi_model_free(struct ModispiModel *model);

// Value counts the model expects for the image and the NCC vector.
//
// # Safety
// `model` must be a live handle; outputs must be valid for writes.
enum ModispiStatus modispi_model_input_sizes(const struct ModispiModel *model,
                                             size_t *image_len,
                                             size_t *ncc_len);

// Scores a features handle. The image size of the features must match the
// model's.
//
// # Safety
// `model` and `features` must be live handles; `score` must be valid for writes.
enum ModispiStatus modispi_model_predict(const struct ModispiModel *model,
                                         const struct ModispiFeatures *features,
                                         double *score);

// Scores raw inputs laid out as in [`modispi_features_image_copy`] and a
// row-major NCC grid.
//
// # Safety
// `model` must be a live handle; `image` and `ncc` must hold the given
// number of values; `score` must be valid for writes.
enum ModispiStatus modispi_model_predict_raw(const struct ModispiModel *model,
                                             const double *image,
                                             size_t image_len,
                                             const double *ncc,
                                             size_t ncc_len,
                                             double *score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODISPI_H */
