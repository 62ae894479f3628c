/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the eqdp library: equivariant convolutional networks
 * trained with DP-SGD, the RDP accountant, and the analysis metrics.
 *
 * Every function returns an eqdp_status. On failure the message of the most
 * recent error on the calling thread is available from eqdp_last_error().
 * Strings returned through char** out-parameters are owned by the caller
 * and released with eqdp_string_free().
 */
#ifndef EQDP_EQDP_H
#define EQDP_EQDP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define EQDP_API __declspec(dllexport)
#else
#define EQDP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eqdp_status {
  EQDP_OK = 0,
  EQDP_ERR_INVALID_ARGUMENT = 1,
  EQDP_ERR_LAYOUT_MISMATCH = 2,
  EQDP_ERR_NUMERIC_FAULT = 3,
  EQDP_ERR_FORMAT = 4,
  EQDP_ERR_UNSUPPORTED_LAYOUT = 5,
  EQDP_ERR_UNSUPPORTED_DTYPE = 6,
  EQDP_ERR_NOT_FOUND = 7,
  EQDP_ERR_VALIDATION = 8,
  EQDP_ERR_CALIBRATION_FAILURE = 9,
  EQDP_ERR_INFINITE_PRIVACY_LOSS = 10,
  EQDP_ERR_BUDGET_EXHAUSTED = 11,
  EQDP_ERR_IO = 12,
  EQDP_ERR_INTERNAL = 100
} eqdp_status;

typedef struct eqdp_model eqdp_model;
typedef struct eqdp_dataset eqdp_dataset;

EQDP_API const char* eqdp_version(void);
/* Kebab-case name of a status, e.g. "budget-exhausted". */
EQDP_API const char* eqdp_status_name(eqdp_status status);
/* Message of the last failure on this thread ("" if none). */
EQDP_API const char* eqdp_last_error(void);
EQDP_API void eqdp_string_free(char* text);

/* Accountant. */
EQDP_API eqdp_status eqdp_rdp_sgm(double q, double sigma, const double* orders, size_t count,
                                  double* values);
EQDP_API eqdp_status eqdp_epsilon(double q, double sigma, double steps, double delta,
                                  double* epsilon, double* order);
EQDP_API eqdp_status eqdp_calibrate_sigma(double target_epsilon, double delta, double q,
                                          double steps, double* sigma);

/* Models. group is "e" or "C<N>"; width_mode is "param-matched" or "equal-fields". */
EQDP_API eqdp_status eqdp_model_build(const char* group, const int widths[3], int classes,
                                      const char* width_mode, int restriction,
                                      eqdp_model** out);
EQDP_API eqdp_status eqdp_model_load(const char* checkpoint_dir, eqdp_model** out);
EQDP_API eqdp_status eqdp_model_save(const eqdp_model* model, const char* checkpoint_dir);
EQDP_API void eqdp_model_free(eqdp_model* model);
EQDP_API eqdp_status eqdp_model_initialize(eqdp_model* model, uint64_t seed);
EQDP_API eqdp_status eqdp_model_param_count(const eqdp_model* model, size_t* count);
EQDP_API eqdp_status eqdp_model_classes(const eqdp_model* model, int* classes);
EQDP_API eqdp_status eqdp_model_get_params(const eqdp_model* model, float* out, size_t count);
EQDP_API eqdp_status eqdp_model_set_params(eqdp_model* model, const float* values, size_t count);
/* x: batch x 3 x height x width, channel-major; logits: batch x classes. */
EQDP_API eqdp_status eqdp_model_forward(const eqdp_model* model, const float* x, int batch,
                                        int height, int width, float* logits);
/* JSON array of {"layer", "magnitude"}. */
EQDP_API eqdp_status eqdp_model_fir(const eqdp_model* model, char** json);

/* Datasets in the {split}_images.npy / {split}_labels.npy / meta.json layout. */
EQDP_API eqdp_status eqdp_dataset_load(const char* dir, const char* split, int expected_classes,
                                       eqdp_dataset** out);
EQDP_API void eqdp_dataset_free(eqdp_dataset* data);
EQDP_API eqdp_status eqdp_dataset_info(const eqdp_dataset* data, int* size, int* classes);

/* JSON object {"count", "accuracy", "brier", "loss"}. */
EQDP_API eqdp_status eqdp_evaluate(const eqdp_model* model, const eqdp_dataset* data,
                                   int threads, char** json);
/* method: "gradcam" or "guided". target_class < 0 uses the sample's label.
 * Writes a PGM (plus .json sidecar) when pgm_path is non-null; json receives
 * {"method", "class", "predicted", "min", "max", "values"}. */
EQDP_API eqdp_status eqdp_explain(const eqdp_model* model, const eqdp_dataset* data, int index,
                                  const char* method, int target_class, const char* pgm_path,
                                  char** json);

/* Training from a JSON config. The manifest is returned even when the run
 * stops early with EQDP_ERR_BUDGET_EXHAUSTED. */
EQDP_API eqdp_status eqdp_train(const char* config_json, char** manifest_json);
/* Runs every *.json config in config_dir; writes summary.csv to summary_dir
 * and returns the rows as a JSON array. */
EQDP_API eqdp_status eqdp_grid(const char* config_dir, const char* summary_dir, char** rows_json);

#ifdef __cplusplus
}
#endif

#endif /* EQDP_EQDP_H */
