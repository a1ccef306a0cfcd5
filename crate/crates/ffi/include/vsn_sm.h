#ifndef VSN_SM_H
#define VSN_SM_H

/* Generated by cbindgen from vsn-sm-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes of every fallible entry point.
 */
typedef enum {
  VSN_SM_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  VSN_SM_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  VSN_SM_STATUS_INVALID_UTF8 = 2,
  /**
   * The stimulation model violates a structural invariant.
   */
  VSN_SM_STATUS_INVALID_MODEL = 3,
  /**
   * A configuration value is out of range or inconsistent.
   */
  VSN_SM_STATUS_INVALID_CONFIG = 4,
  /**
   * Array shapes or dimensions do not line up.
   */
  VSN_SM_STATUS_SHAPE_MISMATCH = 5,
  /**
   * Non-finite values or numerical breakdown.
   */
  VSN_SM_STATUS_NUMERIC = 6,
  /**
   * An input collection was empty where data is required.
   */
  VSN_SM_STATUS_EMPTY_INPUT = 7,
  /**
   * Malformed serialized input.
   */
  VSN_SM_STATUS_PARSE = 8,
  VSN_SM_STATUS_IO = 9,
  /**
   * The request is structurally impossible (for example enumerating the
   * vertices of a hypercube that is too large).
   */
  VSN_SM_STATUS_UNSUPPORTED = 10,
} VsnSmStatus;

/**
 * Opaque handle around an observation dataset.
 */
typedef struct VsnSmDataset VsnSmDataset;

/**
 * Opaque handle around a validated stimulation model.
 */
typedef struct VsnSmModel VsnSmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call from the same thread.
 */
const char *vsn_sm_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must have been produced by a `vsn_sm_*` function and not freed yet.
 */
void vsn_sm_string_free(char *s);

/**
 * Draw a random stimulation model: `n_active` distinct nonzero stimulation
 * vectors over `n_cameras` cameras, uniform priors, default sensing
 * parameters.
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
VsnSmStatus vsn_sm_model_random(uintptr_t n_cameras,
                                uintptr_t n_active,
                                uintptr_t n_potential,
                                uint64_t seed,
                                VsnSmModel **out);

/**
 * Parse a model from its JSON form and validate it.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
VsnSmStatus vsn_sm_model_from_json(const char *json, VsnSmModel **out);

/**
 * Serialize a model to JSON.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
VsnSmStatus vsn_sm_model_to_json(const VsnSmModel *model, char **out);

/**
 * Stable content fingerprint of a model; 0 for a NULL handle.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
uint64_t vsn_sm_model_fingerprint(const VsnSmModel *model);

/**
 * # Safety
 * `model` must be a handle from this library, not yet freed.
 */
void vsn_sm_model_free(VsnSmModel *model);

/**
 * Generate `count` observations from a model with the given seed.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
VsnSmStatus vsn_sm_dataset_generate(const VsnSmModel *model,
                                    uintptr_t count,
                                    uint64_t seed,
                                    VsnSmDataset **out);

/**
 * Number of observations; 0 for a NULL handle.
 *
 * # Safety
 * `dataset` must be a live handle or NULL.
 */
uintptr_t vsn_sm_dataset_len(const VsnSmDataset *dataset);

/**
 * Observation dimension (camera count); 0 for a NULL handle.
 *
 * # Safety
 * `dataset` must be a live handle or NULL.
 */
uintptr_t vsn_sm_dataset_dim(const VsnSmDataset *dataset);

/**
 * Render the dataset in its plain-text form (header line plus one
 * comma-separated row per observation).
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
VsnSmStatus vsn_sm_dataset_to_csv(const VsnSmDataset *dataset, char **out);

/**
 * Parse a dataset from its plain-text form.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
VsnSmStatus vsn_sm_dataset_from_csv(const char *text, VsnSmDataset **out);

/**
 * # Safety
 * `dataset` must be a handle from this library, not yet freed.
 */
void vsn_sm_dataset_free(VsnSmDataset *dataset);

/**
 * Run one identification method on a dataset and return the report as
 * JSON. `method` is one of gmm, vgmm, gmm-ae, vgmm-ae, gmm-dnn, vgmm-dnn.
 * `config_json` holds an experiment configuration document or NULL for
 * defaults; `seed` overrides the configured master seed.
 *
 * # Safety
 * `dataset` must be a live handle; `method` must be NUL-terminated;
 * `config_json` must be NUL-terminated or NULL; `out` must be writable.
 */
VsnSmStatus vsn_sm_identify(const VsnSmDataset *dataset,
                            const char *method,
                            const char *config_json,
                            uint64_t seed,
                            char **out);

/**
 * Score a stored identification report (JSON) against a ground-truth model;
 * returns the metrics as JSON.
 *
 * # Safety
 * `model` must be a live handle; `report_json` must be NUL-terminated;
 * `out` must be writable.
 */
VsnSmStatus vsn_sm_metrics(const VsnSmModel *model, const char *report_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VSN_SM_H */
