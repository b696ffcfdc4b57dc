/* C interface for the trojanscan Trojan-detection library. */

#ifndef TROJANSCAN_H
#define TROJANSCAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible binding.
typedef enum TsStatus {
  TS_OK = 0,
  TS_NULL_POINTER = 1,
  TS_INVALID_ARGUMENT = 2,
  TS_SHAPE_MISMATCH = 3,
  TS_IO_ERROR = 4,
  TS_PARSE_ERROR = 5,
  TS_NON_FINITE = 6,
  TS_PANIC = 7,
} TsStatus;

// Opaque detector handle (queries + meta-classifier).
typedef struct TsMetaState TsMetaState;

// Opaque task network handle.
typedef struct TsModel TsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static C string.
const char *ts_version(void);

// Message for the most recent error on this thread. The pointer stays
// valid until the next failing call on the same thread.
const char *ts_last_error_message(void);

// Load a model file (JSON) from `path`.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer;
// on success the caller owns the handle and must release it with
// [`ts_model_free`].
enum TsStatus ts_model_load(const char *path, struct TsModel **out);

// Parse a model from a JSON string.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer;
// the returned handle is released with [`ts_model_free`].
enum TsStatus ts_model_from_json(const char *json, struct TsModel **out);

// Release a model handle; a null pointer is a no-op.
//
// # Safety
// `model` must be a handle from this library, not yet freed.
void ts_model_free(struct TsModel *model);

// Input width of the model, or 0 on a null handle.
//
// # Safety
// `model` must be a live handle from this library or null.
size_t ts_model_input_dim(const struct TsModel *model);

// Number of classes, or 0 on a null handle.
//
// # Safety
// `model` must be a live handle from this library or null.
size_t ts_model_num_classes(const struct TsModel *model);

// Class probabilities for one input vector.
//
// `input_len` must equal the model's input width and `probs_len` the class
// count.
//
// # Safety
// `model` must be a live handle; `input` must point to `input_len`
// readable doubles and `probs_out` to `probs_len` writable doubles.
enum TsStatus ts_model_predict(const struct TsModel *model,
                               const double *input,
                               size_t input_len,
                               double *probs_out,
                               size_t probs_len);

// Load a detector state file (JSON) from `path`.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer;
// the returned handle is released with [`ts_meta_state_free`].
enum TsStatus ts_meta_state_load(const char *path, struct TsMetaState **out);

// Parse a detector state from a JSON string.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer;
// the returned handle is released with [`ts_meta_state_free`].
enum TsStatus ts_meta_state_from_json(const char *json, struct TsMetaState **out);

// Release a detector handle; a null pointer is a no-op.
//
// # Safety
// `state` must be a handle from this library, not yet freed.
void ts_meta_state_free(struct TsMetaState *state);

// Number of query inputs, or 0 on a null handle.
//
// # Safety
// `state` must be a live handle from this library or null.
size_t ts_meta_state_query_count(const struct TsMetaState *state);

// Expected model input width, or 0 on a null handle.
//
// # Safety
// `state` must be a live handle from this library or null.
size_t ts_meta_state_input_dim(const struct TsMetaState *state);

// Expected class count, or 0 on a null handle.
//
// # Safety
// `state` must be a live handle from this library or null.
size_t ts_meta_state_num_classes(const struct TsMetaState *state);

// Score a model: higher means more likely Trojaned. The model is only
// queried through forward evaluation.
//
// # Safety
// `state` and `model` must be live handles; `score_out` must point to a
// writable double.
enum TsStatus ts_score_model(const struct TsMetaState *state,
                             const struct TsModel *model,
                             double *score_out);

// Rank-based AUC with the half-tie rule: the probability that a random
// Trojan score outranks a random benign score.
//
// # Safety
// `scores_trojan` and `scores_benign` must point to `n_trojan` and
// `n_benign` readable doubles; `auc_out` must be writable.
enum TsStatus ts_compute_auc(const double *scores_trojan,
                             size_t n_trojan,
                             const double *scores_benign,
                             size_t n_benign,
                             double *auc_out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TROJANSCAN_H */
