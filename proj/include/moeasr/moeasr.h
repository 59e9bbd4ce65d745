/* Copyright 2026 The moeasr Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the moeasr library. Objects are opaque handles created and
 * destroyed through this API. Every fallible call returns a moeasr_status;
 * on failure moeasr_last_error() describes the problem until the next call
 * on the same thread. Strings returned through char** are owned by the caller
 * and released with moeasr_string_free().
 */
#ifndef MOEASR_MOEASR_H_
#define MOEASR_MOEASR_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(MOEASR_BUILDING_LIBRARY)
#define MOEASR_API __declspec(dllexport)
#else
#define MOEASR_API __declspec(dllimport)
#endif
#else
#define MOEASR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum moeasr_status {
  MOEASR_OK = 0,
  MOEASR_ERR_INVALID_ARGUMENT = 1, /* null pointer, bad enum, unknown path */
  MOEASR_ERR_DIMENSION = 2,        /* inconsistent shapes or sizes */
  MOEASR_ERR_PARAMETER = 3,        /* value outside its allowed range */
  MOEASR_ERR_IO = 4,               /* file or checkpoint problem */
  MOEASR_ERR_DIVERGED = 5,         /* training produced a non-finite loss */
  MOEASR_ERR_BUFFER_TOO_SMALL = 6, /* output buffer smaller than the result */
  MOEASR_ERR_INTERNAL = 7
} moeasr_status;

typedef struct moeasr_config moeasr_config; /* training + model + task configuration */
typedef struct moeasr_model moeasr_model;

MOEASR_API const char* moeasr_version(void);
MOEASR_API const char* moeasr_last_error(void);
MOEASR_API const char* moeasr_status_name(moeasr_status status);
MOEASR_API void moeasr_string_free(char* str);

/* Configuration. `preset` may be NULL for library defaults, or one of the
 * model presets ("s2s-desk", "tt-desk", "s2s-paper", "s2s-paper-e120",
 * "tt-paper"). Paths use the JSON document layout, e.g. "model.d_model",
 * "optimizer.lr", "task.num_languages". */
MOEASR_API moeasr_status moeasr_config_create(const char* preset, moeasr_config** out);
MOEASR_API moeasr_status moeasr_config_from_json(const char* json_text, moeasr_config** out);
MOEASR_API moeasr_status moeasr_config_set(moeasr_config* config, const char* path,
                                           const char* value);
MOEASR_API moeasr_status moeasr_config_to_json(const moeasr_config* config, char** out_json);
MOEASR_API moeasr_status moeasr_config_validate(const moeasr_config* config);
MOEASR_API void moeasr_config_destroy(moeasr_config* config);

/* Writes `count` utterances of the configured synthetic task to a JSON-lines
 * file. `split` names an independent random stream ("train", "valid", ...). */
MOEASR_API moeasr_status moeasr_generate_corpus(const moeasr_config* config, const char* split,
                                                size_t count, const char* path);

/* Trains under config.output_dir. When `train_corpus_path` is NULL the corpus
 * is generated from the task section. The summary is a JSON document. */
MOEASR_API moeasr_status moeasr_train(const moeasr_config* config,
                                      const char* train_corpus_path, char** out_summary_json);

/* Scores a checkpoint on a corpus file, or on `count` freshly generated
 * utterances of split `split` when `corpus_path` is NULL. */
MOEASR_API moeasr_status moeasr_evaluate(const char* checkpoint_path, const char* corpus_path,
                                         const char* split, size_t count,
                                         char** out_report_json);

/* Cartesian ablation grid over expert counts (0 = dense) and on/off flags
 * for streaming, language ID and the label-decoder MoE, returned as the JSON
 * array accepted by moeasr_ablate. */
MOEASR_API moeasr_status moeasr_ablation_grid(const moeasr_config* config, const size_t* experts,
                                              size_t num_experts, const int* streaming,
                                              size_t num_streaming, const int* language_id,
                                              size_t num_language_id, const int* label_moe,
                                              size_t num_label_moe, char** out_grid_json);

/* Runs every variant of `grid_json` (a JSON array of {"name", "patch"}) and
 * returns the comparison table as CSV. */
MOEASR_API moeasr_status moeasr_ablate(const moeasr_config* config, const char* grid_json,
                                       size_t test_utterances, char** out_csv);

/* Models. */
MOEASR_API moeasr_status moeasr_model_create(const moeasr_config* config, moeasr_model** out);
MOEASR_API moeasr_status moeasr_model_load(const char* checkpoint_path, moeasr_model** out);
MOEASR_API void moeasr_model_destroy(moeasr_model* model);
MOEASR_API moeasr_status moeasr_model_num_parameters(const moeasr_model* model, size_t* out);
MOEASR_API moeasr_status moeasr_model_save(const moeasr_model* model, const char* path);
/* Greedy decoding of one utterance with row-major features [frames x dim].
 * Writes up to `capacity` token ids and the full length to *out_len. */
MOEASR_API moeasr_status moeasr_model_decode(const moeasr_model* model, const double* features,
                                             size_t frames, size_t feature_dim, size_t language,
                                             size_t* tokens, size_t capacity, size_t* out_len);

/* Routing and loss primitives. */
MOEASR_API moeasr_status moeasr_expert_capacity(size_t samples_per_batch, size_t num_experts,
                                                double capacity_factor, size_t* out);
/* probs: row-major [tokens x experts]. assignment[t] is the expert or -1 when
 * the token was dropped; slot[t] its buffer position or -1. */
MOEASR_API moeasr_status moeasr_plan_dispatch(const double* probs, size_t tokens,
                                              size_t experts, size_t capacity,
                                              int64_t* assignment, int64_t* slot,
                                              size_t* dropped);
MOEASR_API moeasr_status moeasr_aux_loss(const double* probs, size_t tokens, size_t experts,
                                         double alpha, double* out);
/* log_probs: row-major [frames x (labels+1) x classes], normalized per node.
 * grad (optional, same size) receives d loss / d log_probs. */
MOEASR_API moeasr_status moeasr_rnnt_loss(const double* log_probs, size_t frames, size_t labels,
                                          size_t classes, const size_t* target, size_t blank_id,
                                          double* loss, double* grad);
MOEASR_API moeasr_status moeasr_edit_distance(const size_t* reference, size_t reference_len,
                                              const size_t* hypothesis, size_t hypothesis_len,
                                              size_t* out);

#ifdef __cplusplus
}
#endif

#endif /* MOEASR_MOEASR_H_ */
