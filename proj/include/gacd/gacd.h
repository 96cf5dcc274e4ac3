/* Copyright 2026 The GACD Lab Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the GACD lab library.
 *
 * Objects are opaque handles created by *_new / *_load and released with the
 * matching *_free. Every fallible call returns a gacd_status; on failure
 * gacd_last_error() describes the problem for the calling thread. Strings
 * returned as const char* stay valid until the owning handle is freed or the
 * same accessor is called again on it.
 */

#ifndef GACD_GACD_H_
#define GACD_GACD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GACD_API __declspec(dllexport)
#else
#define GACD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gacd_status {
  GACD_OK = 0,
  GACD_ERR_INVALID_ARGUMENT = 1,
  GACD_ERR_SHAPE = 2,
  GACD_ERR_IO = 3,
  GACD_ERR_FORMAT = 4,
  GACD_ERR_DIVERGED = 5,
  GACD_ERR_STATE = 6,
  GACD_ERR_INTERNAL = 7
} gacd_status;

typedef struct gacd_config gacd_config;
typedef struct gacd_model gacd_model;
typedef struct gacd_reports gacd_reports;
typedef struct gacd_caption gacd_caption;

/* Short machine-readable name of a status ("invalid_argument", ...). */
GACD_API const char* gacd_status_name(gacd_status status);
/* Message of the last failed call on this thread; "" when none. */
GACD_API const char* gacd_last_error(void);
GACD_API const char* gacd_version(void);

/* Experiment configuration. Keys are "section.name" (e.g. "decoder.epsilon"). */
GACD_API gacd_status gacd_config_new(gacd_config** out);
GACD_API gacd_status gacd_config_load(const char* path, gacd_config** out);
GACD_API gacd_status gacd_config_parse(const char* text, gacd_config** out);
GACD_API void gacd_config_free(gacd_config* config);
GACD_API gacd_status gacd_config_set(gacd_config* config, const char* key, const char* value);
GACD_API gacd_status gacd_config_get(gacd_config* config, const char* key, const char** value);
GACD_API gacd_status gacd_config_serialize(gacd_config* config, const char** text);
GACD_API gacd_status gacd_config_validate(const gacd_config* config);
GACD_API gacd_status gacd_config_out_dir(gacd_config* config, const char** path);
GACD_API size_t gacd_config_key_count(void);
GACD_API const char* gacd_config_key(size_t index);

/* Pipeline stages. Outputs land under the configured output directory. */
GACD_API gacd_status gacd_gen(const gacd_config* config, size_t* train_scenes,
                              size_t* test_scenes);
GACD_API gacd_status gacd_train(const gacd_config* config, size_t* epochs, double* final_loss,
                                int* reached_plateau);
GACD_API gacd_status gacd_eval(const gacd_config* config, gacd_reports** out);
/* Runs the configured grid; writes sweep/sweep.csv and reports the row count. */
GACD_API gacd_status gacd_sweep(const gacd_config* config, size_t* rows, const char** csv_path);

GACD_API size_t gacd_reports_count(const gacd_reports* reports);
GACD_API const char* gacd_reports_mode(const gacd_reports* reports, size_t index);
GACD_API const char* gacd_reports_json(const gacd_reports* reports, size_t index);
GACD_API const char* gacd_reports_path(const gacd_reports* reports, size_t index);
GACD_API void gacd_reports_free(gacd_reports* reports);

/* Trained model plus its vocabulary. */
GACD_API gacd_status gacd_model_load(const char* checkpoint_path, const char* vocab_path,
                                     gacd_model** out);
GACD_API void gacd_model_free(gacd_model* model);

/* Decodes one scene given row-major raw features (rows x cols). The decoder
 * settings and prompt come from `config`; `mode` is a mode name such as
 * "baseline" or "full". */
GACD_API gacd_status gacd_decode(const gacd_model* model, const gacd_config* config,
                                 const char* mode, const double* features, size_t rows,
                                 size_t cols, gacd_caption** out);
/* Space-separated caption without EOS. */
GACD_API const char* gacd_caption_text(const gacd_caption* caption);
/* "eos", "max_len", "context" or "early_stop". */
GACD_API const char* gacd_caption_stop(const gacd_caption* caption);
GACD_API size_t gacd_caption_steps(const gacd_caption* caption);
GACD_API void gacd_caption_free(gacd_caption* caption);

#ifdef __cplusplus
}
#endif

#endif /* GACD_GACD_H_ */
