/*
 * Copyright The groundsim Authors.
 * SPDX-License-Identifier: Apache-2.0
 *
 * C API for the groundsim shared library: simulator grounding experiments
 * (GAT / RGAT / ANE) over built-in physics environments.
 *
 * All functions returning gs_status set a thread-local error message
 * retrievable via gs_last_error() on failure. Strings returned through
 * char** out-parameters are heap-allocated; release them with
 * gs_string_free().
 */

#ifndef GROUNDSIM_GROUNDSIM_H_
#define GROUNDSIM_GROUNDSIM_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gs_status {
  GS_OK = 0,
  GS_ERR_INVALID_ARGUMENT = 1,
  GS_ERR_PARSE = 2,
  GS_ERR_IO = 3,
  GS_ERR_RUNTIME = 4
} gs_status;

/* Opaque handles. */
typedef struct gs_config gs_config;
typedef struct gs_env gs_env;

const char* gs_version(void);
const char* gs_last_error(void);
void gs_string_free(char* s);

/* --- Configuration ------------------------------------------------------- */

/* Strict JSON config; unknown keys are errors naming the key path. */
gs_status gs_config_load(const char* path, gs_config** out);
gs_status gs_config_parse(const char* json_text, gs_config** out);
void gs_config_free(gs_config* config);

/* Canonical config text (defaults materialized, keys sorted). */
gs_status gs_config_canonical(const gs_config* config, char** out_json);
/* Stable digest of the canonical form. */
gs_status gs_config_digest(const gs_config* config, char** out_hex);

/* Overrides applied after parsing (CLI --method / --seeds). */
gs_status gs_config_set_method(gs_config* config, const char* method);
gs_status gs_config_set_seeds(gs_config* config, const uint64_t* seeds, size_t n_seeds);

/* Newline-separated list of every legal config key path. */
gs_status gs_config_keys(char** out_text);

/* --- Environments --------------------------------------------------------- */

/* Builds the config's simulator (use_real_params = 0) or its "real"
 * counterpart (use_real_params != 0). */
gs_status gs_env_create(const gs_config* config, int use_real_params, gs_env** out);
void gs_env_free(gs_env* env);

int gs_env_state_dim(const gs_env* env);
int gs_env_action_dim(const gs_env* env);

/* Draws the initial state for a new episode into state_out (state_dim
 * doubles); deterministic in (config, seed, episode). */
gs_status gs_env_reset(const gs_env* env, uint64_t seed, uint64_t episode,
                       double* state_out);

/* Pure transition step: writes state_dim doubles, the reward, and the
 * terminal flag. Fails on non-finite input states. */
gs_status gs_env_step(const gs_env* env, const double* state, const double* action,
                      double* next_state_out, double* reward_out, int* terminal_out);

/* --- Experiments ----------------------------------------------------------- */

/* Runs the configured grounding experiment over all configured seeds and
 * writes curve.csv, events.jsonl, precision CSVs, checkpoints and
 * manifest.json under out_dir. On success *manifest_json_out (optional)
 * receives the manifest. */
gs_status gs_run_experiment(const gs_config* config, const char* out_dir, int quiet,
                            char** manifest_json_out);

/* Per-method mean +- stderr of real return by grounding step across runs. */
gs_status gs_summarize(const char* const* run_dirs, size_t n_dirs, char** csv_out,
                       char** text_out);

/* Re-exports the transformer scatter of a saved checkpoint directory.
 * seed_or_null == NULL replays the run's own precision stream. */
gs_status gs_export_precision(const char* checkpoint_dir, const char* out_csv,
                              int n_samples, const uint64_t* seed_or_null);

#ifdef __cplusplus
}
#endif

#endif /* GROUNDSIM_GROUNDSIM_H_ */
