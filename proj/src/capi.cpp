// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "groundsim/groundsim.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "harness.hpp"

using namespace groundsim;

struct gs_config {
  GslConfig config;
};

struct gs_env {
  EnvSpec spec;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

gs_status fail(gs_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
gs_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    return fail(GS_ERR_PARSE, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(GS_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(GS_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(GS_ERR_RUNTIME, e.what());
  }
}

}  // namespace

extern "C" {

const char* gs_version(void) { return kCodeVersion; }

const char* gs_last_error(void) { return g_last_error.c_str(); }

void gs_string_free(char* s) { std::free(s); }

gs_status gs_config_load(const char* path, gs_config** out) {
  if (path == nullptr || out == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_config_load: null argument");
  }
  if (!std::filesystem::exists(path)) {
    return fail(GS_ERR_IO, std::string("config file not found: '") + path + "'");
  }
  return guarded([&]() {
    auto* handle = new gs_config{parse_config_file(path)};
    *out = handle;
    return GS_OK;
  });
}

gs_status gs_config_parse(const char* json_text, gs_config** out) {
  if (json_text == nullptr || out == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_config_parse: null argument");
  }
  return guarded([&]() {
    auto* handle = new gs_config{parse_config_text(json_text)};
    *out = handle;
    return GS_OK;
  });
}

void gs_config_free(gs_config* config) { delete config; }

gs_status gs_config_canonical(const gs_config* config, char** out_json) {
  if (config == nullptr || out_json == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_config_canonical: null argument");
  }
  return guarded([&]() {
    *out_json = dup_string(canonical_config(config->config));
    return *out_json != nullptr ? GS_OK : fail(GS_ERR_RUNTIME, "out of memory");
  });
}

gs_status gs_config_digest(const gs_config* config, char** out_hex) {
  if (config == nullptr || out_hex == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_config_digest: null argument");
  }
  return guarded([&]() {
    *out_hex = dup_string(config_digest(config->config));
    return *out_hex != nullptr ? GS_OK : fail(GS_ERR_RUNTIME, "out of memory");
  });
}

gs_status gs_config_set_method(gs_config* config, const char* method) {
  if (config == nullptr || method == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_config_set_method: null argument");
  }
  return guarded([&]() {
    config->config.method = method_from_string(method);
    return GS_OK;
  });
}

gs_status gs_config_set_seeds(gs_config* config, const uint64_t* seeds, size_t n_seeds) {
  if (config == nullptr || (seeds == nullptr && n_seeds > 0)) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_config_set_seeds: null argument");
  }
  if (n_seeds == 0) return fail(GS_ERR_INVALID_ARGUMENT, "gs_config_set_seeds: empty seed list");
  config->config.seeds.assign(seeds, seeds + n_seeds);
  return GS_OK;
}

gs_status gs_config_keys(char** out_text) {
  if (out_text == nullptr) return fail(GS_ERR_INVALID_ARGUMENT, "gs_config_keys: null argument");
  return guarded([&]() {
    std::string text;
    for (const std::string& key : config_key_reference()) {
      text += key;
      text += '\n';
    }
    *out_text = dup_string(text);
    return *out_text != nullptr ? GS_OK : fail(GS_ERR_RUNTIME, "out of memory");
  });
}

gs_status gs_env_create(const gs_config* config, int use_real_params, gs_env** out) {
  if (config == nullptr || out == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_env_create: null argument");
  }
  return guarded([&]() {
    EnvSpec spec = use_real_params != 0 ? config->config.real_spec() : config->config.sim_spec();
    spec.validate();
    *out = new gs_env{std::move(spec)};
    return GS_OK;
  });
}

void gs_env_free(gs_env* env) { delete env; }

int gs_env_state_dim(const gs_env* env) { return env == nullptr ? 0 : env->spec.state_dim(); }

int gs_env_action_dim(const gs_env* env) { return env == nullptr ? 0 : env->spec.action_dim(); }

gs_status gs_env_reset(const gs_env* env, uint64_t seed, uint64_t episode,
                       double* state_out) {
  if (env == nullptr || state_out == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_env_reset: null argument");
  }
  return guarded([&]() {
    Rng rng = Rng(seed).derive(episode);
    const Vec state = reset(env->spec, rng);
    std::memcpy(state_out, state.data(), state.size() * sizeof(double));
    return GS_OK;
  });
}

gs_status gs_env_step(const gs_env* env, const double* state, const double* action,
                      double* next_state_out, double* reward_out, int* terminal_out) {
  if (env == nullptr || state == nullptr || action == nullptr || next_state_out == nullptr ||
      reward_out == nullptr || terminal_out == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_env_step: null argument");
  }
  return guarded([&]() {
    const Vec s(state, state + env->spec.state_dim());
    const Vec a(action, action + env->spec.action_dim());
    const StepResult res = step(env->spec, s, a);
    std::memcpy(next_state_out, res.next_state.data(),
                res.next_state.size() * sizeof(double));
    *reward_out = res.reward;
    *terminal_out = res.terminal ? 1 : 0;
    return GS_OK;
  });
}

gs_status gs_run_experiment(const gs_config* config, const char* out_dir, int quiet,
                            char** manifest_json_out) {
  if (config == nullptr || out_dir == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_run_experiment: null argument");
  }
  return guarded([&]() {
    const RunManifest manifest = run_experiment(config->config, out_dir, quiet != 0);
    if (manifest_json_out != nullptr) {
      *manifest_json_out = dup_string(manifest.to_json().dump(2) + "\n");
      if (*manifest_json_out == nullptr) return fail(GS_ERR_RUNTIME, "out of memory");
    }
    return GS_OK;
  });
}

gs_status gs_summarize(const char* const* run_dirs, size_t n_dirs, char** csv_out,
                       char** text_out) {
  if (run_dirs == nullptr || n_dirs == 0) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_summarize: need at least one run dir");
  }
  return guarded([&]() {
    std::vector<std::string> dirs(run_dirs, run_dirs + n_dirs);
    const Summary summary = summarize(dirs);
    if (csv_out != nullptr) {
      *csv_out = dup_string(summary.to_csv());
      if (*csv_out == nullptr) return fail(GS_ERR_RUNTIME, "out of memory");
    }
    if (text_out != nullptr) {
      *text_out = dup_string(summary.to_text());
      if (*text_out == nullptr) return fail(GS_ERR_RUNTIME, "out of memory");
    }
    return GS_OK;
  });
}

gs_status gs_export_precision(const char* checkpoint_dir, const char* out_csv,
                              int n_samples, const uint64_t* seed_or_null) {
  if (checkpoint_dir == nullptr || out_csv == nullptr) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_export_precision: null argument");
  }
  if (n_samples <= 0) {
    return fail(GS_ERR_INVALID_ARGUMENT, "gs_export_precision: n_samples must be > 0");
  }
  return guarded([&]() {
    std::optional<std::uint64_t> seed;
    if (seed_or_null != nullptr) seed = *seed_or_null;
    export_precision(checkpoint_dir, out_csv, n_samples, seed);
    return GS_OK;
  });
}

}  // extern "C"
