// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace groundsim {

using nlohmann::json;

namespace {

// --- JSON access with key-path errors ---------------------------------------

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("unknown key '" + join_path(prefix, it.key()) + "'");
    }
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError("key '" + path + "' must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError("key '" + path + "' must be an integer");
  return v.get<int>();
}

bool as_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError("key '" + path + "' must be a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError("key '" + path + "' must be a string");
  return v.get<std::string>();
}

std::vector<int> as_int_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError("key '" + path + "' must be an array of integers");
  std::vector<int> out;
  for (const auto& e : v) out.push_back(as_int(e, path));
  return out;
}

// Action bounds accept a scalar (broadcast over action dims) or an array.
Vec as_bound(const json& v, const std::string& path, int dims) {
  if (v.is_number()) return Vec(static_cast<size_t>(dims), v.get<double>());
  if (v.is_array()) {
    Vec out;
    for (const auto& e : v) out.push_back(as_number(e, path));
    if (static_cast<int>(out.size()) != dims) {
      throw ConfigError("key '" + path + "' must have " + std::to_string(dims) + " entries");
    }
    return out;
  }
  throw ConfigError("key '" + path + "' must be a number or array");
}

void parse_physics(const json& obj, const std::string& prefix, PhysicsParams& p) {
  check_keys(obj, prefix,
             {"cart_mass", "pole_mass", "pole_length", "gravity", "timestep", "force_scale",
              "agent_mass", "drag_coeff"});
  if (const json* v = find(obj, "cart_mass")) p.cart_mass = as_number(*v, join_path(prefix, "cart_mass"));
  if (const json* v = find(obj, "pole_mass")) p.pole_mass = as_number(*v, join_path(prefix, "pole_mass"));
  if (const json* v = find(obj, "pole_length")) p.pole_length = as_number(*v, join_path(prefix, "pole_length"));
  if (const json* v = find(obj, "gravity")) p.gravity = as_number(*v, join_path(prefix, "gravity"));
  if (const json* v = find(obj, "timestep")) p.timestep = as_number(*v, join_path(prefix, "timestep"));
  if (const json* v = find(obj, "force_scale")) p.force_scale = as_number(*v, join_path(prefix, "force_scale"));
  if (const json* v = find(obj, "agent_mass")) p.agent_mass = as_number(*v, join_path(prefix, "agent_mass"));
  if (const json* v = find(obj, "drag_coeff")) p.drag_coeff = as_number(*v, join_path(prefix, "drag_coeff"));
}

void parse_optim(const json& obj, const std::string& prefix, TrustRegionConfig& c) {
  check_keys(obj, prefix,
             {"max_kl", "entropy_coeff", "discount", "gae_lambda", "clip_ratio", "epochs",
              "minibatch_size", "learning_rate", "critic_epochs", "critic_learning_rate"});
  if (const json* v = find(obj, "max_kl")) c.max_kl = as_number(*v, join_path(prefix, "max_kl"));
  if (const json* v = find(obj, "entropy_coeff")) c.entropy_coeff = as_number(*v, join_path(prefix, "entropy_coeff"));
  if (const json* v = find(obj, "discount")) c.discount = as_number(*v, join_path(prefix, "discount"));
  if (const json* v = find(obj, "gae_lambda")) c.gae_lambda = as_number(*v, join_path(prefix, "gae_lambda"));
  if (const json* v = find(obj, "clip_ratio")) c.clip_ratio = as_number(*v, join_path(prefix, "clip_ratio"));
  if (const json* v = find(obj, "epochs")) c.epochs = as_int(*v, join_path(prefix, "epochs"));
  if (const json* v = find(obj, "minibatch_size")) c.minibatch_size = as_int(*v, join_path(prefix, "minibatch_size"));
  if (const json* v = find(obj, "learning_rate")) c.learning_rate = as_number(*v, join_path(prefix, "learning_rate"));
  if (const json* v = find(obj, "critic_epochs")) c.critic_epochs = as_int(*v, join_path(prefix, "critic_epochs"));
  if (const json* v = find(obj, "critic_learning_rate")) c.critic_learning_rate = as_number(*v, join_path(prefix, "critic_learning_rate"));
}

json physics_to_json(const PhysicsParams& p) {
  return json{{"cart_mass", p.cart_mass},     {"pole_mass", p.pole_mass},
              {"pole_length", p.pole_length}, {"gravity", p.gravity},
              {"timestep", p.timestep},       {"force_scale", p.force_scale},
              {"agent_mass", p.agent_mass},   {"drag_coeff", p.drag_coeff}};
}

json optim_to_json(const TrustRegionConfig& c) {
  return json{{"max_kl", c.max_kl},
              {"entropy_coeff", c.entropy_coeff},
              {"discount", c.discount},
              {"gae_lambda", c.gae_lambda},
              {"clip_ratio", c.clip_ratio},
              {"epochs", c.epochs},
              {"minibatch_size", c.minibatch_size},
              {"learning_rate", c.learning_rate},
              {"critic_epochs", c.critic_epochs},
              {"critic_learning_rate", c.critic_learning_rate}};
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Defaults are environment-dependent (episode caps, bounds, force scale).
GslConfig defaults_for(EnvId id) {
  GslConfig c;
  if (id == EnvId::DoubleIntegrator2D) {
    const EnvSpec base = EnvSpec::double_integrator();
    c.env_id = base.env_id;
    c.sim_params = base.params;
    c.real_params = base.params;
    c.max_episode_steps = base.max_episode_steps;
    c.action_low = base.action_low;
    c.action_high = base.action_high;
  }
  return c;
}

}  // namespace

GslConfig parse_config_json(const json& root) {
  if (!root.is_object()) throw ConfigError("config root must be an object");
  check_keys(root, "", {"env", "method", "seeds", "grounding", "policy", "transformer", "dynamics"});

  EnvId env_id = EnvId::CartPoleContinuous;
  const json* env = find(root, "env");
  if (env != nullptr) {
    if (!env->is_object()) throw ConfigError("key 'env' must be an object");
    check_keys(*env, "env",
               {"id", "max_episode_steps", "action_low", "action_high", "init_noise",
                "sim_params", "real_params"});
    if (const json* v = find(*env, "id")) {
      try {
        env_id = env_id_from_string(as_string(*v, "env.id"));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("key 'env.id': ") + e.what());
      }
    }
  }

  GslConfig c = defaults_for(env_id);

  if (env != nullptr) {
    if (const json* v = find(*env, "max_episode_steps")) {
      c.max_episode_steps = as_int(*v, "env.max_episode_steps");
    }
    if (const json* v = find(*env, "action_low")) {
      c.action_low = as_bound(*v, "env.action_low", c.sim_spec().action_dim());
    }
    if (const json* v = find(*env, "action_high")) {
      c.action_high = as_bound(*v, "env.action_high", c.sim_spec().action_dim());
    }
    if (const json* v = find(*env, "init_noise")) c.init_noise = as_number(*v, "env.init_noise");
    if (const json* v = find(*env, "sim_params")) {
      if (!v->is_object()) throw ConfigError("key 'env.sim_params' must be an object");
      parse_physics(*v, "env.sim_params", c.sim_params);
    }
    // Real params inherit from sim and take explicit overrides.
    c.real_params = c.sim_params;
    if (const json* v = find(*env, "real_params")) {
      if (!v->is_object()) throw ConfigError("key 'env.real_params' must be an object");
      parse_physics(*v, "env.real_params", c.real_params);
    }
  }

  if (const json* v = find(root, "method")) {
    try {
      c.method = method_from_string(as_string(*v, "method"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("key 'method': ") + e.what());
    }
  }

  if (const json* v = find(root, "seeds")) {
    if (!v->is_array() || v->empty()) throw ConfigError("key 'seeds' must be a non-empty array");
    c.seeds.clear();
    for (const auto& e : *v) {
      if (!e.is_number_integer()) throw ConfigError("key 'seeds' must contain integers");
      c.seeds.push_back(e.get<std::uint64_t>());
    }
  }

  if (const json* g = find(root, "grounding")) {
    if (!g->is_object()) throw ConfigError("key 'grounding' must be an object");
    check_keys(*g, "grounding",
               {"n_grounding_steps", "real_trajectories_per_step", "eval_episodes",
                "precision_samples", "precision_stochastic_policy", "policy_restart",
                "cumulative_real_data", "sim_trajectories_for_inverse"});
    if (const json* v = find(*g, "n_grounding_steps")) c.n_grounding_steps = as_int(*v, "grounding.n_grounding_steps");
    if (const json* v = find(*g, "real_trajectories_per_step")) c.real_trajectories_per_step = as_int(*v, "grounding.real_trajectories_per_step");
    if (const json* v = find(*g, "eval_episodes")) c.eval_episodes = as_int(*v, "grounding.eval_episodes");
    if (const json* v = find(*g, "precision_samples")) c.precision_samples = as_int(*v, "grounding.precision_samples");
    if (const json* v = find(*g, "precision_stochastic_policy")) c.precision_stochastic_policy = as_bool(*v, "grounding.precision_stochastic_policy");
    if (const json* v = find(*g, "policy_restart")) c.policy_restart = as_bool(*v, "grounding.policy_restart");
    if (const json* v = find(*g, "cumulative_real_data")) c.cumulative_real_data = as_bool(*v, "grounding.cumulative_real_data");
    if (const json* v = find(*g, "sim_trajectories_for_inverse")) c.sim_trajectories_for_inverse = as_int(*v, "grounding.sim_trajectories_for_inverse");
  }

  if (const json* p = find(root, "policy")) {
    if (!p->is_object()) throw ConfigError("key 'policy' must be an object");
    check_keys(*p, "policy",
               {"hidden", "critic_hidden", "log_std_init", "iters_per_grounding",
                "steps_per_iter", "optim"});
    if (const json* v = find(*p, "hidden")) c.policy_hidden = as_int_list(*v, "policy.hidden");
    if (const json* v = find(*p, "critic_hidden")) c.critic_hidden = as_int_list(*v, "policy.critic_hidden");
    if (const json* v = find(*p, "log_std_init")) c.policy_log_std_init = as_number(*v, "policy.log_std_init");
    if (const json* v = find(*p, "iters_per_grounding")) c.policy_opt.iters_per_grounding = as_int(*v, "policy.iters_per_grounding");
    if (const json* v = find(*p, "steps_per_iter")) c.policy_opt.steps_per_iter = as_int(*v, "policy.steps_per_iter");
    if (const json* v = find(*p, "optim")) {
      if (!v->is_object()) throw ConfigError("key 'policy.optim' must be an object");
      parse_optim(*v, "policy.optim", c.policy_opt.optim);
    }
  }

  if (const json* t = find(root, "transformer")) {
    if (!t->is_object()) throw ConfigError("key 'transformer' must be an object");
    check_keys(*t, "transformer",
               {"hidden", "log_std_init", "iters_per_grounding", "steps_per_iter",
                "ane_noise_frac", "optim"});
    if (const json* v = find(*t, "hidden")) c.transformer_hidden = as_int_list(*v, "transformer.hidden");
    if (const json* v = find(*t, "log_std_init")) c.transformer_log_std_init = as_number(*v, "transformer.log_std_init");
    if (const json* v = find(*t, "iters_per_grounding")) c.transformer_opt.iters_per_grounding = as_int(*v, "transformer.iters_per_grounding");
    if (const json* v = find(*t, "steps_per_iter")) c.transformer_opt.steps_per_iter = as_int(*v, "transformer.steps_per_iter");
    if (const json* v = find(*t, "ane_noise_frac")) c.ane_noise_frac = as_number(*v, "transformer.ane_noise_frac");
    if (const json* v = find(*t, "optim")) {
      if (!v->is_object()) throw ConfigError("key 'transformer.optim' must be an object");
      parse_optim(*v, "transformer.optim", c.transformer_opt.optim);
    }
  }

  if (const json* d = find(root, "dynamics")) {
    if (!d->is_object()) throw ConfigError("key 'dynamics' must be an object");
    check_keys(*d, "dynamics",
               {"hidden", "minibatch_size", "max_epochs", "patience", "holdout_fraction",
                "learning_rate", "max_transitions"});
    if (const json* v = find(*d, "hidden")) c.dynamics.hidden = as_int_list(*v, "dynamics.hidden");
    if (const json* v = find(*d, "minibatch_size")) c.dynamics.minibatch_size = as_int(*v, "dynamics.minibatch_size");
    if (const json* v = find(*d, "max_epochs")) c.dynamics.max_epochs = as_int(*v, "dynamics.max_epochs");
    if (const json* v = find(*d, "patience")) c.dynamics.patience = as_int(*v, "dynamics.patience");
    if (const json* v = find(*d, "holdout_fraction")) c.dynamics.holdout_fraction = as_number(*v, "dynamics.holdout_fraction");
    if (const json* v = find(*d, "learning_rate")) c.dynamics.learning_rate = as_number(*v, "dynamics.learning_rate");
    if (const json* v = find(*d, "max_transitions")) c.dynamics.max_transitions = as_int(*v, "dynamics.max_transitions");
  }

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

GslConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config_json(j);
}

GslConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json config_to_json(const GslConfig& c) {
  json j;
  j["env"] = {{"id", to_string(c.env_id)},
              {"max_episode_steps", c.max_episode_steps},
              {"action_low", c.action_low},
              {"action_high", c.action_high},
              {"init_noise", c.init_noise},
              {"sim_params", physics_to_json(c.sim_params)},
              {"real_params", physics_to_json(c.real_params)}};
  j["method"] = to_string(c.method);
  j["seeds"] = c.seeds;
  j["grounding"] = {{"n_grounding_steps", c.n_grounding_steps},
                    {"real_trajectories_per_step", c.real_trajectories_per_step},
                    {"eval_episodes", c.eval_episodes},
                    {"precision_samples", c.precision_samples},
                    {"precision_stochastic_policy", c.precision_stochastic_policy},
                    {"policy_restart", c.policy_restart},
                    {"cumulative_real_data", c.cumulative_real_data},
                    {"sim_trajectories_for_inverse", c.sim_trajectories_for_inverse}};
  j["policy"] = {{"hidden", c.policy_hidden},
                 {"critic_hidden", c.critic_hidden},
                 {"log_std_init", c.policy_log_std_init},
                 {"iters_per_grounding", c.policy_opt.iters_per_grounding},
                 {"steps_per_iter", c.policy_opt.steps_per_iter},
                 {"optim", optim_to_json(c.policy_opt.optim)}};
  j["transformer"] = {{"hidden", c.transformer_hidden},
                      {"log_std_init", c.transformer_log_std_init},
                      {"iters_per_grounding", c.transformer_opt.iters_per_grounding},
                      {"steps_per_iter", c.transformer_opt.steps_per_iter},
                      {"ane_noise_frac", c.ane_noise_frac},
                      {"optim", optim_to_json(c.transformer_opt.optim)}};
  j["dynamics"] = {{"hidden", c.dynamics.hidden},
                   {"minibatch_size", c.dynamics.minibatch_size},
                   {"max_epochs", c.dynamics.max_epochs},
                   {"patience", c.dynamics.patience},
                   {"holdout_fraction", c.dynamics.holdout_fraction},
                   {"learning_rate", c.dynamics.learning_rate},
                   {"max_transitions", c.dynamics.max_transitions}};
  return j;
}

std::string canonical_config(const GslConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

std::string fnv1a64_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char b : text) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_digest(const GslConfig& config) {
  return fnv1a64_hex(config_to_json(config).dump());
}

std::vector<std::string> config_key_reference() {
  std::vector<std::string> keys = {
      "env.id",
      "env.max_episode_steps",
      "env.action_low",
      "env.action_high",
      "env.init_noise",
      "method",
      "seeds",
      "grounding.n_grounding_steps",
      "grounding.real_trajectories_per_step",
      "grounding.eval_episodes",
      "grounding.precision_samples",
      "grounding.precision_stochastic_policy",
      "grounding.policy_restart",
      "grounding.cumulative_real_data",
      "grounding.sim_trajectories_for_inverse",
      "policy.hidden",
      "policy.critic_hidden",
      "policy.log_std_init",
      "policy.iters_per_grounding",
      "policy.steps_per_iter",
      "transformer.hidden",
      "transformer.log_std_init",
      "transformer.iters_per_grounding",
      "transformer.steps_per_iter",
      "transformer.ane_noise_frac",
      "dynamics.hidden",
      "dynamics.minibatch_size",
      "dynamics.max_epochs",
      "dynamics.patience",
      "dynamics.holdout_fraction",
      "dynamics.learning_rate",
      "dynamics.max_transitions",
  };
  for (const char* side : {"env.sim_params", "env.real_params"}) {
    for (const char* f : {"cart_mass", "pole_mass", "pole_length", "gravity", "timestep",
                          "force_scale", "agent_mass", "drag_coeff"}) {
      keys.push_back(std::string(side) + "." + f);
    }
  }
  for (const char* side : {"policy.optim", "transformer.optim"}) {
    for (const char* f : {"max_kl", "entropy_coeff", "discount", "gae_lambda", "clip_ratio",
                          "epochs", "minibatch_size", "learning_rate", "critic_epochs",
                          "critic_learning_rate"}) {
      keys.push_back(std::string(side) + "." + f);
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

// --- CSV helpers --------------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out += ch;
  }
  out += "\"";
  return out;
}

namespace {

constexpr const char* kCrlf = "\r\n";

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out << ',';
    out << csv_escape(fields[i]);
  }
  out << kCrlf;
}

// Minimal RFC-4180 reader for our own files.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch == '\r') {
      // swallow
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void write_precision_csv(const std::string& path,
                         const std::vector<PrecisionSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  size_t state_dim = 0, act_dim = 0;
  if (!samples.empty()) {
    state_dim = samples[0].state.size();
    act_dim = samples[0].original_action.size();
  }
  std::vector<std::string> header;
  for (size_t d = 0; d < state_dim; ++d) header.push_back("state_" + std::to_string(d));
  for (size_t d = 0; d < act_dim; ++d) header.push_back("action_" + std::to_string(d));
  for (size_t d = 0; d < act_dim; ++d) header.push_back("transformed_" + std::to_string(d));
  write_csv_row(out, header);
  for (const PrecisionSample& s : samples) {
    std::vector<std::string> row;
    for (double v : s.state) row.push_back(format_double(v));
    for (double v : s.original_action) row.push_back(format_double(v));
    for (double v : s.transformed_action) row.push_back(format_double(v));
    write_csv_row(out, row);
  }
}

// --- Experiment runner ---------------------------------------------------------

namespace {

json update_to_json(const UpdateReport& r, const char* type, std::uint64_t seed, int step,
                    int iter, double max_kl) {
  return json{{"type", type},
              {"seed", seed},
              {"step", step},
              {"iter", iter},
              {"kl", r.kl},
              {"max_kl", max_kl},
              {"entropy", r.entropy},
              {"surrogate_gain", r.surrogate_gain},
              {"epochs_used", r.epochs_used},
              {"kl_stopped", r.kl_stopped},
              {"steps", r.steps},
              {"mean_episode_return", r.mean_episode_return}};
}

json fit_to_json(const FitReport& r, const char* type, std::uint64_t seed, int step) {
  return json{{"type", type},        {"seed", seed},
              {"step", step},        {"holdout_mse", r.holdout_mse},
              {"r2", r.r2_per_dim},  {"n_train", r.n_train},
              {"n_holdout", r.n_holdout}, {"epochs", r.epochs_run},
              {"warnings", r.warnings}};
}

}  // namespace

RunManifest run_experiment(const GslConfig& config, const std::string& out_dir, bool quiet) {
  config.validate();
  fs::create_directories(out_dir);

  RunManifest manifest;
  manifest.config_digest = config_digest(config);
  manifest.code_version = kCodeVersion;
  manifest.method = to_string(config.method);
  manifest.seeds = config.seeds;
  manifest.started_at = iso_timestamp();
  manifest.out_dir = out_dir;

  {
    std::ofstream cfg(fs::path(out_dir) / "config.json", std::ios::binary);
    cfg << canonical_config(config);
    manifest.outputs.push_back("config.json");
  }

  struct SeedOutput {
    GroundingRun run;
    bool failed = false;
  };
  std::vector<SeedOutput> results;
  results.reserve(config.seeds.size());

  for (std::uint64_t seed : config.seeds) {
    SeedOutput out;
    const fs::path seed_dir = fs::path(out_dir) / ("seed" + std::to_string(seed));
    fs::create_directories(seed_dir);
    try {
      CheckpointFn cb = [&](int step_index, const GaussianPolicy& policy,
                            const ActionTransformer* transformer, const ForwardModel* fwd) {
        const fs::path ckpt = seed_dir / "checkpoints" / ("step" + std::to_string(step_index));
        fs::create_directories(ckpt);
        {
          std::ofstream f(ckpt / "policy.bin", std::ios::binary);
          policy.save(f);
        }
        if (transformer != nullptr) {
          std::ofstream f(ckpt / "transformer.bin", std::ios::binary);
          transformer->save(f);
        }
        if (fwd != nullptr) {
          std::ofstream f(ckpt / "forward.bin", std::ios::binary);
          fwd->save(f);
        }
        json meta = {{"config", config_to_json(config)},
                     {"seed", seed},
                     {"step", step_index},
                     {"method", to_string(config.method)}};
        std::ofstream f(ckpt / "meta.json", std::ios::binary);
        f << meta.dump(2) << "\n";
      };
      out.run = run_gsl(config, seed, cb, quiet);
      if (out.run.aborted) out.failed = true;
      // Precision scatter per grounding step.
      for (const StepRecord& rec : out.run.steps) {
        if (!rec.precision_raw.empty()) {
          const fs::path p =
              seed_dir / ("precision_step" + std::to_string(rec.step_index) + ".csv");
          write_precision_csv(p.string(), rec.precision_raw);
        }
      }
    } catch (const std::exception& e) {
      out.failed = true;
      out.run.seed = seed;
      out.run.aborted = true;
      out.run.abort_reason = e.what();
      if (!quiet) std::fprintf(stderr, "[seed %llu] failed: %s\n",
                               static_cast<unsigned long long>(seed), e.what());
    }
    if (out.failed) manifest.failed_seeds.push_back(seed);
    results.push_back(std::move(out));
  }

  // curve.csv: buffered and written in seed order so reruns are byte-identical
  // regardless of any future per-seed parallelism.
  {
    std::ofstream curve(fs::path(out_dir) / "curve.csv", std::ios::binary);
    curve << kCurveHeader << kCrlf;
    for (const SeedOutput& so : results) {
      for (const StepRecord& rec : so.run.steps) {
        std::vector<std::string> row;
        row.push_back(std::to_string(rec.step_index));
        row.push_back(std::to_string(so.run.seed));
        row.push_back(format_double(rec.real_return_mean));
        row.push_back(format_double(rec.real_return_stderr));
        row.push_back(format_double(rec.sim_return_mean));
        row.push_back(format_double(rec.grounded_return_mean));
        row.push_back(rec.has_precision ? format_double(rec.precision.mean_abs_delta) : "");
        row.push_back(rec.forward_report ? format_double(rec.forward_report->r2_mean()) : "");
        row.push_back(std::to_string(rec.train_real_steps));
        write_csv_row(curve, row);
      }
    }
    manifest.outputs.push_back("curve.csv");
  }

  {
    std::ofstream events(fs::path(out_dir) / "events.jsonl", std::ios::binary);
    for (const SeedOutput& so : results) {
      const std::uint64_t seed = so.run.seed;
      for (const StepRecord& rec : so.run.steps) {
        if (rec.forward_report) {
          events << fit_to_json(*rec.forward_report, "forward_fit", seed, rec.step_index).dump()
                 << "\n";
        }
        if (rec.inverse_report) {
          events << fit_to_json(*rec.inverse_report, "inverse_fit", seed, rec.step_index).dump()
                 << "\n";
        }
        for (size_t i = 0; i < rec.transformer_updates.size(); ++i) {
          events << update_to_json(rec.transformer_updates[i], "transformer_update", seed,
                                   rec.step_index, static_cast<int>(i),
                                   config.transformer_opt.optim.max_kl)
                        .dump()
                 << "\n";
        }
        for (size_t i = 0; i < rec.policy_updates.size(); ++i) {
          events << update_to_json(rec.policy_updates[i], "policy_update", seed,
                                   rec.step_index, static_cast<int>(i),
                                   config.policy_opt.optim.max_kl)
                        .dump()
                 << "\n";
        }
        if (rec.has_precision) {
          events << json{{"type", "precision"},
                         {"seed", seed},
                         {"step", rec.step_index},
                         {"mean_abs_delta", rec.precision.mean_abs_delta},
                         {"residual_std", rec.precision.residual_std},
                         {"mean_abs_original", rec.precision.mean_abs_original},
                         {"mean_abs_transformed", rec.precision.mean_abs_transformed},
                         {"n", rec.precision.n_samples}}
                        .dump()
                 << "\n";
        }
        events << json{{"type", "eval"},
                       {"seed", seed},
                       {"step", rec.step_index},
                       {"real_mean", rec.real_return_mean},
                       {"real_stderr", rec.real_return_stderr},
                       {"sim_mean", rec.sim_return_mean},
                       {"grounded_mean", rec.grounded_return_mean},
                       {"train_real_steps", rec.train_real_steps},
                       {"eval_real_steps", rec.eval_real_steps},
                       {"sim_steps", rec.sim_steps},
                       {"clip_events", rec.clip_events}}
                      .dump()
               << "\n";
      }
      if (so.run.aborted) {
        events << json{{"type", "abort"}, {"seed", seed}, {"reason", so.run.abort_reason}}.dump()
               << "\n";
      }
    }
    manifest.outputs.push_back("events.jsonl");
  }

  manifest.finished_at = iso_timestamp();
  {
    std::ofstream mf(fs::path(out_dir) / "manifest.json", std::ios::binary);
    mf << manifest.to_json().dump(2) << "\n";
    manifest.outputs.push_back("manifest.json");
  }
  return manifest;
}

json RunManifest::to_json() const {
  return json{{"config_digest", config_digest},
              {"code_version", code_version},
              {"method", method},
              {"seeds", seeds},
              {"failed_seeds", failed_seeds},
              {"started_at", started_at},
              {"finished_at", finished_at},
              {"out_dir", out_dir},
              {"outputs", outputs}};
}

// --- Summaries -----------------------------------------------------------------

Summary summarize(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw std::invalid_argument("summarize: need at least one run dir");
  // method -> step -> returns across seeds
  std::map<std::string, std::map<int, std::vector<double>>> by_method;
  std::map<std::string, std::set<int>> steps_by_dir_method;

  for (const std::string& dir : run_dirs) {
    std::ifstream cfg_in(fs::path(dir) / "config.json");
    if (!cfg_in) throw std::runtime_error("summarize: missing config.json in '" + dir + "'");
    std::ostringstream ss;
    ss << cfg_in.rdbuf();
    const GslConfig cfg = parse_config_text(ss.str());
    const std::string method = to_string(cfg.method);

    std::ifstream curve(fs::path(dir) / "curve.csv");
    if (!curve) throw std::runtime_error("summarize: missing curve.csv in '" + dir + "'");
    std::string line;
    std::getline(curve, line);  // header
    std::set<int> steps_here;
    while (std::getline(curve, line)) {
      if (line.empty() || line == "\r") continue;
      const std::vector<std::string> f = split_csv_line(line);
      if (f.size() < 3) continue;
      const int step = std::stoi(f[0]);
      const double real_mean = std::stod(f[2]);
      by_method[method][step].push_back(real_mean);
      steps_here.insert(step);
    }
    auto it = steps_by_dir_method.find(method);
    if (it == steps_by_dir_method.end()) {
      steps_by_dir_method[method] = steps_here;
    } else if (it->second != steps_here) {
      throw std::runtime_error("summarize: mismatched grounding-step counts for method '" +
                               method + "'");
    }
  }

  Summary summary;
  for (const auto& [method, per_step] : by_method) {
    for (const auto& [step, values] : per_step) {
      SummaryRow row;
      row.method = method;
      row.grounding_step = step;
      row.n_seeds = static_cast<int>(values.size());
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      row.mean_return = mean;
      if (values.size() > 1) {
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size() - 1);
        row.stderr_return = std::sqrt(var / static_cast<double>(values.size()));
      }
      summary.rows.push_back(row);
    }
  }
  return summary;
}

std::string Summary::to_csv() const {
  std::ostringstream out;
  out << "method,grounding_step,real_return_mean,real_return_stderr,n_seeds" << kCrlf;
  for (const SummaryRow& r : rows) {
    out << csv_escape(r.method) << ',' << r.grounding_step << ',' << format_double(r.mean_return)
        << ',' << format_double(r.stderr_return) << ',' << r.n_seeds << kCrlf;
  }
  return out.str();
}

std::string Summary::to_text() const {
  std::ostringstream out;
  out << "method        step   real_return (mean +- stderr)   seeds\n";
  for (const SummaryRow& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-12s  %4d   %10.3f +- %-8.3f        %d\n",
                  r.method.c_str(), r.grounding_step, r.mean_return, r.stderr_return,
                  r.n_seeds);
    out << buf;
  }
  return out.str();
}

// --- Checkpoint tools ------------------------------------------------------------

Checkpoint load_checkpoint(const std::string& checkpoint_dir) {
  const fs::path dir(checkpoint_dir);
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw std::runtime_error("missing meta.json in '" + checkpoint_dir + "'");
  json meta = json::parse(meta_in);

  Checkpoint ckpt;
  ckpt.config = parse_config_json(meta.at("config"));
  ckpt.seed = meta.at("seed").get<std::uint64_t>();
  ckpt.step_index = meta.at("step").get<int>();

  {
    std::ifstream f(dir / "policy.bin", std::ios::binary);
    if (!f) throw std::runtime_error("missing policy.bin in '" + checkpoint_dir + "'");
    ckpt.policy = GaussianPolicy::load(f);
  }
  if (fs::exists(dir / "transformer.bin")) {
    std::ifstream f(dir / "transformer.bin", std::ios::binary);
    ckpt.transformer = ActionTransformer::load(f);
  }
  if (fs::exists(dir / "forward.bin")) {
    std::ifstream f(dir / "forward.bin", std::ios::binary);
    ckpt.forward = ForwardModel::load(f);
  }
  return ckpt;
}

void export_precision(const std::string& checkpoint_dir, const std::string& out_csv,
                      int n_samples, std::optional<std::uint64_t> seed_override) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  if (!ckpt.transformer) {
    throw std::runtime_error("checkpoint has no transformer to export");
  }
  const Rng rng = seed_override
                      ? Rng(*seed_override)
                      : grounding_step_stream(Rng(ckpt.seed), ckpt.step_index)
                            .derive(Phase::Precision);
  const std::vector<PrecisionSample> samples = collect_precision_samples(
      *ckpt.transformer, ckpt.policy, ckpt.config.sim_spec(), n_samples, rng,
      ckpt.config.precision_stochastic_policy);
  write_precision_csv(out_csv, samples);
}

}  // namespace groundsim
