// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_HARNESS_HPP_
#define GROUNDSIM_HARNESS_HPP_

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsl.hpp"

#include "json.hpp"

namespace groundsim {

inline constexpr const char* kCodeVersion = "groundsim 0.1.0";

// Config errors carry the offending key path.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Strict parse: unknown keys are errors, all defaults documented in
// docs/config.md, canonical serialization round-trips.
GslConfig parse_config_json(const nlohmann::json& j);
GslConfig parse_config_file(const std::string& path);
GslConfig parse_config_text(const std::string& text);

// Full config with every default materialized; keys are emitted sorted.
nlohmann::json config_to_json(const GslConfig& config);

// Canonical text form (what `config.json` in a run directory contains).
std::string canonical_config(const GslConfig& config);

// Stable FNV-1a 64-bit digest of the canonical compact form; invariant to
// key order and whitespace of the input text.
std::string config_digest(const GslConfig& config);

// Every legal config key path (for the docs coverage check and --help).
std::vector<std::string> config_key_reference();

// --- Results emission --------------------------------------------------------

struct RunManifest {
  std::string config_digest;
  std::string code_version;
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> failed_seeds;
  std::string started_at;
  std::string finished_at;
  std::string out_dir;
  std::vector<std::string> outputs;  // paths relative to out_dir

  nlohmann::json to_json() const;
};

// Executes run_gsl for every seed and writes, under out_dir:
//   config.json                      canonical config snapshot
//   curve.csv                        one row per (seed, grounding step)
//   events.jsonl                     update/fit/eval reports
//   seed<k>/precision_step<j>.csv    transformer scatter data
//   seed<k>/checkpoints/step<j>/     policy/transformer/forward parameters
//   manifest.json
// Seeds that fail keep their completed predecessors; failures are recorded in
// the manifest.
RunManifest run_experiment(const GslConfig& config, const std::string& out_dir,
                           bool quiet = false);

inline constexpr const char* kCurveHeader =
    "grounding_step,seed,real_return_mean,real_return_stderr,sim_return,"
    "grounded_return,mean_abs_delta_a,fwd_model_r2,real_steps_used";

// --- Summaries ----------------------------------------------------------------

struct SummaryRow {
  std::string method;
  int grounding_step = 0;
  double mean_return = 0.0;
  double stderr_return = 0.0;
  int n_seeds = 0;
};

struct Summary {
  std::vector<SummaryRow> rows;

  std::string to_csv() const;
  std::string to_text() const;
};

// Per-method mean +- standard error of real return at each grounding step
// across the seeds found in run_dirs. Throws on mismatched step counts.
Summary summarize(const std::vector<std::string>& run_dirs);

// --- Checkpoint tools ----------------------------------------------------------

struct Checkpoint {
  GslConfig config;
  std::uint64_t seed = 0;
  int step_index = 0;
  GaussianPolicy policy;
  std::optional<ActionTransformer> transformer;
  std::optional<ForwardModel> forward;
};

Checkpoint load_checkpoint(const std::string& checkpoint_dir);

// Re-export the transformer scatter for a saved grounding step. With
// seed_override unset the run's own precision stream is replayed.
void export_precision(const std::string& checkpoint_dir, const std::string& out_csv,
                      int n_samples, std::optional<std::uint64_t> seed_override);

// --- Low-level helpers (shared with tests) -----------------------------------

std::string format_double(double v);
std::string csv_escape(const std::string& field);
std::string fnv1a64_hex(const std::string& text);
void write_precision_csv(const std::string& path,
                         const std::vector<PrecisionSample>& samples);

}  // namespace groundsim

#endif  // GROUNDSIM_HARNESS_HPP_
