// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_GSL_HPP_
#define GROUNDSIM_GSL_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "env.hpp"
#include "policy.hpp"
#include "rl.hpp"
#include "transform.hpp"

namespace groundsim {

// Grounding strategies plus the two reference baselines. SimOnly trains in
// the raw simulator; RealOnly trains directly on the real environment and
// serves as the oracle reference.
enum class Method { Rgat, Gat, Ane, SimOnly, RealOnly };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct OptimPhaseConfig {
  TrustRegionConfig optim;
  int iters_per_grounding = 25;
  int steps_per_iter = 4000;
};

struct GslConfig {
  EnvId env_id = EnvId::CartPoleContinuous;
  PhysicsParams sim_params;
  PhysicsParams real_params;
  int max_episode_steps = 200;
  Vec action_low;
  Vec action_high;
  double init_noise = 0.05;

  Method method = Method::Rgat;
  std::vector<std::uint64_t> seeds = {0};

  int n_grounding_steps = 10;
  int real_trajectories_per_step = 50;
  int eval_episodes = 10;
  int precision_samples = 500;
  bool precision_stochastic_policy = true;
  bool policy_restart = false;       // warm-start the target policy by default
  bool cumulative_real_data = true;  // fit the forward model on all real data so far
  int sim_trajectories_for_inverse = 0;  // 0: mirror the real budget

  std::vector<int> policy_hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64};
  double policy_log_std_init = -0.5;
  OptimPhaseConfig policy_opt;

  std::vector<int> transformer_hidden = {64, 64};
  double transformer_log_std_init = -1.6;
  OptimPhaseConfig transformer_opt;
  double ane_noise_frac = 0.2;  // noise scale as a fraction of the action range

  FitConfig dynamics;

  GslConfig();

  EnvSpec sim_spec() const;
  EnvSpec real_spec() const;
  void validate() const;
};

struct StepRecord {
  int step_index = 0;
  double real_return_mean = 0.0;
  double real_return_stderr = 0.0;
  double sim_return_mean = 0.0;
  double grounded_return_mean = 0.0;
  // Transformer precision after this step's grounding (quiet NaN when the
  // method has no learned transformer).
  PrecisionSummary precision;
  bool has_precision = false;
  std::vector<PrecisionSample> precision_raw;
  std::optional<FitReport> forward_report;
  std::optional<FitReport> inverse_report;
  std::vector<UpdateReport> transformer_updates;
  std::vector<UpdateReport> policy_updates;
  long long train_real_steps = 0;  // cumulative after this step
  long long eval_real_steps = 0;
  long long sim_steps = 0;
  long long clip_events = 0;
};

struct GroundingRun {
  std::uint64_t seed = 0;
  Method method = Method::Rgat;
  bool policy_restart = false;
  std::vector<StepRecord> steps;
  bool aborted = false;
  std::string abort_reason;
};

// Checkpoint hook invoked after each grounding step; transformer/forward may
// be null for methods without them.
using CheckpointFn = std::function<void(int step_index, const GaussianPolicy& policy,
                                        const ActionTransformer* transformer,
                                        const ForwardModel* forward)>;

// Executes the grounding loop for one seed: per step, collect real
// trajectories with the current policy, refit the forward model, ground the
// simulator (method-specific), improve the policy in the grounded simulator
// and evaluate on the real environment. Runs a fixed number of grounding
// steps; on a diverged update the partial run is returned with `aborted` set.
GroundingRun run_gsl(const GslConfig& config, std::uint64_t seed,
                     const CheckpointFn& checkpoint = nullptr,
                     bool quiet = true);

// Warm-start (default) or re-initialize the target policy between grounding
// steps; restart re-derives the parameters from the step-0 seed derivation.
GaussianPolicy continue_or_restart_policy(GaussianPolicy policy, int step_index,
                                          const GslConfig& config, const Rng& run_root);

// Stream for one grounding step of a run (root is Rng(seed)); phases derive
// from it. Exposed so checkpoint tools can replay a run's streams.
Rng grounding_step_stream(const Rng& root, int step_index);

}  // namespace groundsim

#endif  // GROUNDSIM_GSL_HPP_
