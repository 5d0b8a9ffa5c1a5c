// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_RL_HPP_
#define GROUNDSIM_RL_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "env.hpp"
#include "net.hpp"
#include "policy.hpp"
#include "rng.hpp"
#include "transform.hpp"

namespace groundsim {

struct TrustRegionConfig {
  double max_kl = 0.01;
  double entropy_coeff = 0.0;
  double discount = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  int epochs = 10;
  int minibatch_size = 256;
  double learning_rate = 3e-4;
  int critic_epochs = 40;
  double critic_learning_rate = 1e-3;

  void validate() const;  // throws std::invalid_argument
};

// One on-policy episode segment. `final_obs` is the observation after the
// last recorded step; it bootstraps the advantage estimate when the segment
// was truncated rather than terminated.
struct Episode {
  std::vector<Vec> obs;
  std::vector<Vec> actions;  // raw sampled actions (pre-clipping)
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminals;
  Vec final_obs;

  int length() const { return static_cast<int>(rewards.size()); }
  double total_reward() const;
};

struct RolloutBatch {
  std::vector<Episode> episodes;

  long total_steps() const;
  double mean_episode_return() const;
};

// Generalized advantage estimation. values has one more entry than rewards
// (the bootstrap value); returns advantages and returns-to-fit
// (advantage + value).
std::pair<Vec, Vec> compute_gae(const Vec& rewards, const Vec& values,
                                const std::vector<std::uint8_t>& terminals,
                                double discount, double gae_lambda);

struct Critic {
  Mlp value_net;

  double value(const Vec& obs) const { return value_net.forward(obs)[0]; }
  static Critic create(int obs_dim, const std::vector<int>& hidden, Rng& rng);
};

struct UpdateReport {
  double kl = 0.0;              // full-batch mean KL of the accepted update
  double entropy = 0.0;         // policy entropy after the update
  double surrogate_gain = 0.0;  // clipped-surrogate improvement over the batch
  int epochs_used = 0;
  bool kl_stopped = false;
  long steps = 0;
  double mean_episode_return = 0.0;
};

// Maximizes the clipped importance-ratio surrogate plus an entropy bonus.
// Updates are applied minibatch-wise and rolled back to the last state whose
// full-batch KL against the pre-update policy stayed within 1.5 * max_kl, so
// the reported KL always satisfies the trust-region contract. The critic is
// then fit by squared error to the empirical returns.
UpdateReport improve_policy(GaussianPolicy& policy, Critic& critic,
                            const RolloutBatch& batch, const TrustRegionConfig& config,
                            Rng& rng);

// --- Batch collection --------------------------------------------------------

// Target-policy experience: observations are environment states. Episodes end
// on env terminal or max_episode_steps; collection stops once n_steps steps
// are gathered, truncating the last episode.
RolloutBatch collect_policy_batch(const EnvSpec& env, const GaussianPolicy& policy,
                                  int n_steps, const Rng& rng);
RolloutBatch collect_policy_batch(const GroundedSimulator& gsim,
                                  const GaussianPolicy& policy, int n_steps,
                                  const Rng& rng);

// Action-transformer experience: the frozen target policy drives the base
// simulator through the (stochastic) transformer; the transformer is the
// agent, observing (state (+) target action) and rewarded by how closely the
// grounded transition tracks the forward model's prediction of the real one.
RolloutBatch collect_grounding_batch(const EnvSpec& sim, const GaussianPolicy& target_policy,
                                     const ActionTransformer& transformer,
                                     const ForwardModel& forward, int n_steps,
                                     const Rng& rng);

struct EvalResult {
  double mean_return = 0.0;
  double stderr_return = 0.0;
  int episodes = 0;
  long steps = 0;
};

// Undiscounted mean episode return under mean-mode actions.
EvalResult evaluate_return(const GaussianPolicy& policy, const EnvSpec& env,
                           int n_episodes, const Rng& rng);
EvalResult evaluate_return(const GaussianPolicy& policy, const GroundedSimulator& gsim,
                           int n_episodes, const Rng& rng);

}  // namespace groundsim

#endif  // GROUNDSIM_RL_HPP_
