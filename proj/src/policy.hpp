// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_POLICY_HPP_
#define GROUNDSIM_POLICY_HPP_

#include <iosfwd>
#include <vector>

#include "net.hpp"
#include "rng.hpp"

namespace groundsim {

// Diagonal-Gaussian policy: state-dependent mean, state-independent log-std.
// Used both for target policies (obs = state) and for action-transformer
// policies (obs = state (+) action, mean = net output + the action tail).
class GaussianPolicy {
 public:
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  GaussianPolicy() = default;
  // hidden: hidden layer sizes. residual_on_action_tail: add the last act_dim
  // observation components to the network output (the transformer's
  // delta-action parameterization); pair it with mean_head_scale 0 so the
  // policy starts as the identity map.
  GaussianPolicy(int obs_dim, int act_dim, const std::vector<int>& hidden,
                 double log_std_init, Rng& rng, double mean_head_scale = 0.01,
                 bool residual_on_action_tail = false);

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  bool residual_on_action_tail() const { return residual_; }

  Vec mean_action(const Vec& obs) const;

  struct Sample {
    Vec action;
    double log_prob;
  };
  Sample sample(const Vec& obs, Rng& rng) const;

  double log_prob(const Vec& obs, const Vec& action) const;

  // Closed-form entropy: sum_d(log_std_d + 0.5*ln(2*pi*e)).
  double entropy() const;

  // Per-state Gaussian stats recorded before an update for ratio/KL math.
  struct Stats {
    Vec mean;
    Vec log_std;
  };
  Stats stats(const Vec& obs) const;

  // Mean KL(old || current) over a batch of observations with recorded old
  // per-state stats.
  double mean_kl(const std::vector<Vec>& obs_batch,
                 const std::vector<Stats>& old_stats) const;

  // Gradient of log_prob(obs, action) with respect to all parameters,
  // scaled by coeff and accumulated into (net_grads, log_std_grads).
  void accumulate_log_prob_grad(const Vec& obs, const Vec& action, double coeff,
                                Mlp::Gradients& net_grads, Vec& log_std_grads) const;

  Mlp& mean_net() { return mean_net_; }
  const Mlp& mean_net() const { return mean_net_; }
  Vec& log_std() { return log_std_; }
  const Vec& log_std() const { return log_std_; }

  void clamp_log_std();

  void save(std::ostream& out) const;
  static GaussianPolicy load(std::istream& in);

 private:
  int obs_dim_ = 0;
  int act_dim_ = 0;
  bool residual_ = false;
  Mlp mean_net_;
  Vec log_std_;
};

// Mean Gaussian KL between explicit stat pairs (1 state).
double gaussian_kl(const GaussianPolicy::Stats& old_stats,
                   const GaussianPolicy::Stats& new_stats);

}  // namespace groundsim

#endif  // GROUNDSIM_POLICY_HPP_
