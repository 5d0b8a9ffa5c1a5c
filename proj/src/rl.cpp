// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace groundsim {

void TrustRegionConfig::validate() const {
  if (!(max_kl > 0.0)) throw std::invalid_argument("TrustRegionConfig: max_kl must be > 0");
  if (!(discount >= 0.0 && discount <= 1.0)) {
    throw std::invalid_argument("TrustRegionConfig: discount must be in [0, 1]");
  }
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("TrustRegionConfig: gae_lambda must be in [0, 1]");
  }
  if (!(clip_ratio > 0.0)) throw std::invalid_argument("TrustRegionConfig: clip_ratio must be > 0");
  if (epochs < 1 || minibatch_size < 1 || critic_epochs < 0) {
    throw std::invalid_argument("TrustRegionConfig: counts must be positive");
  }
  if (!(learning_rate > 0.0) || !(critic_learning_rate > 0.0)) {
    throw std::invalid_argument("TrustRegionConfig: learning rates must be > 0");
  }
}

double Episode::total_reward() const {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

long RolloutBatch::total_steps() const {
  long n = 0;
  for (const Episode& e : episodes) n += e.length();
  return n;
}

double RolloutBatch::mean_episode_return() const {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const Episode& e : episodes) s += e.total_reward();
  return s / static_cast<double>(episodes.size());
}

std::pair<Vec, Vec> compute_gae(const Vec& rewards, const Vec& values,
                                const std::vector<std::uint8_t>& terminals,
                                double discount, double gae_lambda) {
  const size_t n = rewards.size();
  if (values.size() != n + 1 || terminals.size() != n) {
    throw std::invalid_argument("compute_gae: array length mismatch");
  }
  Vec advantages(n, 0.0), returns(n, 0.0);
  double gae = 0.0;
  for (size_t i = n; i-- > 0;) {
    const double nonterminal = terminals[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + discount * values[i + 1] * nonterminal - values[i];
    gae = delta + discount * gae_lambda * nonterminal * gae;
    advantages[i] = gae;
    returns[i] = gae + values[i];
  }
  return {std::move(advantages), std::move(returns)};
}

Critic Critic::create(int obs_dim, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(1);
  return Critic{Mlp(sizes, rng, 0.01)};
}

namespace {

struct PolicySnapshot {
  std::vector<Matrix> weights;
  std::vector<Vec> biases;
  Vec log_std;

  static PolicySnapshot take(const GaussianPolicy& p) {
    return {p.mean_net().weights(), p.mean_net().biases(), p.log_std()};
  }
  void restore(GaussianPolicy& p) const {
    p.mean_net().weights() = weights;
    p.mean_net().biases() = biases;
    p.log_std() = log_std;
  }
};

struct FlatBatch {
  std::vector<const Vec*> obs;
  std::vector<const Vec*> actions;
  Vec log_probs_old;
  Vec advantages;
  Vec returns;
};

FlatBatch flatten(const RolloutBatch& batch, const Critic& critic,
                  const TrustRegionConfig& config) {
  FlatBatch flat;
  const long n = batch.total_steps();
  flat.obs.reserve(n);
  flat.actions.reserve(n);
  flat.log_probs_old.reserve(n);
  flat.advantages.reserve(n);
  flat.returns.reserve(n);
  for (const Episode& ep : batch.episodes) {
    const size_t T = ep.rewards.size();
    Vec values(T + 1, 0.0);
    for (size_t t = 0; t < T; ++t) values[t] = critic.value(ep.obs[t]);
    values[T] = critic.value(ep.final_obs);
    auto [adv, ret] =
        compute_gae(ep.rewards, values, ep.terminals, config.discount, config.gae_lambda);
    for (size_t t = 0; t < T; ++t) {
      flat.obs.push_back(&ep.obs[t]);
      flat.actions.push_back(&ep.actions[t]);
      flat.log_probs_old.push_back(ep.log_probs[t]);
      flat.advantages.push_back(adv[t]);
      flat.returns.push_back(ret[t]);
    }
  }
  return flat;
}

void normalize_advantages(Vec& adv) {
  if (adv.size() < 2) return;
  double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double std = std::sqrt(var);
  if (std < 1e-8) {
    for (double& a : adv) a -= mean;
    return;
  }
  for (double& a : adv) a = (a - mean) / std;
}

double clipped_surrogate(const GaussianPolicy& policy, const FlatBatch& flat,
                         double clip_ratio) {
  double total = 0.0;
  for (size_t i = 0; i < flat.obs.size(); ++i) {
    const double ratio =
        std::exp(policy.log_prob(*flat.obs[i], *flat.actions[i]) - flat.log_probs_old[i]);
    const double clipped = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio);
    total += std::min(ratio * flat.advantages[i], clipped * flat.advantages[i]);
  }
  return total / static_cast<double>(flat.obs.size());
}

}  // namespace

UpdateReport improve_policy(GaussianPolicy& policy, Critic& critic,
                            const RolloutBatch& batch, const TrustRegionConfig& config,
                            Rng& rng) {
  config.validate();
  UpdateReport report;
  report.steps = batch.total_steps();
  report.mean_episode_return = batch.mean_episode_return();
  if (report.steps == 0) {
    report.entropy = policy.entropy();
    return report;
  }

  FlatBatch flat = flatten(batch, critic, config);
  for (double a : flat.advantages) {
    if (!std::isfinite(a)) throw std::runtime_error("improve_policy: non-finite advantage");
  }
  normalize_advantages(flat.advantages);

  const size_t n = flat.obs.size();
  std::vector<GaussianPolicy::Stats> old_stats;
  old_stats.reserve(n);
  std::vector<Vec> obs_copy;  // mean_kl interface wants values
  obs_copy.reserve(n);
  for (const Vec* o : flat.obs) {
    obs_copy.push_back(*o);
    old_stats.push_back(policy.stats(*o));
  }

  const double surrogate_before = clipped_surrogate(policy, flat, config.clip_ratio);
  const double kl_gate = 1.5 * config.max_kl;

  PolicySnapshot last_good = PolicySnapshot::take(policy);
  double last_good_kl = 0.0;

  AdamState net_adam = AdamState::create(policy.mean_net(), config.learning_rate);
  AdamVecState log_std_adam =
      AdamVecState::create(policy.log_std().size(), config.learning_rate);
  Mlp::Gradients net_grads = policy.mean_net().make_gradients();
  Vec log_std_grads(policy.log_std().size(), 0.0);

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});

  bool stop = false;
  for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    for (size_t i = idx.size() - 1; i > 0; --i) {
      std::swap(idx[i], idx[rng.below(i + 1)]);
    }
    bool gate_hit = false;
    for (size_t start = 0; start < n && !gate_hit;
         start += static_cast<size_t>(config.minibatch_size)) {
      const size_t end = std::min(n, start + static_cast<size_t>(config.minibatch_size));
      const double inv_m = 1.0 / static_cast<double>(end - start);
      net_grads.zero();
      std::fill(log_std_grads.begin(), log_std_grads.end(), 0.0);
      for (size_t i = start; i < end; ++i) {
        const size_t k = idx[i];
        const double adv = flat.advantages[k];
        const double log_prob = policy.log_prob(*flat.obs[k], *flat.actions[k]);
        const double ratio = std::exp(log_prob - flat.log_probs_old[k]);
        const double clipped = std::clamp(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio);
        // Gradient flows only through the branch the min() selects.
        if (ratio * adv <= clipped * adv) {
          // Ascent on the surrogate: accumulate the negative for Adam.
          policy.accumulate_log_prob_grad(*flat.obs[k], *flat.actions[k],
                                          -inv_m * adv * ratio, net_grads, log_std_grads);
        }
      }
      // Entropy bonus: dH/dlog_std_d = 1.
      for (double& g : log_std_grads) g -= config.entropy_coeff;
      adam_update(policy.mean_net(), net_grads, net_adam);
      adam_update(policy.log_std(), log_std_grads, log_std_adam);
      policy.clamp_log_std();

      // Cheap per-minibatch trigger; the authoritative check is full-batch.
      double kl_mb = 0.0;
      for (size_t i = start; i < end; ++i) {
        kl_mb += gaussian_kl(old_stats[idx[i]], policy.stats(*flat.obs[idx[i]]));
      }
      kl_mb *= inv_m;
      if (kl_mb > kl_gate) gate_hit = true;
    }
    const double kl_full = policy.mean_kl(obs_copy, old_stats);
    if (kl_full <= kl_gate) {
      last_good = PolicySnapshot::take(policy);
      last_good_kl = kl_full;
      report.epochs_used = epoch + 1;
      if (gate_hit) {
        report.kl_stopped = true;
        stop = true;
      }
    } else {
      last_good.restore(policy);
      report.kl_stopped = true;
      stop = true;
    }
  }
  last_good.restore(policy);
  report.kl = last_good_kl;

  const double surrogate_after = clipped_surrogate(policy, flat, config.clip_ratio);
  report.surrogate_gain = surrogate_after - surrogate_before;
  if (!std::isfinite(surrogate_after)) {
    throw std::runtime_error("improve_policy: non-finite loss (training diverged)");
  }
  report.entropy = policy.entropy();

  // Critic regression toward empirical returns.
  if (config.critic_epochs > 0) {
    AdamState critic_adam = AdamState::create(critic.value_net, config.critic_learning_rate);
    Mlp::Gradients critic_grads = critic.value_net.make_gradients();
    Mlp::Cache cache;
    for (int epoch = 0; epoch < config.critic_epochs; ++epoch) {
      for (size_t i = idx.size() - 1; i > 0; --i) {
        std::swap(idx[i], idx[rng.below(i + 1)]);
      }
      for (size_t start = 0; start < n; start += static_cast<size_t>(config.minibatch_size)) {
        const size_t end = std::min(n, start + static_cast<size_t>(config.minibatch_size));
        const double inv_m = 1.0 / static_cast<double>(end - start);
        critic_grads.zero();
        for (size_t i = start; i < end; ++i) {
          const size_t k = idx[i];
          const Vec pred = critic.value_net.forward(*flat.obs[k], cache);
          const Vec out_grad = {inv_m * 2.0 * (pred[0] - flat.returns[k])};
          critic.value_net.backward(cache, out_grad, critic_grads);
        }
        adam_update(critic.value_net, critic_grads, critic_adam);
      }
    }
  }
  return report;
}

namespace {

template <typename ResetFn, typename StepFn>
RolloutBatch collect_batch_impl(int n_steps, int max_episode_steps, const Rng& rng,
                                ResetFn&& do_reset, StepFn&& do_step) {
  RolloutBatch batch;
  long collected = 0;
  std::uint64_t ep_index = 0;
  while (collected < n_steps) {
    Rng ep_rng = rng.derive(ep_index++);
    Episode ep;
    Vec obs = do_reset(ep_rng);
    for (int t = 0; t < max_episode_steps && collected < n_steps; ++t) {
      auto [next_obs, action, log_prob, reward, terminal] = do_step(obs, ep_rng);
      ep.obs.push_back(obs);
      ep.actions.push_back(std::move(action));
      ep.log_probs.push_back(log_prob);
      ep.rewards.push_back(reward);
      ep.terminals.push_back(terminal ? 1 : 0);
      ++collected;
      obs = std::move(next_obs);
      if (terminal) break;
    }
    ep.final_obs = std::move(obs);
    batch.episodes.push_back(std::move(ep));
  }
  return batch;
}

struct StepTuple {
  Vec next_obs;
  Vec action;
  double log_prob;
  double reward;
  bool terminal;
};

}  // namespace

RolloutBatch collect_policy_batch(const EnvSpec& env, const GaussianPolicy& policy,
                                  int n_steps, const Rng& rng) {
  return collect_batch_impl(
      n_steps, env.max_episode_steps, rng,
      [&env](Rng& r) { return reset(env, r); },
      [&](const Vec& state, Rng& r) {
        GaussianPolicy::Sample s = policy.sample(state, r);
        StepResult res = step(env, state, s.action);
        return StepTuple{std::move(res.next_state), std::move(s.action), s.log_prob,
                         res.reward, res.terminal};
      });
}

RolloutBatch collect_policy_batch(const GroundedSimulator& gsim,
                                  const GaussianPolicy& policy, int n_steps,
                                  const Rng& rng) {
  return collect_batch_impl(
      n_steps, gsim.base_env.max_episode_steps, rng,
      [&gsim](Rng& r) { return reset(gsim.base_env, r); },
      [&](const Vec& state, Rng& r) {
        GaussianPolicy::Sample s = policy.sample(state, r);
        GroundedStepResult res = grounded_step(gsim, state, s.action, r);
        return StepTuple{std::move(res.next_state), std::move(s.action), s.log_prob,
                         res.reward, res.terminal};
      });
}

RolloutBatch collect_grounding_batch(const EnvSpec& sim, const GaussianPolicy& target_policy,
                                     const ActionTransformer& transformer,
                                     const ForwardModel& forward, int n_steps,
                                     const Rng& rng) {
  if (transformer.kind() != TransformerKind::Rgat) {
    throw std::invalid_argument("collect_grounding_batch: transformer must be rgat");
  }
  const GaussianPolicy& g = transformer.rgat_policy();
  RolloutBatch batch;
  long collected = 0;
  std::uint64_t ep_index = 0;
  while (collected < n_steps) {
    Rng ep_rng = rng.derive(ep_index++);
    Episode ep;
    Vec state = reset(sim, ep_rng);
    bool terminal = false;
    for (int t = 0; t < sim.max_episode_steps && collected < n_steps; ++t) {
      // The frozen target policy supplies the transformer's observation.
      const Vec target_action = clip_action(sim, target_policy.sample(state, ep_rng).action);
      Vec at_obs(state);
      at_obs.insert(at_obs.end(), target_action.begin(), target_action.end());
      GaussianPolicy::Sample s = g.sample(at_obs, ep_rng);
      StepResult res = step(sim, state, s.action);
      const double r_at = grounding_reward(forward, state, target_action, res.next_state);
      ep.obs.push_back(std::move(at_obs));
      ep.actions.push_back(std::move(s.action));
      ep.log_probs.push_back(s.log_prob);
      ep.rewards.push_back(r_at);
      terminal = res.terminal;
      ep.terminals.push_back(terminal ? 1 : 0);
      ++collected;
      state = std::move(res.next_state);
      if (terminal) break;
    }
    // Bootstrap observation: the target's action at the final state.
    const Vec final_action = clip_action(sim, target_policy.sample(state, ep_rng).action);
    Vec final_obs(std::move(state));
    final_obs.insert(final_obs.end(), final_action.begin(), final_action.end());
    ep.final_obs = std::move(final_obs);
    batch.episodes.push_back(std::move(ep));
  }
  return batch;
}

namespace {

template <typename EnvLike>
EvalResult evaluate_impl(const GaussianPolicy& policy, const EnvLike& env, int n_episodes,
                         const Rng& rng) {
  EvalResult out;
  out.episodes = n_episodes;
  if (n_episodes <= 0) return out;
  Vec returns;
  returns.reserve(static_cast<size_t>(n_episodes));
  const std::vector<Trajectory> trajs =
      rollout(env, policy, n_episodes, rng, /*deterministic_actions=*/true, EnvTag::Sim);
  for (const Trajectory& t : trajs) {
    returns.push_back(t.total_reward());
    out.steps += t.steps();
  }
  out.mean_return = std::accumulate(returns.begin(), returns.end(), 0.0) /
                    static_cast<double>(returns.size());
  if (returns.size() > 1) {
    double var = 0.0;
    for (double r : returns) var += (r - out.mean_return) * (r - out.mean_return);
    var /= static_cast<double>(returns.size() - 1);
    out.stderr_return = std::sqrt(var / static_cast<double>(returns.size()));
  }
  return out;
}

}  // namespace

EvalResult evaluate_return(const GaussianPolicy& policy, const EnvSpec& env,
                           int n_episodes, const Rng& rng) {
  return evaluate_impl(policy, env, n_episodes, rng);
}

EvalResult evaluate_return(const GaussianPolicy& policy, const GroundedSimulator& gsim,
                           int n_episodes, const Rng& rng) {
  return evaluate_impl(policy, gsim, n_episodes, rng);
}

}  // namespace groundsim
