// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "gsl.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace groundsim {

std::string to_string(Method m) {
  switch (m) {
    case Method::Rgat:
      return "rgat";
    case Method::Gat:
      return "gat";
    case Method::Ane:
      return "ane";
    case Method::SimOnly:
      return "sim_only";
    case Method::RealOnly:
      return "real_only";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "rgat") return Method::Rgat;
  if (name == "gat") return Method::Gat;
  if (name == "ane") return Method::Ane;
  if (name == "sim_only") return Method::SimOnly;
  if (name == "real_only") return Method::RealOnly;
  throw std::invalid_argument("unknown method '" + name + "'");
}

GslConfig::GslConfig() {
  const EnvSpec base = EnvSpec::cart_pole();
  sim_params = base.params;
  real_params = base.params;
  max_episode_steps = base.max_episode_steps;
  action_low = base.action_low;
  action_high = base.action_high;

  // Target-policy optimizer.
  policy_opt.optim.max_kl = 0.01;
  policy_opt.optim.entropy_coeff = 0.0;

  // Transformer-policy optimizer.
  transformer_opt.optim.max_kl = 1e-4;
  transformer_opt.optim.entropy_coeff = 1e-5;
  transformer_opt.optim.discount = 0.99;
}

EnvSpec GslConfig::sim_spec() const {
  EnvSpec spec;
  spec.env_id = env_id;
  spec.params = sim_params;
  spec.max_episode_steps = max_episode_steps;
  spec.action_low = action_low;
  spec.action_high = action_high;
  spec.init_noise = init_noise;
  return spec;
}

EnvSpec GslConfig::real_spec() const {
  EnvSpec spec = sim_spec();
  spec.params = real_params;
  return spec;
}

void GslConfig::validate() const {
  sim_spec().validate();
  real_spec().validate();
  if (n_grounding_steps < 1) {
    throw std::invalid_argument("GslConfig: n_grounding_steps must be >= 1");
  }
  if (real_trajectories_per_step < 1) {
    throw std::invalid_argument("GslConfig: real_trajectories_per_step must be >= 1");
  }
  if (eval_episodes < 1) throw std::invalid_argument("GslConfig: eval_episodes must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("GslConfig: seeds must not be empty");
  if (precision_samples < 0) {
    throw std::invalid_argument("GslConfig: precision_samples must be >= 0");
  }
  if (!(ane_noise_frac >= 0.0)) {
    throw std::invalid_argument("GslConfig: ane_noise_frac must be >= 0");
  }
  policy_opt.optim.validate();
  transformer_opt.optim.validate();
  if (policy_opt.iters_per_grounding < 1 || policy_opt.steps_per_iter < 1 ||
      transformer_opt.iters_per_grounding < 1 || transformer_opt.steps_per_iter < 1) {
    throw std::invalid_argument("GslConfig: optimizer iteration counts must be >= 1");
  }
}

GaussianPolicy continue_or_restart_policy(GaussianPolicy policy, int step_index,
                                          const GslConfig& config, const Rng& run_root) {
  if (!config.policy_restart || step_index == 0) return policy;
  Rng init_rng = run_root.derive(Phase::InitPolicy);
  return GaussianPolicy(policy.obs_dim(), policy.act_dim(), config.policy_hidden,
                        config.policy_log_std_init, init_rng, 0.01);
}

// Grounding-step streams hang off the run root as root -> step -> phase ->
// trajectory/iteration; init phases derive from the root directly.
namespace {
constexpr std::uint64_t kStepBase = 1000;
}

Rng grounding_step_stream(const Rng& root, int step_index) {
  return root.derive(kStepBase + static_cast<std::uint64_t>(step_index));
}

GroundingRun run_gsl(const GslConfig& config, std::uint64_t seed,
                     const CheckpointFn& checkpoint, bool quiet) {
  config.validate();
  const EnvSpec sim = config.sim_spec();
  const EnvSpec real = config.real_spec();
  const int state_dim = sim.state_dim();
  const int act_dim = sim.action_dim();

  GroundingRun run;
  run.seed = seed;
  run.method = config.method;
  run.policy_restart = config.policy_restart;

  const Rng root(seed);

  Rng policy_init = root.derive(Phase::InitPolicy);
  GaussianPolicy policy(state_dim, act_dim, config.policy_hidden,
                        config.policy_log_std_init, policy_init, 0.01);
  Rng critic_init = root.derive(Phase::InitCritic);
  Critic critic = Critic::create(state_dim, config.critic_hidden, critic_init);

  ActionTransformer transformer;  // Identity until a method installs one
  Critic at_critic;
  if (config.method == Method::Rgat) {
    Rng at_init = root.derive(Phase::InitTransformer);
    GaussianPolicy at_policy(state_dim + act_dim, act_dim, config.transformer_hidden,
                             config.transformer_log_std_init, at_init,
                             /*mean_head_scale=*/0.0, /*residual_on_action_tail=*/true);
    transformer = ActionTransformer::rgat(std::move(at_policy));
    Rng at_critic_init = root.derive(Phase::InitTransformerCritic);
    at_critic = Critic::create(state_dim + act_dim, config.critic_hidden, at_critic_init);
  } else if (config.method == Method::Ane) {
    Vec scale(act_dim, 0.0);
    for (int d = 0; d < act_dim; ++d) {
      scale[d] = config.ane_noise_frac * (config.action_high[d] - config.action_low[d]);
    }
    transformer = ActionTransformer::ane(std::move(scale));
  }

  std::vector<Trajectory> real_data;
  ForwardModel forward;
  bool have_forward = false;

  long long train_real_steps = 0;
  long long eval_real_steps = 0;
  long long sim_steps = 0;

  const bool grounds = config.method == Method::Rgat || config.method == Method::Gat;
  const int n_inverse_trajs = config.sim_trajectories_for_inverse > 0
                                  ? config.sim_trajectories_for_inverse
                                  : config.real_trajectories_per_step;

  for (int k = 0; k < config.n_grounding_steps; ++k) {
    const Rng step_rng = grounding_step_stream(root, k);
    StepRecord rec;
    rec.step_index = k;
    try {
      policy = continue_or_restart_policy(std::move(policy), k, config, root);
      if (config.policy_restart && k > 0) {
        Rng c_init = root.derive(Phase::InitCritic);
        critic = Critic::create(state_dim, config.critic_hidden, c_init);
      }

      // (1) Real-world trajectories with the current stochastic policy.
      if (grounds) {
        std::vector<Trajectory> fresh =
            rollout(real, policy, config.real_trajectories_per_step,
                    step_rng.derive(Phase::RealCollect), /*deterministic=*/false,
                    EnvTag::Real);
        train_real_steps += total_steps(fresh);
        if (config.cumulative_real_data) {
          for (Trajectory& t : fresh) real_data.push_back(std::move(t));
        } else {
          real_data = std::move(fresh);
        }

        // (2) Refit the forward dynamics model.
        Rng fit_rng = step_rng.derive(Phase::FitForward);
        FitReport fwd_report;
        forward = fit_forward(real_data, config.dynamics, fit_rng, &fwd_report);
        have_forward = true;
        rec.forward_report = fwd_report;
      }

      // (3) Grounding.
      if (config.method == Method::Rgat) {
        const Rng phase = step_rng.derive(Phase::TransformerTrain);
        for (int iter = 0; iter < config.transformer_opt.iters_per_grounding; ++iter) {
          const Rng iter_rng = phase.derive(static_cast<std::uint64_t>(iter));
          RolloutBatch batch = collect_grounding_batch(
              sim, policy, transformer, forward, config.transformer_opt.steps_per_iter,
              iter_rng.derive(0));
          sim_steps += batch.total_steps();
          Rng update_rng = iter_rng.derive(1);
          UpdateReport rep = improve_policy(transformer.rgat_policy(), at_critic, batch,
                                            config.transformer_opt.optim, update_rng);
          rec.transformer_updates.push_back(rep);
        }
      } else if (config.method == Method::Gat) {
        std::vector<Trajectory> sim_trajs =
            rollout(sim, policy, n_inverse_trajs, step_rng.derive(Phase::SimCollect),
                    /*deterministic=*/false, EnvTag::Sim);
        sim_steps += total_steps(sim_trajs);
        Rng fit_rng = step_rng.derive(Phase::FitInverse);
        FitReport inv_report;
        InverseModel inverse = fit_inverse(sim_trajs, config.dynamics, fit_rng, &inv_report);
        rec.inverse_report = inv_report;
        transformer = ActionTransformer::gat(forward, std::move(inverse));
      }

      // (4) Target-policy improvement.
      {
        GroundedSimulator gsim{sim, &transformer,
                               config.method == Method::Ane ? TransformMode::Stochastic
                                                            : TransformMode::Mean};
        const Rng phase = step_rng.derive(Phase::PolicyTrain);
        for (int iter = 0; iter < config.policy_opt.iters_per_grounding; ++iter) {
          const Rng iter_rng = phase.derive(static_cast<std::uint64_t>(iter));
          RolloutBatch batch;
          switch (config.method) {
            case Method::SimOnly:
              batch = collect_policy_batch(sim, policy, config.policy_opt.steps_per_iter,
                                           iter_rng.derive(0));
              sim_steps += batch.total_steps();
              break;
            case Method::RealOnly:
              batch = collect_policy_batch(real, policy, config.policy_opt.steps_per_iter,
                                           iter_rng.derive(0));
              train_real_steps += batch.total_steps();
              break;
            default:
              batch = collect_policy_batch(gsim, policy, config.policy_opt.steps_per_iter,
                                           iter_rng.derive(0));
              sim_steps += batch.total_steps();
              break;
          }
          Rng update_rng = iter_rng.derive(1);
          UpdateReport rep =
              improve_policy(policy, critic, batch, config.policy_opt.optim, update_rng);
          rec.policy_updates.push_back(rep);
        }
        rec.clip_events = gsim.clip_events;
      }

      // Transformer precision snapshot (the a_hat-vs-a scatter), taken with
      // the current target policy so the step's checkpoint replays it exactly.
      if (grounds && config.precision_samples > 0) {
        rec.precision_raw = collect_precision_samples(
            transformer, policy, sim, config.precision_samples,
            step_rng.derive(Phase::Precision), config.precision_stochastic_policy);
        rec.precision = summarize_precision(rec.precision_raw);
        rec.has_precision = true;
      }

      // (5) Evaluation; evaluation episodes are ledgered separately from the
      // training budget.
      EvalResult real_eval =
          evaluate_return(policy, real, config.eval_episodes, step_rng.derive(Phase::EvalReal));
      eval_real_steps += real_eval.steps;
      rec.real_return_mean = real_eval.mean_return;
      rec.real_return_stderr = real_eval.stderr_return;

      EvalResult sim_eval =
          evaluate_return(policy, sim, config.eval_episodes, step_rng.derive(Phase::EvalSim));
      rec.sim_return_mean = sim_eval.mean_return;

      {
        // Return in the method's training environment, mean-mode transformer.
        GroundedSimulator eval_gsim{sim, &transformer, TransformMode::Mean};
        EvalResult grounded_eval =
            config.method == Method::RealOnly
                ? evaluate_return(policy, real, config.eval_episodes,
                                  step_rng.derive(Phase::EvalGrounded))
                : evaluate_return(policy, eval_gsim, config.eval_episodes,
                                  step_rng.derive(Phase::EvalGrounded));
        rec.grounded_return_mean = grounded_eval.mean_return;
        if (config.method == Method::RealOnly) eval_real_steps += grounded_eval.steps;
      }

      rec.train_real_steps = train_real_steps;
      rec.eval_real_steps = eval_real_steps;
      rec.sim_steps = sim_steps;

      if (!quiet) {
        std::fprintf(stderr,
                     "[seed %llu] %s step %d: real %.2f +- %.2f, sim %.2f, train_real %lld\n",
                     static_cast<unsigned long long>(seed), to_string(config.method).c_str(),
                     k, rec.real_return_mean, rec.real_return_stderr, rec.sim_return_mean,
                     train_real_steps);
      }

      run.steps.push_back(std::move(rec));
      if (checkpoint) {
        checkpoint(k, policy, grounds || config.method == Method::Ane ? &transformer : nullptr,
                   have_forward ? &forward : nullptr);
      }
    } catch (const std::exception& e) {
      run.aborted = true;
      run.abort_reason = e.what();
      break;
    }
  }
  return run;
}

}  // namespace groundsim
