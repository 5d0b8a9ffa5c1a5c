// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_ENV_HPP_
#define GROUNDSIM_ENV_HPP_

#include <string>
#include <vector>

#include "net.hpp"
#include "policy.hpp"
#include "rng.hpp"

namespace groundsim {

enum class EnvId { CartPoleContinuous, DoubleIntegrator2D };

std::string to_string(EnvId id);
EnvId env_id_from_string(const std::string& name);

// Perturbable physical constants. The "sim" and "real" domains of a run are
// two instances of this struct; agent_mass and drag_coeff only apply to the
// double integrator.
struct PhysicsParams {
  double cart_mass = 1.0;
  double pole_mass = 0.5;
  double pole_length = 0.6;  // half-length, pivot to center of mass
  double gravity = 9.8;
  double timestep = 0.02;
  double force_scale = 10.0;
  double agent_mass = 1.0;
  double drag_coeff = 0.3;

  void validate() const;  // throws std::invalid_argument
};

struct EnvSpec {
  EnvId env_id = EnvId::CartPoleContinuous;
  PhysicsParams params;
  int max_episode_steps = 200;
  Vec action_low;
  Vec action_high;
  double init_noise = 0.05;  // uniform half-width around the rest state

  int state_dim() const;
  int action_dim() const;
  void validate() const;

  static EnvSpec cart_pole();
  static EnvSpec double_integrator();
};

struct Transition {
  Vec state;
  Vec action;  // executed (clipped) action
  Vec next_state;
  double reward = 0.0;
  bool terminal = false;
};

enum class EnvTag { Sim, Real, GroundedSim };

struct Trajectory {
  std::vector<Transition> transitions;
  EnvTag env_tag = EnvTag::Sim;

  int steps() const { return static_cast<int>(transitions.size()); }
  double total_reward() const;
};

// Cart-pole bounds: survive while |angle| < 0.2 rad and |position| < 2.4.
inline constexpr double kCartPoleAngleLimit = 0.2;
inline constexpr double kCartPolePositionLimit = 2.4;
// Double-integrator action penalty weight.
inline constexpr double kActionCostWeight = 0.01;

// Nominal rest state: cart-pole balances at the origin; the double
// integrator starts at position (1, 1) with zero velocity and must reach
// the origin.
Vec rest_state(const EnvSpec& spec);

Vec reset(const EnvSpec& spec, Rng& rng);

Vec clip_action(const EnvSpec& spec, const Vec& action);

// Reward is a known function of (action, next_state) only; the action is
// clipped to the env bounds before the cost term.
double reward(const EnvSpec& spec, const Vec& action, const Vec& next_state);

bool is_terminal(const EnvSpec& spec, const Vec& next_state);

struct StepResult {
  Vec next_state;
  double reward = 0.0;
  bool terminal = false;
};

// Semi-implicit Euler step of the documented equations of motion. Throws on
// non-finite state input.
StepResult step(const EnvSpec& spec, const Vec& state, const Vec& action);

// --- Grounded simulator -----------------------------------------------------

enum class TransformMode { Stochastic, Mean };

class ActionTransformer;  // transform.hpp

// Raw simulator with an action transformer prepended. The reward is computed
// from the agent's original action, not the transformed one.
struct GroundedSimulator {
  EnvSpec base_env;
  const ActionTransformer* transformer = nullptr;
  TransformMode mode = TransformMode::Mean;
  // Count of steps whose transformed action needed clipping (not an error).
  mutable long long clip_events = 0;
};

struct GroundedStepResult {
  Vec next_state;
  double reward = 0.0;
  bool terminal = false;
  Vec transformed_action;
};

GroundedStepResult grounded_step(const GroundedSimulator& gsim, const Vec& state,
                                 const Vec& action, Rng& rng);

// --- Rollouts ----------------------------------------------------------------

// Complete episodes (env terminal or max_episode_steps). Each trajectory i
// consumes its own stream rng.derive(i), so results are independent of
// collection order.
std::vector<Trajectory> rollout(const EnvSpec& spec, const GaussianPolicy& policy,
                                int n_trajectories, const Rng& rng,
                                bool deterministic_actions, EnvTag tag);

std::vector<Trajectory> rollout(const GroundedSimulator& gsim,
                                const GaussianPolicy& policy, int n_trajectories,
                                const Rng& rng, bool deterministic_actions, EnvTag tag);

long long total_steps(const std::vector<Trajectory>& trajectories);

}  // namespace groundsim

#endif  // GROUNDSIM_ENV_HPP_
