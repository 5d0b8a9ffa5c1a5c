// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "env.hpp"

#include <cmath>
#include <stdexcept>

#include "transform.hpp"

namespace groundsim {

std::string to_string(EnvId id) {
  switch (id) {
    case EnvId::CartPoleContinuous:
      return "cart_pole";
    case EnvId::DoubleIntegrator2D:
      return "double_integrator";
  }
  return "unknown";
}

EnvId env_id_from_string(const std::string& name) {
  if (name == "cart_pole") return EnvId::CartPoleContinuous;
  if (name == "double_integrator") return EnvId::DoubleIntegrator2D;
  throw std::invalid_argument("unknown env id '" + name + "'");
}

void PhysicsParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("PhysicsParams: ") + name +
                                  " must be strictly positive");
    }
  };
  positive(cart_mass, "cart_mass");
  positive(pole_mass, "pole_mass");
  positive(pole_length, "pole_length");
  positive(timestep, "timestep");
  positive(force_scale, "force_scale");
  positive(agent_mass, "agent_mass");
  if (!std::isfinite(gravity)) throw std::invalid_argument("PhysicsParams: gravity must be finite");
  if (!(drag_coeff >= 0.0) || !std::isfinite(drag_coeff)) {
    throw std::invalid_argument("PhysicsParams: drag_coeff must be non-negative");
  }
  // Stability bound for explicit integration.
  if (timestep > 0.05) {
    throw std::invalid_argument("PhysicsParams: timestep must be <= 0.05");
  }
}

int EnvSpec::state_dim() const {
  return 4;  // both built-in environments have 4-D state
}

int EnvSpec::action_dim() const {
  return env_id == EnvId::CartPoleContinuous ? 1 : 2;
}

void EnvSpec::validate() const {
  params.validate();
  if (max_episode_steps < 1) {
    throw std::invalid_argument("EnvSpec: max_episode_steps must be >= 1");
  }
  if (static_cast<int>(action_low.size()) != action_dim() ||
      static_cast<int>(action_high.size()) != action_dim()) {
    throw std::invalid_argument("EnvSpec: action bounds dimension mismatch");
  }
  for (int d = 0; d < action_dim(); ++d) {
    if (!(action_low[d] < action_high[d])) {
      throw std::invalid_argument("EnvSpec: action_low must be < action_high");
    }
  }
  if (!(init_noise >= 0.0) || !std::isfinite(init_noise)) {
    throw std::invalid_argument("EnvSpec: init_noise must be non-negative");
  }
}

EnvSpec EnvSpec::cart_pole() {
  EnvSpec spec;
  spec.env_id = EnvId::CartPoleContinuous;
  spec.max_episode_steps = 200;
  spec.action_low = {-1.0};
  spec.action_high = {1.0};
  return spec;
}

EnvSpec EnvSpec::double_integrator() {
  EnvSpec spec;
  spec.env_id = EnvId::DoubleIntegrator2D;
  spec.max_episode_steps = 100;
  spec.action_low = {-1.0, -1.0};
  spec.action_high = {1.0, 1.0};
  spec.params.force_scale = 3.0;
  return spec;
}

double Trajectory::total_reward() const {
  double r = 0.0;
  for (const Transition& t : transitions) r += t.reward;
  return r;
}

Vec rest_state(const EnvSpec& spec) {
  if (spec.env_id == EnvId::CartPoleContinuous) {
    return {0.0, 0.0, 0.0, 0.0};  // x, x_dot, theta, theta_dot
  }
  return {1.0, 1.0, 0.0, 0.0};  // x1, x2, v1, v2
}

Vec reset(const EnvSpec& spec, Rng& rng) {
  Vec state = rest_state(spec);
  for (double& s : state) s += rng.uniform(-spec.init_noise, spec.init_noise);
  return state;
}

Vec clip_action(const EnvSpec& spec, const Vec& action) {
  if (static_cast<int>(action.size()) != spec.action_dim()) {
    throw std::invalid_argument("clip_action: action dimension mismatch");
  }
  Vec out = action;
  for (int d = 0; d < spec.action_dim(); ++d) {
    if (out[d] < spec.action_low[d]) out[d] = spec.action_low[d];
    if (out[d] > spec.action_high[d]) out[d] = spec.action_high[d];
  }
  return out;
}

bool is_terminal(const EnvSpec& spec, const Vec& next_state) {
  if (spec.env_id == EnvId::CartPoleContinuous) {
    return std::abs(next_state[2]) >= kCartPoleAngleLimit ||
           std::abs(next_state[0]) >= kCartPolePositionLimit;
  }
  return false;  // the double integrator only truncates
}

double reward(const EnvSpec& spec, const Vec& action, const Vec& next_state) {
  if (spec.env_id == EnvId::CartPoleContinuous) {
    return is_terminal(spec, next_state) ? 0.0 : 1.0;
  }
  const Vec a = clip_action(spec, action);
  const double dist2 = next_state[0] * next_state[0] + next_state[1] * next_state[1];
  const double act2 = a[0] * a[0] + a[1] * a[1];
  return -dist2 - kActionCostWeight * act2;
}

namespace {

// Cart-pole with a massless track and the pole modeled as a uniform rod of
// half-length l (classic Barto-Sutton formulation):
//   temp   = (F + m_p l w^2 sin(th)) / (m_c + m_p)
//   th_acc = (g sin(th) - cos(th) temp) / (l (4/3 - m_p cos^2(th)/(m_c+m_p)))
//   x_acc  = temp - m_p l th_acc cos(th) / (m_c + m_p)
// integrated with semi-implicit Euler.
Vec cart_pole_step(const PhysicsParams& p, const Vec& s, double force) {
  const double x = s[0], x_dot = s[1], theta = s[2], theta_dot = s[3];
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pml = p.pole_mass * p.pole_length;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + pml * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc =
      (p.gravity * sin_t - cos_t * temp) /
      (p.pole_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - pml * theta_acc * cos_t / total_mass;
  const double dt = p.timestep;
  const double x_dot_next = x_dot + dt * x_acc;
  const double theta_dot_next = theta_dot + dt * theta_acc;
  return {x + dt * x_dot_next, x_dot_next, theta + dt * theta_dot_next, theta_dot_next};
}

// Point mass with linear drag on a 2-D plane:
//   v' = v + dt (F a - c v) / m
//   x' = x + dt v'
Vec double_integrator_step(const PhysicsParams& p, const Vec& s, const Vec& a) {
  const double dt = p.timestep;
  Vec next(4);
  for (int d = 0; d < 2; ++d) {
    const double v = s[2 + d];
    const double acc = (p.force_scale * a[d] - p.drag_coeff * v) / p.agent_mass;
    const double v_next = v + dt * acc;
    next[2 + d] = v_next;
    next[d] = s[d] + dt * v_next;
  }
  return next;
}

}  // namespace

StepResult step(const EnvSpec& spec, const Vec& state, const Vec& action) {
  if (static_cast<int>(state.size()) != spec.state_dim()) {
    throw std::invalid_argument("step: state dimension mismatch");
  }
  if (!all_finite(state)) {
    throw std::invalid_argument("step: non-finite state (corrupted rollout)");
  }
  const Vec a = clip_action(spec, action);
  StepResult out;
  if (spec.env_id == EnvId::CartPoleContinuous) {
    out.next_state = cart_pole_step(spec.params, state, spec.params.force_scale * a[0]);
  } else {
    out.next_state = double_integrator_step(spec.params, state, a);
  }
  out.reward = reward(spec, a, out.next_state);
  out.terminal = is_terminal(spec, out.next_state);
  return out;
}

GroundedStepResult grounded_step(const GroundedSimulator& gsim, const Vec& state,
                                 const Vec& action, Rng& rng) {
  if (gsim.transformer == nullptr) {
    throw std::invalid_argument("grounded_step: transformer not initialized");
  }
  // Action bounds are enforced at the agent/env boundary, so the transformer
  // sees the same clipped actions the raw simulator would execute.
  const Vec original = clip_action(gsim.base_env, action);
  Vec transformed = transform(*gsim.transformer, state, original, rng, gsim.mode);
  const Vec executed = clip_action(gsim.base_env, transformed);
  for (size_t d = 0; d < executed.size(); ++d) {
    if (executed[d] != transformed[d]) {
      ++gsim.clip_events;
      break;
    }
  }
  StepResult raw = step(gsim.base_env, state, executed);
  GroundedStepResult out;
  out.next_state = std::move(raw.next_state);
  // The agent is rewarded for its own chosen action.
  out.reward = reward(gsim.base_env, original, out.next_state);
  out.terminal = raw.terminal;
  out.transformed_action = std::move(transformed);
  return out;
}

namespace {

template <typename StepFn>
std::vector<Trajectory> rollout_impl(const EnvSpec& spec, const GaussianPolicy& policy,
                                     int n_trajectories, const Rng& rng,
                                     bool deterministic_actions, EnvTag tag,
                                     StepFn&& do_step) {
  if (static_cast<int>(policy.obs_dim()) != spec.state_dim() ||
      static_cast<int>(policy.act_dim()) != spec.action_dim()) {
    throw std::invalid_argument("rollout: policy dimensions do not match env");
  }
  std::vector<Trajectory> out;
  out.reserve(static_cast<size_t>(n_trajectories));
  for (int i = 0; i < n_trajectories; ++i) {
    Rng traj_rng = rng.derive(static_cast<std::uint64_t>(i));
    Trajectory traj;
    traj.env_tag = tag;
    Vec state = reset(spec, traj_rng);
    for (int t = 0; t < spec.max_episode_steps; ++t) {
      Vec action = deterministic_actions ? policy.mean_action(state)
                                         : policy.sample(state, traj_rng).action;
      Transition tr;
      tr.state = state;
      tr.action = clip_action(spec, action);
      StepResult res = do_step(state, action, traj_rng);
      tr.next_state = res.next_state;
      tr.reward = res.reward;
      tr.terminal = res.terminal;
      state = res.next_state;
      traj.transitions.push_back(std::move(tr));
      if (res.terminal) break;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace

std::vector<Trajectory> rollout(const EnvSpec& spec, const GaussianPolicy& policy,
                                int n_trajectories, const Rng& rng,
                                bool deterministic_actions, EnvTag tag) {
  return rollout_impl(spec, policy, n_trajectories, rng, deterministic_actions, tag,
                      [&spec](const Vec& s, const Vec& a, Rng&) { return step(spec, s, a); });
}

std::vector<Trajectory> rollout(const GroundedSimulator& gsim,
                                const GaussianPolicy& policy, int n_trajectories,
                                const Rng& rng, bool deterministic_actions, EnvTag tag) {
  return rollout_impl(gsim.base_env, policy, n_trajectories, rng, deterministic_actions,
                      tag, [&gsim](const Vec& s, const Vec& a, Rng& r) {
                        GroundedStepResult g = grounded_step(gsim, s, a, r);
                        return StepResult{std::move(g.next_state), g.reward, g.terminal};
                      });
}

long long total_steps(const std::vector<Trajectory>& trajectories) {
  long long n = 0;
  for (const Trajectory& t : trajectories) n += t.steps();
  return n;
}

}  // namespace groundsim
