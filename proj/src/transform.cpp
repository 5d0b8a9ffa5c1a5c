// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "transform.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace groundsim {

std::string to_string(TransformerKind kind) {
  switch (kind) {
    case TransformerKind::Identity:
      return "identity";
    case TransformerKind::Gat:
      return "gat";
    case TransformerKind::Rgat:
      return "rgat";
    case TransformerKind::Ane:
      return "ane";
  }
  return "unknown";
}

ActionTransformer ActionTransformer::identity() {
  return ActionTransformer{};
}

ActionTransformer ActionTransformer::gat(ForwardModel forward, InverseModel inverse) {
  ActionTransformer t;
  t.kind_ = TransformerKind::Gat;
  t.forward_ = std::move(forward);
  t.inverse_ = std::move(inverse);
  return t;
}

ActionTransformer ActionTransformer::rgat(GaussianPolicy policy) {
  if (!policy.residual_on_action_tail()) {
    throw std::invalid_argument("rgat transformer needs a delta-action policy");
  }
  ActionTransformer t;
  t.kind_ = TransformerKind::Rgat;
  t.policy_ = std::move(policy);
  return t;
}

ActionTransformer ActionTransformer::ane(Vec noise_scale) {
  ActionTransformer t;
  t.kind_ = TransformerKind::Ane;
  t.noise_scale_ = std::move(noise_scale);
  return t;
}

GaussianPolicy& ActionTransformer::rgat_policy() {
  if (kind_ != TransformerKind::Rgat) throw std::logic_error("not an rgat transformer");
  return policy_;
}

const GaussianPolicy& ActionTransformer::rgat_policy() const {
  if (kind_ != TransformerKind::Rgat) throw std::logic_error("not an rgat transformer");
  return policy_;
}

const ForwardModel& ActionTransformer::gat_forward() const {
  if (kind_ != TransformerKind::Gat) throw std::logic_error("not a gat transformer");
  return forward_;
}

const InverseModel& ActionTransformer::gat_inverse() const {
  if (kind_ != TransformerKind::Gat) throw std::logic_error("not a gat transformer");
  return inverse_;
}

ForwardModel& ActionTransformer::gat_forward() {
  if (kind_ != TransformerKind::Gat) throw std::logic_error("not a gat transformer");
  return forward_;
}

InverseModel& ActionTransformer::gat_inverse() {
  if (kind_ != TransformerKind::Gat) throw std::logic_error("not a gat transformer");
  return inverse_;
}

const Vec& ActionTransformer::ane_noise_scale() const {
  if (kind_ != TransformerKind::Ane) throw std::logic_error("not an ane transformer");
  return noise_scale_;
}

Vec transform(const ActionTransformer& t, const Vec& state, const Vec& action, Rng& rng,
              TransformMode mode) {
  switch (t.kind()) {
    case TransformerKind::Identity:
      return action;
    case TransformerKind::Gat: {
      const Vec predicted_next = t.gat_forward().predict(state, action);
      return t.gat_inverse().predict(state, predicted_next);
    }
    case TransformerKind::Rgat: {
      Vec obs(state);
      obs.insert(obs.end(), action.begin(), action.end());
      if (mode == TransformMode::Mean) {
        return t.rgat_policy().mean_action(obs);
      }
      return t.rgat_policy().sample(obs, rng).action;
    }
    case TransformerKind::Ane: {
      if (mode == TransformMode::Mean) return action;
      Vec out = action;
      const Vec& scale = t.ane_noise_scale();
      for (size_t d = 0; d < out.size(); ++d) out[d] += scale[d] * rng.normal();
      return out;
    }
  }
  throw std::logic_error("transform: unknown kind");
}

double grounding_reward(const ForwardModel& forward, const Vec& state, const Vec& action,
                        const Vec& next_state_grounded) {
  const Vec predicted = forward.predict(state, action);
  double err2 = 0.0;
  for (size_t d = 0; d < predicted.size(); ++d) {
    const double e = predicted[d] - next_state_grounded[d];
    err2 += e * e;
  }
  return -err2;
}

std::vector<PrecisionSample> collect_precision_samples(const ActionTransformer& t,
                                                       const GaussianPolicy& policy,
                                                       const EnvSpec& env, int n_samples,
                                                       const Rng& rng,
                                                       bool stochastic_policy) {
  std::vector<PrecisionSample> samples;
  samples.reserve(static_cast<size_t>(n_samples));
  GroundedSimulator gsim{env, &t, TransformMode::Mean};
  std::uint64_t episode = 0;
  while (static_cast<int>(samples.size()) < n_samples) {
    Rng traj_rng = rng.derive(episode++);
    Vec state = reset(env, traj_rng);
    for (int step_i = 0; step_i < env.max_episode_steps; ++step_i) {
      const Vec action =
          clip_action(env, stochastic_policy ? policy.sample(state, traj_rng).action
                                             : policy.mean_action(state));
      GroundedStepResult res = grounded_step(gsim, state, action, traj_rng);
      samples.push_back({state, action, res.transformed_action});
      if (static_cast<int>(samples.size()) >= n_samples) break;
      if (res.terminal) break;
      state = res.next_state;
    }
  }
  return samples;
}

PrecisionSummary summarize_precision(const std::vector<PrecisionSample>& samples) {
  PrecisionSummary s;
  s.n_samples = static_cast<long>(samples.size());
  if (samples.empty()) return s;
  double sum_abs = 0.0, sum = 0.0, sum_sq = 0.0, sum_abs_orig = 0.0, sum_abs_trans = 0.0;
  long n = 0;
  for (const PrecisionSample& p : samples) {
    for (size_t d = 0; d < p.original_action.size(); ++d) {
      const double r = p.transformed_action[d] - p.original_action[d];
      sum_abs += std::abs(r);
      sum += r;
      sum_sq += r * r;
      sum_abs_orig += std::abs(p.original_action[d]);
      sum_abs_trans += std::abs(p.transformed_action[d]);
      ++n;
    }
  }
  const double dn = static_cast<double>(n);
  s.mean_abs_delta = sum_abs / dn;
  const double mean_r = sum / dn;
  s.residual_std = std::sqrt(std::max(0.0, sum_sq / dn - mean_r * mean_r));
  s.mean_abs_original = sum_abs_orig / dn;
  s.mean_abs_transformed = sum_abs_trans / dn;
  return s;
}

void ActionTransformer::save(std::ostream& out) const {
  const char magic[8] = {'G', 'S', 'A', 'T', 'R', '0', '1', '\0'};
  out.write(magic, sizeof(magic));
  const std::uint32_t kind = static_cast<std::uint32_t>(kind_);
  out.write(reinterpret_cast<const char*>(&kind), sizeof(kind));
  switch (kind_) {
    case TransformerKind::Identity:
      break;
    case TransformerKind::Gat:
      forward_.save(out);
      inverse_.save(out);
      break;
    case TransformerKind::Rgat:
      policy_.save(out);
      break;
    case TransformerKind::Ane: {
      const std::uint32_t n = static_cast<std::uint32_t>(noise_scale_.size());
      out.write(reinterpret_cast<const char*>(&n), sizeof(n));
      out.write(reinterpret_cast<const char*>(noise_scale_.data()),
                static_cast<std::streamsize>(noise_scale_.size() * sizeof(double)));
      break;
    }
  }
}

ActionTransformer ActionTransformer::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 7) != "GSATR01") {
    throw std::runtime_error("transformer: bad magic");
  }
  std::uint32_t kind = 0;
  in.read(reinterpret_cast<char*>(&kind), sizeof(kind));
  if (!in) throw std::runtime_error("transformer: truncated stream");
  ActionTransformer t;
  t.kind_ = static_cast<TransformerKind>(kind);
  switch (t.kind_) {
    case TransformerKind::Identity:
      break;
    case TransformerKind::Gat:
      t.forward_ = ForwardModel::load(in);
      t.inverse_ = InverseModel::load(in);
      break;
    case TransformerKind::Rgat:
      t.policy_ = GaussianPolicy::load(in);
      break;
    case TransformerKind::Ane: {
      std::uint32_t n = 0;
      in.read(reinterpret_cast<char*>(&n), sizeof(n));
      t.noise_scale_.assign(n, 0.0);
      in.read(reinterpret_cast<char*>(t.noise_scale_.data()),
              static_cast<std::streamsize>(t.noise_scale_.size() * sizeof(double)));
      if (!in) throw std::runtime_error("transformer: truncated stream");
      break;
    }
    default:
      throw std::runtime_error("transformer: unknown kind");
  }
  return t;
}

}  // namespace groundsim
