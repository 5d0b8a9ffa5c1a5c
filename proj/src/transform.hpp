// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_TRANSFORM_HPP_
#define GROUNDSIM_TRANSFORM_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "env.hpp"
#include "policy.hpp"

namespace groundsim {

enum class TransformerKind { Identity, Gat, Rgat, Ane };

std::string to_string(TransformerKind kind);

// The function a_hat = g(s, a) prepended to the simulator.
//   Identity: a_hat = a
//   Gat:      a_hat = inverse(s, forward(s, a)); forward is fit on real data,
//             inverse on sim data
//   Rgat:     a_hat = a + delta_a from a Gaussian policy over (s (+) a)
//   Ane:      a_hat = a + noise_scale (.) eps in Stochastic mode, a in Mean mode
class ActionTransformer {
 public:
  ActionTransformer() = default;

  static ActionTransformer identity();
  static ActionTransformer gat(ForwardModel forward, InverseModel inverse);
  static ActionTransformer rgat(GaussianPolicy policy);
  static ActionTransformer ane(Vec noise_scale);

  TransformerKind kind() const { return kind_; }

  GaussianPolicy& rgat_policy();
  const GaussianPolicy& rgat_policy() const;
  const ForwardModel& gat_forward() const;
  const InverseModel& gat_inverse() const;
  ForwardModel& gat_forward();
  InverseModel& gat_inverse();
  const Vec& ane_noise_scale() const;

  void save(std::ostream& out) const;
  static ActionTransformer load(std::istream& in);

 private:
  TransformerKind kind_ = TransformerKind::Identity;
  ForwardModel forward_;
  InverseModel inverse_;
  GaussianPolicy policy_;
  Vec noise_scale_;
};

Vec transform(const ActionTransformer& t, const Vec& state, const Vec& action, Rng& rng,
              TransformMode mode);

// Per-step transformer reward R_AT = -||f(s, a) - s_next||^2 where (s, a) are
// the target policy's state and original action and s_next is the grounded
// simulator's actual next state.
double grounding_reward(const ForwardModel& forward, const Vec& state, const Vec& action,
                        const Vec& next_state_grounded);

struct PrecisionSample {
  Vec state;
  Vec original_action;
  Vec transformed_action;
};

struct PrecisionSummary {
  double mean_abs_delta = 0.0;  // mean |a_hat - a| over samples and dims
  double residual_std = 0.0;    // std of (a_hat - a), pooled over dims
  double mean_abs_original = 0.0;
  double mean_abs_transformed = 0.0;
  long n_samples = 0;
};

// Runs the policy through the grounded simulator (transformer in Mean mode)
// and records (s, a, a_hat) triples until n_samples are gathered. The policy
// acts stochastically so the samples cover the action range.
std::vector<PrecisionSample> collect_precision_samples(const ActionTransformer& t,
                                                       const GaussianPolicy& policy,
                                                       const EnvSpec& env, int n_samples,
                                                       const Rng& rng,
                                                       bool stochastic_policy = true);

PrecisionSummary summarize_precision(const std::vector<PrecisionSample>& samples);

}  // namespace groundsim

#endif  // GROUNDSIM_TRANSFORM_HPP_
