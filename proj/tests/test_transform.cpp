// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "transform.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"

using namespace groundsim;

namespace {

Normalizer identity_norm(size_t dim) {
  Normalizer n;
  n.mean.assign(dim, 0.0);
  n.std.assign(dim, 1.0);
  return n;
}

Mlp zero_net(const std::vector<int>& sizes) {
  Rng rng(0);
  Mlp net(sizes, rng, 0.0);
  for (Matrix& w : net.weights()) {
    for (double& x : w.data) x = 0.0;
  }
  return net;
}

// Exact one-step models of the zero-drag double integrator, expressed as
// single linear layers over identity-normalized features.
ForwardModel exact_di_forward(const PhysicsParams& p) {
  Mlp net = zero_net({6, 4});
  const double k = p.timestep * p.force_scale / p.agent_mass;
  // delta x_d = dt v_d + dt k a_d ; delta v_d = k a_d
  net.weights()[0].at(0, 2) = p.timestep;
  net.weights()[0].at(0, 4) = p.timestep * k;
  net.weights()[0].at(1, 3) = p.timestep;
  net.weights()[0].at(1, 5) = p.timestep * k;
  net.weights()[0].at(2, 4) = k;
  net.weights()[0].at(3, 5) = k;
  return ForwardModel::from_parts(4, 2, std::move(net), identity_norm(6), identity_norm(4));
}

InverseModel exact_di_inverse(const PhysicsParams& p) {
  Mlp net = zero_net({8, 2});
  const double inv_k = p.agent_mass / (p.timestep * p.force_scale);
  // a_d = delta v_d * m / (dt F); the net sees (state, next_state - state).
  net.weights()[0].at(0, 6) = inv_k;
  net.weights()[0].at(1, 7) = inv_k;
  return InverseModel::from_parts(4, 2, std::move(net), identity_norm(8), identity_norm(2));
}

GaussianPolicy rgat_policy(int state_dim, int act_dim, std::uint64_t seed) {
  Rng rng(seed);
  return GaussianPolicy(state_dim + act_dim, act_dim, {16, 16}, -1.6, rng, 0.0, true);
}

}  // namespace

TEST_CASE("identity transformer is a fixed point for any (s, a)") {
  const ActionTransformer t = ActionTransformer::identity();
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Vec s(4), a(2);
    for (double& v : s) v = rng.uniform(-3.0, 3.0);
    for (double& v : a) v = rng.uniform(-1.0, 1.0);
    Rng unused(0);
    CHECK(transform(t, s, a, unused, TransformMode::Mean) == a);
    CHECK(transform(t, s, a, unused, TransformMode::Stochastic) == a);
  }
}

TEST_CASE("gat with exact forward and inverse models is the identity to 1e-10") {
  EnvSpec spec = EnvSpec::double_integrator();
  spec.params.drag_coeff = 0.0;
  const ActionTransformer t =
      ActionTransformer::gat(exact_di_forward(spec.params), exact_di_inverse(spec.params));
  Rng rng(2);
  Rng unused(0);
  for (int i = 0; i < 200; ++i) {
    Vec s(4), a(2);
    for (double& v : s) v = rng.uniform(-2.0, 2.0);
    for (double& v : a) v = rng.uniform(-1.0, 1.0);
    const Vec out = transform(t, s, a, unused, TransformMode::Mean);
    for (int d = 0; d < 2; ++d) CHECK(out[d] == doctest::Approx(a[d]).epsilon(1e-10));
  }

  // Sanity: the exact forward model reproduces the simulator's step.
  const Vec s = {0.3, -0.4, 0.8, 0.2};
  const Vec a = {0.6, -0.1};
  const Vec pred = t.gat_forward().predict(s, a);
  const StepResult truth = step(spec, s, a);
  for (int d = 0; d < 4; ++d) {
    CHECK(pred[d] == doctest::Approx(truth.next_state[d]).epsilon(1e-12));
  }
}

TEST_CASE("rgat with a zero delta head in mean mode returns the action exactly") {
  const ActionTransformer t = ActionTransformer::rgat(rgat_policy(4, 2, 3));
  Rng unused(0);
  const Vec s = {0.1, 0.2, 0.3, 0.4};
  for (double a1 : {-1.0, -0.2, 0.0, 0.7}) {
    const Vec a = {a1, -a1};
    const Vec out = transform(t, s, a, unused, TransformMode::Mean);
    CHECK(out[0] == a[0]);
    CHECK(out[1] == a[1]);
  }
}

TEST_CASE("rgat stochastic mode samples around the identity") {
  const ActionTransformer t = ActionTransformer::rgat(rgat_policy(4, 1, 4));
  Rng rng(5);
  const Vec s = {0.0, 0.0, 0.0, 0.0};
  const Vec a = {0.25};
  double sum = 0.0, sum2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double out = transform(t, s, a, rng, TransformMode::Stochastic)[0];
    sum += out;
    sum2 += out * out;
  }
  const double mean = sum / n;
  const double std = std::sqrt(sum2 / n - mean * mean);
  CHECK(mean == doctest::Approx(0.25).epsilon(0.02));
  CHECK(std == doctest::Approx(std::exp(-1.6)).epsilon(0.03));
}

TEST_CASE("ane adds noise only in stochastic mode") {
  const ActionTransformer t = ActionTransformer::ane({0.3, 0.1});
  Rng rng(6);
  const Vec s = {0, 0, 0, 0};
  const Vec a = {0.5, -0.5};
  CHECK(transform(t, s, a, rng, TransformMode::Mean) == a);
  int changed = 0;
  for (int i = 0; i < 100; ++i) {
    const Vec out = transform(t, s, a, rng, TransformMode::Stochastic);
    if (out != a) ++changed;
  }
  CHECK(changed == 100);
}

TEST_CASE("grounding_reward trivia") {
  const ForwardModel m =
      ForwardModel::from_parts(4, 1, zero_net({5, 4}), identity_norm(5), identity_norm(4));
  const Vec s = {0.0, 0.0, 0.0, 0.0};
  const Vec a = {0.3};
  // Zero net + identity normalization: prediction equals the current state.
  SUBCASE("prediction equals actual gives zero") {
    CHECK(grounding_reward(m, s, a, {0.0, 0.0, 0.0, 0.0}) == 0.0);
  }
  SUBCASE("unit residual gives -1") {
    CHECK(grounding_reward(m, s, a, {1.0, 0.0, 0.0, 0.0}) == -1.0);
  }
  SUBCASE("residual (0.3, -0.4) gives -0.25") {
    const ForwardModel m2 =
        ForwardModel::from_parts(2, 1, zero_net({3, 2}), identity_norm(3), identity_norm(2));
    CHECK(grounding_reward(m2, {0.0, 0.0}, a, {0.3, -0.4}) ==
          doctest::Approx(-0.25).epsilon(1e-15));
  }
}

TEST_CASE("precision samples from the identity transformer lie on the fixed-point line") {
  const EnvSpec spec = EnvSpec::cart_pole();
  Rng prng(7);
  GaussianPolicy policy(4, 1, {8}, -0.5, prng, 0.5);
  const ActionTransformer t = ActionTransformer::identity();
  const auto samples = collect_precision_samples(t, policy, spec, 200, Rng(8));
  REQUIRE(samples.size() == 200);
  for (const PrecisionSample& p : samples) {
    CHECK(p.transformed_action == p.original_action);
  }
  const PrecisionSummary sum = summarize_precision(samples);
  CHECK(sum.mean_abs_delta == 0.0);
  CHECK(sum.residual_std == 0.0);
}

TEST_CASE("precision samples: n = 0 is empty") {
  const EnvSpec spec = EnvSpec::cart_pole();
  Rng prng(9);
  GaussianPolicy policy(4, 1, {8}, -0.5, prng, 0.5);
  const ActionTransformer t = ActionTransformer::identity();
  CHECK(collect_precision_samples(t, policy, spec, 0, Rng(1)).empty());
}

TEST_CASE("precision summary statistics") {
  std::vector<PrecisionSample> samples;
  samples.push_back({{0, 0}, {1.0}, {1.5}});   // residual +0.5
  samples.push_back({{0, 0}, {-1.0}, {-1.5}}); // residual -0.5
  const PrecisionSummary s = summarize_precision(samples);
  CHECK(s.mean_abs_delta == doctest::Approx(0.5));
  CHECK(s.residual_std == doctest::Approx(0.5));
  CHECK(s.mean_abs_original == doctest::Approx(1.0));
  CHECK(s.mean_abs_transformed == doctest::Approx(1.5));
}

TEST_CASE("transformer serialization round-trips every variant") {
  std::stringstream buf;
  const Vec s = {0.2, 0.1, -0.3, 0.4};
  const Vec a = {0.5, -0.5};
  Rng unused(0);

  SUBCASE("identity") {
    ActionTransformer::identity().save(buf);
    const ActionTransformer back = ActionTransformer::load(buf);
    CHECK(back.kind() == TransformerKind::Identity);
  }
  SUBCASE("gat") {
    EnvSpec spec = EnvSpec::double_integrator();
    spec.params.drag_coeff = 0.0;
    const ActionTransformer t =
        ActionTransformer::gat(exact_di_forward(spec.params), exact_di_inverse(spec.params));
    t.save(buf);
    const ActionTransformer back = ActionTransformer::load(buf);
    CHECK(back.kind() == TransformerKind::Gat);
    CHECK(transform(back, s, a, unused, TransformMode::Mean) ==
          transform(t, s, a, unused, TransformMode::Mean));
  }
  SUBCASE("rgat") {
    const ActionTransformer t = ActionTransformer::rgat(rgat_policy(4, 2, 10));
    t.save(buf);
    const ActionTransformer back = ActionTransformer::load(buf);
    CHECK(back.kind() == TransformerKind::Rgat);
    CHECK(transform(back, s, a, unused, TransformMode::Mean) ==
          transform(t, s, a, unused, TransformMode::Mean));
  }
  SUBCASE("ane") {
    const ActionTransformer t = ActionTransformer::ane({0.25, 0.75});
    t.save(buf);
    const ActionTransformer back = ActionTransformer::load(buf);
    CHECK(back.kind() == TransformerKind::Ane);
    CHECK(back.ane_noise_scale() == Vec{0.25, 0.75});
  }
}
