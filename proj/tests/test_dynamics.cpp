// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dynamics.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"

using namespace groundsim;

namespace {

GaussianPolicy exploration_policy(const EnvSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return GaussianPolicy(spec.state_dim(), spec.action_dim(), {8, 8}, -0.3, rng, 0.5);
}

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

FitConfig quick_fit() {
  FitConfig cfg;
  cfg.hidden = {32, 32};
  cfg.max_epochs = 150;
  cfg.patience = 20;
  return cfg;
}

}  // namespace

TEST_CASE("normalizer round-trips to machine precision and floors zero variance") {
  std::vector<Vec> samples = {{1.0, 5.0}, {3.0, 5.0}, {-2.0, 5.0}, {0.5, 5.0}};
  std::vector<std::string> warnings;
  const Normalizer n = Normalizer::fit(samples, &warnings, "test");
  REQUIRE(warnings.size() == 1);  // the constant second dim
  CHECK(warnings[0].find("dim 1") != std::string::npos);
  for (const Vec& s : samples) {
    const Vec back = n.denormalize(n.normalize(s));
    for (size_t d = 0; d < s.size(); ++d) {
      CHECK(back[d] == doctest::Approx(s[d]).epsilon(1e-14));
    }
  }
  CHECK(n.std[1] == kNormStdFloor);
}

TEST_CASE("predict_forward: zero net with identity normalization returns the state") {
  const ForwardModel m =
      ForwardModel::from_parts(4, 2, zero_net({6, 4}), identity_norm(6), identity_norm(4));
  const Vec s = {0.4, -0.2, 1.0, 0.3};
  const Vec pred = m.predict(s, {0.5, -0.5});
  CHECK(pred == s);
}

TEST_CASE("predict_forward is deterministic") {
  const ForwardModel m =
      ForwardModel::from_parts(4, 2, zero_net({6, 4}), identity_norm(6), identity_norm(4));
  const Vec s = {0.1, 0.2, 0.3, 0.4};
  CHECK(m.predict(s, {0.9, 0.1}) == m.predict(s, {0.9, 0.1}));
}

TEST_CASE("fit_forward: fewer than 2 transitions is an error") {
  Trajectory t;
  t.transitions.push_back({{0, 0, 0, 0}, {0, 0}, {0, 0, 0, 0}, 0.0, false});
  Rng rng(0);
  CHECK_THROWS_AS((void)fit_forward({t}, FitConfig{}, rng, nullptr), std::invalid_argument);
}

TEST_CASE("fit_forward: linear double-integrator dynamics reach holdout R^2 >= 0.99") {
  EnvSpec spec = EnvSpec::double_integrator();
  spec.params.drag_coeff = 0.0;
  const GaussianPolicy policy = exploration_policy(spec, 1);
  const auto data = rollout(spec, policy, 30, Rng(42), false, EnvTag::Sim);

  Rng fit_rng(7);
  FitReport report;
  const ForwardModel model = fit_forward(data, quick_fit(), fit_rng, &report);
  for (double r2 : report.r2_per_dim) CHECK(r2 >= 0.99);

  // Spot-check a prediction against the exact one-step closed form.
  const Vec s = {0.8, 0.6, -0.1, 0.2};
  const Vec a = {0.5, -0.5};
  const Vec pred = model.predict(s, a);
  const StepResult truth = step(spec, s, a);
  for (int d = 0; d < 4; ++d) {
    CHECK(pred[d] == doctest::Approx(truth.next_state[d]).epsilon(0.05));
  }
}

TEST_CASE("fit_forward: a single repeated transition is reproduced exactly") {
  Trajectory t;
  const Vec s = {0.1, -0.2, 0.3, 0.0};
  const Vec a = {0.5, 0.5};
  const Vec next = {0.15, -0.25, 0.35, 0.05};
  for (int i = 0; i < 8; ++i) t.transitions.push_back({s, a, next, 0.0, false});
  Rng rng(3);
  FitConfig cfg = quick_fit();
  cfg.max_epochs = 30;
  FitReport report;
  const ForwardModel model = fit_forward({t}, cfg, rng, &report);
  CHECK_FALSE(report.warnings.empty());  // zero-variance dims were floored
  const Vec pred = model.predict(s, a);
  for (int d = 0; d < 4; ++d) CHECK(pred[d] == doctest::Approx(next[d]).epsilon(1e-9));
}

TEST_CASE("fit_forward: cart-pole sim-to-self on a 50-trajectory budget, R^2 >= 0.9") {
  const EnvSpec spec = EnvSpec::cart_pole();
  const GaussianPolicy policy = exploration_policy(spec, 2);
  const auto data = rollout(spec, policy, 50, Rng(5), false, EnvTag::Real);

  Rng fit_rng(8);
  FitConfig cfg;
  cfg.hidden = {64, 64};
  FitReport report;
  (void)fit_forward(data, cfg, fit_rng, &report);
  CHECK(report.n_train + report.n_holdout == total_steps(data));
  for (double r2 : report.r2_per_dim) CHECK(r2 >= 0.9);
}

TEST_CASE("fit_inverse: zero-drag double integrator recovers the action, MSE <= 1e-3") {
  EnvSpec spec = EnvSpec::double_integrator();
  spec.params.drag_coeff = 0.0;
  const GaussianPolicy policy = exploration_policy(spec, 3);
  const auto data = rollout(spec, policy, 20, Rng(9), false, EnvTag::Sim);

  Rng fit_rng(11);
  FitConfig cfg = quick_fit();
  cfg.max_epochs = 300;
  cfg.patience = 40;
  cfg.learning_rate = 2e-3;
  FitReport report;
  const InverseModel model = fit_inverse(data, cfg, fit_rng, &report);
  CHECK(report.holdout_mse <= 1e-3);

  // Analytic oracle: a_d = (v'_d - v_d (1 - dt c / m)) m / (dt F); c = 0 here.
  const PhysicsParams& p = spec.params;
  const Vec s = {0.2, 0.4, 0.1, -0.3};
  const Vec a_true = {0.4, -0.7};
  const StepResult res = step(spec, s, a_true);
  const Vec a_pred = model.predict(s, res.next_state);
  for (int d = 0; d < 2; ++d) {
    const double oracle =
        (res.next_state[2 + d] - s[2 + d]) * p.agent_mass / (p.timestep * p.force_scale);
    CHECK(oracle == doctest::Approx(a_true[d]).epsilon(1e-10));
    CHECK(a_pred[d] == doctest::Approx(a_true[d]).epsilon(0.1));
  }
}

TEST_CASE("fit_inverse: constant-action data predicts that constant on the manifold") {
  EnvSpec spec = EnvSpec::double_integrator();
  std::vector<Trajectory> data;
  Rng rng(13);
  for (int i = 0; i < 4; ++i) {
    Rng traj_rng = rng.derive(i);
    Trajectory traj;
    Vec state = reset(spec, traj_rng);
    for (int t = 0; t < 40; ++t) {
      const Vec action = {0.3, -0.6};
      StepResult res = step(spec, state, action);
      traj.transitions.push_back({state, action, res.next_state, res.reward, res.terminal});
      state = res.next_state;
    }
    data.push_back(std::move(traj));
  }
  Rng fit_rng(17);
  FitConfig cfg = quick_fit();
  cfg.max_epochs = 60;
  const InverseModel model = fit_inverse(data, cfg, fit_rng, nullptr);
  const Transition& probe = data[2].transitions[20];
  const Vec pred = model.predict(probe.state, probe.next_state);
  CHECK(pred[0] == doctest::Approx(0.3).epsilon(1e-3));
  CHECK(pred[1] == doctest::Approx(-0.6).epsilon(1e-3));
}

TEST_CASE("fit_inverse: cart-pole inverse is well-posed, R^2 >= 0.9") {
  const EnvSpec spec = EnvSpec::cart_pole();
  const GaussianPolicy policy = exploration_policy(spec, 4);
  const auto data = rollout(spec, policy, 50, Rng(19), false, EnvTag::Sim);
  Rng fit_rng(23);
  FitConfig cfg;
  cfg.hidden = {64, 64};
  FitReport report;
  (void)fit_inverse(data, cfg, fit_rng, &report);
  for (double r2 : report.r2_per_dim) CHECK(r2 >= 0.9);
}

TEST_CASE("fitting is deterministic given seed and data order") {
  EnvSpec spec = EnvSpec::double_integrator();
  const GaussianPolicy policy = exploration_policy(spec, 5);
  const auto data = rollout(spec, policy, 10, Rng(29), false, EnvTag::Sim);
  FitConfig cfg = quick_fit();
  cfg.max_epochs = 20;
  Rng r1(31), r2(31);
  const ForwardModel m1 = fit_forward(data, cfg, r1, nullptr);
  const ForwardModel m2 = fit_forward(data, cfg, r2, nullptr);
  const Vec s = {0.9, 1.1, 0.0, 0.0};
  const Vec a = {0.2, 0.2};
  CHECK(m1.predict(s, a) == m2.predict(s, a));
}

TEST_CASE("deltas stay within the observed range under normalization confinement") {
  EnvSpec spec = EnvSpec::double_integrator();
  const GaussianPolicy policy = exploration_policy(spec, 6);
  const auto data = rollout(spec, policy, 20, Rng(37), false, EnvTag::Sim);
  double max_obs_delta = 0.0;
  for (const Trajectory& t : data) {
    for (const Transition& tr : t.transitions) {
      for (size_t d = 0; d < tr.state.size(); ++d) {
        max_obs_delta = std::max(max_obs_delta, std::abs(tr.next_state[d] - tr.state[d]));
      }
    }
  }
  Rng fit_rng(41);
  FitConfig cfg = quick_fit();
  cfg.max_epochs = 40;
  const ForwardModel model = fit_forward(data, cfg, fit_rng, nullptr);
  Rng probe(43);
  for (int i = 0; i < 200; ++i) {
    Vec s(4), a(2);
    for (double& v : s) v = probe.uniform(-1.5, 1.5);
    for (double& v : a) v = probe.uniform(-1.0, 1.0);
    const Vec pred = model.predict(s, a);
    for (int d = 0; d < 4; ++d) {
      CHECK(std::abs(pred[d] - s[d]) <= 20.0 * std::max(max_obs_delta, 1e-3));
    }
  }
}

TEST_CASE("forward/inverse model serialization round-trips") {
  EnvSpec spec = EnvSpec::double_integrator();
  const GaussianPolicy policy = exploration_policy(spec, 7);
  const auto data = rollout(spec, policy, 5, Rng(47), false, EnvTag::Sim);
  FitConfig cfg = quick_fit();
  cfg.max_epochs = 5;
  Rng r(53);
  const ForwardModel fwd = fit_forward(data, cfg, r, nullptr);
  std::stringstream buf;
  fwd.save(buf);
  const ForwardModel back = ForwardModel::load(buf);
  const Vec s = {1.0, 1.0, 0.1, -0.1};
  const Vec a = {0.5, 0.5};
  CHECK(back.predict(s, a) == fwd.predict(s, a));

  Rng r2(59);
  const InverseModel inv = fit_inverse(data, cfg, r2, nullptr);
  std::stringstream buf2;
  inv.save(buf2);
  const InverseModel back2 = InverseModel::load(buf2);
  CHECK(back2.predict(s, data[0].transitions[0].next_state) ==
        inv.predict(s, data[0].transitions[0].next_state));
}
