// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "net.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "rng.hpp"

using namespace groundsim;

namespace {

Mlp make_net(const std::vector<int>& sizes, std::uint64_t seed, double final_scale = 1.0) {
  Rng rng(seed);
  return Mlp(sizes, rng, final_scale);
}

void set_zero(Mlp& net) {
  for (Matrix& w : net.weights()) {
    for (double& x : w.data) x = 0.0;
  }
  for (Vec& b : net.biases()) {
    for (double& x : b) x = 0.0;
  }
}

}  // namespace

TEST_CASE("rng streams are deterministic and derivation does not advance") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(7);
  Rng child = c.derive(3);
  Rng c2(7);
  CHECK(c.next_u64() == c2.next_u64());  // derive() left the parent untouched
  Rng child2 = Rng(7).derive(3);
  CHECK(child.next_u64() == child2.next_u64());
}

TEST_CASE("rng uniform and normal ranges") {
  Rng rng(1);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum2 / n - 1.0) < 0.02);
}

TEST_CASE("forward: all-zero parameters give a zero vector") {
  Mlp net = make_net({3, 5, 2}, 0);
  set_zero(net);
  const Vec out = net.forward({0.5, -1.0, 2.0});
  CHECK(out.size() == 2);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("forward: identity single linear layer") {
  Mlp net = make_net({3, 3}, 0);
  set_zero(net);
  for (int i = 0; i < 3; ++i) net.weights()[0].at(i, i) = 1.0;
  const Vec x = {0.25, -4.0, 1.5};
  const Vec out = net.forward(x);
  for (int i = 0; i < 3; ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("forward: fixed 2-3-1 tanh composition matches frozen oracle value") {
  Mlp net = make_net({2, 3, 1}, 0);
  net.weights()[0].at(0, 0) = 0.3;
  net.weights()[0].at(0, 1) = -0.2;
  net.weights()[0].at(1, 0) = 0.15;
  net.weights()[0].at(1, 1) = 0.4;
  net.weights()[0].at(2, 0) = -0.5;
  net.weights()[0].at(2, 1) = 0.1;
  net.biases()[0] = {0.01, -0.02, 0.3};
  net.weights()[1].at(0, 0) = 0.7;
  net.weights()[1].at(0, 1) = -0.3;
  net.weights()[1].at(0, 2) = 0.25;
  net.biases()[1] = {-0.1};
  const Vec out = net.forward({0.4, -0.7});
  CHECK(out[0] == doctest::Approx(0.1626838605017967).epsilon(1e-14));
}

TEST_CASE("forward: dimension mismatch is a hard error") {
  Mlp net = make_net({3, 4, 2}, 0);
  CHECK_THROWS_AS((void)net.forward({1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("backward: zero output gradient gives zero parameter gradients") {
  Mlp net = make_net({3, 6, 2}, 5);
  Mlp::Cache cache;
  (void)net.forward({0.1, 0.2, 0.3}, cache);
  Mlp::Gradients grads = net.make_gradients();
  net.backward(cache, {0.0, 0.0}, grads);
  for (const Matrix& w : grads.weights) {
    for (double x : w.data) CHECK(x == 0.0);
  }
  for (const Vec& b : grads.biases) {
    for (double x : b) CHECK(x == 0.0);
  }
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    Rng net_rng = rng.derive(trial);
    const std::vector<std::vector<int>> shapes = {{2, 4, 1}, {3, 8, 8, 2}, {4, 1}, {1, 5, 3}};
    Mlp net(shapes[trial % shapes.size()], net_rng);
    Vec input(net.input_dim());
    for (double& x : input) x = net_rng.uniform(-1.5, 1.5);
    Vec out_grad(net.output_dim());
    for (double& g : out_grad) g = net_rng.uniform(-1.0, 1.0);

    Mlp::Cache cache;
    (void)net.forward(input, cache);
    Mlp::Gradients grads = net.make_gradients();
    net.backward(cache, out_grad, grads);

    auto scalar = [&]() { return dot(net.forward(input), out_grad); };
    CHECK(oracles::max_relative_grad_error(net, grads, scalar) <= 1e-4);
  }
}

TEST_CASE("backward: input gradient matches finite differences") {
  Rng rng(99);
  Mlp net({3, 7, 2}, rng);
  Vec input = {0.3, -0.8, 1.1};
  const Vec out_grad = {0.5, -1.25};
  Mlp::Cache cache;
  (void)net.forward(input, cache);
  Mlp::Gradients grads = net.make_gradients();
  Vec input_grad;
  net.backward(cache, out_grad, grads, &input_grad);
  REQUIRE(input_grad.size() == input.size());
  const double h = 1e-6;
  for (size_t i = 0; i < input.size(); ++i) {
    Vec up = input, down = input;
    up[i] += h;
    down[i] -= h;
    const double fd = (dot(net.forward(up), out_grad) - dot(net.forward(down), out_grad)) /
                      (2.0 * h);
    CHECK(input_grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("backward: linear net with squared loss equals the normal-equations gradient") {
  // y = Wx + b, L = ||y - t||^2, so dL/dW = 2 (y - t) x^T and dL/db = 2 (y - t).
  Mlp net = make_net({3, 2}, 11);
  const Vec x = {0.7, -0.4, 0.2};
  const Vec t = {1.0, -2.0};
  Mlp::Cache cache;
  const Vec y = net.forward(x, cache);
  Vec out_grad(2);
  for (int d = 0; d < 2; ++d) out_grad[d] = 2.0 * (y[d] - t[d]);
  Mlp::Gradients grads = net.make_gradients();
  net.backward(cache, out_grad, grads);
  for (int r = 0; r < 2; ++r) {
    CHECK(grads.biases[0][r] == doctest::Approx(2.0 * (y[r] - t[r])).epsilon(1e-12));
    for (int c = 0; c < 3; ++c) {
      CHECK(grads.weights[0].at(r, c) ==
            doctest::Approx(2.0 * (y[r] - t[r]) * x[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged and bumps the step count") {
  Mlp net = make_net({2, 3, 1}, 3);
  const Mlp saved = net;
  AdamState state = AdamState::create(net, 1e-3);
  Mlp::Gradients grads = net.make_gradients();
  adam_update(net, grads, state);
  CHECK(state.step_count == 1);
  for (size_t l = 0; l < net.weights().size(); ++l) {
    CHECK(net.weights()[l].data == saved.weights()[l].data);
    CHECK(net.biases()[l] == saved.biases()[l]);
  }
}

TEST_CASE("adam: first-step magnitude is bias-corrected to ~learning_rate") {
  Mlp net = make_net({1, 1}, 3);
  const double before = net.weights()[0].at(0, 0);
  AdamState state = AdamState::create(net, 1e-3);
  Mlp::Gradients grads = net.make_gradients();
  grads.weights[0].at(0, 0) = 0.5;
  adam_update(net, grads, state);
  const double delta = net.weights()[0].at(0, 0) - before;
  CHECK(delta == doctest::Approx(-0.00099999998).epsilon(1e-9));
}

TEST_CASE("adam: equal gradients produce equal updates") {
  Mlp net = make_net({2, 2}, 4);
  net.weights()[0].at(0, 0) = 0.3;
  net.weights()[0].at(1, 1) = 0.3;
  AdamState state = AdamState::create(net, 1e-2);
  Mlp::Gradients grads = net.make_gradients();
  grads.weights[0].at(0, 0) = -0.7;
  grads.weights[0].at(1, 1) = -0.7;
  adam_update(net, grads, state);
  CHECK(net.weights()[0].at(0, 0) == net.weights()[0].at(1, 1));
}

TEST_CASE("adam: non-finite gradient is a hard error") {
  Mlp net = make_net({2, 2}, 4);
  AdamState state = AdamState::create(net, 1e-2);
  Mlp::Gradients grads = net.make_gradients();
  grads.weights[0].at(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_update(net, grads, state), std::runtime_error);
}

TEST_CASE("permuting hidden units leaves the forward output unchanged") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    Rng t_rng = rng.derive(trial);
    Mlp net({3, 6, 2}, t_rng);
    Vec input(3);
    for (double& x : input) x = t_rng.uniform(-2.0, 2.0);
    const Vec base = net.forward(input);

    const int i = static_cast<int>(t_rng.below(6));
    const int j = static_cast<int>(t_rng.below(6));
    Mlp permuted = net;
    for (int c = 0; c < 3; ++c) {
      std::swap(permuted.weights()[0].at(i, c), permuted.weights()[0].at(j, c));
    }
    std::swap(permuted.biases()[0][i], permuted.biases()[0][j]);
    for (int r = 0; r < 2; ++r) {
      std::swap(permuted.weights()[1].at(r, i), permuted.weights()[1].at(r, j));
    }
    const Vec out = permuted.forward(input);
    for (int d = 0; d < 2; ++d) CHECK(out[d] == doctest::Approx(base[d]).epsilon(1e-12));
  }
}

TEST_CASE("serialization round-trips bit-exactly") {
  Mlp net = make_net({4, 16, 16, 3}, 77);
  std::stringstream buf;
  net.save(buf);
  const Mlp back = Mlp::load(buf);
  REQUIRE(back.layer_sizes() == net.layer_sizes());
  for (size_t l = 0; l < net.weights().size(); ++l) {
    CHECK(back.weights()[l].data == net.weights()[l].data);
    CHECK(back.biases()[l] == net.biases()[l]);
  }
}

TEST_CASE("zero final-layer scale yields an exactly zero output head") {
  Mlp net = make_net({3, 8, 2}, 5, 0.0);
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    Vec x(3);
    for (double& v : x) v = rng.uniform(-3.0, 3.0);
    const Vec out = net.forward(x);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
  }
}
