// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles, independent of the implementation paths they check.

#ifndef GROUNDSIM_TESTS_ORACLES_HPP_
#define GROUNDSIM_TESTS_ORACLES_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "net.hpp"

namespace groundsim::oracles {

// Direct evaluation of the GAE definition: A_t = sum_l (gamma*lambda)^l
// delta_{t+l}, with the product truncated at the first terminal.
inline Vec brute_force_gae(const Vec& rewards, const Vec& values,
                           const std::vector<std::uint8_t>& terminals, double discount,
                           double lambda) {
  const size_t n = rewards.size();
  Vec adv(n, 0.0);
  for (size_t t = 0; t < n; ++t) {
    double coeff = 1.0;
    for (size_t l = t; l < n; ++l) {
      const double nonterminal = terminals[l] ? 0.0 : 1.0;
      const double delta = rewards[l] + discount * values[l + 1] * nonterminal - values[l];
      adv[t] += coeff * delta;
      if (terminals[l]) break;
      coeff *= discount * lambda;
    }
  }
  return adv;
}

// Central finite differences of scalar_fn with respect to every parameter of
// the net; returns max relative error against analytic_grads.
template <typename ScalarFn>
double max_relative_grad_error(Mlp& net, const Mlp::Gradients& analytic, ScalarFn&& f,
                               double h = 1e-5) {
  double worst = 0.0;
  auto probe = [&](double& p, double g) {
    const double saved = p;
    p = saved + h;
    const double up = f();
    p = saved - h;
    const double down = f();
    p = saved;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(g), 1e-8});
    worst = std::max(worst, std::abs(fd - g) / scale);
  };
  for (size_t l = 0; l < net.weights().size(); ++l) {
    for (size_t i = 0; i < net.weights()[l].data.size(); ++i) {
      probe(net.weights()[l].data[i], analytic.weights[l].data[i]);
    }
    for (size_t i = 0; i < net.biases()[l].size(); ++i) {
      probe(net.biases()[l][i], analytic.biases[l][i]);
    }
  }
  return worst;
}

}  // namespace groundsim::oracles

#endif  // GROUNDSIM_TESTS_ORACLES_HPP_
