// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "net.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace groundsim {

namespace {

const char kMagic[8] = {'G', 'S', 'N', 'E', 'T', '0', '1', '\0'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("net: truncated stream");
  return v;
}

void write_doubles(std::ostream& out, const Vec& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, Vec& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw std::runtime_error("net: truncated stream");
}

}  // namespace

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Mlp::Mlp(const std::vector<int>& layer_sizes, Rng& rng, double final_layer_scale)
    : layer_sizes_(layer_sizes) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("Mlp: need at least input and output sizes");
  }
  for (int s : layer_sizes) {
    if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
  }
  const int n_layers = static_cast<int>(layer_sizes.size()) - 1;
  weights_.reserve(n_layers);
  biases_.reserve(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    Matrix w(out, in);
    // Scaled-uniform fan-in init; the last layer takes the caller's scale so
    // policy heads start small and delta heads can start exactly at zero.
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    if (l == n_layers - 1) scale *= final_layer_scale;
    for (double& x : w.data) x = rng.uniform(-scale, scale);
    weights_.push_back(std::move(w));
    biases_.emplace_back(out, 0.0);
  }
}

Vec Mlp::forward(const Vec& input) const {
  Cache cache;
  return forward(input, cache);
}

Vec Mlp::forward(const Vec& input, Cache& cache) const {
  if (static_cast<int>(input.size()) != input_dim()) {
    throw std::invalid_argument("Mlp::forward: input dimension mismatch");
  }
  cache.activations.assign(1, input);
  cache.activations.reserve(weights_.size() + 1);
  const int n_layers = num_layers();
  Vec cur = input;
  for (int l = 0; l < n_layers; ++l) {
    const Matrix& w = weights_[l];
    Vec next(w.rows);
    for (int r = 0; r < w.rows; ++r) {
      const double* wr = w.row(r);
      double s = biases_[l][r];
      for (int c = 0; c < w.cols; ++c) s += wr[c] * cur[c];
      next[r] = s;
    }
    if (l + 1 < n_layers) {
      for (double& x : next) x = std::tanh(x);
    }
    cache.activations.push_back(next);
    cur = std::move(next);
  }
  return cur;
}

Mlp::Gradients Mlp::make_gradients() const {
  Gradients g;
  g.weights.reserve(weights_.size());
  g.biases.reserve(biases_.size());
  for (const Matrix& w : weights_) g.weights.emplace_back(w.rows, w.cols);
  for (const Vec& b : biases_) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

void Mlp::Gradients::zero() {
  for (Matrix& w : weights) {
    for (double& x : w.data) x = 0.0;
  }
  for (Vec& b : biases) {
    for (double& x : b) x = 0.0;
  }
}

void Mlp::Gradients::scale(double s) {
  for (Matrix& w : weights) {
    for (double& x : w.data) x *= s;
  }
  for (Vec& b : biases) {
    for (double& x : b) x *= s;
  }
}

void Mlp::Gradients::add_scaled(const Gradients& other, double s) {
  for (size_t l = 0; l < weights.size(); ++l) {
    for (size_t i = 0; i < weights[l].data.size(); ++i) {
      weights[l].data[i] += s * other.weights[l].data[i];
    }
    for (size_t i = 0; i < biases[l].size(); ++i) {
      biases[l][i] += s * other.biases[l][i];
    }
  }
}

void Mlp::backward(const Cache& cache, const Vec& output_grad, Gradients& grads,
                   Vec* input_grad) const {
  const int n_layers = num_layers();
  if (cache.activations.size() != static_cast<size_t>(n_layers) + 1) {
    throw std::invalid_argument("Mlp::backward: stale cache");
  }
  if (static_cast<int>(output_grad.size()) != output_dim()) {
    throw std::invalid_argument("Mlp::backward: output gradient dimension mismatch");
  }
  Vec delta = output_grad;  // d loss / d pre-activation of current layer
  for (int l = n_layers - 1; l >= 0; --l) {
    const Matrix& w = weights_[l];
    const Vec& in_act = cache.activations[l];
    // Output layer is linear; hidden layers need the tanh derivative applied
    // using the cached post-activation value.
    if (l < n_layers - 1) {
      const Vec& out_act = cache.activations[l + 1];
      for (size_t i = 0; i < delta.size(); ++i) {
        delta[i] *= 1.0 - out_act[i] * out_act[i];
      }
    }
    Matrix& gw = grads.weights[l];
    Vec& gb = grads.biases[l];
    for (int r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      gb[r] += d;
      double* gr = gw.row(r);
      for (int c = 0; c < w.cols; ++c) gr[c] += d * in_act[c];
    }
    if (l > 0 || input_grad != nullptr) {
      Vec prev(w.cols, 0.0);
      for (int r = 0; r < w.rows; ++r) {
        const double d = delta[r];
        const double* wr = w.row(r);
        for (int c = 0; c < w.cols; ++c) prev[c] += d * wr[c];
      }
      if (l == 0) {
        *input_grad = std::move(prev);
        return;
      }
      delta = std::move(prev);
    }
  }
}

size_t Mlp::parameter_count() const {
  size_t n = 0;
  for (const Matrix& w : weights_) n += w.data.size();
  for (const Vec& b : biases_) n += b.size();
  return n;
}

void Mlp::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<std::uint32_t>(layer_sizes_.size()));
  for (int s : layer_sizes_) write_u32(out, static_cast<std::uint32_t>(s));
  for (size_t l = 0; l < weights_.size(); ++l) {
    write_doubles(out, weights_[l].data);
    write_doubles(out, biases_[l]);
  }
}

Mlp Mlp::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("net: bad magic");
  }
  const std::uint32_t n_sizes = read_u32(in);
  if (n_sizes < 2 || n_sizes > 64) throw std::runtime_error("net: bad layer count");
  std::vector<int> sizes(n_sizes);
  for (auto& s : sizes) s = static_cast<int>(read_u32(in));
  Mlp net;
  net.layer_sizes_ = sizes;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    Matrix w(sizes[l + 1], sizes[l]);
    read_doubles(in, w.data);
    Vec b(sizes[l + 1], 0.0);
    read_doubles(in, b);
    net.weights_.push_back(std::move(w));
    net.biases_.push_back(std::move(b));
  }
  return net;
}

AdamState AdamState::create(const Mlp& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.first_moment = net.make_gradients();
  s.second_moment = net.make_gradients();
  return s;
}

void adam_update(Mlp& net, const Mlp::Gradients& grads, AdamState& state) {
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  auto step = [&](double& p, double g, double& m, double& v) {
    if (!std::isfinite(g)) {
      throw std::runtime_error("adam_update: non-finite gradient (training diverged)");
    }
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    p -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
  };
  for (size_t l = 0; l < net.weights().size(); ++l) {
    Matrix& w = net.weights()[l];
    for (size_t i = 0; i < w.data.size(); ++i) {
      step(w.data[i], grads.weights[l].data[i], state.first_moment.weights[l].data[i],
           state.second_moment.weights[l].data[i]);
    }
    Vec& b = net.biases()[l];
    for (size_t i = 0; i < b.size(); ++i) {
      step(b[i], grads.biases[l][i], state.first_moment.biases[l][i],
           state.second_moment.biases[l][i]);
    }
  }
}

AdamVecState AdamVecState::create(size_t n, double learning_rate) {
  AdamVecState s;
  s.learning_rate = learning_rate;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  return s;
}

void adam_update(Vec& params, const Vec& grads, AdamVecState& state) {
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) {
      throw std::runtime_error("adam_update: non-finite gradient (training diverged)");
    }
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    params[i] -= state.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + state.epsilon);
  }
}

}  // namespace groundsim
