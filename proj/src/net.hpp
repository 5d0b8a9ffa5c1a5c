// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_NET_HPP_
#define GROUNDSIM_NET_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rng.hpp"

namespace groundsim {

using Vec = std::vector<double>;

// Dense row-major matrix sized at construction.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
};

enum class Activation { Tanh, Linear };

// Feed-forward network with tanh hidden layers, linear output and manual
// backprop. Layer l maps layer_sizes[l] -> layer_sizes[l+1].
class Mlp {
 public:
  Mlp() = default;
  // final_layer_scale scales the uniform fan-in init of the last layer;
  // 0.0 yields an exactly-zero output head.
  Mlp(const std::vector<int>& layer_sizes, Rng& rng, double final_layer_scale = 1.0);

  int input_dim() const { return layer_sizes_.front(); }
  int output_dim() const { return layer_sizes_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  const std::vector<int>& layer_sizes() const { return layer_sizes_; }

  Vec forward(const Vec& input) const;

  // Per-layer post-activation values kept for backprop; activations[0] is the
  // input, activations[L] the output.
  struct Cache {
    std::vector<Vec> activations;
  };
  Vec forward(const Vec& input, Cache& cache) const;

  struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vec> biases;

    void zero();
    void scale(double s);
    void add_scaled(const Gradients& other, double s);
  };
  Gradients make_gradients() const;

  // Accumulates (+=) parameter gradients for one input into grads; returns
  // gradient with respect to the input when input_grad is non-null.
  void backward(const Cache& cache, const Vec& output_grad, Gradients& grads,
                Vec* input_grad = nullptr) const;

  std::vector<Matrix>& weights() { return weights_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<Vec>& biases() { return biases_; }
  const std::vector<Vec>& biases() const { return biases_; }

  size_t parameter_count() const;

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  std::vector<int> layer_sizes_;
  std::vector<Matrix> weights_;
  std::vector<Vec> biases_;
};

// Adaptive-moment state for one Mlp; shapes mirror the parameters.
struct AdamState {
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Mlp::Gradients first_moment;
  Mlp::Gradients second_moment;

  static AdamState create(const Mlp& net, double learning_rate);
};

// Bias-corrected Adam step. Throws on non-finite gradients.
void adam_update(Mlp& net, const Mlp::Gradients& grads, AdamState& state);

// Adam over a flat parameter vector (used for policy log-std).
struct AdamVecState {
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Vec first_moment;
  Vec second_moment;

  static AdamVecState create(size_t n, double learning_rate);
};

void adam_update(Vec& params, const Vec& grads, AdamVecState& state);

// Shared helpers.
double dot(const Vec& a, const Vec& b);
bool all_finite(const Vec& v);

}  // namespace groundsim

#endif  // GROUNDSIM_NET_HPP_
