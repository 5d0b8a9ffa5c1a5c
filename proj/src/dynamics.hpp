// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_DYNAMICS_HPP_
#define GROUNDSIM_DYNAMICS_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "env.hpp"
#include "net.hpp"
#include "rng.hpp"

namespace groundsim {

// Per-dimension affine normalization; std components are floored at 1e-6.
struct Normalizer {
  Vec mean;
  Vec std;

  Vec normalize(const Vec& x) const;
  Vec denormalize(const Vec& x) const;
  static Normalizer fit(const std::vector<Vec>& samples, std::vector<std::string>* warnings,
                        const char* label);
};

inline constexpr double kNormStdFloor = 1e-6;

struct FitConfig {
  std::vector<int> hidden = {64, 64};
  int minibatch_size = 256;
  int max_epochs = 200;
  int patience = 20;
  double holdout_fraction = 0.1;
  double learning_rate = 1e-3;
  // Deterministic subsample cap on the training set; 0 means unlimited.
  int max_transitions = 0;
};

struct FitReport {
  long n_train = 0;
  long n_holdout = 0;
  int epochs_run = 0;
  double holdout_mse = 0.0;    // normalized target space
  Vec r2_per_dim;              // held-out, original target space
  std::vector<std::string> warnings;

  double r2_min() const;
  double r2_mean() const;
};

// One-step model of the real dynamics: predicts the next-state DELTA from
// (state (+) action), on normalized features.
class ForwardModel {
 public:
  ForwardModel() = default;

  Vec predict(const Vec& state, const Vec& action) const;

  int state_dim() const { return state_dim_; }
  int act_dim() const { return act_dim_; }
  const Mlp& net() const { return net_; }

  void save(std::ostream& out) const;
  static ForwardModel load(std::istream& in);

  friend ForwardModel fit_forward(const std::vector<Trajectory>& data,
                                  const FitConfig& config, Rng& rng, FitReport* report);
  // Test hook: build from explicit parts (e.g. an exact closed-form net).
  static ForwardModel from_parts(int state_dim, int act_dim, Mlp net,
                                 Normalizer input_norm, Normalizer target_norm);

 private:
  int state_dim_ = 0;
  int act_dim_ = 0;
  Mlp net_;               // (state (+) action, normalized) -> normalized delta
  Normalizer input_norm_;
  Normalizer target_norm_;
};

// Regressor from (state, next_state) to the action most consistent with the
// transition; the net consumes (state, next_state - state) features.
class InverseModel {
 public:
  InverseModel() = default;

  Vec predict(const Vec& state, const Vec& next_state) const;

  int state_dim() const { return state_dim_; }
  int act_dim() const { return act_dim_; }

  void save(std::ostream& out) const;
  static InverseModel load(std::istream& in);

  friend InverseModel fit_inverse(const std::vector<Trajectory>& data,
                                  const FitConfig& config, Rng& rng, FitReport* report);
  static InverseModel from_parts(int state_dim, int act_dim, Mlp net,
                                 Normalizer input_norm, Normalizer target_norm);

 private:
  int state_dim_ = 0;
  int act_dim_ = 0;
  Mlp net_;
  Normalizer input_norm_;
  Normalizer target_norm_;
};

// Supervised fits on trajectory data; minimize MSE on normalized targets with
// a held-out split and early stopping. Deterministic given rng and data order.
ForwardModel fit_forward(const std::vector<Trajectory>& data, const FitConfig& config,
                         Rng& rng, FitReport* report);

InverseModel fit_inverse(const std::vector<Trajectory>& data, const FitConfig& config,
                         Rng& rng, FitReport* report);

}  // namespace groundsim

#endif  // GROUNDSIM_DYNAMICS_HPP_
