// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace groundsim {

Vec Normalizer::normalize(const Vec& x) const {
  Vec out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / std[i];
  return out;
}

Vec Normalizer::denormalize(const Vec& x) const {
  Vec out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * std[i] + mean[i];
  return out;
}

Normalizer Normalizer::fit(const std::vector<Vec>& samples,
                           std::vector<std::string>* warnings, const char* label) {
  if (samples.empty()) throw std::invalid_argument("Normalizer: no samples");
  const size_t dim = samples[0].size();
  Normalizer n;
  n.mean.assign(dim, 0.0);
  n.std.assign(dim, 0.0);
  for (const Vec& s : samples) {
    for (size_t i = 0; i < dim; ++i) n.mean[i] += s[i];
  }
  for (size_t i = 0; i < dim; ++i) n.mean[i] /= static_cast<double>(samples.size());
  for (const Vec& s : samples) {
    for (size_t i = 0; i < dim; ++i) {
      const double d = s[i] - n.mean[i];
      n.std[i] += d * d;
    }
  }
  for (size_t i = 0; i < dim; ++i) {
    n.std[i] = std::sqrt(n.std[i] / static_cast<double>(samples.size()));
    if (n.std[i] < kNormStdFloor) {
      n.std[i] = kNormStdFloor;
      if (warnings != nullptr) {
        warnings->push_back(std::string(label) + ": zero variance in dim " +
                            std::to_string(i) + ", std floored");
      }
    }
  }
  return n;
}

double FitReport::r2_min() const {
  double m = 1.0;
  for (double r : r2_per_dim) m = std::min(m, r);
  return r2_per_dim.empty() ? 0.0 : m;
}

double FitReport::r2_mean() const {
  if (r2_per_dim.empty()) return 0.0;
  return std::accumulate(r2_per_dim.begin(), r2_per_dim.end(), 0.0) /
         static_cast<double>(r2_per_dim.size());
}

namespace {

struct Dataset {
  std::vector<Vec> inputs;   // raw feature vectors
  std::vector<Vec> targets;  // raw targets
};

// Shared supervised-regression core: normalize, split, minibatch Adam with
// early stopping on held-out MSE, restore the best parameters.
struct RegressionResult {
  Mlp net;
  Normalizer input_norm;
  Normalizer target_norm;
};

RegressionResult fit_regression(Dataset data, const FitConfig& config, Rng& rng,
                                FitReport* report, const char* label) {
  const long n_total = static_cast<long>(data.inputs.size());
  if (n_total < 2) {
    throw std::invalid_argument(std::string(label) + ": need at least 2 transitions");
  }

  // Deterministic shuffle, optional subsample cap, then holdout split.
  std::vector<size_t> order(data.inputs.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[rng.below(i + 1)]);
  }
  if (config.max_transitions > 0 &&
      order.size() > static_cast<size_t>(config.max_transitions)) {
    order.resize(static_cast<size_t>(config.max_transitions));
  }
  long n_hold = static_cast<long>(std::floor(config.holdout_fraction *
                                             static_cast<double>(order.size())));
  n_hold = std::max<long>(1, std::min<long>(n_hold, static_cast<long>(order.size()) - 1));
  const long n_train = static_cast<long>(order.size()) - n_hold;

  std::vector<Vec> train_x, train_y, hold_x, hold_y;
  train_x.reserve(n_train);
  train_y.reserve(n_train);
  hold_x.reserve(n_hold);
  hold_y.reserve(n_hold);
  for (long i = 0; i < n_train; ++i) {
    train_x.push_back(data.inputs[order[i]]);
    train_y.push_back(data.targets[order[i]]);
  }
  for (long i = n_train; i < static_cast<long>(order.size()); ++i) {
    hold_x.push_back(data.inputs[order[i]]);
    hold_y.push_back(data.targets[order[i]]);
  }

  FitReport local;
  FitReport& rep = report != nullptr ? *report : local;
  rep = FitReport{};
  rep.n_train = n_train;
  rep.n_holdout = n_hold;

  RegressionResult res;
  res.input_norm = Normalizer::fit(train_x, &rep.warnings, label);
  res.target_norm = Normalizer::fit(train_y, &rep.warnings, label);

  for (Vec& x : train_x) x = res.input_norm.normalize(x);
  for (Vec& y : train_y) y = res.target_norm.normalize(y);
  std::vector<Vec> hold_xn, hold_yn;
  hold_xn.reserve(hold_x.size());
  hold_yn.reserve(hold_y.size());
  for (const Vec& x : hold_x) hold_xn.push_back(res.input_norm.normalize(x));
  for (const Vec& y : hold_y) hold_yn.push_back(res.target_norm.normalize(y));

  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(train_x[0].size()));
  for (int h : config.hidden) sizes.push_back(h);
  sizes.push_back(static_cast<int>(train_y[0].size()));
  // Zero output head: the initial model predicts the mean target everywhere.
  res.net = Mlp(sizes, rng, 0.0);

  AdamState adam = AdamState::create(res.net, config.learning_rate);
  Mlp::Gradients grads = res.net.make_gradients();

  auto holdout_mse = [&]() {
    double mse = 0.0;
    for (size_t i = 0; i < hold_xn.size(); ++i) {
      const Vec pred = res.net.forward(hold_xn[i]);
      for (size_t d = 0; d < pred.size(); ++d) {
        const double e = pred[d] - hold_yn[i][d];
        mse += e * e;
      }
    }
    return mse / (static_cast<double>(hold_xn.size()) * static_cast<double>(hold_yn[0].size()));
  };

  Mlp best = res.net;
  double best_mse = holdout_mse();
  int best_epoch = 0;

  std::vector<size_t> idx(train_x.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  Mlp::Cache cache;

  int epoch = 0;
  for (; epoch < config.max_epochs; ++epoch) {
    for (size_t i = idx.size() - 1; i > 0; --i) {
      std::swap(idx[i], idx[rng.below(i + 1)]);
    }
    for (size_t start = 0; start < idx.size();
         start += static_cast<size_t>(config.minibatch_size)) {
      const size_t end = std::min(idx.size(), start + static_cast<size_t>(config.minibatch_size));
      grads.zero();
      for (size_t i = start; i < end; ++i) {
        const Vec& x = train_x[idx[i]];
        const Vec& y = train_y[idx[i]];
        Vec pred = res.net.forward(x, cache);
        Vec out_grad(pred.size());
        for (size_t d = 0; d < pred.size(); ++d) {
          out_grad[d] = 2.0 * (pred[d] - y[d]);
        }
        res.net.backward(cache, out_grad, grads);
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      adam_update(res.net, grads, adam);
    }
    const double mse = holdout_mse();
    if (mse < best_mse) {
      best_mse = mse;
      best = res.net;
      best_epoch = epoch + 1;
    } else if (epoch + 1 - best_epoch >= config.patience) {
      ++epoch;
      break;
    }
  }
  res.net = std::move(best);
  rep.epochs_run = epoch;
  rep.holdout_mse = best_mse;

  // Held-out R^2 per target dimension, in the original target space. R^2 is
  // affine-invariant per dim, so evaluate on normalized values directly.
  const size_t tdim = hold_yn[0].size();
  Vec sse(tdim, 0.0), sst(tdim, 0.0), mean_y(tdim, 0.0);
  for (const Vec& y : hold_yn) {
    for (size_t d = 0; d < tdim; ++d) mean_y[d] += y[d];
  }
  for (size_t d = 0; d < tdim; ++d) mean_y[d] /= static_cast<double>(hold_yn.size());
  for (size_t i = 0; i < hold_xn.size(); ++i) {
    const Vec pred = res.net.forward(hold_xn[i]);
    for (size_t d = 0; d < tdim; ++d) {
      const double e = pred[d] - hold_yn[i][d];
      sse[d] += e * e;
      const double m = hold_yn[i][d] - mean_y[d];
      sst[d] += m * m;
    }
  }
  rep.r2_per_dim.assign(tdim, 0.0);
  for (size_t d = 0; d < tdim; ++d) {
    if (sst[d] < 1e-12) {
      rep.r2_per_dim[d] = sse[d] < 1e-9 ? 1.0 : 0.0;
    } else {
      rep.r2_per_dim[d] = 1.0 - sse[d] / sst[d];
    }
  }
  return res;
}

void save_model(std::ostream& out, const char* magic, int state_dim, int act_dim,
                const Mlp& net, const Normalizer& in_norm, const Normalizer& t_norm) {
  out.write(magic, 8);
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(state_dim),
                                   static_cast<std::uint32_t>(act_dim)};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  net.save(out);
  auto write_vec = [&out](const Vec& v) {
    const std::uint32_t n = static_cast<std::uint32_t>(v.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  write_vec(in_norm.mean);
  write_vec(in_norm.std);
  write_vec(t_norm.mean);
  write_vec(t_norm.std);
}

void load_model(std::istream& in, const char* magic, int& state_dim, int& act_dim,
                Mlp& net, Normalizer& in_norm, Normalizer& t_norm) {
  char buf[8];
  in.read(buf, sizeof(buf));
  if (!in || std::string(buf, 7) != std::string(magic, 7)) {
    throw std::runtime_error("dynamics: bad magic");
  }
  std::uint32_t header[2];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw std::runtime_error("dynamics: truncated stream");
  state_dim = static_cast<int>(header[0]);
  act_dim = static_cast<int>(header[1]);
  net = Mlp::load(in);
  auto read_vec = [&in]() {
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    Vec v(n, 0.0);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("dynamics: truncated stream");
    return v;
  };
  in_norm.mean = read_vec();
  in_norm.std = read_vec();
  t_norm.mean = read_vec();
  t_norm.std = read_vec();
}

}  // namespace

Vec ForwardModel::predict(const Vec& state, const Vec& action) const {
  Vec input(state);
  input.insert(input.end(), action.begin(), action.end());
  const Vec delta = target_norm_.denormalize(net_.forward(input_norm_.normalize(input)));
  Vec next(state);
  for (size_t d = 0; d < next.size(); ++d) next[d] += delta[d];
  return next;
}

ForwardModel ForwardModel::from_parts(int state_dim, int act_dim, Mlp net,
                                      Normalizer input_norm, Normalizer target_norm) {
  ForwardModel m;
  m.state_dim_ = state_dim;
  m.act_dim_ = act_dim;
  m.net_ = std::move(net);
  m.input_norm_ = std::move(input_norm);
  m.target_norm_ = std::move(target_norm);
  return m;
}

ForwardModel fit_forward(const std::vector<Trajectory>& data, const FitConfig& config,
                         Rng& rng, FitReport* report) {
  Dataset ds;
  int state_dim = 0, act_dim = 0;
  for (const Trajectory& traj : data) {
    for (const Transition& t : traj.transitions) {
      state_dim = static_cast<int>(t.state.size());
      act_dim = static_cast<int>(t.action.size());
      Vec input(t.state);
      input.insert(input.end(), t.action.begin(), t.action.end());
      Vec delta(t.next_state);
      for (size_t d = 0; d < delta.size(); ++d) delta[d] -= t.state[d];
      ds.inputs.push_back(std::move(input));
      ds.targets.push_back(std::move(delta));
    }
  }
  RegressionResult res = fit_regression(std::move(ds), config, rng, report, "fit_forward");
  return ForwardModel::from_parts(state_dim, act_dim, std::move(res.net),
                                  std::move(res.input_norm), std::move(res.target_norm));
}

void ForwardModel::save(std::ostream& out) const {
  save_model(out, "GSFWD01", state_dim_, act_dim_, net_, input_norm_, target_norm_);
}

ForwardModel ForwardModel::load(std::istream& in) {
  ForwardModel m;
  load_model(in, "GSFWD01", m.state_dim_, m.act_dim_, m.net_, m.input_norm_, m.target_norm_);
  return m;
}

Vec InverseModel::predict(const Vec& state, const Vec& next_state) const {
  Vec input(state);
  for (size_t d = 0; d < next_state.size(); ++d) {
    input.push_back(next_state[d] - state[d]);
  }
  return target_norm_.denormalize(net_.forward(input_norm_.normalize(input)));
}

InverseModel InverseModel::from_parts(int state_dim, int act_dim, Mlp net,
                                      Normalizer input_norm, Normalizer target_norm) {
  InverseModel m;
  m.state_dim_ = state_dim;
  m.act_dim_ = act_dim;
  m.net_ = std::move(net);
  m.input_norm_ = std::move(input_norm);
  m.target_norm_ = std::move(target_norm);
  return m;
}

InverseModel fit_inverse(const std::vector<Trajectory>& data, const FitConfig& config,
                         Rng& rng, FitReport* report) {
  Dataset ds;
  int state_dim = 0, act_dim = 0;
  for (const Trajectory& traj : data) {
    for (const Transition& t : traj.transitions) {
      state_dim = static_cast<int>(t.state.size());
      act_dim = static_cast<int>(t.action.size());
      Vec input(t.state);
      for (size_t d = 0; d < t.next_state.size(); ++d) {
        input.push_back(t.next_state[d] - t.state[d]);
      }
      ds.inputs.push_back(std::move(input));
      ds.targets.push_back(t.action);
    }
  }
  RegressionResult res = fit_regression(std::move(ds), config, rng, report, "fit_inverse");
  return InverseModel::from_parts(state_dim, act_dim, std::move(res.net),
                                  std::move(res.input_norm), std::move(res.target_norm));
}

void InverseModel::save(std::ostream& out) const {
  save_model(out, "GSINV01", state_dim_, act_dim_, net_, input_norm_, target_norm_);
}

InverseModel InverseModel::load(std::istream& in) {
  InverseModel m;
  load_model(in, "GSINV01", m.state_dim_, m.act_dim_, m.net_, m.input_norm_, m.target_norm_);
  return m;
}

}  // namespace groundsim
