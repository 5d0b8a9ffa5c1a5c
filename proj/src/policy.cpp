// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#include "policy.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace groundsim {

namespace {
constexpr double kLn2Pi = 1.8378770664093454835606594728112;
constexpr double kHalfLn2PiE = 1.4189385332046727417803297364056;
}  // namespace

GaussianPolicy::GaussianPolicy(int obs_dim, int act_dim, const std::vector<int>& hidden,
                               double log_std_init, Rng& rng, double mean_head_scale,
                               bool residual_on_action_tail)
    : obs_dim_(obs_dim), act_dim_(act_dim), residual_(residual_on_action_tail) {
  if (residual_ && obs_dim < act_dim) {
    throw std::invalid_argument("GaussianPolicy: residual tail needs obs_dim >= act_dim");
  }
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(act_dim);
  mean_net_ = Mlp(sizes, rng, mean_head_scale);
  log_std_.assign(act_dim, log_std_init);
  clamp_log_std();
}

Vec GaussianPolicy::mean_action(const Vec& obs) const {
  Vec mean = mean_net_.forward(obs);
  if (residual_) {
    for (int d = 0; d < act_dim_; ++d) mean[d] += obs[obs_dim_ - act_dim_ + d];
  }
  return mean;
}

GaussianPolicy::Sample GaussianPolicy::sample(const Vec& obs, Rng& rng) const {
  Vec mean = mean_action(obs);
  Vec action(act_dim_);
  double log_prob = 0.0;
  for (int d = 0; d < act_dim_; ++d) {
    const double sigma = std::exp(log_std_[d]);
    const double eps = rng.normal();
    action[d] = mean[d] + sigma * eps;
    log_prob += -log_std_[d] - 0.5 * kLn2Pi - 0.5 * eps * eps;
  }
  return {std::move(action), log_prob};
}

double GaussianPolicy::log_prob(const Vec& obs, const Vec& action) const {
  if (static_cast<int>(action.size()) != act_dim_) {
    throw std::invalid_argument("GaussianPolicy::log_prob: action dimension mismatch");
  }
  Vec mean = mean_action(obs);
  double lp = 0.0;
  for (int d = 0; d < act_dim_; ++d) {
    const double sigma = std::exp(log_std_[d]);
    const double z = (action[d] - mean[d]) / sigma;
    lp += -log_std_[d] - 0.5 * kLn2Pi - 0.5 * z * z;
  }
  return lp;
}

double GaussianPolicy::entropy() const {
  double h = 0.0;
  for (double ls : log_std_) h += ls + kHalfLn2PiE;
  return h;
}

GaussianPolicy::Stats GaussianPolicy::stats(const Vec& obs) const {
  return {mean_action(obs), log_std_};
}

double gaussian_kl(const GaussianPolicy::Stats& old_stats,
                   const GaussianPolicy::Stats& new_stats) {
  double kl = 0.0;
  for (size_t d = 0; d < old_stats.mean.size(); ++d) {
    const double lso = old_stats.log_std[d];
    const double lsn = new_stats.log_std[d];
    const double var_o = std::exp(2.0 * lso);
    const double var_n = std::exp(2.0 * lsn);
    const double dmean = new_stats.mean[d] - old_stats.mean[d];
    kl += lsn - lso + (var_o + dmean * dmean) / (2.0 * var_n) - 0.5;
  }
  return kl;
}

double GaussianPolicy::mean_kl(const std::vector<Vec>& obs_batch,
                               const std::vector<GaussianPolicy::Stats>& old_stats) const {
  if (obs_batch.empty()) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < obs_batch.size(); ++i) {
    total += gaussian_kl(old_stats[i], stats(obs_batch[i]));
  }
  return total / static_cast<double>(obs_batch.size());
}

void GaussianPolicy::accumulate_log_prob_grad(const Vec& obs, const Vec& action,
                                              double coeff, Mlp::Gradients& net_grads,
                                              Vec& log_std_grads) const {
  Mlp::Cache cache;
  Vec mean = mean_net_.forward(obs, cache);
  if (residual_) {
    for (int d = 0; d < act_dim_; ++d) mean[d] += obs[obs_dim_ - act_dim_ + d];
  }
  Vec out_grad(act_dim_);
  for (int d = 0; d < act_dim_; ++d) {
    const double inv_var = std::exp(-2.0 * log_std_[d]);
    const double diff = action[d] - mean[d];
    // d logp / d mean_d; the residual offset is constant w.r.t. parameters.
    out_grad[d] = coeff * diff * inv_var;
    // d logp / d log_std_d = -1 + z^2.
    log_std_grads[d] += coeff * (diff * diff * inv_var - 1.0);
  }
  mean_net_.backward(cache, out_grad, net_grads);
}

void GaussianPolicy::clamp_log_std() {
  for (double& ls : log_std_) {
    if (ls < kLogStdMin) ls = kLogStdMin;
    if (ls > kLogStdMax) ls = kLogStdMax;
  }
}

void GaussianPolicy::save(std::ostream& out) const {
  const char magic[8] = {'G', 'S', 'P', 'O', 'L', '0', '1', '\0'};
  out.write(magic, sizeof(magic));
  const std::uint32_t header[3] = {static_cast<std::uint32_t>(obs_dim_),
                                   static_cast<std::uint32_t>(act_dim_),
                                   residual_ ? 1u : 0u};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  mean_net_.save(out);
  out.write(reinterpret_cast<const char*>(log_std_.data()),
            static_cast<std::streamsize>(log_std_.size() * sizeof(double)));
}

GaussianPolicy GaussianPolicy::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 7) != "GSPOL01") {
    throw std::runtime_error("policy: bad magic");
  }
  std::uint32_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw std::runtime_error("policy: truncated stream");
  GaussianPolicy p;
  p.obs_dim_ = static_cast<int>(header[0]);
  p.act_dim_ = static_cast<int>(header[1]);
  p.residual_ = header[2] != 0;
  p.mean_net_ = Mlp::load(in);
  p.log_std_.assign(p.act_dim_, 0.0);
  in.read(reinterpret_cast<char*>(p.log_std_.data()),
          static_cast<std::streamsize>(p.log_std_.size() * sizeof(double)));
  if (!in) throw std::runtime_error("policy: truncated stream");
  return p;
}

}  // namespace groundsim
