// Copyright The groundsim Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef GROUNDSIM_RNG_HPP_
#define GROUNDSIM_RNG_HPP_

#include <cstdint>

namespace groundsim {

// Every random decision in a run derives from the manifest seed through
// key chaining: run -> grounding step -> phase -> trajectory. Streams are
// xoshiro256++ seeded by splitmix64, so a child stream is fully determined
// by (parent key, child index) and independent of sibling consumption.

std::uint64_t splitmix64(std::uint64_t& state);

// One-shot key mixer used for hierarchical stream derivation.
std::uint64_t mix_key(std::uint64_t parent, std::uint64_t child);

// Phase tags for stream derivation (documented in docs/design.md).
enum class Phase : std::uint64_t {
  InitPolicy = 1,
  InitCritic = 2,
  InitTransformer = 3,
  InitTransformerCritic = 4,
  RealCollect = 5,
  SimCollect = 6,
  TransformerTrain = 7,
  PolicyTrain = 8,
  EvalReal = 9,
  EvalSim = 10,
  EvalGrounded = 11,
  Precision = 12,
  FitForward = 13,
  FitInverse = 14,
};

class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Child stream derivation; does not advance this stream.
  Rng derive(std::uint64_t child) const;
  Rng derive(Phase phase) const { return derive(static_cast<std::uint64_t>(phase)); }
  Rng derive(Phase phase, std::uint64_t index) const {
    return derive(phase).derive(index);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t s_[4];
};

}  // namespace groundsim

#endif  // GROUNDSIM_RNG_HPP_
