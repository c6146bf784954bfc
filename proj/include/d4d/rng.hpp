#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace d4d {

// Drawing stream: SplitMix64 over a 64-bit state. Bit-identical output
// for a given seed on any host.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1), 53 mantissa bits.
  double uniform();
  double uniform(double lo, double hi);
  // Box-Muller, one fresh pair per call (second value discarded so
  // results do not depend on call interleaving).
  double normal(double mean, double stddev);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

// Immutable derivation node. Every stochastic site (init, shuffle, dropout,
// retrain run, ...) derives its own child and draws from an independent
// stream, so results do not depend on execution order or parallel schedule.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng child(std::string_view label) const;
  Rng child(std::uint64_t index) const;
  RngStream stream() const;
  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream stream);

}  // namespace d4d
