#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace mtse {

// Deterministic xoshiro256** generator. Every stochastic choice in the
// project (initialization, shuffling, task sampling, dropout) draws from one
// ordered stream so a 64-bit seed pins the whole run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double next_double();

  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer in [0, n), n >= 1. Rejection-sampled, no modulo bias.
  std::uint64_t next_below(std::uint64_t n);

  // Integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Index drawn from a normalized probability vector.
  std::size_t categorical(const std::vector<double>& probs);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

// splitmix64 step; used for seeding and for deriving fixed sub-seeds.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace mtse
