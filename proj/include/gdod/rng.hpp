#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace gdod {

/// Deterministic random source.
///
/// The bit stream comes from std::mt19937_64, whose output sequence is fixed
/// by the C++ standard. Every derived quantity (uniforms, normals, indices,
/// shuffles) is computed here rather than through <random> distributions,
/// whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Standard normal via the Box-Muller transform; the second variate of each
  // pair is cached.
  double normal();

  // Uniform on {0, ..., n-1}; unbiased (rejection sampling). n must be > 0.
  std::size_t uniform_index(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  // Independent child generator for a named stream; does not advance *this.
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer, used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace gdod
