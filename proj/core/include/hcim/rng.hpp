#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace hcim {

/// Seed derivation used for stream splitting. A child seed is
/// splitmix64(parent ^ fnv1a64(label)); numbered children hash the index
/// instead of a label. Every stochastic component takes its own derived
/// stream, so adding draws in one component never shifts another.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Seeded random stream. Built on std::mt19937_64 (whose output sequence
/// is fixed by the standard); the distributions are implemented here so
/// draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via the polar Box-Muller method.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Poisson draw (Knuth multiplication for small rates, normal
  /// approximation above 64).
  std::uint32_t poisson(double rate);

  bool bernoulli(double p) { return uniform() < p; }

  /// Child stream; does not advance this stream.
  Rng split(std::string_view label) const { return Rng(derive_seed(seed_, label)); }
  Rng split(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hcim
