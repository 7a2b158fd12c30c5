#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace dualreal {

/// Seeded generator with platform-independent draws. The standard distributions are
/// implementation-defined, so uniform and normal variates are derived here directly
/// from the 64-bit Mersenne Twister stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  std::vector<double> normal_vector(std::size_t n);

  /// Independent child stream; the parent stream is not advanced.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dualreal
