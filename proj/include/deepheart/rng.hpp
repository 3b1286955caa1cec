#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace deepheart {

// Philox4x32-10 counter-based generator. The output stream is a pure function
// of (seed, stream, draw index), so per-user and per-sample streams can be
// produced in any order and still agree bit-for-bit across platforms.
class Philox {
 public:
  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; caches the second variate.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n), unbiased. n must be > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  void refill();

  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> block_{};
  int index_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

// Keyed 64-bit hash of (seed, salt, id). Different salts give independent
// assignments for the same (seed, id).
std::uint64_t keyed_hash(std::uint64_t seed, std::string_view salt, std::string_view id);

// keyed_hash mapped to [0, 1).
double keyed_unit(std::uint64_t seed, std::string_view salt, std::string_view id);

}  // namespace deepheart
