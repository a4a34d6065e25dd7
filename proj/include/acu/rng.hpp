#pragma once

#include <cstdint>
#include <string_view>

namespace acu {

/// SplitMix64 stream. Streams are derived from (seed, name) so every named
/// parameter or data source has its own reproducible sequence independent of
/// draw order elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  Rng(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

  /// Child stream keyed by name, leaving this stream untouched.
  Rng split(std::string_view name) const;

 private:
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t hash_name(std::string_view name);

}  // namespace acu
