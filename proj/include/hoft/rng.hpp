#pragma once

#include <cstdint>
#include <optional>

#include "hoft/matrix.hpp"

namespace hoft {

/// Deterministic generator: xoshiro256** seeded through splitmix64.
///
/// Normals use the Box–Muller transform on two uniforms
/// u1 = 1 - (next() >> 11)·2⁻⁵³ ∈ (0, 1] and u2 = (next() >> 11)·2⁻⁵³ ∈ [0, 1):
///   z0 = √(−2 ln u1)·cos(2π u2),  z1 = √(−2 ln u1)·sin(2π u2).
/// z0 is returned first and z1 is cached for the following call. The stream only
/// depends on integer arithmetic and libm's log/cos/sin, so it is identical across
/// platforms with a correctly rounded libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;

  /// Child generator for trial `index`; seeds are derived as seed XOR index.
  Rng child(std::uint64_t index) const { return Rng(seed_ ^ index); }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  std::optional<double> cached_normal_;
};

/// i.i.d. standard normal entries, filled in row-major order.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace hoft
