#pragma once

#include <cstdint>

namespace difflab {

// Deterministic splittable random stream built on splitmix64.
//
// The generator is pure 64-bit integer arithmetic, so identical seeds plus
// identical call sequences produce byte-identical draws on every platform.
// A stream is single-owner: concurrent consumers must each hold their own
// stream, derived via split(). split(label) is a pure function of the
// original seed and the label — it does not consume or depend on the
// parent's draw position.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) noexcept : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53-bit resolution.
  double next_unit() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller with a cached spare.
  double next_gaussian() noexcept;

  // Index in [0, n).
  int next_below(int n) noexcept {
    return static_cast<int>(next_unit() * static_cast<double>(n));
  }

  // Independent child stream addressed by label. Children with distinct
  // labels (or distinct parent seeds) are decorrelated.
  RngStream split(std::uint64_t label) const noexcept {
    std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ull * (label + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return RngStream(z ^ (z >> 31));
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  double gaussian_spare_ = 0.0;
  bool has_gaussian_spare_ = false;
};

}  // namespace difflab
