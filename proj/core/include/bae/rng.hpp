#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace bae {

/// Purposes for derived random streams. The numeric value is the fixed
/// sub-seed offset mixed into the master seed.
enum class Stream : std::uint64_t {
  data = 1,
  init = 2,
  shuffle = 3,
  noise = 4,
  split = 5,
  solver = 6,
  probe = 7,
  subset = 8,
};

/// SplitMix64 finalizer, used to turn (master seed, offset) into a sub-seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seeded random source. The generator is std::mt19937_64 seeded with the
/// given 64-bit value; doubles come from the libstdc++ uniform and normal
/// distributions, so streams are reproducible bit-for-bit on one toolchain.
///
/// Sub-streams: derive(purpose) seeds a new generator with
/// splitmix64(seed ^ (offset * 0xD1B54A32D192ED03)), where offset is the
/// Stream value (or an arbitrary index for derive_index). Data generation,
/// weight init and batch shuffling each draw from their own sub-stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  Rng derive(Stream purpose) const { return derive_index(static_cast<std::uint64_t>(purpose)); }

  Rng derive_index(std::uint64_t offset) const {
    return Rng(splitmix64(seed_ ^ (offset * 0xD1B54A32D192ED03ULL)));
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal() { return normal_(engine_); }

  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), engine_);
    return idx;
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace bae
