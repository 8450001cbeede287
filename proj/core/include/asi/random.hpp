#pragma once

// Seeded random streams. The engine is std::mt19937_64; the distributions are
// written out here because the std:: distributions are not guaranteed to
// produce the same sequence across standard library implementations, and
// datasets must be reproducible from their seed alone.

#include <cmath>
#include <cstdint>
#include <random>

namespace asi {

/// SplitMix64 finalizer. Used to derive independent child seeds from a master
/// seed: child = mix_seed(master ^ mix_seed(stream_tag + index)).
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for the `index`-th item of the stream named by `tag`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                    std::uint64_t index = 0) noexcept {
  return mix_seed(master ^ mix_seed(tag * 0x100000001B3ULL + index));
}

/// Well-known stream tags so unrelated consumers never share a sequence.
namespace stream {
inline constexpr std::uint64_t kDataset = 0xD1;
inline constexpr std::uint64_t kInit = 0x11;
inline constexpr std::uint64_t kShuffle = 0x5F;
inline constexpr std::uint64_t kExplore = 0xE7;
inline constexpr std::uint64_t kSampling = 0x55;
inline constexpr std::uint64_t kRetry = 0x7E;
inline constexpr std::uint64_t kTrainSplit = 0xA1;
inline constexpr std::uint64_t kValidSplit = 0xA2;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in the closed range [lo, hi] (Lemire-style rejection).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % span);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
  }

  /// True with probability p; always consumes exactly one draw.
  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace asi
