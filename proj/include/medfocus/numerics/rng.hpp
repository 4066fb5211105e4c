#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace medfocus {

/// Counter-based generator: draw k (k = 1, 2, ...) is the SplitMix64
/// finalizer applied to seed + k * 0x9E3779B97F4A7C15. This is exactly the
/// SplitMix64 stream, so seed 1234567 yields 6457827717110365317,
/// 3203168211198807973, 9817491932198370423, ...
///
/// Integer draws are bit-identical on every platform. normal() goes through
/// std::log/std::cos and is reproducible wherever libm is.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n must be positive. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Uniform integer in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  /// Standard normal via Box-Muller (one value per pair of uniforms).
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  /// Independent stream keyed by (seed, stream_id); does not advance this one.
  Rng derive(std::uint64_t stream_id) const noexcept;

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  static std::uint64_t mix(std::uint64_t z) noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace medfocus
