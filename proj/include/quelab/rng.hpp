#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace quelab {

/// Identifies one independent random stream: (experiment seed, block label, replica index).
struct SeedKey {
  std::uint64_t master = 0;
  std::uint64_t label = 0;
  std::uint64_t replica = 0;

  SeedKey with_label(std::uint64_t l) const { return {master, l, replica}; }
  SeedKey with_replica(std::uint64_t r) const { return {master, label, r}; }
  bool operator==(const SeedKey&) const = default;
};

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based generator: the n-th output is a pure function of (key, n).
///
/// Streams keyed by distinct SeedKeys never share state, so replicas can be
/// drawn in any order or on any thread and still reproduce bit for bit.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(SeedKey key) noexcept
      : key_(detail::mix64(detail::mix64(detail::mix64(key.master ^ 0x5851F42D4C957F2DULL) ^
                                         (key.label * detail::kGolden + 0x14057B7EF767814FULL)) ^
                           (key.replica * 0xD6E8FEB86659FD93ULL + 0x2545F4914F6CDD1DULL))) {}

  result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  std::uint64_t counter() const noexcept { return counter_; }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(CounterRng& rng) noexcept {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal sampler bound to one stream.
class NormalSampler {
 public:
  explicit NormalSampler(SeedKey key) : rng_(key) {}
  double operator()() { return dist_(rng_); }
  CounterRng& engine() noexcept { return rng_; }

 private:
  CounterRng rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace quelab
