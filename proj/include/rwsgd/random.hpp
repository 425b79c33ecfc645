#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "rwsgd/error.hpp"

namespace rwsgd {

/// Philox4x32-10 counter-based bijection (Salmon et al., SC'11). Output is a
/// pure function of (counter, key), so any stream position can be evaluated
/// without replaying earlier ones.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      ctr = single_round(ctr, key);
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// SplitMix64 finalizer; used to derive well-separated keys from small ids.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
  return mix64(mix64(seed) ^ mix64(a + 0x632BE59BD9B4E019ull));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

/// A keyed stream of uniforms indexed by step. The value at a step depends
/// only on (key, step), never on how many values were drawn before.
class CounterStream {
 public:
  CounterStream() = default;
  explicit CounterStream(std::uint64_t key) : key_(key) {}

  // Stream for substream `id` of `master_seed`.
  CounterStream(std::uint64_t master_seed, std::uint64_t id)
      : key_(derive_seed(master_seed, id)) {}

  std::uint64_t key() const { return key_; }

  /// Uniform on the open interval (0, 1) at position `step`.
  double uniform(std::uint64_t step) const {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(step),
                                  static_cast<std::uint32_t>(step >> 32), 0u, 0u};
    const Philox4x32::Key key{static_cast<std::uint32_t>(key_),
                              static_cast<std::uint32_t>(key_ >> 32)};
    const auto out = Philox4x32::apply(ctr, key);
    const std::uint64_t bits =
        ((static_cast<std::uint64_t>(out[0]) << 32) | out[1]) >> 11;  // 53 bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  friend bool operator==(const CounterStream&, const CounterStream&) = default;

 private:
  std::uint64_t key_ = 0;
};

/// Multiplier distribution for the perturbed paths. The two random choices
/// have mean one and variance one; DegenerateOne is the constant 1.
enum class WeightDistribution { Exponential1, Poisson1, DegenerateOne };

inline std::string to_string(WeightDistribution dist) {
  switch (dist) {
    case WeightDistribution::Exponential1: return "exp1";
    case WeightDistribution::Poisson1: return "poisson1";
    case WeightDistribution::DegenerateOne: return "one";
  }
  return "unknown";
}

inline WeightDistribution parse_weight_distribution(std::string_view name) {
  if (name == "exp1" || name == "exponential" || name == "exp") {
    return WeightDistribution::Exponential1;
  }
  if (name == "poisson1" || name == "poisson") return WeightDistribution::Poisson1;
  if (name == "one" || name == "degenerate") return WeightDistribution::DegenerateOne;
  throw ConfigError("unknown weight distribution '" + std::string(name) + "'");
}

/// Maps one uniform to a weight by inversion.
inline double weight_from_uniform(WeightDistribution dist, double u) {
  switch (dist) {
    case WeightDistribution::Exponential1:
      return -std::log(u);
    case WeightDistribution::Poisson1: {
      // Inverse CDF of Poisson(1); tail terms shrink factorially.
      double term = std::exp(-1.0);
      double cdf = term;
      int k = 0;
      while (u > cdf && k < 64) {
        ++k;
        term /= k;
        cdf += term;
      }
      return static_cast<double>(k);
    }
    case WeightDistribution::DegenerateOne:
      return 1.0;
  }
  return 1.0;
}

inline double draw_weight(WeightDistribution dist, const CounterStream& stream,
                          std::uint64_t step) {
  if (dist == WeightDistribution::DegenerateOne) return 1.0;
  return weight_from_uniform(dist, stream.uniform(step));
}

}  // namespace rwsgd
