#pragma once

// Reproducible randomness. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; uniform and normal variates are
// derived here (not via <random> distributions, which are implementation
// defined) so a (seed, stream) pair gives the same numbers everywhere.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace slots {

inline constexpr std::string_view kRngAlgorithm = "mt19937_64";

/// Named stream ids expanded from the single root seed of a run.
enum class Stream : std::uint64_t {
  init = 1,
  shuffle = 2,
  augment = 3,
  split = 4,
  label = 5,
  synth = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root_seed, Stream stream, std::uint64_t sub = 0)
      : engine_(splitmix64(splitmix64(root_seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + sub)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal by Box-Muller; one pair per two calls.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Fisher-Yates with `below`, so the permutation is portable.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace slots
