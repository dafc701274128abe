#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ktrans {

// std::mt19937_64 output is bit-exact per the standard, but the standard
// distributions are not. Everything that must reproduce across toolchains
// goes through the helpers below instead.

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

/// Combines independent seed components into one stream seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(base + 0x9e3779b97f4a7c15ull);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform integer in [0, bound), bound > 0. Unbiased via rejection.
  std::uint64_t uniform(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) with 53-bit resolution.
  double uniform_real() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (spare value cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, r;
    do {
      u = uniform_real();
    } while (u <= 0.0);
    r = std::sqrt(-2.0 * std::log(u));
    const double theta = 2.0 * M_PI * uniform_real();
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Normal(0, std) truncated to +-2 std by resampling.
  double truncated_normal(double std_dev) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * std_dev;
    }
  }

  /// In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Draws k distinct values from [0, n) in selection order.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k && i < n; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) +
          static_cast<std::size_t>(uniform(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      out.push_back(idx[static_cast<std::size_t>(i)]);
    }
    return out;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// round-half-up, used by every 15% computation in the masking rules.
inline int round_half_up(double x) {
  return static_cast<int>(std::floor(x + 0.5));
}

}  // namespace ktrans
