#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sis {

// All randomness in the project flows through this wrapper. std::mt19937_64
// is fully specified by the standard; the distribution helpers are written
// out by hand because the standard-library distributions are
// implementation-defined, which would break bit-for-bit reproducibility of
// checkpoints and manifests across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
      const int j = uniform_int(0, i);
      std::swap(items[static_cast<std::size_t>(i)],
                items[static_cast<std::size_t>(j)]);
    }
  }

  /// First k entries of a uniform permutation of 0..n-1 (sample without
  /// replacement).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
      const int j = uniform_int(i, n - 1);
      std::swap(pool[static_cast<std::size_t>(i)],
                pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}
}  // namespace detail

// Seed-splitting rule: a single user-facing seed fans out into independent
// per-purpose streams. sub = splitmix64(master ^ fnv1a64(purpose) + index).
// Adding a new purpose or more indices never perturbs existing streams.
inline std::uint64_t sub_seed(std::uint64_t master, std::string_view purpose,
                              std::uint64_t index = 0) {
  return detail::splitmix64(master ^ detail::fnv1a64(purpose) ^
                            (0x9E3779B97F4A7C15ULL * (index + 1)));
}

inline Rng sub_rng(std::uint64_t master, std::string_view purpose,
                   std::uint64_t index = 0) {
  return Rng(sub_seed(master, purpose, index));
}

}  // namespace sis
