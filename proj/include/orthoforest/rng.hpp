#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>
#include <vector>

#include "orthoforest/errors.hpp"

namespace orf {

// 64-bit finalizer used by the splitmix64 generator.  Bijective, so distinct
// inputs always map to distinct outputs.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// FNV-1a over a byte string; used to fold human-readable labels into seeds.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a_bytes(const void* data, std::size_t len,
                                 std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based stream: the i-th draw is a pure function of (key, i), so a
// stream can be handed to any thread without coordination and replays
// identically regardless of scheduling.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return mix64(key_ + ++counter_ * kGolden); }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; draws are generated in independent pairs.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, bound) via rejection sampling (no modulo bias).
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw DomainError("next_below: bound must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

  int next_int(int lo, int hi) {  // inclusive range [lo, hi]
    if (hi < lo) throw DomainError("next_int: empty range");
    return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from {0, ..., n-1}, in random order.
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw SizeError("sample_without_replacement: need 0 <= k <= n");
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    // Partial Fisher-Yates: after k swaps the first k entries are the sample.
    for (int i = 0; i < k; ++i) {
      int j = i + static_cast<int>(next_below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Derives the key of a child stream from a master seed, a purpose label and an
// index (tree number, bootstrap replicate, fold...).  Each (label, index) pair
// gets a statistically independent stream, which keeps every parallel unit of
// work reproducible no matter how work is scheduled.
inline std::uint64_t derive_key(std::uint64_t master, std::string_view label,
                                std::uint64_t index = 0) {
  std::uint64_t h = mix64(master ^ fnv1a(label));
  return mix64(h + (index + 1) * kGolden);
}

inline RandomStream derive_stream(std::uint64_t master, std::string_view label,
                                  std::uint64_t index = 0) {
  return RandomStream(derive_key(master, label, index));
}

// Folds the bytes of a numeric vector into a seed; lets per-point work (local
// nuisance fits at a test point) derive a stream that depends only on the
// point itself, not on evaluation order.
inline std::uint64_t hash_doubles(const double* data, std::size_t n) {
  return fnv1a_bytes(data, n * sizeof(double));
}

}  // namespace orf
