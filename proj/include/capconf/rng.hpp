#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace capconf {

// Pinned counter-based generator. The algorithm is part of the artifact's
// reproducibility contract and must not change:
//
//   state_0   = fmix64(fmix64(seed ^ 0x9E3779B97F4A7C15) + stream * 0xD2B74407B1CE6E93)
//   state_i   = state_{i-1} + 0x9E3779B97F4A7C15          (the counter step)
//   output_i  = splitmix64_finalizer(state_i)
//
// where fmix64 is the murmur3 64-bit finalizer. Distinct (seed, stream)
// pairs give statistically independent sequences; simulation i of a run
// draws from stream = domain-tagged index, so results are independent of
// execution order and thread count. Golden outputs are locked in tests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(fmix64(fmix64(seed ^ 0x9E3779B97F4A7C15ULL) +
                      stream * 0xD2B74407B1CE6E93ULL)) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), unbiased via bitmask rejection.
  std::uint64_t next_below(std::uint64_t n) {
    std::uint64_t mask = ~0ULL;
    if (n > 1) {
      mask >>= __builtin_clzll(n - 1);
    } else {
      return 0;
    }
    for (;;) {
      std::uint64_t r = next_u64() & mask;
      if (r < n) return r;
    }
  }

  // Standard normal via the Marsaglia polar method; the spare value is
  // cached so a stream of normals consumes a deterministic number of
  // uniforms regardless of caller batching.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // First `m` entries of a seeded partial Fisher-Yates shuffle of 0..n-1:
  // a uniform sample of m distinct indices, in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(m);
    return idx;
  }

  // Full shuffle of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    return sample_without_replacement(n, n);
  }

  static std::uint64_t fmix64(std::uint64_t z) {
    z ^= z >> 33;
    z *= 0xFF51AFD7ED558CCDULL;
    z ^= z >> 33;
    z *= 0xC4CEB9FE1A85EC53ULL;
    z ^= z >> 33;
    return z;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream-domain tags keep independent draw purposes on disjoint streams.
// stream = (domain << 48) | index.
namespace rng_domain {
inline constexpr std::uint64_t simulation = 1;
inline constexpr std::uint64_t synth_sample = 2;
inline constexpr std::uint64_t synth_query = 3;
inline constexpr std::uint64_t split = 4;
}  // namespace rng_domain

inline std::uint64_t rng_stream(std::uint64_t domain, std::uint64_t index) {
  return (domain << 48) | index;
}

}  // namespace capconf
