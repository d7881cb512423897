#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace knng {

/// SplitMix64 generator. Used instead of <random> distributions because the
/// standard ones are implementation-defined; every draw here is bit-stable
/// across platforms and compilers for a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, bound). bound must be nonzero.
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  /// Uniform float in [0, 1).
  float next_float() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
  }

  /// Standard normal via Box-Muller (second value cached).
  float next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    float u1;
    do {
      u1 = next_float();
    } while (u1 <= 0.0f);
    const float u2 = next_float();
    const float r = std::sqrt(-2.0f * std::log(u1));
    const float a = 6.28318530717958647692f * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  float spare_ = 0.0f;
  bool have_spare_ = false;
};

/// Stable seed combiner for deriving independent streams (per point, per
/// iteration, per rank, ...).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  Rng r(a ^ (b * 0x9e3779b97f4a7c15ULL + 0xd1b54a32d192ed03ULL));
  return r.next_u64();
}

/// m distinct indices drawn uniformly from [0, n) in draw order.
inline std::vector<std::uint32_t> sample_distinct(std::uint64_t n, std::size_t m,
                                                  Rng& rng) {
  std::vector<std::uint32_t> out;
  if (m >= n) {
    out.resize(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint32_t>(i);
    return out;
  }
  out.reserve(m);
  while (out.size() < m) {
    const auto v = static_cast<std::uint32_t>(rng.next_below(n));
    bool dup = false;
    for (auto x : out) {
      if (x == v) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(v);
  }
  return out;
}

/// Deterministic Fisher-Yates shuffle.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace knng
