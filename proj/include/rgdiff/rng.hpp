#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace rgdiff {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives a stream id from a base id and a salt. Distinct salts give
/// unrelated ids, so callers can carve independent substreams out of one
/// configured stream without coordinating a global registry.
constexpr std::uint64_t derive_stream(std::uint64_t base, std::uint64_t salt) {
  return splitmix64(base + 0x9E3779B97F4A7C15ull * (salt + 1));
}

/// Counter-based random number generator (Philox4x32-10).
///
/// A (seed, stream) pair names one sequence: the 64-bit stream id occupies
/// the upper half of the 128-bit counter, so distinct stream ids enumerate
/// disjoint counter blocks and are independent by construction, not by
/// sequential draws. Identical (seed, stream, call sequence) reproduces
/// identical samples. A single instance is single-consumer; concurrency is
/// obtained by giving each worker its own stream id.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Fresh generator on an unrelated stream, same seed.
  SeededRng substream(std::uint64_t salt) const {
    return SeededRng(seed_, derive_stream(stream_, salt));
  }

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      generate_block();
      pos_ = 0;
    }
    return out_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform on [0,1) with 53-bit resolution.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform_in(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

  /// Integer uniform on {0, 1, ..., n-1} via rejection-free scaling.
  std::uint64_t next_below(std::uint64_t n) {
    // 53-bit double scaling keeps the draw deterministic and unbiased
    // enough for n far below 2^53 (all uses here are small counts).
    return static_cast<std::uint64_t>(next_uniform() * static_cast<double>(n));
  }

  /// Standard normal via Box-Muller; pairs are cached, so draw counts of
  /// any parity stay reproducible.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void generate_block() {
    std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
    std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
      }
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c0, hi0, lo0);
      mulhilo(0xCD9E8D57u, c2, hi1, lo1);
      c0 = hi1 ^ c1 ^ k0;
      c1 = lo1;
      c2 = hi0 ^ c3 ^ k1;
      c3 = lo0;
    }
    out_ = {c0, c1, c2, c3};
    ++counter_;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> out_{};
  int pos_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rgdiff
