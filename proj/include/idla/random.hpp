#pragma once

// Reproducible, splittable random streams.
//
// A stream is addressed by (seed, stream id) and is a SplitMix64 sequence
// whose start and Weyl increment are both derived from that pair, so every
// stream costs three words of state and distinct ids give unrelated
// sequences. The output is defined bit-for-bit here (no std:: distributions),
// which keeps trajectories identical across platforms.

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace idla {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Folds several integers into one stream id.
inline constexpr std::uint64_t derive_stream_id(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (auto p : parts) h = mix64(h ^ (p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
  return h;
}

// Stream domains so that walk increments, flash draws and bookkeeping never
// share a stream id.
enum class StreamDomain : std::uint64_t {
  kWalk = 1,
  kFlash = 2,
  kCoupling = 3,
  kBootstrap = 4,
  kAudit = 5,
  kCoupon = 6,
  kSeeds = 7,
};

class RandomStream {
 public:
  RandomStream() : RandomStream(0, 0) {}

  RandomStream(std::uint64_t seed, std::uint64_t stream_id) {
    state_ = mix64(seed ^ mix64(stream_id + 0x632be59bd9b4e019ULL));
    // Odd increment with enough bit transitions (as in SplittableRandom).
    std::uint64_t g = mix64(seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1)) | 1ULL;
    if (__builtin_popcountll(g ^ (g >> 1)) < 24) g ^= 0xaaaaaaaaaaaaaaaaULL;
    gamma_ = g;
  }

  static RandomStream for_domain(std::uint64_t seed, StreamDomain domain, std::uint64_t a = 0, std::uint64_t b = 0) {
    return RandomStream(seed, derive_stream_id({static_cast<std::uint64_t>(domain), a, b}));
  }

  // One draw.
  std::uint64_t next_u64() {
    ++draws_;
    state_ += gamma_;
    return mix64(state_);
  }

  // Uniform in [0, 1). One draw.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1). One draw.
  double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  // Uniform integer in [0, n), n < 2^32, multiply-shift. One draw.
  std::uint32_t below(std::uint32_t n) {
    return static_cast<std::uint32_t>(((next_u64() >> 32) * static_cast<std::uint64_t>(n)) >> 32);
  }

  // One draw.
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t draws() const { return draws_; }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t gamma_ = 1;
  std::uint64_t draws_ = 0;
};

}  // namespace idla
