#pragma once

// Counter-based randomness for reproducible parallel simulation.
//
// Every consumer draws from a (tag, stream) lane of a Philox-4x32-10
// generator keyed by the master seed. Lanes never overlap, so path
// workers can be scheduled in any order on any number of threads and
// still produce bit-identical output.
//
// Philox reference: Salmon, Moraes, Dror, Shaw, "Parallel random
// numbers: as easy as 1, 2, 3", SC'11.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace rclab {

// splitmix64 finalizer; decorrelates nearby integer seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key)
      : k0_(static_cast<std::uint32_t>(key)),
        k1_(static_cast<std::uint32_t>(key >> 32)) {}

  // One 128-bit counter in, one 128-bit block out.
  Block block(std::uint64_t ctr_lo, std::uint64_t ctr_hi) const {
    std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo);
    std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi);
    std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi >> 32);
    std::uint32_t k0 = k0_, k1 = k1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = kMul0 * static_cast<std::uint64_t>(c0);
      const std::uint64_t p1 = kMul1 * static_cast<std::uint64_t>(c2);
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    return {c0, c1, c2, c3};
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  std::uint32_t k0_, k1_;
};

// Stream tags; keep disjoint so independent consumers never share draws.
enum class StreamTag : std::uint32_t {
  kPathNoise = 0,
  kCertificatePairs = 1,
  kBootstrap = 2,
  kEndpointNoise = 3,
  kTest = 15,
};

// Sequential draws from one lane of the counter space.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamTag tag, std::uint64_t stream)
      : gen_(splitmix64(seed)),
        ctr_hi_((static_cast<std::uint64_t>(tag) << 56) |
                (stream & 0x00FFFFFFFFFFFFFFULL)),
        ctr_lo_(0) {}

  std::uint64_t next_u64() {
    if (have_u64_) {
      have_u64_ = false;
      return spare_u64_;
    }
    const auto b = gen_.block(ctr_lo_++, ctr_hi_);
    spare_u64_ = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
    have_u64_ = true;
    return (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  }

  // Uniform on (0, 1]; never returns 0 so log() is safe.
  double uniform01() {
    return ((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform on [0, 1).
  double uniform01_halfopen() {
    return (next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; pairs are cached, so a stream's
  // sequence depends only on how many values were drawn before.
  double normal() {
    if (have_normal_) {
      have_normal_ = false;
      return spare_normal_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01_halfopen();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    have_normal_ = true;
    return radius * std::cos(angle);
  }

  // Uniform index in [0, n); 53-bit resolution is ample for desk-scale n.
  std::uint64_t index_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform01_halfopen() * static_cast<double>(n));
  }

 private:
  Philox4x32 gen_;
  std::uint64_t ctr_hi_;
  std::uint64_t ctr_lo_;
  std::uint64_t spare_u64_ = 0;
  double spare_normal_ = 0.0;
  bool have_u64_ = false;
  bool have_normal_ = false;
};

}  // namespace rclab
