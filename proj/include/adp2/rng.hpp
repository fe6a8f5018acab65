#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace adp2 {

// Deterministic, platform-independent random streams.
//
// Every run owns a single root seed; all randomness is drawn from named
// sub-streams derived with derive()/stream() so that the draw order of one
// consumer can never perturb another. The generator is xoshiro256++ seeded
// through splitmix64, with hand-rolled uniform/normal transforms, because the
// standard library's distributions are not bit-stable across implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : origin_(seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Independent sub-stream addressed by (label, index), derived from the seed
  // this instance was constructed with. Stable no matter how many values have
  // been consumed from the parent.
  SeededRng stream(std::string_view label, std::uint64_t index = 0) const {
    return SeededRng(derive(origin_, label, index));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal, one value per call (Box-Muller, cosine branch only, so the
  // draw count per call is fixed at two uniforms).
  double normal() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;        // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi() * u2);
  }

  std::uint64_t origin_seed() const { return origin_; }

  // FNV-1a over the seed bytes, the label, and the index, finalized with one
  // splitmix64 round for avalanche.
  static std::uint64_t derive(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix_byte = [&h](unsigned char b) {
      h ^= b;
      h *= 1099511628211ull;
    };
    for (int i = 0; i < 8; ++i) mix_byte(static_cast<unsigned char>(seed >> (8 * i)));
    for (char c : label) mix_byte(static_cast<unsigned char>(c));
    for (int i = 0; i < 8; ++i) mix_byte(static_cast<unsigned char>(index >> (8 * i)));
    std::uint64_t sm = h;
    return splitmix64(sm);
  }

  static std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  static constexpr double pi() { return 3.14159265358979323846; }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t origin_;
  std::uint64_t s_[4];
};

}  // namespace adp2
