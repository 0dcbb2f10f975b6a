#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "mam/errors.hpp"

namespace mam {

// Deterministic RNG used everywhere in the library: xoshiro256++ with a
// splitmix64 seeding stage. The generator family is fixed so that serialized
// states (32 bytes, written as hex) are portable across builds and platforms.
// All distributions are implemented here rather than taken from <random>,
// whose distribution algorithms are implementation-defined.
class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  // Child stream `stream_id` of a root seed. Streams with distinct ids are
  // decorrelated; used for per-chain RNGs and named trainer streams.
  static Rng derive(std::uint64_t root_seed, std::uint64_t stream_id) {
    return Rng(root_seed ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1)));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw DomainError("uniform_below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller. Stateless per call (no cached spare), so
  // serialized generator state alone reproduces the stream.
  double normal() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // 64 hex chars encoding the four state words, most significant digit first.
  std::string state_hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (const std::uint64_t word : state_) {
      for (int shift = 60; shift >= 0; shift -= 4) {
        out.push_back(digits[(word >> shift) & 0xF]);
      }
    }
    return out;
  }

  void set_state_hex(const std::string& hex) {
    if (hex.size() != 64) throw DomainError("rng state must be 64 hex chars");
    std::array<std::uint64_t, 4> words{};
    for (int w = 0; w < 4; ++w) {
      std::uint64_t value = 0;
      for (int i = 0; i < 16; ++i) {
        const char c = hex[static_cast<std::size_t>(w * 16 + i)];
        std::uint64_t nibble;
        if (c >= '0' && c <= '9') {
          nibble = static_cast<std::uint64_t>(c - '0');
        } else if (c >= 'a' && c <= 'f') {
          nibble = static_cast<std::uint64_t>(c - 'a' + 10);
        } else if (c >= 'A' && c <= 'F') {
          nibble = static_cast<std::uint64_t>(c - 'A' + 10);
        } else {
          throw DomainError("rng state contains a non-hex character");
        }
        value = (value << 4) | nibble;
      }
      words[static_cast<std::size_t>(w)] = value;
    }
    state_ = words;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace mam
