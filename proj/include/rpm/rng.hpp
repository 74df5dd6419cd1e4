#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "rpm/hash.hpp"

namespace rpm {

// Deterministic RNG. Every random choice in the artifact flows through an
// explicitly seeded instance of this class; nothing reads entropy from the
// environment, which is what makes scenario transcripts byte-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return gen_(); }

  // Uniform in [0, bound) by rejection sampling; avoids the
  // implementation-defined behavior of std::uniform_int_distribution.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    std::uint64_t mask = ~std::uint64_t{0} >> __builtin_clzll((bound - 1) | 1);
    for (;;) {
      std::uint64_t v = next() & mask;
      if (v < bound) return v;
    }
  }

  bool coin() { return next() & 1; }

  double unit_real() {  // [0, 1) with 53 random bits
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  void fill(std::span<std::uint8_t> out) {
    std::size_t i = 0;
    while (i < out.size()) {
      std::uint64_t v = next();
      for (int b = 0; b < 8 && i < out.size(); ++b, ++i)
        out[i] = static_cast<std::uint8_t>(v >> (8 * b));
    }
  }

  // Derives an independent stream from the original seed (not the current
  // state), so the draw order in one component cannot perturb another.
  Rng child(std::string_view label) const {
    return Rng(splitmix64(seed_ ^ hash64(label.data(), label.size(), 0x8f1bbcdcbfa53e0bull)));
  }

  Rng child(std::uint64_t index) const {
    return Rng(splitmix64(splitmix64(seed_ ^ 0xd1b54a32d192ed03ull) + index));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace rpm
