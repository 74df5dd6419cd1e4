#pragma once

#include <cstdint>
#include <span>

namespace rpm {

// SplitMix64 finalizer; used for seed derivation and as a cheap integer mixer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seeded 64-bit MurmurHash64A. Stable across platforms (byte-wise tail,
// little-endian block loads), so serialized filters stay portable.
inline std::uint64_t hash64(const void* data, std::size_t len, std::uint64_t seed) {
  const std::uint64_t m = 0xc6a4a7935bd1e995ull;
  const int r = 47;
  std::uint64_t h = seed ^ (len * m);

  const auto* p = static_cast<const unsigned char*>(data);
  const auto* end = p + (len & ~std::size_t{7});
  while (p != end) {
    std::uint64_t k = 0;
    for (int i = 7; i >= 0; --i) k = k << 8 | p[i];
    p += 8;
    k *= m;
    k ^= k >> r;
    k *= m;
    h ^= k;
    h *= m;
  }

  switch (len & 7) {
    case 7: h ^= std::uint64_t{p[6]} << 48; [[fallthrough]];
    case 6: h ^= std::uint64_t{p[5]} << 40; [[fallthrough]];
    case 5: h ^= std::uint64_t{p[4]} << 32; [[fallthrough]];
    case 4: h ^= std::uint64_t{p[3]} << 24; [[fallthrough]];
    case 3: h ^= std::uint64_t{p[2]} << 16; [[fallthrough]];
    case 2: h ^= std::uint64_t{p[1]} << 8; [[fallthrough]];
    case 1: h ^= std::uint64_t{p[0]}; h *= m;
  }

  h ^= h >> r;
  h *= m;
  h ^= h >> r;
  return h;
}

inline std::uint64_t hash64(std::span<const std::uint8_t> data, std::uint64_t seed) {
  return hash64(data.data(), data.size(), seed);
}

}  // namespace rpm
