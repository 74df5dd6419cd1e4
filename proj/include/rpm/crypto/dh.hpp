#pragma once

#include <optional>

#include "rpm/crypto/numbers.hpp"

namespace rpm::crypto {

// Diffie-Hellman group: prime modulus alpha and a generator g that is a
// primitive root of alpha (its powers reach every nonzero residue).
struct DhGroup {
  BigInt alpha;
  BigInt g;
  bool operator==(const DhGroup&) const = default;
};

// Generates a fresh group. For bits <= 20 the prime is arbitrary and the
// generator check factors alpha-1 by trial division; larger sizes use a safe
// prime so the primitive-root test needs only two exponentiations.
DhGroup make_group(Rng& rng, unsigned bits);

// Exact primitive-root test; requires factoring alpha-1, so only valid for
// moduli small enough to factor by trial division (used at test scale and
// inside make_group for small groups).
bool is_primitive_root(const BigInt& g, const BigInt& alpha);

// Structural validity a receiver can check: alpha prime, 2 <= g <= alpha-2,
// plus (for safe primes) the two-exponentiation primitive-root test.
bool validate_group(const DhGroup& group, Rng& rng);

// Fixed 2048-bit MODP group (safe prime) for full-strength demos.
const DhGroup& well_known_group_2048();

BigInt random_secret(Rng& rng, const DhGroup& group);  // [2, alpha-2]

// public = g^secret mod alpha. secret must be >= 1.
BigInt dh_public(const DhGroup& group, const BigInt& secret);

// shared = peer^secret mod alpha; nullopt when peer is outside [1, alpha-1]
// (rejects 0 and values >= alpha).
std::optional<BigInt> dh_shared(const DhGroup& group, const BigInt& peer_public,
                                const BigInt& secret);

// Timestamp freshness: |now - ts| <= window, all in milliseconds.
bool fresh(std::uint64_t ts_ms, std::uint64_t now_ms, std::uint64_t window_ms);

}  // namespace rpm::crypto
