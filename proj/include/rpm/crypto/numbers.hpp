#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <span>

#include "rpm/bytes.hpp"
#include "rpm/rng.hpp"

namespace rpm::crypto {

using BigInt = boost::multiprecision::cpp_int;

// Modular exponentiation by square-and-multiply. mod must be positive.
BigInt mod_pow(BigInt base, BigInt exp, const BigInt& mod);

// Modular inverse via extended gcd; returns 0 when gcd(a, mod) != 1.
BigInt mod_inverse(const BigInt& a, const BigInt& mod);

// Miller-Rabin with `rounds` random bases; error probability < 4^-rounds.
bool miller_rabin(const BigInt& n, int rounds, Rng& rng);

// Primality check used throughout: trial division for small n, then
// Miller-Rabin with 64 rounds (error < 2^-128).
bool is_prime(const BigInt& n, Rng& rng);

BigInt random_below(Rng& rng, const BigInt& bound);                  // [0, bound)
BigInt random_in_range(Rng& rng, const BigInt& lo, const BigInt& hi);  // [lo, hi]
BigInt random_prime(Rng& rng, unsigned bits);       // exactly `bits` bits
BigInt random_safe_prime(Rng& rng, unsigned bits);  // p = 2q + 1, q prime

unsigned bit_length(const BigInt& v);

// Big-endian magnitude, no sign, at least one byte ("0" encodes as 0x00).
Bytes encode_bigint(const BigInt& v);
// Left-pads to `width` bytes; throws std::invalid_argument if v does not fit.
Bytes encode_bigint_fixed(const BigInt& v, std::size_t width);
BigInt decode_bigint(std::span<const std::uint8_t> bytes);

}  // namespace rpm::crypto
