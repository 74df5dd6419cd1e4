#include "rpm/crypto/numbers.hpp"

#include <stdexcept>

namespace rpm::crypto {

BigInt mod_pow(BigInt base, BigInt exp, const BigInt& mod) {
  if (mod <= 0) throw std::invalid_argument("mod_pow: modulus must be positive");
  if (mod == 1) return 0;
  base %= mod;
  if (base < 0) base += mod;
  BigInt result = 1;
  while (exp > 0) {
    if (boost::multiprecision::bit_test(exp, 0)) result = result * base % mod;
    base = base * base % mod;
    exp >>= 1;
  }
  return result;
}

BigInt mod_inverse(const BigInt& a, const BigInt& mod) {
  BigInt old_r = a % mod, r = mod;
  if (old_r < 0) old_r += mod;
  BigInt old_s = 1, s = 0;
  while (r != 0) {
    BigInt q = old_r / r;
    BigInt tmp = old_r - q * r;
    old_r = r;
    r = tmp;
    tmp = old_s - q * s;
    old_s = s;
    s = tmp;
  }
  if (old_r != 1) return 0;
  if (old_s < 0) old_s += mod;
  return old_s;
}

unsigned bit_length(const BigInt& v) {
  if (v == 0) return 0;
  return static_cast<unsigned>(boost::multiprecision::msb(v)) + 1;
}

BigInt random_below(Rng& rng, const BigInt& bound) {
  if (bound <= 0) throw std::invalid_argument("random_below: bound must be positive");
  unsigned bits = bit_length(bound);
  std::size_t nbytes = (bits + 7) / 8;
  unsigned top_mask_bits = bits % 8 == 0 ? 8 : bits % 8;
  std::uint8_t top_mask = static_cast<std::uint8_t>((1u << top_mask_bits) - 1);
  Bytes buf(nbytes);
  for (;;) {
    rng.fill(buf);
    buf[0] &= top_mask;
    BigInt v = decode_bigint(buf);
    if (v < bound) return v;
  }
}

BigInt random_in_range(Rng& rng, const BigInt& lo, const BigInt& hi) {
  if (lo > hi) throw std::invalid_argument("random_in_range: empty range");
  return lo + random_below(rng, hi - lo + 1);
}

namespace {

constexpr int kSmallPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};

// -1: composite by trial division, 1: prime (small), 0: undecided.
int trial_division(const BigInt& n) {
  for (int p : kSmallPrimes) {
    if (n == p) return 1;
    if (n % p == 0) return -1;
  }
  if (n < 97 * 97) return 1;  // no small factor and below the square
  return 0;
}

}  // namespace

bool miller_rabin(const BigInt& n, int rounds, Rng& rng) {
  if (n < 2) return false;
  if (n == 2 || n == 3) return true;
  if (boost::multiprecision::bit_test(n, 0) == false) return false;

  BigInt d = n - 1;
  unsigned r = 0;
  while (!boost::multiprecision::bit_test(d, 0)) {
    d >>= 1;
    ++r;
  }

  for (int round = 0; round < rounds; ++round) {
    BigInt a = random_in_range(rng, 2, n - 2);
    BigInt x = mod_pow(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool witness = true;
    for (unsigned i = 1; i < r; ++i) {
      x = x * x % n;
      if (x == n - 1) {
        witness = false;
        break;
      }
    }
    if (witness) return false;
  }
  return true;
}

bool is_prime(const BigInt& n, Rng& rng) {
  if (n < 2) return false;
  int td = trial_division(n);
  if (td != 0) return td > 0;
  return miller_rabin(n, 64, rng);
}

BigInt random_prime(Rng& rng, unsigned bits) {
  if (bits < 2) throw std::invalid_argument("random_prime: need at least 2 bits");
  for (;;) {
    BigInt c = random_below(rng, BigInt(1) << bits);
    boost::multiprecision::bit_set(c, bits - 1);  // exact bit length
    boost::multiprecision::bit_set(c, 0);         // odd
    if (is_prime(c, rng)) return c;
  }
}

BigInt random_safe_prime(Rng& rng, unsigned bits) {
  if (bits < 3) throw std::invalid_argument("random_safe_prime: need at least 3 bits");
  for (;;) {
    BigInt q = random_prime(rng, bits - 1);
    BigInt p = 2 * q + 1;
    if (bit_length(p) == bits && is_prime(p, rng)) return p;
  }
}

Bytes encode_bigint(const BigInt& v) {
  if (v < 0) throw std::invalid_argument("encode_bigint: negative value");
  if (v == 0) return Bytes{0};
  Bytes out((bit_length(v) + 7) / 8);
  BigInt tmp = v;
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = BigInt(tmp & 0xff).convert_to<std::uint8_t>();
    tmp >>= 8;
  }
  return out;
}

Bytes encode_bigint_fixed(const BigInt& v, std::size_t width) {
  Bytes minimal = encode_bigint(v);
  if (minimal.size() > width) throw std::invalid_argument("encode_bigint_fixed: value too wide");
  Bytes out(width, 0);
  std::copy(minimal.begin(), minimal.end(), out.begin() + (width - minimal.size()));
  return out;
}

BigInt decode_bigint(std::span<const std::uint8_t> bytes) {
  BigInt v = 0;
  for (std::uint8_t b : bytes) v = (v << 8) | b;
  return v;
}

}  // namespace rpm::crypto
