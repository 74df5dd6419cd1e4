#include "rpm/crypto/dh.hpp"

#include <stdexcept>
#include <vector>

namespace rpm::crypto {

namespace {

// Distinct prime factors by trial division; only called for small values.
std::vector<BigInt> prime_factors(BigInt n) {
  std::vector<BigInt> factors;
  for (BigInt p = 2; p * p <= n; ++p) {
    if (n % p == 0) {
      factors.push_back(p);
      while (n % p == 0) n /= p;
    }
  }
  if (n > 1) factors.push_back(n);
  return factors;
}

constexpr unsigned kTrialDivisionLimitBits = 20;

}  // namespace

bool is_primitive_root(const BigInt& g, const BigInt& alpha) {
  if (g < 2 || g > alpha - 2) return alpha == 3 && g == 2;
  // g is primitive iff g^((alpha-1)/p) != 1 for every prime factor p.
  for (const BigInt& p : prime_factors(alpha - 1))
    if (mod_pow(g, (alpha - 1) / p, alpha) == 1) return false;
  return true;
}

DhGroup make_group(Rng& rng, unsigned bits) {
  if (bits < 4) throw std::invalid_argument("make_group: need at least 4 bits");
  if (bits <= kTrialDivisionLimitBits) {
    BigInt alpha = random_prime(rng, bits);
    for (;;) {
      BigInt g = random_in_range(rng, 2, alpha - 2);
      if (is_primitive_root(g, alpha)) return {alpha, g};
    }
  }
  // Safe prime path: alpha = 2q+1, so the factors of alpha-1 are {2, q} and
  // g is primitive iff g^2 != 1 and g^q != 1 (mod alpha).
  BigInt alpha = random_safe_prime(rng, bits);
  BigInt q = (alpha - 1) / 2;
  for (;;) {
    BigInt g = random_in_range(rng, 2, alpha - 2);
    if (mod_pow(g, 2, alpha) != 1 && mod_pow(g, q, alpha) != 1) return {alpha, g};
  }
}

bool validate_group(const DhGroup& group, Rng& rng) {
  if (group.alpha < 5 || !is_prime(group.alpha, rng)) return false;
  if (group.g < 2 || group.g > group.alpha - 2) return false;
  if (bit_length(group.alpha) <= kTrialDivisionLimitBits)
    return is_primitive_root(group.g, group.alpha);
  // For larger moduli, require the safe-prime structure so primitivity stays
  // checkable with two exponentiations.
  BigInt q = (group.alpha - 1) / 2;
  if (!is_prime(q, rng)) return false;
  return mod_pow(group.g, 2, group.alpha) != 1 && mod_pow(group.g, q, group.alpha) != 1;
}

const DhGroup& well_known_group_2048() {
  // 2048-bit MODP safe prime (RFC 3526 group 14 modulus). The standard
  // generator 2 is not a primitive root of this prime (it generates the
  // order-q subgroup), so a primitive root is scanned for once at first use;
  // the safe-prime structure makes the per-candidate test two mod_pows.
  static const DhGroup group = [] {
    static const char* hex =
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
        "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
        "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
        "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
        "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
        "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
        "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
        "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";
    DhGroup g;
    g.alpha = BigInt("0x" + std::string(hex));
    BigInt q = (g.alpha - 1) / 2;
    for (BigInt cand = 2;; ++cand) {
      if (mod_pow(cand, 2, g.alpha) != 1 && mod_pow(cand, q, g.alpha) != 1) {
        g.g = cand;
        break;
      }
    }
    return g;
  }();
  return group;
}

BigInt random_secret(Rng& rng, const DhGroup& group) {
  return random_in_range(rng, 2, group.alpha - 2);
}

BigInt dh_public(const DhGroup& group, const BigInt& secret) {
  if (secret < 1) throw std::invalid_argument("dh_public: secret must be >= 1");
  return mod_pow(group.g, secret, group.alpha);
}

std::optional<BigInt> dh_shared(const DhGroup& group, const BigInt& peer_public,
                                const BigInt& secret) {
  if (peer_public < 1 || peer_public >= group.alpha) return std::nullopt;
  return mod_pow(peer_public, secret, group.alpha);
}

bool fresh(std::uint64_t ts_ms, std::uint64_t now_ms, std::uint64_t window_ms) {
  std::uint64_t delta = now_ms >= ts_ms ? now_ms - ts_ms : ts_ms - now_ms;
  return delta <= window_ms;
}

}  // namespace rpm::crypto
