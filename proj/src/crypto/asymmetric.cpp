#include "rpm/crypto/asymmetric.hpp"

#include <stdexcept>

#include "rpm/crypto/digest.hpp"

namespace rpm::crypto {

namespace {
constexpr std::size_t kContentKeyBytes = 32;
constexpr std::size_t kNonceBytes = 16;
constexpr std::size_t kTagBytes = 32;
}  // namespace

Bytes PublicKey::to_bytes() const {
  ByteWriter w;
  w.prefixed(encode_bigint(n));
  w.prefixed(encode_bigint(e));
  return w.take();
}

std::optional<PublicKey> PublicKey::from_bytes(std::span<const std::uint8_t> data) {
  try {
    ByteReader r(data);
    PublicKey k;
    k.n = decode_bigint(r.prefixed());
    k.e = decode_bigint(r.prefixed());
    r.expect_done();
    if (k.n < 2 || k.e < 2) return std::nullopt;
    return k;
  } catch (const WireError&) {
    return std::nullopt;
  }
}

std::size_t PublicKey::modulus_bytes() const { return (bit_length(n) + 7) / 8; }

AsymmetricKeyPair generate_keypair(Rng& rng, unsigned modulus_bits) {
  if (modulus_bits < 384)
    throw std::invalid_argument("generate_keypair: modulus must be at least 384 bits");
  const BigInt e = 65537;
  for (;;) {
    BigInt p = random_prime(rng, modulus_bits / 2);
    BigInt q = random_prime(rng, modulus_bits - modulus_bits / 2);
    if (p == q) continue;
    BigInt n = p * q;
    if (bit_length(n) != modulus_bits) continue;
    BigInt phi = (p - 1) * (q - 1);
    BigInt d = mod_inverse(e, phi);
    if (d == 0) continue;  // gcd(e, phi) != 1
    return {PublicKey{n, e}, PrivateKey{n, d}};
  }
}

// Ciphertext layout: u32 | wrapped key | nonce(16) | u32 | body | tag(32).
Bytes encrypt(const PublicKey& pub, std::span<const std::uint8_t> plaintext, Rng& rng) {
  Bytes content_key(kContentKeyBytes);
  rng.fill(content_key);
  BigInt k = decode_bigint(content_key);
  Bytes wrapped = encode_bigint_fixed(mod_pow(k, pub.e, pub.n), pub.modulus_bytes());

  Digest enc_key = hmac_sha256(content_key, "wrap-enc");
  Digest mac_key = hmac_sha256(content_key, "wrap-mac");

  Bytes nonce(kNonceBytes);
  rng.fill(nonce);

  Bytes body(plaintext.begin(), plaintext.end());
  xor_bytes(body, keystream(enc_key, nonce, body.size()));

  ByteWriter w;
  w.prefixed(wrapped);
  w.raw(nonce);
  w.prefixed(body);
  Bytes head = w.take();
  Digest tag = hmac_sha256(mac_key, head);

  ByteWriter out;
  out.raw(head);
  out.raw(tag);
  return out.take();
}

std::optional<Bytes> decrypt(const PrivateKey& priv, std::span<const std::uint8_t> ciphertext) {
  try {
    ByteReader r(ciphertext);
    auto wrapped = r.prefixed();
    auto nonce = r.raw(kNonceBytes);
    auto body = r.prefixed();
    auto tag = r.raw(kTagBytes);
    r.expect_done();

    BigInt wrapped_int = decode_bigint(wrapped);
    if (wrapped_int >= priv.n) return std::nullopt;
    BigInt k = mod_pow(wrapped_int, priv.d, priv.n);
    if (bit_length(k) > kContentKeyBytes * 8) return std::nullopt;
    Bytes content_key = encode_bigint_fixed(k, kContentKeyBytes);

    Digest mac_key = hmac_sha256(content_key, "wrap-mac");
    std::span<const std::uint8_t> head = ciphertext.first(ciphertext.size() - kTagBytes);
    Digest expected = hmac_sha256(mac_key, head);
    if (!constant_time_equal(expected, tag)) return std::nullopt;

    Digest enc_key = hmac_sha256(content_key, "wrap-enc");
    Bytes plain(body.begin(), body.end());
    xor_bytes(plain, keystream(enc_key, nonce, plain.size()));
    return plain;
  } catch (const WireError&) {
    return std::nullopt;
  }
}

Bytes sign(const PrivateKey& priv, std::span<const std::uint8_t> message) {
  BigInt h = decode_bigint(sha256(message));
  return encode_bigint_fixed(mod_pow(h, priv.d, priv.n), (bit_length(priv.n) + 7) / 8);
}

bool verify(const PublicKey& pub, std::span<const std::uint8_t> message,
            std::span<const std::uint8_t> signature) {
  if (signature.empty() || signature.size() > pub.modulus_bytes()) return false;
  BigInt sig = decode_bigint(signature);
  if (sig >= pub.n) return false;
  return mod_pow(sig, pub.e, pub.n) == decode_bigint(sha256(message));
}

}  // namespace rpm::crypto
