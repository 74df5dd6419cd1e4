#pragma once

#include <optional>

#include "rpm/crypto/numbers.hpp"

namespace rpm::crypto {

struct PublicKey {
  BigInt n;
  BigInt e;
  Bytes to_bytes() const;
  static std::optional<PublicKey> from_bytes(std::span<const std::uint8_t> data);
  bool operator==(const PublicKey&) const = default;
  std::size_t modulus_bytes() const;
};

struct PrivateKey {
  BigInt n;
  BigInt d;
};

struct AsymmetricKeyPair {
  PublicKey pub;
  PrivateKey priv;
};

// Deterministic keypair generation from the caller's rng. modulus_bits >= 384
// (the wrapped content key is 256 bits and must fit under the modulus).
AsymmetricKeyPair generate_keypair(Rng& rng, unsigned modulus_bits = 512);

// Hybrid public-key encryption: a fresh 32-byte content key is RSA-wrapped,
// the payload is XORed with an HMAC keystream, and an encrypt-then-MAC tag
// covers the whole ciphertext. Any tampering or a wrong private key fails
// the tag check.
Bytes encrypt(const PublicKey& pub, std::span<const std::uint8_t> plaintext, Rng& rng);
std::optional<Bytes> decrypt(const PrivateKey& priv, std::span<const std::uint8_t> ciphertext);

// Signature over sha256(message). verify returns false (never throws) on
// malformed signatures.
Bytes sign(const PrivateKey& priv, std::span<const std::uint8_t> message);
bool verify(const PublicKey& pub, std::span<const std::uint8_t> message,
            std::span<const std::uint8_t> signature);

}  // namespace rpm::crypto
