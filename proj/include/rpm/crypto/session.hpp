#pragma once

#include <optional>

#include "rpm/crypto/digest.hpp"
#include "rpm/crypto/numbers.hpp"

namespace rpm::crypto {

// Symmetric keys derived from the Diffie-Hellman shared value. The raw
// shared value is never used directly as key material.
struct SessionKey {
  Digest enc_key{};
  Digest mac_key{};
  static SessionKey derive(const BigInt& shared);
  bool operator==(const SessionKey&) const = default;
};

struct SessionPlain {
  std::uint64_t ts_ms = 0;
  std::uint64_t seq = 0;
  std::uint8_t direction = 0;
  Bytes payload;
};

// Authenticated session record. The timestamp, sequence number, and
// direction byte are bound into both the keystream nonce and the MAC, so a
// flipped bit anywhere in the record fails authentication.
Bytes session_encrypt(const SessionKey& key, std::span<const std::uint8_t> payload,
                      std::uint64_t ts_ms, std::uint64_t seq, std::uint8_t direction);
std::optional<SessionPlain> session_decrypt(const SessionKey& key,
                                            std::span<const std::uint8_t> record);

}  // namespace rpm::crypto
