#include "rpm/crypto/digest.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cassert>
#include <cstring>

namespace rpm::crypto {

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  std::size_t len = 0;
  int ok = EVP_Q_digest(nullptr, "SHA256", nullptr, data.data(), data.size(), out.data(), &len);
  assert(ok == 1 && len == out.size());
  (void)ok;
  return out;
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data) {
  Digest out{};
  std::size_t len = 0;
  unsigned char* ok = EVP_Q_mac(nullptr, "HMAC", nullptr, "SHA256", nullptr, key.data(),
                                key.size(), data.data(), data.size(), out.data(), out.size(),
                                &len);
  assert(ok != nullptr && len == out.size());
  (void)ok;
  return out;
}

Digest hmac_sha256(std::span<const std::uint8_t> key, std::string_view label) {
  return hmac_sha256(key, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(label.data()), label.size()));
}

Bytes keystream(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                std::size_t len) {
  Bytes out;
  out.reserve(len);
  Bytes block_input(nonce.begin(), nonce.end());
  block_input.resize(nonce.size() + 8);
  for (std::uint64_t counter = 0; out.size() < len; ++counter) {
    for (int i = 0; i < 8; ++i)
      block_input[nonce.size() + i] = static_cast<std::uint8_t>(counter >> (8 * i));
    Digest block = hmac_sha256(key, block_input);
    std::size_t take = std::min(block.size(), len - out.size());
    out.insert(out.end(), block.begin(), block.begin() + take);
  }
  return out;
}

void xor_bytes(std::span<std::uint8_t> data, std::span<const std::uint8_t> pad) {
  assert(pad.size() >= data.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] ^= pad[i];
}

bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

}  // namespace rpm::crypto
