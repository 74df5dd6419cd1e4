#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "rpm/bytes.hpp"

namespace rpm::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::string_view label);

// Deterministic keystream: HMAC-SHA256(key, nonce || counter) blocks.
Bytes keystream(std::span<const std::uint8_t> key, std::span<const std::uint8_t> nonce,
                std::size_t len);

// XOR in place helpers for stream encryption.
void xor_bytes(std::span<std::uint8_t> data, std::span<const std::uint8_t> pad);

bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace rpm::crypto
