#include "rpm/crypto/session.hpp"

namespace rpm::crypto {

SessionKey SessionKey::derive(const BigInt& shared) {
  Digest root = sha256(encode_bigint(shared));
  SessionKey key;
  key.enc_key = hmac_sha256(root, "session-enc");
  key.mac_key = hmac_sha256(root, "session-mac");
  return key;
}

// Record layout: ts u64 | seq u64 | direction u8 | u32 | body | tag(32).
Bytes session_encrypt(const SessionKey& key, std::span<const std::uint8_t> payload,
                      std::uint64_t ts_ms, std::uint64_t seq, std::uint8_t direction) {
  ByteWriter nonce_w;
  nonce_w.u64(ts_ms);
  nonce_w.u64(seq);
  nonce_w.u8(direction);
  Bytes nonce = nonce_w.take();

  Bytes body(payload.begin(), payload.end());
  xor_bytes(body, keystream(key.enc_key, nonce, body.size()));

  ByteWriter w;
  w.raw(nonce);
  w.prefixed(body);
  Bytes head = w.take();
  Digest tag = hmac_sha256(key.mac_key, head);

  ByteWriter out;
  out.raw(head);
  out.raw(tag);
  return out.take();
}

std::optional<SessionPlain> session_decrypt(const SessionKey& key,
                                            std::span<const std::uint8_t> record) {
  try {
    ByteReader r(record);
    SessionPlain plain;
    plain.ts_ms = r.u64();
    plain.seq = r.u64();
    plain.direction = r.u8();
    auto body = r.prefixed();
    auto tag = r.raw(32);
    r.expect_done();

    std::span<const std::uint8_t> head = record.first(record.size() - 32);
    Digest expected = hmac_sha256(key.mac_key, head);
    if (!constant_time_equal(expected, tag)) return std::nullopt;

    Bytes nonce(record.begin(), record.begin() + 17);
    plain.payload.assign(body.begin(), body.end());
    xor_bytes(plain.payload, keystream(key.enc_key, nonce, plain.payload.size()));
    return plain;
  } catch (const WireError&) {
    return std::nullopt;
  }
}

}  // namespace rpm::crypto
