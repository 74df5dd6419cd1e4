#include "rpm/handshake/envelope.hpp"

namespace rpm::handshake {

const char* msg_kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::M1: return "M1";
    case MsgKind::M2: return "M2";
    case MsgKind::M3: return "M3";
    case MsgKind::SessionData: return "SessionData";
    case MsgKind::FilterBroadcast: return "FilterBroadcast";
    case MsgKind::Notification: return "Notification";
  }
  return "?";
}

std::optional<MsgKind> msg_kind_from_name(std::string_view name) {
  for (std::uint8_t v = 1; v <= 6; ++v)
    if (name == msg_kind_name(static_cast<MsgKind>(v))) return static_cast<MsgKind>(v);
  return std::nullopt;
}

Bytes Envelope::to_bytes() const {
  ByteWriter header;
  std::uint8_t flags = (sender ? 1 : 0) | (receiver ? 2 : 0);
  header.u8(flags);
  if (sender) header.raw(sender->to_bytes());
  if (receiver) header.raw(receiver->to_bytes());
  Bytes header_bytes = header.take();

  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind));
  w.u16(static_cast<std::uint16_t>(header_bytes.size()));
  w.raw(header_bytes);
  w.prefixed(ciphertext);
  return w.take();
}

std::optional<Envelope> Envelope::from_bytes(std::span<const std::uint8_t> data) {
  try {
    ByteReader r(data);
    std::uint8_t kind_byte = r.u8();
    if (kind_byte < 1 || kind_byte > 6) return std::nullopt;
    std::uint16_t header_len = r.u16();
    ByteReader header(r.raw(header_len));

    Envelope env;
    env.kind = static_cast<MsgKind>(kind_byte);
    std::uint8_t flags = header.u8();
    if (flags & ~3u) return std::nullopt;
    if (flags & 1) {
      env.sender = registry::PseudoId::from_bytes(header.raw(registry::PseudoId::kWireSize));
      if (!env.sender) return std::nullopt;
    }
    if (flags & 2) {
      env.receiver = registry::PseudoId::from_bytes(header.raw(registry::PseudoId::kWireSize));
      if (!env.receiver) return std::nullopt;
    }
    header.expect_done();

    auto ct = r.prefixed();
    r.expect_done();
    env.ciphertext.assign(ct.begin(), ct.end());
    return env;
  } catch (const WireError&) {
    return std::nullopt;
  }
}

namespace {

void put_bigint(ByteWriter& w, const crypto::BigInt& v) { w.prefixed(crypto::encode_bigint(v)); }
crypto::BigInt get_bigint(ByteReader& r) { return crypto::decode_bigint(r.prefixed()); }

}  // namespace

Bytes encode_m1(const M1Interior& m) {
  ByteWriter w;
  w.raw(m.mp_pid.to_bytes());
  w.prefixed(m.mp_pub.to_bytes());
  w.u64(m.ts_ms);
  return w.take();
}

std::optional<M1Interior> decode_m1(std::span<const std::uint8_t> data) {
  try {
    ByteReader r(data);
    M1Interior m;
    auto pid = registry::PseudoId::from_bytes(r.raw(registry::PseudoId::kWireSize));
    if (!pid || pid->role != registry::Role::MedicalProfessional) return std::nullopt;
    m.mp_pid = *pid;
    auto pub = crypto::PublicKey::from_bytes(r.prefixed());
    if (!pub) return std::nullopt;
    m.mp_pub = *pub;
    m.ts_ms = r.u64();
    r.expect_done();
    return m;
  } catch (const WireError&) {
    return std::nullopt;
  }
}

Bytes encode_m2(const M2Interior& m) {
  ByteWriter w;
  put_bigint(w, m.a);
  put_bigint(w, m.alpha);
  put_bigint(w, m.g);
  w.prefixed(m.patient_pub.to_bytes());
  w.u64(m.ts_ms);
  return w.take();
}

std::optional<M2Interior> decode_m2(std::span<const std::uint8_t> data) {
  try {
    ByteReader r(data);
    M2Interior m;
    m.a = get_bigint(r);
    m.alpha = get_bigint(r);
    m.g = get_bigint(r);
    auto pub = crypto::PublicKey::from_bytes(r.prefixed());
    if (!pub) return std::nullopt;
    m.patient_pub = *pub;
    m.ts_ms = r.u64();
    r.expect_done();
    return m;
  } catch (const WireError&) {
    return std::nullopt;
  }
}

Bytes encode_m3(const M3Interior& m) {
  ByteWriter w;
  put_bigint(w, m.b);
  put_bigint(w, m.ks);
  w.u64(m.ts_ms);
  return w.take();
}

std::optional<M3Interior> decode_m3(std::span<const std::uint8_t> data) {
  try {
    ByteReader r(data);
    M3Interior m;
    m.b = get_bigint(r);
    m.ks = get_bigint(r);
    m.ts_ms = r.u64();
    r.expect_done();
    return m;
  } catch (const WireError&) {
    return std::nullopt;
  }
}

Bytes encode_notification(const NotificationInterior& n) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(n.type));
  w.prefixed(n.payload);
  w.u64(n.ts_ms);
  return w.take();
}

std::optional<NotificationInterior> decode_notification(std::span<const std::uint8_t> data) {
  try {
    ByteReader r(data);
    std::uint8_t type = r.u8();
    if (type < 1 || type > 3) return std::nullopt;
    NotificationInterior n;
    n.type = static_cast<NotificationType>(type);
    auto payload = r.prefixed();
    n.payload.assign(payload.begin(), payload.end());
    n.ts_ms = r.u64();
    r.expect_done();
    return n;
  } catch (const WireError&) {
    return std::nullopt;
  }
}

}  // namespace rpm::handshake
