#pragma once

#include <optional>

#include "rpm/crypto/asymmetric.hpp"
#include "rpm/registry/pseudo_id.hpp"

namespace rpm::handshake {

enum class MsgKind : std::uint8_t {
  M1 = 1,
  M2 = 2,
  M3 = 3,
  SessionData = 4,
  FilterBroadcast = 5,
  Notification = 6,
};

const char* msg_kind_name(MsgKind k);
std::optional<MsgKind> msg_kind_from_name(std::string_view name);

// Wire unit exchanged over the simulated network:
//   kind u8 | header-length u16 | cleartext header | length u32 | ciphertext
// The cleartext header carries only routing pseudo-identities (flags u8,
// then sender/receiver PIDs when present); everything else rides in the
// ciphertext field. For FilterBroadcast that field is a signed-but-plain
// filter pair rather than an actual ciphertext.
struct Envelope {
  MsgKind kind = MsgKind::M1;
  std::optional<registry::PseudoId> sender;
  std::optional<registry::PseudoId> receiver;
  Bytes ciphertext;

  Bytes to_bytes() const;
  static std::optional<Envelope> from_bytes(std::span<const std::uint8_t> data);
};

// Interior of M1, encrypted to the patient: the assigned professional's
// pseudo-identity and public key, plus the RA's timestamp.
struct M1Interior {
  registry::PseudoId mp_pid;
  crypto::PublicKey mp_pub;
  std::uint64_t ts_ms = 0;
};

// Interior of M2, encrypted to the professional: the patient's DH half-key A
// with the group (alpha, g), the patient's public key, and a timestamp.
struct M2Interior {
  crypto::BigInt a;
  crypto::BigInt alpha;
  crypto::BigInt g;
  crypto::PublicKey patient_pub;
  std::uint64_t ts_ms = 0;
};

// Interior of M3, encrypted to the patient: the professional's half-key B
// and its view of the shared session key, plus a timestamp. The patient
// recomputes the shared key and requires equality.
struct M3Interior {
  crypto::BigInt b;
  crypto::BigInt ks;
  std::uint64_t ts_ms = 0;
};

Bytes encode_m1(const M1Interior& m);
std::optional<M1Interior> decode_m1(std::span<const std::uint8_t> data);
Bytes encode_m2(const M2Interior& m);
std::optional<M2Interior> decode_m2(std::span<const std::uint8_t> data);
Bytes encode_m3(const M3Interior& m);
std::optional<M3Interior> decode_m3(std::span<const std::uint8_t> data);

// Notification interior (encrypted to the receiver).
enum class NotificationType : std::uint8_t {
  Escalation = 1,        // verifier asks the RA to resolve a collision
  MisbehaviorReport = 2, // professional reports a sensor
  Reassignment = 3,      // RA tells a patient their professional changed
};

struct NotificationInterior {
  NotificationType type = NotificationType::Escalation;
  Bytes payload;  // type-specific, typically JSON text
  std::uint64_t ts_ms = 0;
};

Bytes encode_notification(const NotificationInterior& n);
std::optional<NotificationInterior> decode_notification(std::span<const std::uint8_t> data);

}  // namespace rpm::handshake
