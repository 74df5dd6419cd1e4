#pragma once

#include <variant>
#include <vector>

#include "rpm/crypto/dh.hpp"
#include "rpm/crypto/session.hpp"
#include "rpm/handshake/envelope.hpp"
#include "rpm/registry/registry.hpp"

namespace rpm::handshake {

enum class RejectReason : std::uint8_t {
  StaleTimestamp,
  PeerNotValid,
  BadGroupParams,
  PeerValueOutOfRange,
  AuthFailure,
  ModificationDetected,
  ReplayDetected,
  WrongState,
};

const char* reject_reason_name(RejectReason r);

enum class PatientState : std::uint8_t { Idle, LoggedIn, AwaitingM3, Established, Failed };
enum class MpState : std::uint8_t { Idle, Established, Failed };

const char* patient_state_name(PatientState s);
const char* mp_state_name(MpState s);

struct HandshakeConfig {
  unsigned dh_bits = 16;
  std::uint64_t freshness_window_ms = 2000;
  // Key-confirmation acknowledgment sent by the patient on establishment.
  bool send_key_confirm = true;
  // Test seams: pin the DH group / own secret instead of drawing them.
  std::optional<crypto::DhGroup> fixed_group;
  std::optional<crypto::BigInt> fixed_secret;
};

// State-transition log entry. Security-relevant checks are logged as events
// even when the state does not change, so tests can assert that no session
// establishes without a freshness probe and a membership verdict check.
struct Transition {
  std::uint64_t at_ms = 0;
  std::string from;
  std::string to;
  std::string event;
};

struct Outcome {
  enum class Kind : std::uint8_t { Reply, Established, Paused, Escalate, Reject };
  Kind kind = Kind::Reject;
  std::optional<Envelope> reply;  // accompanies Reply and Established
  std::optional<RejectReason> reason;
  std::optional<registry::MembershipVerdict> peer_verdict;
};

// Direction byte for session records.
inline constexpr std::uint8_t kPatientToMp = 0;
inline constexpr std::uint8_t kMpToPatient = 1;

// Patient side of the three-message handshake:
//   Idle -> LoggedIn -> AwaitingM3 -> Established | Failed.
// A handler rejecting a message (stale, replayed, undecryptable) logs the
// detection but leaves the state machine where it was, so a concurrent
// honest exchange is not killed by injected traffic. Only an abort
// (malicious peer, retry exhaustion, key mismatch) moves to Failed.
class PatientSession {
 public:
  PatientSession(registry::PseudoId self, crypto::AsymmetricKeyPair keys, HandshakeConfig config,
                 Rng rng);

  PatientState state() const { return state_; }
  const registry::PseudoId& self() const { return self_; }
  const std::optional<registry::PseudoId>& peer() const { return peer_; }

  // Credential acceptance by the RA happens out of band; this moves
  // Idle -> LoggedIn. Also used to restart after a professional reassignment.
  void mark_logged_in(std::uint64_t now_ms);

  Outcome handle_m1(const Envelope& env, const registry::FilterPair& mp_pair,
                    std::uint64_t now_ms);
  Outcome handle_m3(const Envelope& env, std::uint64_t now_ms);

  // AwaitUpdate / escalation bookkeeping: the pausing message is stashed and
  // re-evaluated against a fresher filter pair. One retry; the second
  // unresolved attempt aborts.
  bool has_pending() const { return pending_.has_value(); }
  std::optional<registry::PseudoId> pending_peer() const {
    return pending_ ? std::optional(pending_->mp_pid) : std::nullopt;
  }
  std::optional<Outcome> retry_pending(const registry::FilterPair& mp_pair, std::uint64_t now_ms);

  Envelope make_session_data(std::span<const std::uint8_t> payload, std::uint64_t now_ms);
  std::variant<Bytes, RejectReason> receive_session_data(const Envelope& env,
                                                         std::uint64_t now_ms);

  const std::optional<crypto::SessionKey>& session_key() const { return key_; }
  const crypto::BigInt& shared_secret() const { return ks_; }
  const crypto::DhGroup& group() const { return group_; }
  const crypto::BigInt& own_secret() const { return x_; }
  const std::vector<Transition>& transitions() const { return log_; }

 private:
  Outcome process_m1(const M1Interior& m1, std::uint64_t now_ms, bool is_retry);
  void log_event(const std::string& event, std::uint64_t now_ms);
  void move_state(PatientState next, const std::string& event, std::uint64_t now_ms);

  registry::PseudoId self_;
  crypto::AsymmetricKeyPair keys_;
  HandshakeConfig config_;
  Rng rng_;
  PatientState state_ = PatientState::Idle;

  std::optional<registry::PseudoId> peer_;
  crypto::PublicKey peer_pub_;
  crypto::DhGroup group_;
  crypto::BigInt x_;
  crypto::BigInt ks_;
  std::optional<crypto::SessionKey> key_;
  std::uint64_t send_seq_ = 0;

  std::optional<M1Interior> pending_;
  int pending_retries_ = 0;

  std::vector<std::pair<std::uint64_t, std::uint64_t>> seen_;  // (ts, seq) replay cache
  std::vector<Transition> log_;
};

// Professional side: one session object per patient. Idle until a valid M2
// arrives, then Established (or Failed on abort).
class MpSession {
 public:
  MpSession(registry::PseudoId self, registry::PseudoId patient, crypto::AsymmetricKeyPair keys,
            HandshakeConfig config, Rng rng);

  MpState state() const { return state_; }
  const registry::PseudoId& self() const { return self_; }
  const registry::PseudoId& patient() const { return patient_; }

  Outcome handle_m2(const Envelope& env, const registry::FilterPair& patient_pair,
                    std::uint64_t now_ms);

  bool has_pending() const { return pending_.has_value(); }
  std::optional<Outcome> retry_pending(const registry::FilterPair& patient_pair,
                                       std::uint64_t now_ms);

  Envelope make_session_data(std::span<const std::uint8_t> payload, std::uint64_t now_ms);
  std::variant<Bytes, RejectReason> receive_session_data(const Envelope& env,
                                                         std::uint64_t now_ms);

  const std::optional<crypto::SessionKey>& session_key() const { return key_; }
  const crypto::BigInt& shared_secret() const { return ks_; }
  const crypto::BigInt& own_secret() const { return y_; }
  const std::vector<Transition>& transitions() const { return log_; }

 private:
  Outcome process_m2(const M2Interior& m2, std::uint64_t now_ms, bool is_retry);
  void log_event(const std::string& event, std::uint64_t now_ms);
  void move_state(MpState next, const std::string& event, std::uint64_t now_ms);

  registry::PseudoId self_;
  registry::PseudoId patient_;
  crypto::AsymmetricKeyPair keys_;
  HandshakeConfig config_;
  Rng rng_;
  MpState state_ = MpState::Idle;

  crypto::BigInt y_;
  crypto::BigInt ks_;
  std::optional<crypto::SessionKey> key_;
  std::uint64_t send_seq_ = 0;

  std::optional<M2Interior> pending_;
  int pending_retries_ = 0;

  std::vector<std::pair<std::uint64_t, std::uint64_t>> seen_;
  std::vector<Transition> log_;
};

// True when the transition log shows both a freshness probe and a peer
// membership verdict check before any move into an established state.
bool established_after_checks(const std::vector<Transition>& log);

}  // namespace rpm::handshake
