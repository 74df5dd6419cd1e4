#include "rpm/handshake/session.hpp"

#include <algorithm>
#include <stdexcept>

namespace rpm::handshake {

const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::StaleTimestamp: return "StaleTimestamp";
    case RejectReason::PeerNotValid: return "PeerNotValid";
    case RejectReason::BadGroupParams: return "BadGroupParams";
    case RejectReason::PeerValueOutOfRange: return "PeerValueOutOfRange";
    case RejectReason::AuthFailure: return "AuthFailure";
    case RejectReason::ModificationDetected: return "ModificationDetected";
    case RejectReason::ReplayDetected: return "ReplayDetected";
    case RejectReason::WrongState: return "WrongState";
  }
  return "?";
}

const char* patient_state_name(PatientState s) {
  switch (s) {
    case PatientState::Idle: return "Idle";
    case PatientState::LoggedIn: return "LoggedIn";
    case PatientState::AwaitingM3: return "AwaitingM3";
    case PatientState::Established: return "Established";
    case PatientState::Failed: return "Failed";
  }
  return "?";
}

const char* mp_state_name(MpState s) {
  switch (s) {
    case MpState::Idle: return "Idle";
    case MpState::Established: return "Established";
    case MpState::Failed: return "Failed";
  }
  return "?";
}

namespace {

Outcome reject(RejectReason reason,
               std::optional<registry::MembershipVerdict> verdict = std::nullopt) {
  Outcome o;
  o.kind = Outcome::Kind::Reject;
  o.reason = reason;
  o.peer_verdict = verdict;
  return o;
}

bool cache_contains(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& seen,
                    std::uint64_t ts, std::uint64_t seq) {
  return std::find(seen.begin(), seen.end(), std::make_pair(ts, seq)) != seen.end();
}

}  // namespace

bool established_after_checks(const std::vector<Transition>& log) {
  bool fresh_seen = false, verdict_seen = false;
  for (const auto& t : log) {
    if (t.event.rfind("fresh_ok", 0) == 0) fresh_seen = true;
    if (t.event.rfind("peer_verdict", 0) == 0) verdict_seen = true;
    if (t.to == "Established" && !(fresh_seen && verdict_seen)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// PatientSession

PatientSession::PatientSession(registry::PseudoId self, crypto::AsymmetricKeyPair keys,
                               HandshakeConfig config, Rng rng)
    : self_(self), keys_(std::move(keys)), config_(std::move(config)), rng_(rng) {}

void PatientSession::log_event(const std::string& event, std::uint64_t now_ms) {
  const char* s = patient_state_name(state_);
  log_.push_back({now_ms, s, s, event});
}

void PatientSession::move_state(PatientState next, const std::string& event,
                                std::uint64_t now_ms) {
  log_.push_back({now_ms, patient_state_name(state_), patient_state_name(next), event});
  state_ = next;
}

void PatientSession::mark_logged_in(std::uint64_t now_ms) {
  peer_.reset();
  key_.reset();
  pending_.reset();
  pending_retries_ = 0;
  move_state(PatientState::LoggedIn, "login_accepted", now_ms);
}

Outcome PatientSession::handle_m1(const Envelope& env, const registry::FilterPair& mp_pair,
                                  std::uint64_t now_ms) {
  auto plain = crypto::decrypt(keys_.priv, env.ciphertext);
  if (!plain) {
    log_event("reject=AuthFailure m1_undecryptable", now_ms);
    return reject(RejectReason::AuthFailure);
  }
  auto m1 = decode_m1(*plain);
  if (!m1) {
    log_event("reject=AuthFailure m1_malformed", now_ms);
    return reject(RejectReason::AuthFailure);
  }
  if (!crypto::fresh(m1->ts_ms, now_ms, config_.freshness_window_ms)) {
    log_event("reject=StaleTimestamp m1", now_ms);
    return reject(RejectReason::StaleTimestamp);
  }
  log_event("fresh_ok m1", now_ms);
  if (cache_contains(seen_, m1->ts_ms, 0)) {
    log_event("reject=ReplayDetected m1", now_ms);
    return reject(RejectReason::ReplayDetected);
  }
  if (state_ != PatientState::LoggedIn) {
    log_event("reject=WrongState m1", now_ms);
    return reject(RejectReason::WrongState);
  }
  seen_.emplace_back(m1->ts_ms, 0);

  registry::MembershipVerdict v = registry::classify(m1->mp_pid, mp_pair);
  log_event(std::string("peer_verdict=") + registry::verdict_name(v), now_ms);
  if (v == registry::MembershipVerdict::Malicious) {
    move_state(PatientState::Failed, "abort peer_malicious", now_ms);
    return reject(RejectReason::PeerNotValid, v);
  }
  if (v != registry::MembershipVerdict::Valid) {
    pending_ = *m1;
    Outcome out;
    out.kind = v == registry::MembershipVerdict::EscalateToRA ? Outcome::Kind::Escalate
                                                              : Outcome::Kind::Paused;
    out.peer_verdict = v;
    log_event(v == registry::MembershipVerdict::EscalateToRA ? "escalate" : "paused", now_ms);
    return out;
  }
  return process_m1(*m1, now_ms, /*is_retry=*/false);
}

Outcome PatientSession::process_m1(const M1Interior& m1, std::uint64_t now_ms, bool is_retry) {
  (void)is_retry;
  // Verdict check happens in handle_m1/retry_pending wrappers; this method
  // runs the cryptographic steps once the peer is known Valid.
  group_ = config_.fixed_group ? *config_.fixed_group : crypto::make_group(rng_, config_.dh_bits);
  x_ = config_.fixed_secret ? *config_.fixed_secret : crypto::random_secret(rng_, group_);
  crypto::BigInt a = crypto::dh_public(group_, x_);

  peer_ = m1.mp_pid;
  peer_pub_ = m1.mp_pub;

  M2Interior m2;
  m2.a = a;
  m2.alpha = group_.alpha;
  m2.g = group_.g;
  m2.patient_pub = keys_.pub;
  m2.ts_ms = now_ms;

  Envelope env;
  env.kind = MsgKind::M2;
  env.sender = self_;
  env.receiver = m1.mp_pid;
  env.ciphertext = crypto::encrypt(m1.mp_pub, encode_m2(m2), rng_);

  move_state(PatientState::AwaitingM3, "m2_sent", now_ms);
  Outcome out;
  out.kind = Outcome::Kind::Reply;
  out.reply = env;
  out.peer_verdict = registry::MembershipVerdict::Valid;
  return out;
}

std::optional<Outcome> PatientSession::retry_pending(const registry::FilterPair& mp_pair,
                                                     std::uint64_t now_ms) {
  if (!pending_) return std::nullopt;
  ++pending_retries_;
  M1Interior m1 = *pending_;

  registry::MembershipVerdict v = registry::classify(m1.mp_pid, mp_pair);
  log_event(std::string("peer_verdict=") + registry::verdict_name(v) + " retry", now_ms);
  if (v == registry::MembershipVerdict::Valid) {
    pending_.reset();
    pending_retries_ = 0;
    return process_m1(m1, now_ms, /*is_retry=*/true);
  }
  if (v == registry::MembershipVerdict::Malicious) {
    pending_.reset();
    move_state(PatientState::Failed, "abort peer_malicious", now_ms);
    return reject(RejectReason::PeerNotValid, v);
  }
  if (pending_retries_ >= 2) {
    pending_.reset();
    move_state(PatientState::Failed, "abort retry_exhausted", now_ms);
    return reject(RejectReason::PeerNotValid, v);
  }
  Outcome out;
  out.kind = v == registry::MembershipVerdict::EscalateToRA ? Outcome::Kind::Escalate
                                                            : Outcome::Kind::Paused;
  out.peer_verdict = v;
  return out;
}

Outcome PatientSession::handle_m3(const Envelope& env, std::uint64_t now_ms) {
  auto plain = crypto::decrypt(keys_.priv, env.ciphertext);
  if (!plain) {
    log_event("reject=AuthFailure m3_undecryptable", now_ms);
    return reject(RejectReason::AuthFailure);
  }
  auto m3 = decode_m3(*plain);
  if (!m3) {
    log_event("reject=AuthFailure m3_malformed", now_ms);
    return reject(RejectReason::AuthFailure);
  }
  if (!crypto::fresh(m3->ts_ms, now_ms, config_.freshness_window_ms)) {
    log_event("reject=StaleTimestamp m3", now_ms);
    return reject(RejectReason::StaleTimestamp);
  }
  log_event("fresh_ok m3", now_ms);
  if (cache_contains(seen_, m3->ts_ms, 1)) {
    log_event("reject=ReplayDetected m3", now_ms);
    return reject(RejectReason::ReplayDetected);
  }
  if (state_ != PatientState::AwaitingM3) {
    log_event("reject=WrongState m3", now_ms);
    return reject(RejectReason::WrongState);
  }
  seen_.emplace_back(m3->ts_ms, 1);

  auto shared = crypto::dh_shared(group_, m3->b, x_);
  if (!shared) {
    log_event("reject=PeerValueOutOfRange m3", now_ms);
    return reject(RejectReason::PeerValueOutOfRange);
  }
  // The professional included its view of the session key; a mismatch with
  // the locally computed value means the exchange was tampered with.
  if (*shared != m3->ks) {
    move_state(PatientState::Failed, "reject=ModificationDetected key_mismatch", now_ms);
    return reject(RejectReason::ModificationDetected);
  }

  ks_ = *shared;
  key_ = crypto::SessionKey::derive(ks_);
  move_state(PatientState::Established, "m3_verified", now_ms);

  Outcome out;
  out.kind = Outcome::Kind::Established;
  if (config_.send_key_confirm && peer_) {
    Envelope ack;
    ack.kind = MsgKind::SessionData;
    ack.sender = self_;
    ack.receiver = *peer_;
    ack.ciphertext = crypto::session_encrypt(*key_, to_bytes("key-confirm"), now_ms,
                                             send_seq_++, kPatientToMp);
    out.reply = ack;
  }
  return out;
}

Envelope PatientSession::make_session_data(std::span<const std::uint8_t> payload,
                                           std::uint64_t now_ms) {
  if (!key_ || !peer_) throw std::logic_error("make_session_data before establishment");
  Envelope env;
  env.kind = MsgKind::SessionData;
  env.sender = self_;
  env.receiver = *peer_;
  env.ciphertext = crypto::session_encrypt(*key_, payload, now_ms, send_seq_++, kPatientToMp);
  return env;
}

std::variant<Bytes, RejectReason> PatientSession::receive_session_data(const Envelope& env,
                                                                       std::uint64_t now_ms) {
  if (!key_) {
    log_event("reject=WrongState session_data", now_ms);
    return RejectReason::WrongState;
  }
  auto plain = crypto::session_decrypt(*key_, env.ciphertext);
  if (!plain || plain->direction != kMpToPatient) {
    log_event("reject=AuthFailure session_data", now_ms);
    return RejectReason::AuthFailure;
  }
  if (!crypto::fresh(plain->ts_ms, now_ms, config_.freshness_window_ms)) {
    log_event("reject=StaleTimestamp session_data", now_ms);
    return RejectReason::StaleTimestamp;
  }
  if (cache_contains(seen_, plain->ts_ms, 0x100 + plain->seq)) {
    log_event("reject=ReplayDetected session_data", now_ms);
    return RejectReason::ReplayDetected;
  }
  seen_.emplace_back(plain->ts_ms, 0x100 + plain->seq);
  return plain->payload;
}

// ---------------------------------------------------------------------------
// MpSession

MpSession::MpSession(registry::PseudoId self, registry::PseudoId patient,
                     crypto::AsymmetricKeyPair keys, HandshakeConfig config, Rng rng)
    : self_(self), patient_(patient), keys_(std::move(keys)), config_(std::move(config)),
      rng_(rng) {}

void MpSession::log_event(const std::string& event, std::uint64_t now_ms) {
  const char* s = mp_state_name(state_);
  log_.push_back({now_ms, s, s, event});
}

void MpSession::move_state(MpState next, const std::string& event, std::uint64_t now_ms) {
  log_.push_back({now_ms, mp_state_name(state_), mp_state_name(next), event});
  state_ = next;
}

Outcome MpSession::handle_m2(const Envelope& env, const registry::FilterPair& patient_pair,
                             std::uint64_t now_ms) {
  if (!env.sender || *env.sender != patient_) {
    log_event("reject=AuthFailure m2_sender_mismatch", now_ms);
    return reject(RejectReason::AuthFailure);
  }
  auto plain = crypto::decrypt(keys_.priv, env.ciphertext);
  if (!plain) {
    log_event("reject=AuthFailure m2_undecryptable", now_ms);
    return reject(RejectReason::AuthFailure);
  }
  auto m2 = decode_m2(*plain);
  if (!m2) {
    log_event("reject=AuthFailure m2_malformed", now_ms);
    return reject(RejectReason::AuthFailure);
  }
  if (!crypto::fresh(m2->ts_ms, now_ms, config_.freshness_window_ms)) {
    log_event("reject=StaleTimestamp m2", now_ms);
    return reject(RejectReason::StaleTimestamp);
  }
  log_event("fresh_ok m2", now_ms);
  if (cache_contains(seen_, m2->ts_ms, 2)) {
    log_event("reject=ReplayDetected m2", now_ms);
    return reject(RejectReason::ReplayDetected);
  }
  if (state_ != MpState::Idle) {
    log_event("reject=WrongState m2", now_ms);
    return reject(RejectReason::WrongState);
  }
  seen_.emplace_back(m2->ts_ms, 2);

  registry::MembershipVerdict v = registry::classify(patient_, patient_pair);
  log_event(std::string("peer_verdict=") + registry::verdict_name(v), now_ms);
  if (v == registry::MembershipVerdict::Malicious) {
    move_state(MpState::Failed, "abort peer_malicious", now_ms);
    return reject(RejectReason::PeerNotValid, v);
  }
  if (v != registry::MembershipVerdict::Valid) {
    pending_ = *m2;
    Outcome out;
    out.kind = v == registry::MembershipVerdict::EscalateToRA ? Outcome::Kind::Escalate
                                                              : Outcome::Kind::Paused;
    out.peer_verdict = v;
    log_event(v == registry::MembershipVerdict::EscalateToRA ? "escalate" : "paused", now_ms);
    return out;
  }
  return process_m2(*m2, now_ms, /*is_retry=*/false);
}

Outcome MpSession::process_m2(const M2Interior& m2, std::uint64_t now_ms, bool is_retry) {
  (void)is_retry;
  crypto::DhGroup group{m2.alpha, m2.g};
  if (!crypto::validate_group(group, rng_)) {
    log_event("reject=BadGroupParams m2", now_ms);
    return reject(RejectReason::BadGroupParams);
  }
  y_ = config_.fixed_secret ? *config_.fixed_secret : crypto::random_secret(rng_, group);
  auto shared = crypto::dh_shared(group, m2.a, y_);
  if (!shared) {
    log_event("reject=PeerValueOutOfRange m2", now_ms);
    return reject(RejectReason::PeerValueOutOfRange);
  }

  ks_ = *shared;
  key_ = crypto::SessionKey::derive(ks_);

  M3Interior m3;
  m3.b = crypto::dh_public(group, y_);
  m3.ks = ks_;
  m3.ts_ms = now_ms;

  Envelope env;
  env.kind = MsgKind::M3;
  env.sender = self_;
  env.receiver = patient_;
  env.ciphertext = crypto::encrypt(m2.patient_pub, encode_m3(m3), rng_);

  move_state(MpState::Established, "m3_sent", now_ms);
  Outcome out;
  out.kind = Outcome::Kind::Established;
  out.reply = env;
  out.peer_verdict = registry::MembershipVerdict::Valid;
  return out;
}

std::optional<Outcome> MpSession::retry_pending(const registry::FilterPair& patient_pair,
                                                std::uint64_t now_ms) {
  if (!pending_) return std::nullopt;
  ++pending_retries_;
  M2Interior m2 = *pending_;

  registry::MembershipVerdict v = registry::classify(patient_, patient_pair);
  log_event(std::string("peer_verdict=") + registry::verdict_name(v) + " retry", now_ms);
  if (v == registry::MembershipVerdict::Valid) {
    pending_.reset();
    pending_retries_ = 0;
    return process_m2(m2, now_ms, /*is_retry=*/true);
  }
  if (v == registry::MembershipVerdict::Malicious) {
    pending_.reset();
    move_state(MpState::Failed, "abort peer_malicious", now_ms);
    return reject(RejectReason::PeerNotValid, v);
  }
  if (pending_retries_ >= 2) {
    pending_.reset();
    move_state(MpState::Failed, "abort retry_exhausted", now_ms);
    return reject(RejectReason::PeerNotValid, v);
  }
  Outcome out;
  out.kind = v == registry::MembershipVerdict::EscalateToRA ? Outcome::Kind::Escalate
                                                            : Outcome::Kind::Paused;
  out.peer_verdict = v;
  return out;
}

Envelope MpSession::make_session_data(std::span<const std::uint8_t> payload,
                                      std::uint64_t now_ms) {
  if (!key_) throw std::logic_error("make_session_data before establishment");
  Envelope env;
  env.kind = MsgKind::SessionData;
  env.sender = self_;
  env.receiver = patient_;
  env.ciphertext = crypto::session_encrypt(*key_, payload, now_ms, send_seq_++, kMpToPatient);
  return env;
}

std::variant<Bytes, RejectReason> MpSession::receive_session_data(const Envelope& env,
                                                                  std::uint64_t now_ms) {
  if (!key_) {
    log_event("reject=WrongState session_data", now_ms);
    return RejectReason::WrongState;
  }
  auto plain = crypto::session_decrypt(*key_, env.ciphertext);
  if (!plain || plain->direction != kPatientToMp) {
    log_event("reject=AuthFailure session_data", now_ms);
    return RejectReason::AuthFailure;
  }
  if (!crypto::fresh(plain->ts_ms, now_ms, config_.freshness_window_ms)) {
    log_event("reject=StaleTimestamp session_data", now_ms);
    return RejectReason::StaleTimestamp;
  }
  if (cache_contains(seen_, plain->ts_ms, 0x100 + plain->seq)) {
    log_event("reject=ReplayDetected session_data", now_ms);
    return RejectReason::ReplayDetected;
  }
  seen_.emplace_back(plain->ts_ms, 0x100 + plain->seq);
  return plain->payload;
}

}  // namespace rpm::handshake
