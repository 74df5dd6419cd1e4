#include "rpm/registry/registry.hpp"

#include <algorithm>
#include <utility>

#include "rpm/crypto/digest.hpp"

namespace rpm::registry {

const char* verdict_name(MembershipVerdict v) {
  switch (v) {
    case MembershipVerdict::Valid: return "Valid";
    case MembershipVerdict::Malicious: return "Malicious";
    case MembershipVerdict::AwaitUpdate: return "AwaitUpdate";
    case MembershipVerdict::EscalateToRA: return "EscalateToRA";
  }
  return "?";
}

const char* status_name(PrincipalStatus s) {
  switch (s) {
    case PrincipalStatus::Active: return "Active";
    case PrincipalStatus::Revoked: return "Revoked";
    case PrincipalStatus::Departed: return "Departed";
  }
  return "?";
}

MembershipVerdict verdict_from_hits(bool pcf_hit, bool ncf_hit) {
  if (pcf_hit && !ncf_hit) return MembershipVerdict::Valid;
  if (!pcf_hit && ncf_hit) return MembershipVerdict::Malicious;
  if (!pcf_hit && !ncf_hit) return MembershipVerdict::AwaitUpdate;
  return MembershipVerdict::EscalateToRA;
}

Bytes FilterPair::signed_region() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(role));
  w.u64(epoch);
  w.prefixed(pcf.serialize());
  w.prefixed(ncf.serialize());
  return w.take();
}

Bytes FilterPair::to_bytes() const {
  ByteWriter w;
  w.raw(signed_region());
  w.prefixed(signature);
  return w.take();
}

FilterPair FilterPair::from_bytes(std::span<const std::uint8_t> data) {
  try {
    ByteReader r(data);
    std::uint8_t role_byte = r.u8();
    if (role_byte > 1) throw filter::MalformedSnapshot("bad role");
    std::uint64_t epoch = r.u64();
    auto pcf = filter::CuckooFilter::deserialize(r.prefixed());
    auto ncf = filter::CuckooFilter::deserialize(r.prefixed());
    auto sig = r.prefixed();
    r.expect_done();
    return FilterPair{static_cast<Role>(role_byte), epoch, std::move(pcf), std::move(ncf),
                      Bytes(sig.begin(), sig.end())};
  } catch (const WireError& e) {
    throw filter::MalformedSnapshot(e.what());
  }
}

MembershipVerdict classify(const PseudoId& pid, const FilterPair& pair) {
  Bytes item = pid.to_bytes();
  return verdict_from_hits(pair.pcf.lookup(item), pair.ncf.lookup(item));
}

bool verify_pair(const FilterPair& pair, const crypto::PublicKey& ra_pub,
                 std::optional<std::uint64_t> last_epoch) {
  if (last_epoch && pair.epoch <= *last_epoch) return false;
  return crypto::verify(ra_pub, pair.signed_region(), pair.signature);
}

namespace {
filter::FilterParams sibling_params(filter::FilterParams p) {
  // The negative filter gets an independent hash seed so a collision in one
  // filter is uncorrelated with the other.
  p.hash_seed = splitmix64(p.hash_seed ^ 0xa5a5a5a55a5a5a5aull);
  return p;
}
}  // namespace

RaDirectory::RaDirectory(Config config, const crypto::AsymmetricKeyPair& ra_keys, Rng rng)
    : config_(config),
      ra_keys_(ra_keys),
      rng_(rng),
      pcfs_{filter::CuckooFilter(config.mp_filter), filter::CuckooFilter(config.patient_filter)},
      ncfs_{filter::CuckooFilter(sibling_params(config.mp_filter)),
            filter::CuckooFilter(sibling_params(config.patient_filter))} {}

void RaDirectory::audit(std::string kind, std::string detail) {
  audit_.push_back({audit_.size(), std::move(kind), std::move(detail)});
}

RaDirectory::Principal* RaDirectory::find(const PseudoId& pid) {
  for (auto& p : principals_)
    if (p.pid == pid) return &p;
  return nullptr;
}

const RaDirectory::Principal* RaDirectory::find(const PseudoId& pid) const {
  for (const auto& p : principals_)
    if (p.pid == pid) return &p;
  return nullptr;
}

void RaDirectory::rebuild_filter(Role role, bool positive, filter::FilterParams params) {
  filter::CuckooFilter rebuilt(params);
  PrincipalStatus member_status = positive ? PrincipalStatus::Active : PrincipalStatus::Revoked;
  for (const auto& p : principals_) {
    if (p.role != role || p.status != member_status) continue;
    if (rebuilt.insert(p.pid.to_bytes(), rng_) == filter::InsertResult::FilterFull) {
      // Does not fit at this size: double and start over.
      params.bucket_count *= 2;
      rebuild_filter(role, positive, params);
      return;
    }
  }
  (positive ? pcf(role) : ncf(role)) = std::move(rebuilt);
  audit("rebuild", std::string(role_name(role)) + (positive ? " pcf" : " ncf") + " m=" +
                       std::to_string(params.bucket_count));
}

void RaDirectory::insert_or_grow(Role role, bool positive, const Bytes& item) {
  filter::CuckooFilter& f = positive ? pcf(role) : ncf(role);
  if (f.insert(item, rng_) == filter::InsertResult::Ok) return;
  // FilterFull is absorbed here: grow to double the buckets with a fresh
  // seed and carry the membership over, then place the new item.
  filter::FilterParams params = f.params();
  params.bucket_count *= 2;
  params.hash_seed = rng_.next();
  rebuild_filter(role, positive, params);
  while ((positive ? pcf(role) : ncf(role)).insert(item, rng_) ==
         filter::InsertResult::FilterFull) {
    params.bucket_count *= 2;
    params.hash_seed = rng_.next();
    rebuild_filter(role, positive, params);
  }
}

EnrollResult RaDirectory::enroll(Role role, const std::string& real_identity,
                                 const Credential& cred) {
  for (const auto& p : principals_) {
    if (p.status == PrincipalStatus::Active && p.real_identity == real_identity)
      return {RegistryError::DuplicateRegistration, {}, {}};
  }
  if (auto it = by_username_.find(cred.username); it != by_username_.end()) {
    if (principals_[it->second].status != PrincipalStatus::Departed)
      return {RegistryError::DuplicateRegistration, {}, {}};
  }

  Principal p;
  do {
    p.pid = PseudoId::mint(role, rng_);
  } while (find(p.pid) != nullptr);
  p.role = role;
  p.status = PrincipalStatus::Active;
  p.real_identity = real_identity;
  p.username = cred.username;
  p.salt.resize(16);
  rng_.fill(p.salt);
  Bytes salted = p.salt;
  Bytes pw = to_bytes(cred.password);
  salted.insert(salted.end(), pw.begin(), pw.end());
  p.password_hash = crypto::sha256(salted);
  crypto::AsymmetricKeyPair keys;
  if (config_.issue_principal_keys)
    keys = crypto::generate_keypair(rng_, config_.principal_rsa_bits);
  p.pub = keys.pub;
  p.enroll_seq = enroll_counter_++;

  insert_or_grow(role, true, p.pid.to_bytes());
  principals_.push_back(p);
  by_username_[p.username] = principals_.size() - 1;
  audit("enroll", std::string(role_name(role)) + " " + p.pid.to_hex());
  return {RegistryError::None, p.pid, keys};
}

RegistryError RaDirectory::revoke(const PseudoId& pid) {
  Principal* p = find(pid);
  if (!p || p->status == PrincipalStatus::Departed) return RegistryError::UnknownPid;
  if (p->status == PrincipalStatus::Revoked) return RegistryError::AlreadyRevoked;
  pcf(p->role).erase(pid.to_bytes());
  insert_or_grow(p->role, false, pid.to_bytes());
  p->status = PrincipalStatus::Revoked;
  audit("revoke", pid.to_hex());
  return RegistryError::None;
}

RegistryError RaDirectory::deregister(const PseudoId& pid) {
  Principal* p = find(pid);
  if (!p || p->status == PrincipalStatus::Departed) return RegistryError::UnknownPid;
  if (p->status == PrincipalStatus::Active)
    pcf(p->role).erase(pid.to_bytes());
  else
    ncf(p->role).erase(pid.to_bytes());
  p->status = PrincipalStatus::Departed;

  if (p->role == Role::MedicalProfessional) {
    for (auto it = assignments_.begin(); it != assignments_.end();) {
      if (it->second == pid) {
        pending_reassignment_.push_back(it->first);
        audit("reassign_needed", it->first.to_hex());
        it = assignments_.erase(it);
      } else {
        ++it;
      }
    }
  } else {
    assignments_.erase(pid);
  }
  audit("deregister", pid.to_hex());
  return RegistryError::None;
}

std::optional<PseudoId> RaDirectory::check_credential(const std::string& username,
                                                      const std::string& password) {
  auto it = by_username_.find(username);
  if (it == by_username_.end()) return std::nullopt;
  Principal& p = principals_[it->second];

  Bytes salted = p.salt;
  Bytes pw = to_bytes(password);
  salted.insert(salted.end(), pw.begin(), pw.end());
  crypto::Digest presented = crypto::sha256(salted);
  if (!crypto::constant_time_equal(presented, p.password_hash)) return std::nullopt;
  if (p.status != PrincipalStatus::Active) return std::nullopt;

  MembershipVerdict v = authoritative_verdict(p.pid);
  if (v == MembershipVerdict::EscalateToRA) {
    // The RA's own filters produced a collision for an active principal;
    // resolve it in place instead of denying the login.
    resolve_escalation(p.pid);
    v = authoritative_verdict(p.pid);
  }
  if (v != MembershipVerdict::Valid) return std::nullopt;
  return p.pid;
}

FilterPair RaDirectory::publish_pair(Role role) {
  ++epochs_[static_cast<int>(role)];
  FilterPair pair{role, epochs_[static_cast<int>(role)], pcf(role), ncf(role), {}};
  pair.signature = crypto::sign(ra_keys_.priv, pair.signed_region());
  audit("publish", std::string(role_name(role)) + " epoch " + std::to_string(pair.epoch));
  return pair;
}

MembershipVerdict RaDirectory::authoritative_verdict(const PseudoId& pid) const {
  Bytes item = pid.to_bytes();
  return verdict_from_hits(pcf(pid.role).lookup(item), ncf(pid.role).lookup(item));
}

bool RaDirectory::verdict_matches_status(const Principal& p) const {
  MembershipVerdict v = authoritative_verdict(p.pid);
  switch (p.status) {
    case PrincipalStatus::Active: return v == MembershipVerdict::Valid;
    case PrincipalStatus::Revoked: return v == MembershipVerdict::Malicious;
    case PrincipalStatus::Departed: return v == MembershipVerdict::AwaitUpdate;
  }
  return false;
}

std::optional<FilterPair> RaDirectory::resolve_escalation(const PseudoId& pid) {
  Principal* target = find(pid);
  if (!target) return std::nullopt;
  Role role = target->role;

  // Verdicts that were already correct must stay correct; principals that
  // were themselves colliding are allowed to change (ideally to correct).
  std::vector<const Principal*> same_role;
  std::vector<bool> was_correct;
  for (const auto& p : principals_) {
    if (p.role != role) continue;
    same_role.push_back(&p);
    was_correct.push_back(verdict_matches_status(p));
  }

  auto acceptable = [&] {
    if (!verdict_matches_status(*target)) return false;
    for (std::size_t i = 0; i < same_role.size(); ++i)
      if (was_correct[i] && !verdict_matches_status(*same_role[i])) return false;
    return true;
  };

  for (int attempt = 0; attempt < 64 && !acceptable(); ++attempt) {
    // A membership filter never yields a false negative, so any wrong
    // verdict traces to a spurious hit; reseed each offending filter.
    bool pcf_bad = false, ncf_bad = false;
    for (std::size_t i = 0; i < same_role.size(); ++i) {
      const Principal& p = *same_role[i];
      if (p.pid != pid && !was_correct[i]) continue;
      if (verdict_matches_status(p)) continue;
      Bytes item = p.pid.to_bytes();
      bool pcf_hit = pcf(role).lookup(item);
      bool ncf_hit = ncf(role).lookup(item);
      if (pcf_hit && p.status != PrincipalStatus::Active) pcf_bad = true;
      if (ncf_hit && p.status != PrincipalStatus::Revoked) ncf_bad = true;
    }
    if (pcf_bad) {
      filter::FilterParams params = pcf(role).params();
      params.hash_seed = rng_.next();
      rebuild_filter(role, true, params);
    }
    if (ncf_bad) {
      filter::FilterParams params = ncf(role).params();
      params.hash_seed = rng_.next();
      rebuild_filter(role, false, params);
    }
  }

  audit("escalation_resolved", pid.to_hex());
  return publish_pair(role);
}

std::optional<PrincipalStatus> RaDirectory::status_of(const PseudoId& pid) const {
  const Principal* p = find(pid);
  if (!p) return std::nullopt;
  return p->status;
}

std::optional<crypto::PublicKey> RaDirectory::public_key_of(const PseudoId& pid) const {
  const Principal* p = find(pid);
  if (!p) return std::nullopt;
  return p->pub;
}

std::vector<PrincipalView> RaDirectory::principals() const {
  std::vector<PrincipalView> out;
  out.reserve(principals_.size());
  for (const auto& p : principals_) out.push_back({p.pid, p.status});
  return out;
}

std::optional<PseudoId> RaDirectory::assign_mp(const PseudoId& patient) {
  const Principal* pat = find(patient);
  if (!pat || pat->role != Role::Patient || pat->status != PrincipalStatus::Active)
    return std::nullopt;

  const Principal* best = nullptr;
  std::size_t best_load = 0;
  for (const auto& p : principals_) {
    if (p.role != Role::MedicalProfessional || p.status != PrincipalStatus::Active) continue;
    std::size_t load = 0;
    for (const auto& [pat_pid, mp_pid] : assignments_)
      if (mp_pid == p.pid) ++load;
    if (!best || load < best_load) {
      best = &p;
      best_load = load;
    }
  }
  if (!best) return std::nullopt;
  assignments_[patient] = best->pid;
  audit("assign", patient.to_hex() + " -> " + best->pid.to_hex());
  return best->pid;
}

std::optional<PseudoId> RaDirectory::assigned_mp(const PseudoId& patient) const {
  auto it = assignments_.find(patient);
  if (it == assignments_.end()) return std::nullopt;
  return it->second;
}

std::vector<PseudoId> RaDirectory::patients_assigned_to(const PseudoId& mp) const {
  std::vector<PseudoId> out;
  for (const auto& [pat, m] : assignments_)
    if (m == mp) out.push_back(pat);
  return out;
}

std::vector<PseudoId> RaDirectory::take_reassignments() {
  return std::exchange(pending_reassignment_, {});
}

void RaDirectory::register_sensor(const PseudoId& patient, const std::string& node_id) {
  sensors_[node_id] = patient;
}

std::optional<PseudoId> RaDirectory::patient_for_sensor(const std::string& node_id) const {
  auto it = sensors_.find(node_id);
  if (it == sensors_.end()) return std::nullopt;
  return it->second;
}

RaDirectory::ReportOutcome RaDirectory::report_misbehavior(const std::string& node_id,
                                                           const std::string& rule_id) {
  auto patient = patient_for_sensor(node_id);
  if (!patient) return {RegistryError::UnknownSensor, std::nullopt};
  RegistryError err = revoke(*patient);
  if (err != RegistryError::None) return {err, std::nullopt};
  audit("misbehavior", node_id + " rule " + rule_id + " -> revoked " + patient->to_hex());
  return {RegistryError::None, patient};
}

}  // namespace rpm::registry
