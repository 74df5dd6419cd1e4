#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rpm/crypto/asymmetric.hpp"
#include "rpm/crypto/digest.hpp"
#include "rpm/filter/cuckoo_filter.hpp"
#include "rpm/registry/pseudo_id.hpp"

namespace rpm::registry {

// Four-way membership verdict from the positive/negative filter pair.
//   PCF hit, NCF miss  -> Valid
//   PCF miss, NCF hit  -> Malicious
//   PCF miss, NCF miss -> AwaitUpdate (verifier's pair is stale)
//   PCF hit, NCF hit   -> EscalateToRA (fingerprint collision)
enum class MembershipVerdict : std::uint8_t { Valid, Malicious, AwaitUpdate, EscalateToRA };

const char* verdict_name(MembershipVerdict v);

MembershipVerdict verdict_from_hits(bool pcf_hit, bool ncf_hit);

// Signed snapshot of one role's positive and negative filters.
// Wire layout (little-endian): role u8 | epoch u64 | u32 | pcf | u32 | ncf |
// u32 | signature.
struct FilterPair {
  Role role = Role::Patient;
  std::uint64_t epoch = 0;
  filter::CuckooFilter pcf;
  filter::CuckooFilter ncf;
  Bytes signature;

  Bytes signed_region() const;
  Bytes to_bytes() const;
  static FilterPair from_bytes(std::span<const std::uint8_t> data);  // throws MalformedSnapshot
};

MembershipVerdict classify(const PseudoId& pid, const FilterPair& pair);

// Signature check plus optional epoch monotonicity gate: with last_epoch
// given, a pair whose epoch is not strictly newer is rejected.
bool verify_pair(const FilterPair& pair, const crypto::PublicKey& ra_pub,
                 std::optional<std::uint64_t> last_epoch = std::nullopt);

enum class PrincipalStatus : std::uint8_t { Active, Revoked, Departed };

const char* status_name(PrincipalStatus s);

enum class RegistryError {
  None,
  DuplicateRegistration,
  UnknownPid,
  AlreadyRevoked,
  Denied,
  UnknownSensor,
};

struct Credential {
  std::string username;
  std::string password;
};

struct EnrollResult {
  RegistryError error = RegistryError::None;
  PseudoId pid;
  crypto::AsymmetricKeyPair keys;  // issued to the principal
};

struct AuditEvent {
  std::uint64_t seq = 0;
  std::string kind;
  std::string detail;
};

struct PrincipalView {
  PseudoId pid;
  PrincipalStatus status;
};

// Registration authority directory: the authoritative record of who is
// enrolled, revoked, or departed, plus the filter pairs that broadcast that
// state. All mutation goes through this class; filters never disagree with
// the directory (an Active pid is in the PCF, a Revoked pid in the NCF,
// a Departed pid in neither).
class RaDirectory {
 public:
  struct Config {
    filter::FilterParams mp_filter;
    filter::FilterParams patient_filter;
    unsigned principal_rsa_bits = 512;
    // Lifecycle-only tests can skip per-principal keygen entirely.
    bool issue_principal_keys = true;
  };

  RaDirectory(Config config, const crypto::AsymmetricKeyPair& ra_keys, Rng rng);

  const crypto::PublicKey& ra_public_key() const { return ra_keys_.pub; }

  // Mints a pseudo-identity and keypair; fails with DuplicateRegistration if
  // the real identity or username is already active. A full positive filter
  // triggers a transparent rebuild at double the bucket count.
  EnrollResult enroll(Role role, const std::string& real_identity, const Credential& cred);

  // Active -> Revoked: pid moves from the positive to the negative filter.
  RegistryError revoke(const PseudoId& pid);

  // Voluntary exit, any non-departed state -> Departed: pid leaves both
  // filters. Departing medical professionals free their patients for
  // reassignment (see take_reassignments).
  RegistryError deregister(const PseudoId& pid);

  // Username/password check (salted-hash, constant-time compare). Success
  // additionally requires the pid to classify Valid against the
  // authoritative filters; an RA-side fingerprint collision is resolved
  // internally rather than denying an active principal.
  std::optional<PseudoId> check_credential(const std::string& username,
                                           const std::string& password);

  // Snapshots and signs the current filters for one role; bumps that role's
  // epoch. Verifiers only ever see filter state through published pairs.
  FilterPair publish_pair(Role role);

  // Case-4 resolution: rebuilds whichever filter produced the false positive
  // with a fresh hash seed until the escalated pid classifies correctly and
  // no previously-correct principal's verdict flips, then publishes.
  std::optional<FilterPair> resolve_escalation(const PseudoId& pid);

  MembershipVerdict authoritative_verdict(const PseudoId& pid) const;

  std::optional<PrincipalStatus> status_of(const PseudoId& pid) const;
  std::optional<crypto::PublicKey> public_key_of(const PseudoId& pid) const;
  std::vector<PrincipalView> principals() const;

  // Patient/professional assignment. assign_mp picks the active professional
  // with the fewest patients (ties: enrollment order) and records it.
  std::optional<PseudoId> assign_mp(const PseudoId& patient);
  std::optional<PseudoId> assigned_mp(const PseudoId& patient) const;
  std::vector<PseudoId> patients_assigned_to(const PseudoId& mp) const;
  // Patients whose professional departed and who still need a new one;
  // consuming this list is the caller's signal to re-run assign_mp.
  std::vector<PseudoId> take_reassignments();

  // Sensor inventory: node ids owned by a patient, for misbehavior reports.
  void register_sensor(const PseudoId& patient, const std::string& node_id);
  std::optional<PseudoId> patient_for_sensor(const std::string& node_id) const;

  // Misbehaving-sensor report from a professional: revokes the owning
  // patient. Returns the revoked pid on success.
  struct ReportOutcome {
    RegistryError error = RegistryError::None;
    std::optional<PseudoId> revoked;
  };
  ReportOutcome report_misbehavior(const std::string& node_id, const std::string& rule_id);

  std::uint64_t epoch(Role role) const { return epochs_[static_cast<int>(role)]; }
  const std::vector<AuditEvent>& audit_log() const { return audit_; }

 private:
  struct Principal {
    PseudoId pid;
    Role role;
    PrincipalStatus status;
    std::string real_identity;
    std::string username;
    Bytes salt;
    crypto::Digest password_hash;
    crypto::PublicKey pub;
    std::uint64_t enroll_seq;
  };

  filter::CuckooFilter& pcf(Role role) { return pcfs_[static_cast<int>(role)]; }
  filter::CuckooFilter& ncf(Role role) { return ncfs_[static_cast<int>(role)]; }
  const filter::CuckooFilter& pcf(Role role) const { return pcfs_[static_cast<int>(role)]; }
  const filter::CuckooFilter& ncf(Role role) const { return ncfs_[static_cast<int>(role)]; }

  void insert_or_grow(Role role, bool positive, const Bytes& item);
  void rebuild_filter(Role role, bool positive, filter::FilterParams params);
  bool verdict_matches_status(const Principal& p) const;
  void audit(std::string kind, std::string detail);
  Principal* find(const PseudoId& pid);
  const Principal* find(const PseudoId& pid) const;

  Config config_;
  crypto::AsymmetricKeyPair ra_keys_;
  Rng rng_;
  std::vector<Principal> principals_;
  std::map<std::string, std::size_t> by_username_;
  filter::CuckooFilter pcfs_[2];
  filter::CuckooFilter ncfs_[2];
  std::uint64_t epochs_[2] = {0, 0};
  std::map<PseudoId, PseudoId> assignments_;  // patient -> professional
  std::vector<PseudoId> pending_reassignment_;
  std::map<std::string, PseudoId> sensors_;
  std::vector<AuditEvent> audit_;
  std::uint64_t enroll_counter_ = 0;
};

}  // namespace rpm::registry
