// Acceptance harness: one self-contained check per shipped guarantee, each
// printed as a single pass/fail line. The binary takes the CLI path and the
// scenario directory so the determinism check can spawn real processes.
//
// Every check is deterministic: fixed seeds, fixed tolerances, no wall-clock
// or environment dependence anywhere except the per-check time budgets.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rpm/anomaly/anomaly.hpp"
#include "rpm/handshake/session.hpp"
#include "rpm/registry/registry.hpp"
#include "rpm/simnet/scenario.hpp"

using namespace rpm;

namespace {

std::string g_cli_path;
std::string g_scenario_dir;

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& msg) {
  if (!cond) throw CheckFailure(msg);
}

// ---------------------------------------------------------------------------
// 1. The four (positive-hit, negative-hit) combinations map to exactly one
//    verdict each, both through the hit-pair helper and through classify on
//    real filter pairs whose contents force each combination.

std::string check_verdict_table() {
  using registry::MembershipVerdict;
  expect(registry::verdict_from_hits(true, false) == MembershipVerdict::Valid,
         "hit/miss must be Valid");
  expect(registry::verdict_from_hits(false, true) == MembershipVerdict::Malicious,
         "miss/hit must be Malicious");
  expect(registry::verdict_from_hits(false, false) == MembershipVerdict::AwaitUpdate,
         "miss/miss must be AwaitUpdate");
  expect(registry::verdict_from_hits(true, true) == MembershipVerdict::EscalateToRA,
         "hit/hit must be EscalateToRA");

  Rng mint(17);
  auto pid = registry::PseudoId::mint(registry::Role::Patient, mint);
  for (int pcf_hit = 0; pcf_hit <= 1; ++pcf_hit) {
    for (int ncf_hit = 0; ncf_hit <= 1; ++ncf_hit) {
      filter::CuckooFilter pcf(filter::FilterParams{64, 4, 16, 500, 0xC1});
      filter::CuckooFilter ncf(filter::FilterParams{64, 4, 16, 500, 0xC2});
      Rng ins(5);
      if (pcf_hit) expect(pcf.insert(pid.to_bytes(), ins) == filter::InsertResult::Ok, "pcf insert");
      if (ncf_hit) expect(ncf.insert(pid.to_bytes(), ins) == filter::InsertResult::Ok, "ncf insert");
      registry::FilterPair pair{registry::Role::Patient, 1, pcf, ncf, Bytes{}};
      MembershipVerdict got = registry::classify(pid, pair);
      MembershipVerdict want = registry::verdict_from_hits(pcf_hit != 0, ncf_hit != 0);
      expect(got == want, std::string("classify mismatch at pcf_hit=") + (pcf_hit ? "1" : "0") +
                              " ncf_hit=" + (ncf_hit ? "1" : "0") + ": got " +
                              registry::verdict_name(got));
    }
  }
  return "4 hit combinations, exact verdicts";
}

// ---------------------------------------------------------------------------
// 2. 10^5 insert/lookup rounds spread over 50 seeds, every filter kept below
//    half capacity: a stored item must never be reported absent.

std::string check_no_false_negatives() {
  constexpr int kSeeds = 50;
  constexpr int kRoundsPerSeed = 2000;  // 50 * 2000 = 10^5 rounds
  long long rounds = 0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    filter::CuckooFilter f(
        filter::FilterParams{1024, 4, 16, 500, std::uint64_t(seed) * 0x9e3779b9ull});
    Rng insert_rng(seed);
    Rng item_rng(std::uint64_t(seed) ^ 0xabcdefull);
    std::vector<Bytes> items;
    items.reserve(kRoundsPerSeed);
    for (int k = 0; k < kRoundsPerSeed; ++k) {
      Bytes item(16);
      item_rng.fill(item);
      expect(f.insert(item, insert_rng) == filter::InsertResult::Ok,
             "seed " + std::to_string(seed) + ": insert failed below capacity");
      expect(f.lookup(item),
             "seed " + std::to_string(seed) + ": false negative right after insert");
      items.push_back(std::move(item));
      ++rounds;
    }
    for (const auto& item : items)
      expect(f.lookup(item),
             "seed " + std::to_string(seed) + ": false negative after later inserts");
    expect(f.load_factor() < 0.5, "load factor drifted above the test ceiling");
  }
  return std::to_string(rounds) + " rounds, 0 false negatives";
}

// ---------------------------------------------------------------------------
// 3. At load 0.7 (n=4, f=16) the measured false-positive rate over 10^5
//    absent queries stays within 3x the analytic 2n/2^f bound.

std::string check_fp_bound() {
  filter::FilterParams p{4096, 4, 16, 500, 0x51ab};
  filter::CuckooFilter f(p);
  Rng insert_rng(404);
  const std::size_t target = (f.capacity() * 7 + 9) / 10;  // first count at load >= 0.7
  for (std::size_t k = 0; k < target; ++k)
    expect(f.insert(std::string_view("present-" + std::to_string(k)), insert_rng) ==
               filter::InsertResult::Ok,
           "insert failed at load " + std::to_string(f.load_factor()));
  expect(f.load_factor() >= 0.7, "filter did not reach the target load");

  constexpr int kQueries = 100000;
  int hits = 0;
  for (int k = 0; k < kQueries; ++k)
    if (f.lookup(std::string_view("absent-" + std::to_string(k)))) ++hits;
  double rate = double(hits) / double(kQueries);
  double bound = 3.0 * (2.0 * p.entries_per_bucket) / 65536.0;  // 3.662e-4
  char note[96];
  std::snprintf(note, sizeof note, "fp rate %.2e (%d/%d) <= bound %.2e", rate, hits, kQueries,
                bound);
  expect(rate <= bound, note);
  return note;
}

// ---------------------------------------------------------------------------
// 4. Pinned-hash eviction chain: with m=8, n=4 and buckets 2, 6, 4 full,
//    inserting x relocates x -> bucket 6, a -> bucket 4, c -> bucket 1.

class PinnedHasher final : public filter::Hasher {
 public:
  std::map<std::string, std::uint64_t> buckets;
  std::map<std::string, std::uint64_t> fingerprints;
  std::map<std::uint32_t, std::uint64_t> displacements;

  std::uint64_t bucket_hash(std::span<const std::uint8_t> item) const override {
    return buckets.at(to_string(item));
  }
  std::uint64_t fingerprint_hash(std::span<const std::uint8_t> item) const override {
    return fingerprints.at(to_string(item));
  }
  std::uint64_t displacement_hash(std::uint32_t fingerprint) const override {
    auto it = displacements.find(fingerprint);
    return it == displacements.end() ? 0 : it->second;
  }
};

std::string check_eviction_chain() {
  auto hasher = std::make_shared<PinnedHasher>();
  constexpr std::uint32_t fp_x = 0xA, fp_a = 0xB, fp_c = 0xC;

  hasher->buckets["x"] = 2;
  hasher->fingerprints["x"] = fp_x;
  hasher->displacements[fp_x] = 4;  // 2 xor 4 = 6
  hasher->buckets["a"] = 6;
  hasher->fingerprints["a"] = fp_a;
  hasher->displacements[fp_a] = 2;  // 6 xor 2 = 4
  hasher->buckets["c"] = 4;
  hasher->fingerprints["c"] = fp_c;
  hasher->displacements[fp_c] = 5;  // 4 xor 5 = 1

  // Fillers pin buckets 2, 6 and 4 full; displacement 0 keeps both of each
  // filler's candidate buckets equal, so evicting one never frees a slot.
  std::uint64_t next_fp = 0x100;
  auto fill = [&](const std::string& name, std::uint64_t bucket) {
    hasher->buckets[name] = bucket;
    hasher->fingerprints[name] = next_fp++;
  };
  for (int k = 0; k < 4; ++k) fill("d" + std::to_string(k), 2);
  for (int k = 0; k < 3; ++k) fill("e" + std::to_string(k), 6);
  for (int k = 0; k < 3; ++k) fill("f" + std::to_string(k), 4);

  filter::CuckooFilter f(filter::FilterParams{8, 4, 16, 500, 0}, hasher);
  Rng setup(77);
  auto put = [&](const std::string& item) {
    expect(f.insert(std::string_view(item), setup) == filter::InsertResult::Ok,
           "setup insert failed: " + item);
  };
  put("a");
  for (int k = 0; k < 3; ++k) put("e" + std::to_string(k));
  put("c");
  for (int k = 0; k < 3; ++k) put("f" + std::to_string(k));
  for (int k = 0; k < 4; ++k) put("d" + std::to_string(k));
  expect(f.slot(6, 0) == fp_a && f.slot(4, 0) == fp_c, "setup layout wrong");

  // Rng(3) draws coin()=1 (start at bucket 6) then below(4)=0 twice.
  Rng chain(3);
  expect(f.insert(std::string_view("x"), chain) == filter::InsertResult::Ok, "x insert failed");
  expect(f.slot(6, 0) == fp_x, "x did not land in bucket 6");
  expect(f.slot(4, 0) == fp_a, "a was not displaced into bucket 4");
  expect(f.slot(1, 0) == fp_c, "c was not displaced into bucket 1");
  expect(f.lookup(std::string_view("x")) && f.lookup(std::string_view("a")) &&
             f.lookup(std::string_view("c")),
         "relocated items must stay findable");
  return "x -> bucket 6, a -> bucket 4, c -> bucket 1";
}

// ---------------------------------------------------------------------------
// Shared handshake fixture: one directory, one patient and one professional
// pseudo-identity, published filter pairs. Principal keypairs are supplied by
// the individual checks so they can vary them.

struct HandshakeWorld {
  registry::PseudoId patient_pid;
  registry::PseudoId mp_pid;
  registry::FilterPair mp_pair;
  registry::FilterPair patient_pair;
};

const HandshakeWorld& handshake_world() {
  static HandshakeWorld w = [] {
    Rng ra_rng(7);
    auto ra_keys = crypto::generate_keypair(ra_rng, 512);
    registry::RaDirectory::Config cfg;
    cfg.mp_filter = {64, 4, 16, 500, 0xB1};
    cfg.patient_filter = {64, 4, 16, 500, 0xB2};
    cfg.issue_principal_keys = false;
    registry::RaDirectory dir(cfg, ra_keys, Rng(13));
    auto mp_pid = dir.enroll(registry::Role::MedicalProfessional, "real-mp", {"mp", "pw"}).pid;
    auto patient_pid = dir.enroll(registry::Role::Patient, "real-pat", {"pat", "pw"}).pid;
    auto mp_pair = dir.publish_pair(registry::Role::MedicalProfessional);
    auto patient_pair = dir.publish_pair(registry::Role::Patient);
    return HandshakeWorld{patient_pid, mp_pid, mp_pair, patient_pair};
  }();
  return w;
}

handshake::Envelope make_m1(const crypto::PublicKey& patient_pub, const crypto::PublicKey& mp_pub,
                            std::uint64_t ts_ms, Rng& rng) {
  handshake::M1Interior m1{handshake_world().mp_pid, mp_pub, ts_ms};
  handshake::Envelope env;
  env.kind = handshake::MsgKind::M1;
  env.receiver = handshake_world().patient_pid;
  env.ciphertext = crypto::encrypt(patient_pub, handshake::encode_m1(m1), rng);
  return env;
}

// ---------------------------------------------------------------------------
// 5. 1000 seeded handshakes all agree on the session key, and the small
//    worked exchange (modulus 23, generator 5, secrets 6 and 15) lands on
//    shared value 2, cross-checked by an independent square-and-multiply
//    oracle on native integers.

std::uint64_t pow_mod_u64(std::uint64_t base, std::uint64_t exp, std::uint64_t mod) {
  unsigned __int128 acc = 1, b = base % mod;
  while (exp) {
    if (exp & 1) acc = acc * b % mod;
    b = b * b % mod;
    exp >>= 1;
  }
  return static_cast<std::uint64_t>(acc);
}

std::string check_key_agreement() {
  const auto& w = handshake_world();
  using handshake::Outcome;

  {
    expect(pow_mod_u64(5, 6, 23) == 8, "oracle: 5^6 mod 23 != 8");
    expect(pow_mod_u64(5, 15, 23) == 19, "oracle: 5^15 mod 23 != 19");
    std::uint64_t oracle_ks = pow_mod_u64(19, 6, 23);
    expect(oracle_ks == 2 && pow_mod_u64(8, 15, 23) == oracle_ks,
           "oracle: shared value must be 2 from both sides");

    handshake::HandshakeConfig pc;
    pc.dh_bits = 12;
    pc.fixed_group = crypto::DhGroup{23, 5};
    pc.fixed_secret = 6;
    handshake::HandshakeConfig mc;
    mc.fixed_secret = 15;
    Rng pk(201), mk(202);
    auto patient_keys = crypto::generate_keypair(pk, 384);
    auto mp_keys = crypto::generate_keypair(mk, 384);
    handshake::PatientSession patient(w.patient_pid, patient_keys, pc, Rng(41));
    handshake::MpSession mp(w.mp_pid, w.patient_pid, mp_keys, mc, Rng(42));
    Rng ra_rng(43);
    patient.mark_logged_in(100);
    Outcome o1 = patient.handle_m1(make_m1(patient_keys.pub, mp_keys.pub, 1000, ra_rng),
                                   w.mp_pair, 1100);
    expect(o1.kind == Outcome::Kind::Reply, "worked example: M1 rejected");
    Outcome o2 = mp.handle_m2(*o1.reply, w.patient_pair, 1200);
    expect(o2.kind == Outcome::Kind::Established, "worked example: M2 rejected");
    Outcome o3 = patient.handle_m3(*o2.reply, 1300);
    expect(o3.kind == Outcome::Kind::Established, "worked example: M3 rejected");
    expect(patient.shared_secret() == 2 && mp.shared_secret() == 2,
           "worked example: shared value disagrees with the oracle");
  }

  constexpr int kRuns = 1000;
  constexpr int kKeys = 8;
  std::vector<crypto::AsymmetricKeyPair> patient_keys, mp_keys;
  for (int k = 0; k < kKeys; ++k) {
    Rng pk(500 + k), mk(700 + k);
    patient_keys.push_back(crypto::generate_keypair(pk, 384));
    mp_keys.push_back(crypto::generate_keypair(mk, 384));
  }
  handshake::HandshakeConfig cfg;
  cfg.dh_bits = 12;
  for (int i = 0; i < kRuns; ++i) {
    const auto& pkp = patient_keys[i % kKeys];
    const auto& mkp = mp_keys[(i / kKeys) % kKeys];
    handshake::PatientSession patient(w.patient_pid, pkp, cfg, Rng(10000 + i));
    handshake::MpSession mp(w.mp_pid, w.patient_pid, mkp, cfg, Rng(20000 + i));
    Rng ra_rng(30000 + i);
    std::string run = "run " + std::to_string(i);
    patient.mark_logged_in(100);
    Outcome o1 = patient.handle_m1(make_m1(pkp.pub, mkp.pub, 1000, ra_rng), w.mp_pair, 1100);
    expect(o1.kind == Outcome::Kind::Reply, run + ": M1 rejected");
    Outcome o2 = mp.handle_m2(*o1.reply, w.patient_pair, 1200);
    expect(o2.kind == Outcome::Kind::Established, run + ": M2 rejected");
    Outcome o3 = patient.handle_m3(*o2.reply, 1300);
    expect(o3.kind == Outcome::Kind::Established, run + ": M3 rejected");
    expect(patient.session_key().has_value() && mp.session_key().has_value() &&
               *patient.session_key() == *mp.session_key(),
           run + ": session keys differ");
    expect(patient.shared_secret() == mp.shared_secret(), run + ": shared values differ");
    expect(handshake::established_after_checks(patient.transitions()) &&
               handshake::established_after_checks(mp.transitions()),
           run + ": established without freshness or verdict checks");
  }
  return std::to_string(kRuns) + " handshakes agreed; worked example matches the oracle";
}

// ---------------------------------------------------------------------------
// 6. Attack suite. First an exhaustive single-byte sweep: every ciphertext
//    offset of an honest M1, M2 and M3 is flipped and fed to a receiver,
//    which must reject without leaving its state. Then full simulated runs
//    for the replay, modify and forwarding intruders: each either leaves a
//    detection in the transcript or (forwarding) changes nothing while
//    decrypting nothing.

std::string check_attack_suite() {
  const auto& w = handshake_world();
  using handshake::Outcome;
  using handshake::RejectReason;

  auto rejected = [](const Outcome& o) {
    if (o.kind != Outcome::Kind::Reject || !o.reason.has_value()) return false;
    return *o.reason == RejectReason::AuthFailure || *o.reason == RejectReason::StaleTimestamp ||
           *o.reason == RejectReason::ModificationDetected;
  };

  Rng pk(211), mk(212);
  auto patient_keys = crypto::generate_keypair(pk, 384);
  auto mp_keys = crypto::generate_keypair(mk, 384);
  handshake::HandshakeConfig cfg;
  cfg.dh_bits = 12;

  std::size_t swept = 0;

  handshake::PatientSession patient(w.patient_pid, patient_keys, cfg, Rng(61));
  handshake::MpSession mp(w.mp_pid, w.patient_pid, mp_keys, cfg, Rng(62));
  Rng ra_rng(63);
  patient.mark_logged_in(100);

  handshake::Envelope m1 = make_m1(patient_keys.pub, mp_keys.pub, 1000, ra_rng);
  for (std::size_t off = 0; off < m1.ciphertext.size(); ++off, ++swept) {
    handshake::Envelope tampered = m1;
    tampered.ciphertext[off] ^= 0x5a;
    Outcome out = patient.handle_m1(tampered, w.mp_pair, 1100);
    expect(rejected(out), "M1 offset " + std::to_string(off) + ": tampering not rejected");
    expect(patient.state() == handshake::PatientState::LoggedIn,
           "M1 offset " + std::to_string(off) + ": receiver state moved");
  }
  Outcome o1 = patient.handle_m1(m1, w.mp_pair, 1100);
  expect(o1.kind == Outcome::Kind::Reply, "original M1 rejected after the sweep");

  const handshake::Envelope& m2 = *o1.reply;
  for (std::size_t off = 0; off < m2.ciphertext.size(); ++off, ++swept) {
    handshake::Envelope tampered = m2;
    tampered.ciphertext[off] ^= 0x5a;
    Outcome out = mp.handle_m2(tampered, w.patient_pair, 1200);
    expect(rejected(out), "M2 offset " + std::to_string(off) + ": tampering not rejected");
    expect(mp.state() == handshake::MpState::Idle,
           "M2 offset " + std::to_string(off) + ": receiver state moved");
  }
  Outcome o2 = mp.handle_m2(m2, w.patient_pair, 1200);
  expect(o2.kind == Outcome::Kind::Established, "original M2 rejected after the sweep");

  const handshake::Envelope& m3 = *o2.reply;
  for (std::size_t off = 0; off < m3.ciphertext.size(); ++off, ++swept) {
    handshake::Envelope tampered = m3;
    tampered.ciphertext[off] ^= 0x5a;
    Outcome out = patient.handle_m3(tampered, 1300);
    expect(rejected(out), "M3 offset " + std::to_string(off) + ": tampering not rejected");
    expect(patient.state() == handshake::PatientState::AwaitingM3,
           "M3 offset " + std::to_string(off) + ": receiver state moved");
  }
  Outcome o3 = patient.handle_m3(m3, 1300);
  expect(o3.kind == Outcome::Kind::Established, "original M3 rejected after the sweep");
  expect(patient.session_key().has_value() && mp.session_key().has_value() &&
             *patient.session_key() == *mp.session_key(),
         "post-sweep handshake did not agree on the session key");
  expect(swept >= 300, "sweep covered suspiciously few offsets");

  // Full simulated runs, one per intruder flavor, against an honest baseline.
  simnet::SimConfig base;
  base.name = "attack-honest";
  base.seed = 4242;
  base.mp_count = 1;
  base.patient_count = 1;
  base.duration_ticks = 6000;
  base.latency_ticks = 1;
  base.login_tick = 10;
  base.vitals_count = 2;
  base.vitals_period_ms = 300;
  base.dh_bits = 16;
  base.rsa_bits = 384;

  simnet::RunResult honest = simnet::run_scenario(base);
  expect(honest.summary.established_pairs == 1 && honest.summary.key_agreement,
         "honest baseline run failed to establish");

  auto detections_at_least = [](const simnet::RunSummary& s, const char* reason, int n) {
    auto it = s.detections.find(reason);
    return it != s.detections.end() && it->second >= n;
  };

  {
    simnet::SimConfig c = base;
    c.name = "attack-replay-m2";
    c.intruder.policy = simnet::IntruderPolicy::Replay;
    c.intruder.target_kind = handshake::MsgKind::M2;
    c.intruder.replay_delay_ms = 3000;  // past the freshness window
    simnet::RunResult r = simnet::run_scenario(c);
    expect(detections_at_least(r.summary, "StaleTimestamp", 1),
           "M2 replayed after the window: no StaleTimestamp detection");
    expect(r.summary.intruder_decrypt_successes == 0, "replay intruder decrypted traffic");
  }
  {
    simnet::SimConfig c = base;
    c.name = "attack-replay-data";
    c.intruder.policy = simnet::IntruderPolicy::Replay;
    c.intruder.target_kind = handshake::MsgKind::SessionData;
    c.intruder.replay_delay_ms = 500;  // still fresh; the replay cache must catch it
    simnet::RunResult r = simnet::run_scenario(c);
    expect(detections_at_least(r.summary, "ReplayDetected", 1),
           "session record replayed inside the window: no ReplayDetected detection");
    expect(r.summary.intruder_decrypt_successes == 0, "replay intruder decrypted traffic");
  }
  for (auto kind : {handshake::MsgKind::M1, handshake::MsgKind::M2, handshake::MsgKind::M3}) {
    simnet::SimConfig c = base;
    c.name = std::string("attack-modify-") + handshake::msg_kind_name(kind);
    c.intruder.policy = simnet::IntruderPolicy::ModifyByte;
    c.intruder.target_kind = kind;
    c.intruder.modify_position = 7;
    simnet::RunResult r = simnet::run_scenario(c);
    std::string label = handshake::msg_kind_name(kind);
    expect(detections_at_least(r.summary, "AuthFailure", 1) ||
               detections_at_least(r.summary, "ModificationDetected", 1),
           label + " modified in flight: no detection");
    expect(r.summary.established_pairs == 0,
           label + " modified in flight: a session still established");
    expect(r.summary.intruder_decrypt_successes == 0, "modify intruder decrypted traffic");
  }
  {
    simnet::SimConfig c = base;
    c.name = "attack-mitm";
    c.intruder.policy = simnet::IntruderPolicy::MitmForward;
    simnet::RunResult r = simnet::run_scenario(c);
    expect(r.summary.established_pairs == honest.summary.established_pairs,
           "forwarding intruder changed the establishment outcome");
    expect(r.summary.vitals_roundtrips == honest.summary.vitals_roundtrips,
           "forwarding intruder changed the vitals outcome");
    expect(r.summary.key_agreement, "forwarding intruder broke key agreement");
    expect(r.summary.intruder_decrypt_attempts > 0 && r.summary.intruder_decrypt_successes == 0,
           "forwarding intruder must try and fail to decrypt");
  }
  return std::to_string(swept) + " tampered offsets rejected; replay, modify and forward runs ok";
}

// ---------------------------------------------------------------------------
// 7. Randomized register/revoke/deregister interleavings across both roles:
//    after every step the authoritative verdict of every principal matches
//    its directory status, with collisions repaired through the escalation
//    path before the comparison.

std::string check_lifecycle() {
  using registry::MembershipVerdict;
  using registry::PrincipalStatus;
  using registry::Role;

  Rng key_rng(77);
  auto ra_keys = crypto::generate_keypair(key_rng, 384);

  constexpr int kSeeds = 1000;
  constexpr int kSteps = 25;
  long long checks = 0;
  long long resolutions = 0;

  for (int seed = 1; seed <= kSeeds; ++seed) {
    registry::RaDirectory::Config cfg;
    // Deliberately small fingerprints so collisions actually occur.
    cfg.mp_filter = {16, 4, 8, 500, std::uint64_t(seed) * 2 + 1};
    cfg.patient_filter = {16, 4, 8, 500, std::uint64_t(seed) * 2 + 2};
    cfg.issue_principal_keys = false;
    registry::RaDirectory dir(cfg, ra_keys, Rng(std::uint64_t(seed) ^ 0xabcull));
    Rng ops(std::uint64_t(seed) * 31 + 7);
    int name_counter = 0;

    auto enroll_one = [&](Role role) {
      std::string name = "id-" + std::to_string(seed) + "-" + std::to_string(name_counter++);
      auto res = dir.enroll(role, name, {name, "pw"});
      expect(res.error == registry::RegistryError::None, "enroll failed for " + name);
    };

    auto verify_all = [&] {
      for (const auto& view : dir.principals()) {
        MembershipVerdict want = view.status == PrincipalStatus::Active
                                     ? MembershipVerdict::Valid
                                     : view.status == PrincipalStatus::Revoked
                                           ? MembershipVerdict::Malicious
                                           : MembershipVerdict::AwaitUpdate;
        MembershipVerdict got = dir.authoritative_verdict(view.pid);
        if (got != want) {
          dir.resolve_escalation(view.pid);
          ++resolutions;
          got = dir.authoritative_verdict(view.pid);
        }
        expect(got == want, "seed " + std::to_string(seed) + ": " +
                                registry::status_name(view.status) + " principal classifies " +
                                registry::verdict_name(got));
        ++checks;
      }
    };

    for (int k = 0; k < 2; ++k) enroll_one(Role::MedicalProfessional);
    for (int k = 0; k < 3; ++k) enroll_one(Role::Patient);
    verify_all();

    for (int step = 0; step < kSteps; ++step) {
      auto all = dir.principals();
      switch (ops.below(3)) {
        case 0:
          enroll_one(ops.coin() ? Role::Patient : Role::MedicalProfessional);
          break;
        case 1:
          dir.revoke(all[ops.below(all.size())].pid);  // error on non-Active is fine
          break;
        default:
          dir.deregister(all[ops.below(all.size())].pid);
          break;
      }
      verify_all();
    }
  }
  return std::to_string(checks) + " status checks over " + std::to_string(kSeeds) +
         " interleavings, " + std::to_string(resolutions) + " collisions resolved";
}

// ---------------------------------------------------------------------------
// 8. The rule engine agrees with a brute-force enumeration of the detection
//    predicate on 500 randomized streams, and the fixed blood-pressure case
//    yields exactly one misbehavior report (uncorroborated) or none
//    (corroborated).

using FindingKey = std::tuple<std::string, std::string, std::uint64_t, bool>;

// Brute-force restatement of the detection semantics, kept independent of
// the library: enumerate every sequence window, every rule, every trigger.
std::set<FindingKey> brute_force(std::vector<anomaly::NormalizedReading> readings,
                                 const std::vector<anomaly::CorrelationRule>& rules,
                                 std::size_t window_size) {
  std::set<FindingKey> keys;
  std::stable_sort(readings.begin(), readings.end(),
                   [](const anomaly::NormalizedReading& a, const anomaly::NormalizedReading& b) {
                     return a.raw.ts_ms < b.raw.ts_ms;
                   });
  if (window_size == 0 || readings.size() < window_size) return keys;
  std::size_t step = window_size / 2 == 0 ? 1 : window_size / 2;
  for (std::size_t start = 0; start + window_size <= readings.size(); start += step) {
    for (const auto& rule : rules) {
      for (std::size_t ti = start; ti < start + window_size; ++ti) {
        const anomaly::SensorReading& t = readings[ti].raw;
        if (t.metric != rule.trigger.metric || !rule.trigger.matches(t.value)) continue;
        bool corroborated = false;
        for (std::size_t ri = start; ri < start + window_size; ++ri) {
          const anomaly::SensorReading& r = readings[ri].raw;
          std::uint64_t gap = r.ts_ms > t.ts_ms ? r.ts_ms - t.ts_ms : t.ts_ms - r.ts_ms;
          if (gap > rule.window_ms) continue;
          for (const auto& c : rule.corroborators)
            if (r.metric == c.metric && c.matches(r.value)) corroborated = true;
        }
        bool alert = corroborated ||
                     rule.on_uncorroborated == anomaly::UncorroboratedVerdict::PatientAlert;
        keys.emplace(rule.id, t.node_id, t.ts_ms, alert);
      }
    }
  }
  return keys;
}

std::set<FindingKey> keys_of(const anomaly::DetectOutput& out) {
  std::set<FindingKey> keys;
  for (const auto& r : out.reports) keys.emplace(r.rule_id, r.node_id, r.ts_ms, false);
  for (const auto& a : out.alerts) {
    expect(!a.evidence.empty(), "alert without evidence");
    keys.emplace(a.rule_id, a.evidence.front().node_id, a.ts_ms, true);
  }
  return keys;
}

std::string check_anomaly_oracle() {
  using namespace anomaly;
  MetricTable table = MetricTable::defaults();

  CorrelationRule bp_rule;
  bp_rule.id = "bp-spike-uncorroborated";
  bp_rule.trigger = {"systolic_bp", Direction::Above, 150.0};
  bp_rule.corroborators = {{"motion", Direction::Below, 0.5}};
  bp_rule.window_ms = 5000;
  bp_rule.on_uncorroborated = UncorroboratedVerdict::SensorMisbehaving;

  // Fixed case: a 165 mmHg spike while every motion reading shows activity.
  {
    std::vector<SensorReading> uncorroborated = {
        {"mo-1", "motion", 0.7, 2000},
        {"bp-7", "systolic_bp", 165.0, 3000},
        {"mo-1", "motion", 0.8, 4000},
        {"mo-1", "motion", 0.9, 6000},
    };
    NormalizeResult norm = normalize(uncorroborated, table);
    expect(norm.suspects.empty(), "fixed case: unexpected suspects");
    auto seqs = build_sequences(norm.accepted, 4);
    std::vector<CorrelationRule> rules = {bp_rule};
    DetectOutput out = detect(seqs, rules, table);
    expect(out.reports.size() == 1, "fixed case: expected exactly one misbehavior report, got " +
                                        std::to_string(out.reports.size()));
    expect(out.reports[0].node_id == "bp-7" && out.reports[0].ts_ms == 3000,
           "fixed case: report fingered the wrong reading");
    expect(out.alerts.empty(), "fixed case: unexpected alerts");

    std::vector<SensorReading> corroborated = uncorroborated;
    corroborated[0].value = 0.1;
    corroborated[2].value = 0.2;
    corroborated[3].value = 0.1;
    norm = normalize(corroborated, table);
    seqs = build_sequences(norm.accepted, 4);
    out = detect(seqs, rules, table);
    expect(out.reports.empty(), "corroborated variant: expected zero misbehavior reports, got " +
                                    std::to_string(out.reports.size()));
    expect(out.alerts.size() == 1, "corroborated variant: expected the alert to remain");
  }

  CorrelationRule misbehave = bp_rule;
  misbehave.window_ms = 2000;
  misbehave.corroborators.push_back({"heart_rate", Direction::Above, 120.0});
  CorrelationRule alerting;
  alerting.id = "hypoxia-alert";
  alerting.trigger = {"spo2", Direction::Below, 88.0};
  alerting.corroborators = {{"heart_rate", Direction::Above, 100.0}};
  alerting.window_ms = 1500;
  alerting.on_uncorroborated = UncorroboratedVerdict::PatientAlert;
  std::vector<CorrelationRule> rules = {misbehave, alerting};

  constexpr int kTrials = 500;
  constexpr std::size_t kWindows[] = {4, 6, 9};
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(9000 + t);
    std::size_t window_size = kWindows[t % 3];
    std::vector<SensorReading> raw;
    for (int k = 0; k < 64; ++k) {
      SensorReading r;
      std::uint64_t node = rng.below(2);
      switch (rng.below(4)) {
        case 0:
          r = {"bp-" + std::to_string(node), "systolic_bp", 70.0 + rng.unit_real() * 120.0, 0};
          break;
        case 1:
          r = {"mo-" + std::to_string(node), "motion", rng.unit_real(), 0};
          break;
        case 2:
          r = {"hr-" + std::to_string(node), "heart_rate", 30.0 + rng.unit_real() * 190.0, 0};
          break;
        default:
          r = {"ox-" + std::to_string(node), "spo2", 50.0 + rng.unit_real() * 50.0, 0};
          break;
      }
      r.ts_ms = 400 * std::uint64_t(k) + rng.below(300);
      raw.push_back(std::move(r));
    }
    NormalizeResult norm = normalize(raw, table);
    expect(norm.suspects.empty(), "trial " + std::to_string(t) + ": unexpected suspects");
    auto seqs = build_sequences(norm.accepted, window_size);
    DetectOutput out = detect(seqs, rules, table);
    expect(keys_of(out) == brute_force(norm.accepted, rules, window_size),
           "trial " + std::to_string(t) + ": engine disagrees with brute force");
  }
  return std::to_string(kTrials) + " streams matched; fixed case 1 report / 0 reports";
}

// ---------------------------------------------------------------------------
// 9. Running the CLI twice with identical arguments produces byte-identical
//    transcripts for every shipped scenario file.

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  expect(in.good(), "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string check_determinism() {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(g_scenario_dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  expect(!files.empty(), "no scenario files in " + g_scenario_dir);

  fs::path tmp = fs::temp_directory_path() / "rpm-acceptance-determinism";
  fs::create_directories(tmp);
  fs::path out = tmp / "transcript.ndjson";
  for (const auto& file : files) {
    std::string cmd = "\"" + g_cli_path + "\" scenario-run \"" + file.string() + "\" --out \"" +
                      out.string() + "\" > /dev/null 2>&1";
    std::string name = file.filename().string();
    expect(std::system(cmd.c_str()) == 0, name + ": first run failed");
    std::string first = read_file(out);
    fs::remove(out);
    expect(std::system(cmd.c_str()) == 0, name + ": second run failed");
    std::string second = read_file(out);
    expect(!first.empty(), name + ": empty transcript");
    expect(first == second, name + ": transcripts differ between identical runs");
  }
  fs::remove_all(tmp);
  return std::to_string(files.size()) + " scenarios byte-identical across repeat runs";
}

// ---------------------------------------------------------------------------

struct Criterion {
  const char* label;
  double budget_seconds;  // 0 = no budget enforced
  std::function<std::string()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <path-to-rpm-cli> <scenario-dir>\n");
    return 2;
  }
  g_cli_path = argv[1];
  g_scenario_dir = argv[2];

  const std::vector<Criterion> criteria = {
      {"verdict table exhaustive over filter-hit combinations", 1.0, check_verdict_table},
      {"no false negatives below capacity", 30.0, check_no_false_negatives},
      {"false-positive rate within 3x the analytic bound at load 0.7", 30.0, check_fp_bound},
      {"pinned eviction chain relocates x, a, c exactly", 1.0, check_eviction_chain},
      {"seeded handshakes agree on the session key", 10.0, check_key_agreement},
      {"tampered, replayed and forwarded traffic detected or harmless", 60.0, check_attack_suite},
      {"lifecycle interleavings keep verdicts aligned with status", 60.0, check_lifecycle},
      {"rule engine matches brute-force enumeration", 10.0, check_anomaly_oracle},
      {"repeat scenario runs are byte-identical", 0.0, check_determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& c = criteria[i];
    auto t0 = std::chrono::steady_clock::now();
    std::string note, failure;
    try {
      note = c.fn();
    } catch (const std::exception& e) {
      failure = e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (failure.empty() && c.budget_seconds > 0 && secs > c.budget_seconds) {
      char over[96];
      std::snprintf(over, sizeof over, "exceeded time budget: %.2fs > %.0fs", secs,
                    c.budget_seconds);
      failure = over;
    }
    if (failure.empty()) {
      std::printf("[%zu/9] PASS  %-62s %6.2fs  %s\n", i + 1, c.label, secs, note.c_str());
    } else {
      std::printf("[%zu/9] FAIL  %s: %s\n", i + 1, c.label, failure.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures == 0) {
    std::printf("all 9 criteria passed\n");
    return 0;
  }
  std::printf("%d of 9 criteria failed\n", failures);
  return 1;
}
