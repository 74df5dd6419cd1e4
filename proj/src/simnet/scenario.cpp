#include "rpm/simnet/scenario.hpp"

#include <fstream>
#include <queue>
#include <set>
#include <tuple>

#include "rpm/hash.hpp"

namespace rpm::simnet {

const char* intruder_policy_name(IntruderPolicy p) {
  switch (p) {
    case IntruderPolicy::None: return "none";
    case IntruderPolicy::PassiveListen: return "passive_listen";
    case IntruderPolicy::Replay: return "replay";
    case IntruderPolicy::ModifyByte: return "modify_byte";
    case IntruderPolicy::MitmForward: return "mitm_forward";
  }
  return "?";
}

namespace {

IntruderPolicy policy_from_name(const std::string& name) {
  for (int v = 0; v <= 4; ++v) {
    auto p = static_cast<IntruderPolicy>(v);
    if (name == intruder_policy_name(p)) return p;
  }
  throw std::invalid_argument("unknown intruder policy: " + name);
}

}  // namespace

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  SimConfig c;
  c.name = j.value("name", c.name);
  c.seed = j.value("seed", c.seed);
  c.mp_count = j.value("mp_count", c.mp_count);
  c.patient_count = j.value("patient_count", c.patient_count);
  c.duration_ticks = j.value("duration_ticks", c.duration_ticks);
  c.latency_ticks = j.value("latency_ticks", c.latency_ticks);
  c.freshness_window_ms = j.value("freshness_window_ms", c.freshness_window_ms);
  c.broadcast_period_ms = j.value("broadcast_period_ms", c.broadcast_period_ms);
  c.login_tick = j.value("login_tick", c.login_tick);
  c.vitals_count = j.value("vitals_count", c.vitals_count);
  c.vitals_period_ms = j.value("vitals_period_ms", c.vitals_period_ms);
  c.dh_bits = j.value("dh_bits", c.dh_bits);
  c.rsa_bits = j.value("rsa_bits", c.rsa_bits);
  c.key_confirm_ack = j.value("key_confirm_ack", c.key_confirm_ack);
  c.anomaly_window = j.value("anomaly_window", c.anomaly_window);

  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    c.filter_params.bucket_count = f.value("m", c.filter_params.bucket_count);
    c.filter_params.entries_per_bucket = f.value("n", c.filter_params.entries_per_bucket);
    c.filter_params.fingerprint_bits = f.value("f", c.filter_params.fingerprint_bits);
    c.filter_params.max_evictions = f.value("max_evictions", c.filter_params.max_evictions);
  }
  c.filter_params.validate();

  if (j.contains("intruder")) {
    const auto& i = j.at("intruder");
    c.intruder.policy = policy_from_name(i.value("policy", "none"));
    if (i.contains("target_kind")) {
      auto k = handshake::msg_kind_from_name(i.at("target_kind").get<std::string>());
      if (!k) throw std::invalid_argument("unknown intruder target_kind");
      c.intruder.target_kind = k;
    }
    c.intruder.replay_delay_ms = i.value("replay_delay_ms", c.intruder.replay_delay_ms);
    c.intruder.modify_position = i.value("position", c.intruder.modify_position);
    c.intruder.attack_ra_channels = i.value("attack_ra_channels", c.intruder.attack_ra_channels);
  }

  for (const auto& s : j.value("ra_script", nlohmann::json::array())) {
    RaScriptStep step;
    step.at_tick = s.at("at_tick").get<std::uint64_t>();
    step.op = s.at("op").get<std::string>();
    step.target = s.value("target", "");
    c.ra_script.push_back(std::move(step));
  }
  for (const auto& s : j.value("sensor_feed", nlohmann::json::array())) {
    SensorFeedItem item;
    item.at_tick = s.at("at_tick").get<std::uint64_t>();
    item.patient = s.at("patient").get<std::string>();
    item.node_id = s.at("node_id").get<std::string>();
    item.metric = s.at("metric").get<std::string>();
    item.value = s.at("value").get<double>();
    c.sensor_feed.push_back(std::move(item));
  }
  if (j.contains("rules")) c.rules_json = j.at("rules");

  if (c.mp_count < 1 || c.mp_count > 64) throw std::invalid_argument("mp_count out of range");
  if (c.patient_count < 1 || c.patient_count > 64)
    throw std::invalid_argument("patient_count out of range");
  if (c.latency_ticks < 1) throw std::invalid_argument("latency_ticks must be >= 1");
  if (c.login_tick < 2) throw std::invalid_argument("login_tick must be >= 2");
  if (c.duration_ticks <= c.login_tick)
    throw std::invalid_argument("duration_ticks must exceed login_tick");
  if (c.broadcast_period_ms < 1 || c.vitals_period_ms < 1)
    throw std::invalid_argument("periods must be >= 1");
  if (c.dh_bits < 4) throw std::invalid_argument("dh_bits must be >= 4");
  if (c.anomaly_window < 1) throw std::invalid_argument("anomaly_window must be >= 1");
  return c;
}

ScenarioAssertions ScenarioAssertions::from_json(const nlohmann::json& j) {
  ScenarioAssertions a;
  if (j.contains("established_pairs")) a.established_pairs = j.at("established_pairs").get<int>();
  if (j.contains("min_vitals_roundtrips"))
    a.min_vitals_roundtrips = j.at("min_vitals_roundtrips").get<int>();
  if (j.contains("max_intruder_decrypt_successes"))
    a.max_intruder_decrypt_successes = j.at("max_intruder_decrypt_successes").get<int>();
  if (j.contains("max_total_detections"))
    a.max_total_detections = j.at("max_total_detections").get<int>();
  if (j.contains("min_escalations")) a.min_escalations = j.at("min_escalations").get<int>();
  if (j.contains("min_revocations")) a.min_revocations = j.at("min_revocations").get<int>();
  if (j.contains("detections")) {
    // items() must iterate an lvalue; a temporary from value() would dangle.
    for (const auto& [reason, bounds] : j.at("detections").items()) {
      std::optional<int> mn, mx;
      if (bounds.contains("min")) mn = bounds.at("min").get<int>();
      if (bounds.contains("max")) mx = bounds.at("max").get<int>();
      a.detections[reason] = {mn, mx};
    }
  }
  if (j.contains("sequence")) a.sequence = patterns_from_json(j.at("sequence"));
  return a;
}

ScenarioFile ScenarioFile::from_json(const nlohmann::json& j) {
  ScenarioFile f{SimConfig::from_json(j),
                 ScenarioAssertions::from_json(j.value("assertions", nlohmann::json::object()))};
  return f;
}

ScenarioFile ScenarioFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scenario file: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  return from_json(j);
}

nlohmann::ordered_json RunSummary::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["seed"] = seed;
  j["events"] = events;
  j["established_pairs"] = established_pairs;
  j["vitals_roundtrips"] = vitals_roundtrips;
  j["escalations"] = escalations;
  j["revocations"] = revocations;
  j["intruder_decrypt_attempts"] = intruder_decrypt_attempts;
  j["intruder_decrypt_successes"] = intruder_decrypt_successes;
  j["key_agreement"] = key_agreement;
  nlohmann::ordered_json d = nlohmann::ordered_json::object();
  for (const auto& [reason, count] : detections) d[reason] = count;
  j["detections"] = d;
  return j;
}

// ---------------------------------------------------------------------------
// Engine

namespace {

using handshake::Envelope;
using handshake::MsgKind;
using registry::PseudoId;
using registry::Role;

struct Pending {
  std::uint64_t tick = 0;
  std::uint64_t order = 0;
  enum class Kind : std::uint8_t { Script, Login, Broadcast, Vitals, Delivery } kind;
  std::size_t index = 0;  // script step / actor index
  std::string from, to, forward_to, tag;
  Bytes bytes;
};

struct PendingAfter {
  bool operator()(const Pending& a, const Pending& b) const {
    return std::tie(a.tick, a.order) > std::tie(b.tick, b.order);
  }
};

struct PatientActor {
  std::string name;
  bool enrolled = false;
  PseudoId pid;
  crypto::AsymmetricKeyPair keys;
  std::string real_identity, username, password;
  std::unique_ptr<handshake::PatientSession> session;
  std::optional<registry::FilterPair> pair_by_role[2];
  std::optional<std::uint64_t> epoch_by_role[2];
  std::uint32_t vitals_sent = 0;
  bool self_revoked = false;
  bool peer_rejected = false;
  std::vector<bool> feed_sent;  // parallel to config.sensor_feed
};

struct MpActor {
  std::string name;
  bool enrolled = false;
  PseudoId pid;
  crypto::AsymmetricKeyPair keys;
  std::string real_identity, username, password;
  std::map<PseudoId, std::unique_ptr<handshake::MpSession>> sessions;
  std::optional<registry::FilterPair> pair_by_role[2];
  std::optional<std::uint64_t> epoch_by_role[2];
  // Anomaly state: accumulated raw readings per patient and dedup keys for
  // findings already acted upon.
  std::map<PseudoId, std::vector<anomaly::SensorReading>> readings;
  std::set<std::tuple<std::string, std::string, std::uint64_t>> reported;
  std::set<std::tuple<std::string, std::string, std::uint64_t>> alerted;
  std::set<std::tuple<std::string, std::string, std::uint64_t>> suspected;
};

class Engine {
 public:
  Engine(const SimConfig& config, std::span<const Injection> injections)
      : config_(config),
        injections_(injections.begin(), injections.end()),
        injection_fired_(injections_.size(), false),
        root_(config.seed),
        ra_net_rng_(root_.child("ra-net")),
        metric_table_(config.rules_json ? anomaly::metric_table_from_rules_json(*config.rules_json)
                                        : anomaly::MetricTable::defaults()),
        rules_(config.rules_json
                   ? anomaly::rules_from_json(*config.rules_json, metric_table_)
                   : anomaly::rules_from_json(default_rules_json(), metric_table_)) {}

  static nlohmann::json default_rules_json();

  RunResult run();

 private:
  // --- setup -------------------------------------------------------------
  void setup();
  void enroll_mp(std::size_t i, std::uint64_t tick);
  void enroll_patient(std::size_t i, std::uint64_t tick);
  bool scripted_enroll(const std::string& name) const;

  // --- event helpers -------------------------------------------------------
  Event& record(std::uint64_t tick, std::string type);
  void flush_transitions(const std::string& actor, std::vector<handshake::Transition> const& log,
                         std::size_t& cursor, std::uint64_t tick);

  // --- network -------------------------------------------------------------
  void schedule(Pending p, std::uint64_t at_tick);
  void send(const std::string& from, const std::string& to, const Envelope& env,
            std::uint64_t tick);
  void deliver_raw(const std::string& from, const std::string& to, Bytes bytes,
                   std::uint64_t tick, const std::string& tag, const std::string& forward_to);
  void intruder_observe(const Bytes& bytes, std::uint64_t tick);
  bool intruder_targets(MsgKind kind) const;

  // --- handlers ------------------------------------------------------------
  void on_script(const RaScriptStep& step, std::uint64_t tick);
  void on_login(std::size_t patient_index, std::uint64_t tick);
  void send_m1(PatientActor& p, const PseudoId& mp_pid, std::uint64_t tick);
  void on_broadcast(std::uint64_t tick);
  void on_vitals(std::size_t patient_index, std::uint64_t tick);
  void on_delivery(const Pending& d);
  void ra_receive(const Envelope& env, std::uint64_t tick);
  void patient_receive(PatientActor& p, const Envelope& env, const Bytes& wire,
                       std::uint64_t tick);
  void mp_receive(MpActor& m, const Envelope& env, const Bytes& wire, std::uint64_t tick);
  template <typename Actor>
  bool accept_broadcast(Actor& a, const Envelope& env, std::uint64_t tick);
  void patient_outcome(PatientActor& p, const handshake::Outcome& out, MsgKind kind,
                       std::uint64_t tick);
  void mp_outcome(MpActor& m, handshake::MpSession& session, const handshake::Outcome& out,
                  MsgKind kind, std::uint64_t tick);
  void send_escalation(const std::string& actor_name, const PseudoId& sender,
                       const PseudoId& about, Rng& rng, std::uint64_t tick);
  void run_anomaly(MpActor& m, const PseudoId& patient, std::uint64_t tick);
  void broadcast_now(std::uint64_t tick);

  RunSummary summarize() const;

  std::string actor_of(const PseudoId& pid) const {
    auto it = actor_by_pid_.find(pid);
    return it == actor_by_pid_.end() ? std::string("?") : it->second;
  }

  // --- state ---------------------------------------------------------------
  SimConfig config_;
  std::vector<Injection> injections_;
  std::vector<bool> injection_fired_;
  Rng root_;
  Rng ra_net_rng_;
  anomaly::MetricTable metric_table_;
  std::vector<anomaly::CorrelationRule> rules_;

  std::optional<registry::RaDirectory> directory_;
  crypto::AsymmetricKeyPair ra_keys_;
  crypto::AsymmetricKeyPair intruder_keys_;
  std::vector<PatientActor> patients_;
  std::vector<MpActor> mps_;
  std::map<PseudoId, std::string> actor_by_pid_;

  std::priority_queue<Pending, std::vector<Pending>, PendingAfter> queue_;
  std::uint64_t order_counter_ = 0;
  Transcript transcript_;

  Bytes intruder_knowledge_;
  int intruder_attempts_ = 0;
  int intruder_successes_ = 0;
  bool intruder_replayed_ = false;
  bool intruder_modified_ = false;
};

nlohmann::json Engine::default_rules_json() {
  return nlohmann::json::parse(R"({
    "rules": [
      {
        "id": "hypertension-uncorroborated",
        "trigger": {"metric": "systolic_bp", "dir": "above", "threshold": 150},
        "corroborators": [
          {"metric": "motion", "dir": "below", "threshold": 0.5},
          {"metric": "door_open", "dir": "below", "threshold": 0.5}
        ],
        "window_ms": 60000,
        "on_uncorroborated": "sensor_misbehaving"
      },
      {
        "id": "hypoxia-at-rest",
        "trigger": {"metric": "spo2", "dir": "below", "threshold": 90},
        "corroborators": [
          {"metric": "bed_occupancy", "dir": "above", "threshold": 0.5},
          {"metric": "motion", "dir": "below", "threshold": 0.5}
        ],
        "window_ms": 60000,
        "on_uncorroborated": "sensor_misbehaving"
      },
      {
        "id": "tachycardia-at-rest",
        "trigger": {"metric": "heart_rate", "dir": "above", "threshold": 140},
        "corroborators": [{"metric": "motion", "dir": "below", "threshold": 0.5}],
        "window_ms": 60000,
        "on_uncorroborated": "patient_alert"
      }
    ]
  })");
}

Event& Engine::record(std::uint64_t tick, std::string type) {
  Event e;
  e.tick = tick;
  e.seq = transcript_.events.size();
  e.type = std::move(type);
  transcript_.events.push_back(std::move(e));
  return transcript_.events.back();
}

void Engine::flush_transitions(const std::string& actor,
                               std::vector<handshake::Transition> const& log,
                               std::size_t& cursor, std::uint64_t tick) {
  for (; cursor < log.size(); ++cursor) {
    const auto& t = log[cursor];
    if (t.from != t.to) {
      Event& e = record(tick, "state");
      e.from = actor;
      e.state_before = t.from;
      e.state_after = t.to;
      e.detail = t.event;
    } else if (t.event.rfind("peer_verdict=", 0) == 0) {
      Event& e = record(tick, "verdict");
      e.from = actor;
      e.verdicts = t.event.substr(std::string("peer_verdict=").size());
    }
  }
}

bool Engine::scripted_enroll(const std::string& name) const {
  for (const auto& s : config_.ra_script)
    if ((s.op == "enroll_mp" || s.op == "enroll_patient") && s.target == name) return true;
  return false;
}

void Engine::setup() {
  Rng ra_key_rng = root_.child("ra-keys");
  ra_keys_ = crypto::generate_keypair(ra_key_rng, config_.rsa_bits);
  Rng intruder_key_rng = root_.child("intruder-keys");
  intruder_keys_ = crypto::generate_keypair(intruder_key_rng, config_.rsa_bits);

  registry::RaDirectory::Config dcfg;
  dcfg.mp_filter = config_.filter_params;
  dcfg.mp_filter.hash_seed = splitmix64(config_.seed ^ 0x6d703031ull);
  dcfg.patient_filter = config_.filter_params;
  dcfg.patient_filter.hash_seed = splitmix64(config_.seed ^ 0x70743031ull);
  dcfg.principal_rsa_bits = config_.rsa_bits;
  directory_.emplace(dcfg, ra_keys_, root_.child("ra-dir"));

  mps_.resize(config_.mp_count);
  for (std::size_t i = 0; i < mps_.size(); ++i) {
    mps_[i].name = "mp" + std::to_string(i);
    mps_[i].real_identity = "real-name-mp-" + std::to_string(i);
    mps_[i].username = "dr" + std::to_string(i);
    mps_[i].password = "pw-mp-" + std::to_string(i);
  }
  patients_.resize(config_.patient_count);
  for (std::size_t i = 0; i < patients_.size(); ++i) {
    patients_[i].name = "patient" + std::to_string(i);
    patients_[i].real_identity = "real-name-patient-" + std::to_string(i);
    patients_[i].username = "user" + std::to_string(i);
    patients_[i].password = "pw-patient-" + std::to_string(i);
    patients_[i].feed_sent.assign(config_.sensor_feed.size(), false);
  }

  for (std::size_t i = 0; i < mps_.size(); ++i)
    if (!scripted_enroll(mps_[i].name)) enroll_mp(i, 0);
  for (std::size_t i = 0; i < patients_.size(); ++i)
    if (!scripted_enroll(patients_[i].name)) enroll_patient(i, 0);

  for (std::size_t i = 0; i < config_.ra_script.size(); ++i)
    schedule({0, 0, Pending::Kind::Script, i, {}, {}, {}, {}, {}},
             config_.ra_script[i].at_tick);
  for (std::size_t i = 0; i < patients_.size(); ++i)
    schedule({0, 0, Pending::Kind::Login, i, {}, {}, {}, {}, {}}, config_.login_tick);
  for (std::uint64_t t = 0; t < config_.duration_ticks; t += config_.broadcast_period_ms)
    schedule({0, 0, Pending::Kind::Broadcast, 0, {}, {}, {}, {}, {}}, t);
}

void Engine::enroll_mp(std::size_t i, std::uint64_t tick) {
  MpActor& m = mps_[i];
  auto res = directory_->enroll(Role::MedicalProfessional, m.real_identity,
                                {m.username, m.password});
  if (res.error != registry::RegistryError::None) return;
  m.enrolled = true;
  m.pid = res.pid;
  m.keys = res.keys;
  actor_by_pid_[m.pid] = m.name;
  Event& e = record(tick, "registry");
  e.from = "ra";
  e.kind = "enrolled";
  e.to = m.name;
  e.detail = m.pid.to_hex();
}

void Engine::enroll_patient(std::size_t i, std::uint64_t tick) {
  PatientActor& p = patients_[i];
  auto res = directory_->enroll(Role::Patient, p.real_identity, {p.username, p.password});
  if (res.error != registry::RegistryError::None) return;
  p.enrolled = true;
  p.pid = res.pid;
  p.keys = res.keys;
  actor_by_pid_[p.pid] = p.name;

  handshake::HandshakeConfig hcfg;
  hcfg.dh_bits = config_.dh_bits;
  hcfg.freshness_window_ms = config_.freshness_window_ms;
  hcfg.send_key_confirm = config_.key_confirm_ack;
  p.session = std::make_unique<handshake::PatientSession>(p.pid, p.keys, hcfg,
                                                          root_.child(p.name + "-hs"));

  for (const auto& item : config_.sensor_feed)
    if (item.patient == p.name) directory_->register_sensor(p.pid, item.node_id);

  Event& e = record(tick, "registry");
  e.from = "ra";
  e.kind = "enrolled";
  e.to = p.name;
  e.detail = p.pid.to_hex();
}

void Engine::schedule(Pending p, std::uint64_t at_tick) {
  p.tick = at_tick;
  p.order = order_counter_++;
  queue_.push(std::move(p));
}

bool Engine::intruder_targets(MsgKind kind) const {
  if (config_.intruder.target_kind) return kind == *config_.intruder.target_kind;
  return kind == MsgKind::M1 || kind == MsgKind::M2 || kind == MsgKind::M3;
}

void Engine::intruder_observe(const Bytes& bytes, std::uint64_t tick) {
  intruder_knowledge_.insert(intruder_knowledge_.end(), bytes.begin(), bytes.end());
  auto env = Envelope::from_bytes(bytes);
  if (!env) return;
  bool attempted = false;
  bool success = false;
  switch (env->kind) {
    case MsgKind::M1:
    case MsgKind::M2:
    case MsgKind::M3:
    case MsgKind::Notification: {
      attempted = true;
      success = crypto::decrypt(intruder_keys_.priv, env->ciphertext).has_value();
      break;
    }
    case MsgKind::SessionData: {
      attempted = true;
      // No key material: try a key derived from an empty shared value.
      success = crypto::session_decrypt(crypto::SessionKey::derive(0), env->ciphertext)
                    .has_value();
      break;
    }
    case MsgKind::FilterBroadcast:
      break;  // plaintext snapshot; nothing to decrypt
  }
  if (attempted) {
    ++intruder_attempts_;
    if (success) ++intruder_successes_;
    Event& e = record(tick, "intruder");
    e.from = "intruder";
    e.kind = success ? "decrypt_success" : "decrypt_failed";
    e.detail = handshake::msg_kind_name(env->kind);
  }
}

void Engine::send(const std::string& from, const std::string& to, const Envelope& env,
                  std::uint64_t tick) {
  Bytes bytes = env.to_bytes();
  IntruderPolicy policy = config_.intruder.policy;
  bool ra_channel = from == "ra" || to == "ra";
  bool attackable = policy != IntruderPolicy::None && from != "intruder" &&
                    (!ra_channel || config_.intruder.attack_ra_channels);

  if (!attackable) {
    schedule({0, 0, Pending::Kind::Delivery, 0, from, to, {}, {}, std::move(bytes)},
             tick + config_.latency_ticks);
    return;
  }

  if (policy == IntruderPolicy::MitmForward) {
    schedule({0, 0, Pending::Kind::Delivery, 0, from, "intruder", to, {}, std::move(bytes)},
             tick + config_.latency_ticks);
    return;
  }

  intruder_observe(bytes, tick);

  if (policy == IntruderPolicy::Replay && !intruder_replayed_ && intruder_targets(env.kind)) {
    intruder_replayed_ = true;
    Event& e = record(tick, "intruder");
    e.from = "intruder";
    e.kind = "replay_armed";
    e.detail = std::string(handshake::msg_kind_name(env.kind)) + " delay " +
               std::to_string(config_.intruder.replay_delay_ms);
    schedule({0, 0, Pending::Kind::Delivery, 0, "intruder", to, {}, "replayed", bytes},
             tick + config_.latency_ticks + config_.intruder.replay_delay_ms);
  }

  if (policy == IntruderPolicy::ModifyByte && !intruder_modified_ && intruder_targets(env.kind) &&
      !env.ciphertext.empty()) {
    intruder_modified_ = true;
    Envelope tampered = env;
    std::size_t offset = config_.intruder.modify_position % tampered.ciphertext.size();
    tampered.ciphertext[offset] ^= 0xff;
    Event& e = record(tick, "intruder");
    e.from = "intruder";
    e.kind = "modify";
    e.detail = std::string(handshake::msg_kind_name(env.kind)) + " offset " +
               std::to_string(offset);
    schedule({0, 0, Pending::Kind::Delivery, 0, from, to, {}, "modified", tampered.to_bytes()},
             tick + config_.latency_ticks);
    return;  // the original is supplanted in flight
  }

  schedule({0, 0, Pending::Kind::Delivery, 0, from, to, {}, {}, std::move(bytes)},
           tick + config_.latency_ticks);
}

void Engine::broadcast_now(std::uint64_t tick) {
  for (Role role : {Role::MedicalProfessional, Role::Patient}) {
    registry::FilterPair pair = directory_->publish_pair(role);
    Bytes pair_bytes = pair.to_bytes();
    Event& e = record(tick, "registry");
    e.from = "ra";
    e.kind = "publish";
    e.detail = std::string(registry::role_name(role)) + " epoch " + std::to_string(pair.epoch);

    ByteWriter w;
    w.u64(tick);
    w.prefixed(pair_bytes);
    Bytes payload = w.take();

    for (const auto& m : mps_) {
      if (!m.enrolled) continue;
      Envelope env;
      env.kind = MsgKind::FilterBroadcast;
      env.receiver = m.pid;
      env.ciphertext = payload;
      send("ra", m.name, env, tick);
    }
    for (const auto& p : patients_) {
      if (!p.enrolled) continue;
      Envelope env;
      env.kind = MsgKind::FilterBroadcast;
      env.receiver = p.pid;
      env.ciphertext = payload;
      send("ra", p.name, env, tick);
    }
  }
}

void Engine::on_script(const RaScriptStep& step, std::uint64_t tick) {
  auto find_mp = [&](const std::string& name) -> MpActor* {
    for (auto& m : mps_)
      if (m.name == name) return &m;
    return nullptr;
  };
  auto find_patient = [&](const std::string& name) -> PatientActor* {
    for (auto& p : patients_)
      if (p.name == name) return &p;
    return nullptr;
  };

  if (step.op == "publish") {
    broadcast_now(tick);
    return;
  }
  if (step.op == "enroll_mp") {
    for (std::size_t i = 0; i < mps_.size(); ++i)
      if (mps_[i].name == step.target) enroll_mp(i, tick);
    return;
  }
  if (step.op == "enroll_patient") {
    for (std::size_t i = 0; i < patients_.size(); ++i)
      if (patients_[i].name == step.target) enroll_patient(i, tick);
    return;
  }

  PseudoId pid;
  if (MpActor* m = find_mp(step.target)) {
    pid = m->pid;
  } else if (PatientActor* p = find_patient(step.target)) {
    pid = p->pid;
  } else {
    Event& e = record(tick, "registry");
    e.from = "ra";
    e.kind = "script_error";
    e.error = "UnknownActor";
    e.detail = step.op + " " + step.target;
    return;
  }

  if (step.op == "revoke") {
    registry::RegistryError err = directory_->revoke(pid);
    Event& e = record(tick, "registry");
    e.from = "ra";
    e.kind = "revoked";
    e.to = step.target;
    if (err != registry::RegistryError::None) {
      e.kind = "revoke_error";
      e.error = err == registry::RegistryError::AlreadyRevoked ? "AlreadyRevoked" : "UnknownPid";
    }
    return;
  }
  if (step.op == "deregister") {
    registry::RegistryError err = directory_->deregister(pid);
    Event& e = record(tick, "registry");
    e.from = "ra";
    e.kind = "deregistered";
    e.to = step.target;
    if (err != registry::RegistryError::None) {
      e.kind = "deregister_error";
      e.error = "UnknownPid";
    }
    // A departing professional frees their patients; reassign and restart
    // those handshakes with a fresh M1.
    for (const PseudoId& orphan : directory_->take_reassignments()) {
      auto next = directory_->assign_mp(orphan);
      std::string pname = actor_of(orphan);
      PatientActor* p = find_patient(pname);
      if (!next || !p) {
        Event& ev = record(tick, "registry");
        ev.from = "ra";
        ev.kind = "no_mp_available";
        ev.to = pname;
        continue;
      }
      Event& ev = record(tick, "registry");
      ev.from = "ra";
      ev.kind = "reassigned";
      ev.to = pname;
      ev.detail = actor_of(*next);

      handshake::NotificationInterior note;
      note.type = handshake::NotificationType::Reassignment;
      note.payload = to_bytes(nlohmann::json{{"mp", next->to_hex()}}.dump());
      note.ts_ms = tick;
      Envelope env;
      env.kind = MsgKind::Notification;
      env.receiver = orphan;
      env.ciphertext = crypto::encrypt(p->keys.pub, encode_notification(note), ra_net_rng_);
      send("ra", pname, env, tick);
      send_m1(*p, *next, tick);
    }
    return;
  }
  Event& e = record(tick, "registry");
  e.from = "ra";
  e.kind = "script_error";
  e.error = "UnknownOp";
  e.detail = step.op;
}

void Engine::send_m1(PatientActor& p, const PseudoId& mp_pid, std::uint64_t tick) {
  auto mp_pub = directory_->public_key_of(mp_pid);
  if (!mp_pub) return;
  handshake::M1Interior m1;
  m1.mp_pid = mp_pid;
  m1.mp_pub = *mp_pub;
  m1.ts_ms = tick;
  Envelope env;
  env.kind = MsgKind::M1;
  env.receiver = p.pid;
  env.ciphertext = crypto::encrypt(p.keys.pub, encode_m1(m1), ra_net_rng_);
  send("ra", p.name, env, tick);
}

void Engine::on_login(std::size_t patient_index, std::uint64_t tick) {
  PatientActor& p = patients_[patient_index];
  if (!p.enrolled || !p.session) return;

  auto pid = directory_->check_credential(p.username, p.password);
  if (!pid) {
    Event& e = record(tick, "registry");
    e.from = "ra";
    e.to = p.name;
    e.kind = "login_denied";
    e.error = "Denied";
    return;
  }

  std::optional<PseudoId> mp = directory_->assigned_mp(*pid);
  if (mp && directory_->status_of(*mp) != registry::PrincipalStatus::Active) mp.reset();
  if (!mp) mp = directory_->assign_mp(*pid);
  if (!mp) {
    Event& e = record(tick, "registry");
    e.from = "ra";
    e.to = p.name;
    e.kind = "login_no_mp";
    e.error = "Denied";
    return;
  }

  Event& e = record(tick, "registry");
  e.from = "ra";
  e.to = p.name;
  e.kind = "login_accepted";
  e.detail = "assigned " + actor_of(*mp);

  std::size_t cursor = p.session->transitions().size();
  p.session->mark_logged_in(tick);
  flush_transitions(p.name, p.session->transitions(), cursor, tick);
  send_m1(p, *mp, tick);
}

void Engine::on_vitals(std::size_t patient_index, std::uint64_t tick) {
  PatientActor& p = patients_[patient_index];
  if (!p.session || p.session->state() != handshake::PatientState::Established) return;
  if (p.self_revoked || p.peer_rejected || p.vitals_sent >= config_.vitals_count) return;

  // Re-verify the peer against the freshest pair before every send; a
  // revocation published mid-session cuts the channel here.
  const auto& mp_pair = p.pair_by_role[static_cast<int>(Role::MedicalProfessional)];
  if (mp_pair &&
      registry::classify(*p.session->peer(), *mp_pair) == registry::MembershipVerdict::Malicious) {
    p.peer_rejected = true;
    Event& e = record(tick, "detect");
    e.from = p.name;
    e.error = "PeerNotValid";
    e.verdicts = "Malicious";
    e.detail = "peer " + actor_of(*p.session->peer());
    return;
  }

  std::string payload;
  for (std::size_t i = 0; i < config_.sensor_feed.size(); ++i) {
    const auto& item = config_.sensor_feed[i];
    if (item.patient != p.name || p.feed_sent[i] || item.at_tick > tick) continue;
    p.feed_sent[i] = true;
    anomaly::SensorReading r{item.node_id, item.metric, item.value, item.at_tick};
    payload += anomaly::reading_to_json(r).dump();
    payload += '\n';
  }
  if (payload.empty()) {
    anomaly::SensorReading r{p.name + "-hr", "heart_rate", 75.0, tick};
    payload = anomaly::reading_to_json(r).dump() + "\n";
  }

  Envelope env = p.session->make_session_data(to_bytes(payload), tick);
  ++p.vitals_sent;
  send(p.name, actor_of(*p.session->peer()), env, tick);
  if (p.vitals_sent < config_.vitals_count)
    schedule({0, 0, Pending::Kind::Vitals, patient_index, {}, {}, {}, {}, {}},
             tick + config_.vitals_period_ms);
}

void Engine::send_escalation(const std::string& actor_name, const PseudoId& sender,
                             const PseudoId& about, Rng& rng, std::uint64_t tick) {
  Event& e = record(tick, "note");
  e.from = actor_name;
  e.kind = "escalation";
  e.verdicts = "EscalateToRA";
  e.detail = about.to_hex();

  handshake::NotificationInterior note;
  note.type = handshake::NotificationType::Escalation;
  note.payload = to_bytes(nlohmann::json{{"pid", about.to_hex()}}.dump());
  note.ts_ms = tick;
  Envelope env;
  env.kind = MsgKind::Notification;
  env.sender = sender;
  env.ciphertext = crypto::encrypt(ra_keys_.pub, encode_notification(note), rng);
  send(actor_name, "ra", env, tick);
}

void Engine::patient_outcome(PatientActor& p, const handshake::Outcome& out, MsgKind kind,
                             std::uint64_t tick) {
  using Kind = handshake::Outcome::Kind;
  switch (out.kind) {
    case Kind::Reply:
      if (out.reply) send(p.name, actor_of(*out.reply->receiver), *out.reply, tick);
      break;
    case Kind::Established: {
      Event& e = record(tick, "note");
      e.from = p.name;
      e.kind = "established";
      e.detail = "peer " + actor_of(*p.session->peer());
      if (out.reply) send(p.name, actor_of(*out.reply->receiver), *out.reply, tick);
      schedule({0, 0, Pending::Kind::Vitals,
                static_cast<std::size_t>(&p - patients_.data()), {}, {}, {}, {}, {}},
               tick + config_.vitals_period_ms);
      break;
    }
    case Kind::Paused: {
      Event& e = record(tick, "note");
      e.from = p.name;
      e.kind = "paused";
      e.verdicts = "AwaitUpdate";
      break;
    }
    case Kind::Escalate: {
      auto about = p.session->pending_peer();
      if (about) send_escalation(p.name, p.pid, *about, ra_net_rng_, tick);
      break;
    }
    case Kind::Reject: {
      Event& e = record(tick, "detect");
      e.from = p.name;
      e.kind = handshake::msg_kind_name(kind);
      e.error = handshake::reject_reason_name(*out.reason);
      if (out.peer_verdict) e.verdicts = registry::verdict_name(*out.peer_verdict);
      break;
    }
  }
}

void Engine::mp_outcome(MpActor& m, handshake::MpSession& session, const handshake::Outcome& out,
                        MsgKind kind, std::uint64_t tick) {
  using Kind = handshake::Outcome::Kind;
  switch (out.kind) {
    case Kind::Reply:
      if (out.reply) send(m.name, actor_of(*out.reply->receiver), *out.reply, tick);
      break;
    case Kind::Established: {
      Event& e = record(tick, "note");
      e.from = m.name;
      e.kind = "established";
      e.detail = "peer " + actor_of(session.patient());
      if (out.reply) send(m.name, actor_of(*out.reply->receiver), *out.reply, tick);
      break;
    }
    case Kind::Paused: {
      Event& e = record(tick, "note");
      e.from = m.name;
      e.kind = "paused";
      e.verdicts = "AwaitUpdate";
      break;
    }
    case Kind::Escalate:
      send_escalation(m.name, m.pid, session.patient(), ra_net_rng_, tick);
      break;
    case Kind::Reject: {
      Event& e = record(tick, "detect");
      e.from = m.name;
      e.kind = handshake::msg_kind_name(kind);
      e.error = handshake::reject_reason_name(*out.reason);
      if (out.peer_verdict) e.verdicts = registry::verdict_name(*out.peer_verdict);
      break;
    }
  }
}

template <typename Actor>
bool Engine::accept_broadcast(Actor& a, const Envelope& env, std::uint64_t tick) {
  try {
    ByteReader r(env.ciphertext);
    std::uint64_t ts = r.u64();
    auto pair_bytes = r.prefixed();
    r.expect_done();
    if (!crypto::fresh(ts, tick, config_.freshness_window_ms)) {
      Event& e = record(tick, "detect");
      e.from = a.name;
      e.kind = "FilterBroadcast";
      e.error = "StaleTimestamp";
      return false;
    }
    registry::FilterPair pair = registry::FilterPair::from_bytes(pair_bytes);
    if (!registry::verify_pair(pair, ra_keys_.pub)) {
      Event& e = record(tick, "detect");
      e.from = a.name;
      e.kind = "FilterBroadcast";
      e.error = "BadSignature";
      return false;
    }
    int role = static_cast<int>(pair.role);
    if (a.epoch_by_role[role] && pair.epoch <= *a.epoch_by_role[role]) {
      Event& e = record(tick, "detect");
      e.from = a.name;
      e.kind = "FilterBroadcast";
      e.error = "EpochRegression";
      return false;
    }
    a.epoch_by_role[role] = pair.epoch;
    a.pair_by_role[role] = std::move(pair);
    return true;
  } catch (const std::exception&) {
    Event& e = record(tick, "detect");
    e.from = a.name;
    e.kind = "FilterBroadcast";
    e.error = "Malformed";
    return false;
  }
}

void Engine::patient_receive(PatientActor& p, const Envelope& env, const Bytes& wire,
                             std::uint64_t tick) {
  (void)wire;
  if (!p.session) return;
  std::size_t cursor = p.session->transitions().size();
  switch (env.kind) {
    case MsgKind::M1: {
      const auto& mp_pair = p.pair_by_role[static_cast<int>(Role::MedicalProfessional)];
      if (!mp_pair) {
        Event& e = record(tick, "detect");
        e.from = p.name;
        e.error = "WrongState";
        e.detail = "no filter pair yet";
        break;
      }
      auto out = p.session->handle_m1(env, *mp_pair, tick);
      flush_transitions(p.name, p.session->transitions(), cursor, tick);
      patient_outcome(p, out, MsgKind::M1, tick);
      return;
    }
    case MsgKind::M3: {
      auto out = p.session->handle_m3(env, tick);
      flush_transitions(p.name, p.session->transitions(), cursor, tick);
      patient_outcome(p, out, MsgKind::M3, tick);
      return;
    }
    case MsgKind::SessionData: {
      auto res = p.session->receive_session_data(env, tick);
      flush_transitions(p.name, p.session->transitions(), cursor, tick);
      if (std::holds_alternative<handshake::RejectReason>(res)) {
        Event& e = record(tick, "detect");
        e.from = p.name;
        e.kind = "SessionData";
        e.error = handshake::reject_reason_name(std::get<handshake::RejectReason>(res));
        return;
      }
      std::string payload = to_string(std::get<Bytes>(res));
      Event& e = record(tick, "note");
      e.from = p.name;
      e.kind = payload == "ack" ? "vitals_roundtrip" : "session_data";
      return;
    }
    case MsgKind::FilterBroadcast: {
      if (!accept_broadcast(p, env, tick)) return;
      const auto& own_pair = p.pair_by_role[static_cast<int>(Role::Patient)];
      if (own_pair && !p.self_revoked) {
        auto v = registry::classify(p.pid, *own_pair);
        if (v == registry::MembershipVerdict::Malicious) {
          p.self_revoked = true;
          Event& e = record(tick, "verdict");
          e.from = p.name;
          e.kind = "self";
          e.verdicts = "Malicious";
        }
      }
      const auto& mp_pair = p.pair_by_role[static_cast<int>(Role::MedicalProfessional)];
      if (mp_pair && p.session->has_pending()) {
        auto out = p.session->retry_pending(*mp_pair, tick);
        flush_transitions(p.name, p.session->transitions(), cursor, tick);
        if (out) patient_outcome(p, *out, MsgKind::M1, tick);
      }
      return;
    }
    case MsgKind::Notification: {
      auto plain = crypto::decrypt(p.keys.priv, env.ciphertext);
      auto note = plain ? handshake::decode_notification(*plain) : std::nullopt;
      if (!note) {
        Event& e = record(tick, "detect");
        e.from = p.name;
        e.kind = "Notification";
        e.error = "AuthFailure";
        return;
      }
      if (note->type == handshake::NotificationType::Reassignment) {
        Event& e = record(tick, "note");
        e.from = p.name;
        e.kind = "reassigned";
        p.session->mark_logged_in(tick);
        flush_transitions(p.name, p.session->transitions(), cursor, tick);
      }
      return;
    }
    default: {
      Event& e = record(tick, "detect");
      e.from = p.name;
      e.error = "WrongState";
      e.detail = std::string("unexpected ") + handshake::msg_kind_name(env.kind);
      return;
    }
  }
}

void Engine::run_anomaly(MpActor& m, const PseudoId& patient, std::uint64_t tick) {
  const auto& raw = m.readings[patient];
  auto norm = anomaly::normalize(raw, metric_table_);

  for (const auto& s : norm.suspects) {
    if (!m.suspected.emplace(s.node_id, s.metric, s.ts_ms).second) continue;
    Event& e = record(tick, "detect");
    e.from = m.name;
    e.kind = "SuspectReading";
    e.error = "OutOfRange";
    e.detail = s.node_id + " " + s.metric;
  }

  auto sequences = anomaly::build_sequences(norm.accepted, config_.anomaly_window);
  auto found = anomaly::detect(sequences, rules_, metric_table_);

  for (const auto& alert : found.alerts) {
    std::string node = alert.evidence.empty() ? "" : alert.evidence.front().node_id;
    if (!m.alerted.emplace(alert.rule_id, node, alert.ts_ms).second) continue;
    Event& e = record(tick, "detect");
    e.from = m.name;
    e.kind = "PatientAlert";
    e.detail = alert.rule_id;
  }

  for (const auto& report : found.reports) {
    if (!m.reported.emplace(report.rule_id, report.node_id, report.ts_ms).second) continue;
    Event& e = record(tick, "detect");
    e.from = m.name;
    e.kind = "MisbehaviorReport";
    e.detail = report.node_id + " " + report.rule_id;

    handshake::NotificationInterior note;
    note.type = handshake::NotificationType::MisbehaviorReport;
    note.payload = to_bytes(
        nlohmann::json{{"node_id", report.node_id}, {"rule_id", report.rule_id}}.dump());
    note.ts_ms = tick;
    Envelope env;
    env.kind = MsgKind::Notification;
    env.sender = m.pid;
    env.ciphertext = crypto::encrypt(ra_keys_.pub, encode_notification(note), ra_net_rng_);
    send(m.name, "ra", env, tick);
  }
}

void Engine::mp_receive(MpActor& m, const Envelope& env, const Bytes& wire, std::uint64_t tick) {
  (void)wire;
  switch (env.kind) {
    case MsgKind::M2: {
      if (!env.sender) {
        Event& e = record(tick, "detect");
        e.from = m.name;
        e.error = "AuthFailure";
        e.detail = "M2 without sender";
        return;
      }
      const auto& patient_pair = m.pair_by_role[static_cast<int>(Role::Patient)];
      if (!patient_pair) {
        Event& e = record(tick, "detect");
        e.from = m.name;
        e.error = "WrongState";
        e.detail = "no filter pair yet";
        return;
      }
      auto it = m.sessions.find(*env.sender);
      if (it == m.sessions.end()) {
        handshake::HandshakeConfig hcfg;
        hcfg.dh_bits = config_.dh_bits;
        hcfg.freshness_window_ms = config_.freshness_window_ms;
        hcfg.send_key_confirm = config_.key_confirm_ack;
        auto session = std::make_unique<handshake::MpSession>(
            m.pid, *env.sender, m.keys, hcfg, root_.child(m.name + "-hs-" + env.sender->to_hex()));
        it = m.sessions.emplace(*env.sender, std::move(session)).first;
      }
      auto& session = *it->second;
      std::size_t cursor = session.transitions().size();
      auto out = session.handle_m2(env, *patient_pair, tick);
      flush_transitions(m.name, session.transitions(), cursor, tick);
      mp_outcome(m, session, out, MsgKind::M2, tick);
      return;
    }
    case MsgKind::SessionData: {
      if (!env.sender) return;
      const auto& patient_pair = m.pair_by_role[static_cast<int>(Role::Patient)];
      if (patient_pair && registry::classify(*env.sender, *patient_pair) ==
                              registry::MembershipVerdict::Malicious) {
        Event& e = record(tick, "detect");
        e.from = m.name;
        e.kind = "SessionData";
        e.error = "PeerNotValid";
        e.verdicts = "Malicious";
        e.detail = "peer " + actor_of(*env.sender);
        return;
      }
      auto it = m.sessions.find(*env.sender);
      if (it == m.sessions.end()) {
        Event& e = record(tick, "detect");
        e.from = m.name;
        e.kind = "SessionData";
        e.error = "WrongState";
        e.detail = "unknown sender";
        return;
      }
      auto& session = *it->second;
      std::size_t cursor = session.transitions().size();
      auto res = session.receive_session_data(env, tick);
      flush_transitions(m.name, session.transitions(), cursor, tick);
      if (std::holds_alternative<handshake::RejectReason>(res)) {
        Event& e = record(tick, "detect");
        e.from = m.name;
        e.kind = "SessionData";
        e.error = handshake::reject_reason_name(std::get<handshake::RejectReason>(res));
        return;
      }
      std::string payload = to_string(std::get<Bytes>(res));
      if (payload == "key-confirm") {
        Event& e = record(tick, "note");
        e.from = m.name;
        e.kind = "key_confirm";
        return;
      }
      std::vector<anomaly::SensorReading> batch;
      try {
        batch = anomaly::readings_from_ndjson(payload);
      } catch (const std::exception&) {
        Event& e = record(tick, "detect");
        e.from = m.name;
        e.kind = "SessionData";
        e.error = "MalformedPayload";
        return;
      }
      Event& e = record(tick, "note");
      e.from = m.name;
      e.kind = "vitals_received";
      e.detail = std::to_string(batch.size()) + " readings";
      auto& acc = m.readings[*env.sender];
      acc.insert(acc.end(), batch.begin(), batch.end());
      run_anomaly(m, *env.sender, tick);
      Envelope ack = session.make_session_data(to_bytes("ack"), tick);
      send(m.name, actor_of(*env.sender), ack, tick);
      return;
    }
    case MsgKind::FilterBroadcast: {
      if (!accept_broadcast(m, env, tick)) return;
      const auto& patient_pair = m.pair_by_role[static_cast<int>(Role::Patient)];
      if (patient_pair) {
        for (auto& [pid, session] : m.sessions) {
          if (!session->has_pending()) continue;
          std::size_t cursor = session->transitions().size();
          auto out = session->retry_pending(*patient_pair, tick);
          flush_transitions(m.name, session->transitions(), cursor, tick);
          if (out) mp_outcome(m, *session, *out, MsgKind::M2, tick);
        }
      }
      return;
    }
    default: {
      Event& e = record(tick, "detect");
      e.from = m.name;
      e.error = "WrongState";
      e.detail = std::string("unexpected ") + handshake::msg_kind_name(env.kind);
      return;
    }
  }
}

void Engine::ra_receive(const Envelope& env, std::uint64_t tick) {
  if (env.kind != MsgKind::Notification) {
    Event& e = record(tick, "detect");
    e.from = "ra";
    e.error = "WrongState";
    e.detail = std::string("unexpected ") + handshake::msg_kind_name(env.kind);
    return;
  }
  auto plain = crypto::decrypt(ra_keys_.priv, env.ciphertext);
  auto note = plain ? handshake::decode_notification(*plain) : std::nullopt;
  if (!note) {
    Event& e = record(tick, "detect");
    e.from = "ra";
    e.kind = "Notification";
    e.error = "AuthFailure";
    return;
  }
  if (!crypto::fresh(note->ts_ms, tick, config_.freshness_window_ms)) {
    Event& e = record(tick, "detect");
    e.from = "ra";
    e.kind = "Notification";
    e.error = "StaleTimestamp";
    return;
  }

  nlohmann::json body;
  try {
    body = nlohmann::json::parse(to_string(note->payload));
  } catch (const std::exception&) {
    Event& e = record(tick, "detect");
    e.from = "ra";
    e.kind = "Notification";
    e.error = "MalformedPayload";
    return;
  }

  if (note->type == handshake::NotificationType::Escalation) {
    auto pid_bytes = from_hex(body.value("pid", ""));
    auto pid = pid_bytes ? PseudoId::from_bytes(*pid_bytes) : std::nullopt;
    if (!pid) {
      Event& e = record(tick, "detect");
      e.from = "ra";
      e.kind = "Notification";
      e.error = "MalformedPayload";
      return;
    }
    auto pair = directory_->resolve_escalation(*pid);
    Event& e = record(tick, "registry");
    e.from = "ra";
    e.kind = pair ? "escalation_resolved" : "escalation_error";
    e.detail = pid->to_hex();
    if (pair) broadcast_now(tick);
    return;
  }
  if (note->type == handshake::NotificationType::MisbehaviorReport) {
    std::string node = body.value("node_id", "");
    std::string rule = body.value("rule_id", "");
    auto outcome = directory_->report_misbehavior(node, rule);
    Event& e = record(tick, "registry");
    e.from = "ra";
    if (outcome.error == registry::RegistryError::None) {
      e.kind = "revoked";
      e.to = actor_of(*outcome.revoked);
      e.detail = node + " rule " + rule;
      broadcast_now(tick);
    } else {
      e.kind = "report_error";
      e.error = outcome.error == registry::RegistryError::UnknownSensor ? "UnknownSensor"
                : outcome.error == registry::RegistryError::AlreadyRevoked ? "AlreadyRevoked"
                                                                           : "UnknownPid";
      e.detail = node;
    }
    return;
  }
}

void Engine::on_delivery(const Pending& d) {
  Event& e = record(d.tick, "deliver");
  e.from = d.from;
  e.to = d.to;
  e.data_hex = to_hex(d.bytes);
  e.detail = d.tag;
  auto env = Envelope::from_bytes(d.bytes);
  if (env) e.kind = handshake::msg_kind_name(env->kind);

  if (d.to == "intruder") {
    intruder_observe(d.bytes, d.tick);
    if (!d.forward_to.empty())
      schedule({0, 0, Pending::Kind::Delivery, 0, "intruder", d.forward_to, {}, {}, d.bytes},
               d.tick + config_.latency_ticks);
    return;
  }

  if (!env) {
    Event& err = record(d.tick, "detect");
    err.from = d.to;
    err.error = "AuthFailure";
    err.detail = "malformed envelope";
    return;
  }

  if (d.to == "ra") {
    ra_receive(*env, d.tick);
    return;
  }
  for (auto& p : patients_)
    if (p.name == d.to) {
      patient_receive(p, *env, d.bytes, d.tick);
      return;
    }
  for (auto& m : mps_)
    if (m.name == d.to) {
      mp_receive(m, *env, d.bytes, d.tick);
      return;
    }
}

RunResult Engine::run() {
  setup();

  while (!queue_.empty()) {
    Pending p = queue_.top();
    queue_.pop();
    if (p.tick > config_.duration_ticks) break;

    switch (p.kind) {
      case Pending::Kind::Script: on_script(config_.ra_script[p.index], p.tick); break;
      case Pending::Kind::Login: on_login(p.index, p.tick); break;
      case Pending::Kind::Broadcast: on_broadcast(p.tick); break;
      case Pending::Kind::Vitals: on_vitals(p.index, p.tick); break;
      case Pending::Kind::Delivery: on_delivery(p); break;
    }

    for (std::size_t i = 0; i < injections_.size(); ++i) {
      if (injection_fired_[i] || injections_[i].after_event_index >= transcript_.events.size())
        continue;
      injection_fired_[i] = true;
      schedule({0, 0, Pending::Kind::Delivery, 0, "intruder", injections_[i].to, {}, "injected",
                injections_[i].bytes},
               p.tick + config_.latency_ticks);
    }
  }

  for (std::size_t i = 0; i < injections_.size(); ++i)
    if (!injection_fired_[i])
      throw std::invalid_argument("injection position never reached: " +
                                  std::to_string(injections_[i].after_event_index));

  RunSummary summary = summarize();  // before the move below empties transcript_
  return {std::move(transcript_), std::move(summary)};
}

void Engine::on_broadcast(std::uint64_t tick) { broadcast_now(tick); }

RunSummary Engine::summarize() const {
  RunSummary s;
  s.name = config_.name;
  s.seed = config_.seed;
  s.events = transcript_.events.size();
  s.vitals_roundtrips = transcript_.count("note", "vitals_roundtrip");
  s.escalations = transcript_.count("note", "escalation");
  s.revocations = transcript_.count("registry", "revoked");
  s.intruder_decrypt_attempts = intruder_attempts_;
  s.intruder_decrypt_successes = intruder_successes_;
  s.detections = transcript_.detection_counts();

  for (const auto& p : patients_) {
    if (!p.session || p.session->state() != handshake::PatientState::Established) continue;
    if (!p.session->peer()) continue;
    for (const auto& m : mps_) {
      if (m.pid != *p.session->peer()) continue;
      auto it = m.sessions.find(p.pid);
      if (it == m.sessions.end() || it->second->state() != handshake::MpState::Established)
        continue;
      ++s.established_pairs;
      if (!p.session->session_key() || !it->second->session_key() ||
          !(*p.session->session_key() == *it->second->session_key()))
        s.key_agreement = false;
    }
  }
  return s;
}

}  // namespace

RunResult run_scenario(const SimConfig& config) {
  return run_scenario(config, std::span<const Injection>{});
}

RunResult run_scenario(const SimConfig& config, std::span<const Injection> injections) {
  Engine engine(config, injections);
  return engine.run();
}

std::vector<std::string> check_assertions(const ScenarioAssertions& a, const RunResult& r) {
  std::vector<std::string> failures;
  auto fail = [&](const std::string& msg) { failures.push_back(msg); };

  if (a.established_pairs && r.summary.established_pairs != *a.established_pairs)
    fail("established_pairs=" + std::to_string(r.summary.established_pairs) + " expected " +
         std::to_string(*a.established_pairs));
  if (a.min_vitals_roundtrips && r.summary.vitals_roundtrips < *a.min_vitals_roundtrips)
    fail("vitals_roundtrips=" + std::to_string(r.summary.vitals_roundtrips) + " expected >= " +
         std::to_string(*a.min_vitals_roundtrips));
  if (a.max_intruder_decrypt_successes &&
      r.summary.intruder_decrypt_successes > *a.max_intruder_decrypt_successes)
    fail("intruder_decrypt_successes=" + std::to_string(r.summary.intruder_decrypt_successes));
  int total_detections = 0;
  for (const auto& [reason, count] : r.summary.detections) total_detections += count;
  if (a.max_total_detections && total_detections > *a.max_total_detections)
    fail("total_detections=" + std::to_string(total_detections) + " expected <= " +
         std::to_string(*a.max_total_detections));
  if (a.min_escalations && r.summary.escalations < *a.min_escalations)
    fail("escalations=" + std::to_string(r.summary.escalations));
  if (a.min_revocations && r.summary.revocations < *a.min_revocations)
    fail("revocations=" + std::to_string(r.summary.revocations));
  for (const auto& [reason, bounds] : a.detections) {
    int count = 0;
    if (auto it = r.summary.detections.find(reason); it != r.summary.detections.end())
      count = it->second;
    if (bounds.first && count < *bounds.first)
      fail("detections[" + reason + "]=" + std::to_string(count) + " expected >= " +
           std::to_string(*bounds.first));
    if (bounds.second && count > *bounds.second)
      fail("detections[" + reason + "]=" + std::to_string(count) + " expected <= " +
           std::to_string(*bounds.second));
  }
  if (!a.sequence.empty()) {
    SequenceCheck check = assert_sequence(r.transcript, a.sequence);
    if (!check.ok)
      fail("sequence mismatch at step " + std::to_string(check.mismatch_step));
  }
  if (!r.summary.key_agreement) fail("established sessions disagree on the session key");
  return failures;
}

}  // namespace rpm::simnet
