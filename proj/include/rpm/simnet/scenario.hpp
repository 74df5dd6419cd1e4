#pragma once

#include <memory>

#include "rpm/anomaly/anomaly.hpp"
#include "rpm/handshake/session.hpp"
#include "rpm/simnet/transcript.hpp"

namespace rpm::simnet {

enum class IntruderPolicy : std::uint8_t { None, PassiveListen, Replay, ModifyByte, MitmForward };

const char* intruder_policy_name(IntruderPolicy p);

struct IntruderSpec {
  IntruderPolicy policy = IntruderPolicy::None;
  // Replay / ModifyByte pick the first envelope of this kind; unset = any
  // handshake message.
  std::optional<handshake::MsgKind> target_kind;
  std::uint64_t replay_delay_ms = 3000;
  std::uint32_t modify_position = 0;  // ciphertext byte offset (mod length)
  bool attack_ra_channels = true;
};

struct RaScriptStep {
  std::uint64_t at_tick = 0;
  std::string op;      // enroll_mp, revoke, deregister, publish
  std::string target;  // actor name (mp0, patient1, ...)
};

struct SensorFeedItem {
  std::uint64_t at_tick = 0;
  std::string patient;  // actor name
  std::string node_id;
  std::string metric;
  double value = 0.0;
};

// Deterministic single-run configuration. One tick = one millisecond; every
// hop costs latency_ticks. All randomness derives from `seed`.
struct SimConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  std::uint32_t mp_count = 1;
  std::uint32_t patient_count = 1;
  std::uint64_t duration_ticks = 6000;
  std::uint64_t latency_ticks = 1;
  std::uint64_t freshness_window_ms = 2000;
  std::uint64_t broadcast_period_ms = 2000;
  std::uint64_t login_tick = 10;
  std::uint32_t vitals_count = 2;
  std::uint64_t vitals_period_ms = 200;
  unsigned dh_bits = 16;
  unsigned rsa_bits = 512;
  bool key_confirm_ack = true;
  std::uint32_t anomaly_window = 4;
  filter::FilterParams filter_params{64, 4, 16, 500, 0};
  IntruderSpec intruder;
  std::vector<RaScriptStep> ra_script;
  std::vector<SensorFeedItem> sensor_feed;
  std::optional<nlohmann::json> rules_json;  // defaults when unset

  static SimConfig from_json(const nlohmann::json& j);  // throws std::invalid_argument
};

// Post-run checks a scenario file can declare.
struct ScenarioAssertions {
  std::optional<int> established_pairs;
  std::optional<int> min_vitals_roundtrips;
  std::optional<int> max_intruder_decrypt_successes;
  std::optional<int> max_total_detections;
  std::optional<int> min_escalations;
  std::optional<int> min_revocations;
  std::map<std::string, std::pair<std::optional<int>, std::optional<int>>> detections;  // min,max
  std::vector<StepPattern> sequence;

  static ScenarioAssertions from_json(const nlohmann::json& j);
};

struct ScenarioFile {
  SimConfig config;
  ScenarioAssertions assertions;

  static ScenarioFile from_json(const nlohmann::json& j);
  static ScenarioFile load(const std::string& path);  // throws on IO/parse errors
};

struct RunSummary {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t events = 0;
  int established_pairs = 0;
  int vitals_roundtrips = 0;
  int escalations = 0;
  int revocations = 0;
  int intruder_decrypt_attempts = 0;
  int intruder_decrypt_successes = 0;
  bool key_agreement = true;
  std::map<std::string, int> detections;

  nlohmann::ordered_json to_json() const;
};

struct RunResult {
  Transcript transcript;
  RunSummary summary;
};

// A forged delivery spliced into a re-run right after the transcript event
// at `after_event_index` from a reference run.
struct Injection {
  std::size_t after_event_index = 0;
  std::string to;  // actor name
  Bytes bytes;
};

RunResult run_scenario(const SimConfig& config);
RunResult run_scenario(const SimConfig& config, std::span<const Injection> injections);

// Evaluates assertions against a finished run; returns failure strings.
std::vector<std::string> check_assertions(const ScenarioAssertions& a, const RunResult& r);

}  // namespace rpm::simnet
