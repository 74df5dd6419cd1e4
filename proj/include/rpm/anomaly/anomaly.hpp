#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "rpm/bytes.hpp"

namespace rpm::anomaly {

enum class SensorKind : std::uint8_t { Health, Home };

// Declared range for a metric; readings are min-max normalized into [0,1]
// before any rule evaluation.
struct MetricSpec {
  std::string name;
  SensorKind kind = SensorKind::Health;
  double min = 0.0;
  double max = 1.0;
};

class MetricTable {
 public:
  MetricTable() = default;
  explicit MetricTable(std::vector<MetricSpec> specs);
  static MetricTable defaults();
  static MetricTable from_json(const nlohmann::json& j);  // throws std::invalid_argument

  const MetricSpec* find(const std::string& name) const;
  double normalize(const MetricSpec& spec, double raw) const;

 private:
  std::vector<MetricSpec> specs_;
};

struct SensorReading {
  std::string node_id;
  std::string metric;
  double value = 0.0;       // raw units
  std::uint64_t ts_ms = 0;
  bool operator==(const SensorReading&) const = default;
};

struct NormalizedReading {
  SensorReading raw;
  double norm = 0.0;  // in [0,1]
};

// Readings for unknown metrics or outside the declared range are not
// silently clamped; they come back as suspects for the caller to flag.
struct NormalizeResult {
  std::vector<NormalizedReading> accepted;
  std::vector<SensorReading> suspects;
};

NormalizeResult normalize(std::span<const SensorReading> readings, const MetricTable& table);

// Count-based sliding window over time-ordered readings: sequences of
// `window_size` readings starting every window_size/2 positions (left
// aligned); a tail shorter than the window is dropped.
struct Sequence {
  std::vector<NormalizedReading> readings;
  std::optional<double> label;  // slot reserved for a learned detector
};

std::vector<Sequence> build_sequences(std::span<const NormalizedReading> readings,
                                      std::size_t window_size);

enum class Direction : std::uint8_t { Above, Below };

// Threshold predicate in raw units; Above fires on value >= threshold,
// Below on value <= threshold.
struct Predicate {
  std::string metric;
  Direction dir = Direction::Above;
  double threshold = 0.0;
  bool matches(double raw_value) const {
    return dir == Direction::Above ? raw_value >= threshold : raw_value <= threshold;
  }
};

enum class UncorroboratedVerdict : std::uint8_t { SensorMisbehaving, PatientAlert };

// A trigger that fires without any corroborating evidence inside the window
// is either a suspect sensor or still an alert, per the rule's verdict. The
// corroborators encode independent distress evidence (for example, the bed
// occupancy or motion sensors agreeing the patient is down).
struct CorrelationRule {
  std::string id;
  Predicate trigger;
  std::vector<Predicate> corroborators;
  std::uint64_t window_ms = 60000;
  UncorroboratedVerdict on_uncorroborated = UncorroboratedVerdict::SensorMisbehaving;

  void validate(const MetricTable& table) const;  // throws std::invalid_argument
};

struct MisbehaviorReport {
  std::string node_id;
  std::string rule_id;
  std::uint64_t ts_ms = 0;
  std::vector<SensorReading> evidence;
};

struct PatientAlert {
  std::string rule_id;
  std::uint64_t ts_ms = 0;
  std::vector<SensorReading> evidence;
};

struct DetectOutput {
  std::vector<MisbehaviorReport> reports;
  std::vector<PatientAlert> alerts;
};

// Rule evaluation over built sequences. A trigger reading is corroborated
// when any corroborator predicate matches a reading within the rule window
// of the trigger timestamp (in the same sequence). Duplicate findings from
// overlapping sequences are emitted once.
DetectOutput detect(std::span<const Sequence> sequences,
                    std::span<const CorrelationRule> rules, const MetricTable& table);

// JSON interchange.
std::vector<CorrelationRule> rules_from_json(const nlohmann::json& j, const MetricTable& table);
MetricTable metric_table_from_rules_json(const nlohmann::json& j);
std::vector<SensorReading> readings_from_ndjson(const std::string& text);
nlohmann::ordered_json reading_to_json(const SensorReading& r);
nlohmann::ordered_json report_to_json(const MisbehaviorReport& r);
nlohmann::ordered_json alert_to_json(const PatientAlert& a);

}  // namespace rpm::anomaly
