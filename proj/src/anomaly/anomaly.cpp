#include "rpm/anomaly/anomaly.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rpm::anomaly {

MetricTable::MetricTable(std::vector<MetricSpec> specs) : specs_(std::move(specs)) {
  for (const auto& s : specs_)
    if (!(s.min < s.max)) throw std::invalid_argument("metric range must satisfy min < max");
}

MetricTable MetricTable::defaults() {
  return MetricTable({
      {"heart_rate", SensorKind::Health, 30.0, 220.0},
      {"systolic_bp", SensorKind::Health, 70.0, 190.0},
      {"spo2", SensorKind::Health, 50.0, 100.0},
      {"body_temp", SensorKind::Health, 30.0, 45.0},
      {"motion", SensorKind::Home, 0.0, 1.0},
      {"door_open", SensorKind::Home, 0.0, 1.0},
      {"bed_occupancy", SensorKind::Home, 0.0, 1.0},
  });
}

MetricTable MetricTable::from_json(const nlohmann::json& j) {
  std::vector<MetricSpec> specs;
  for (const auto& m : j) {
    MetricSpec spec;
    spec.name = m.at("name").get<std::string>();
    std::string kind = m.value("kind", "health");
    if (kind == "health")
      spec.kind = SensorKind::Health;
    else if (kind == "home")
      spec.kind = SensorKind::Home;
    else
      throw std::invalid_argument("metric kind must be health or home");
    spec.min = m.at("min").get<double>();
    spec.max = m.at("max").get<double>();
    specs.push_back(spec);
  }
  return MetricTable(std::move(specs));
}

const MetricSpec* MetricTable::find(const std::string& name) const {
  for (const auto& s : specs_)
    if (s.name == name) return &s;
  return nullptr;
}

double MetricTable::normalize(const MetricSpec& spec, double raw) const {
  return (raw - spec.min) / (spec.max - spec.min);
}

NormalizeResult normalize(std::span<const SensorReading> readings, const MetricTable& table) {
  NormalizeResult out;
  for (const auto& r : readings) {
    const MetricSpec* spec = table.find(r.metric);
    if (!spec || r.value < spec->min || r.value > spec->max) {
      out.suspects.push_back(r);
      continue;
    }
    out.accepted.push_back({r, table.normalize(*spec, r.value)});
  }
  return out;
}

std::vector<Sequence> build_sequences(std::span<const NormalizedReading> readings,
                                      std::size_t window_size) {
  std::vector<Sequence> out;
  if (window_size == 0 || readings.size() < window_size) return out;

  std::vector<NormalizedReading> ordered(readings.begin(), readings.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const NormalizedReading& a, const NormalizedReading& b) {
                     return a.raw.ts_ms < b.raw.ts_ms;
                   });

  std::size_t step = std::max<std::size_t>(1, window_size / 2);
  for (std::size_t start = 0; start + window_size <= ordered.size(); start += step) {
    Sequence seq;
    seq.readings.assign(ordered.begin() + start, ordered.begin() + start + window_size);
    out.push_back(std::move(seq));
  }
  return out;
}

void CorrelationRule::validate(const MetricTable& table) const {
  if (id.empty()) throw std::invalid_argument("rule id must not be empty");
  if (!table.find(trigger.metric))
    throw std::invalid_argument("rule " + id + ": unknown trigger metric " + trigger.metric);
  for (const auto& c : corroborators)
    if (!table.find(c.metric))
      throw std::invalid_argument("rule " + id + ": unknown corroborator metric " + c.metric);
  if (window_ms == 0) throw std::invalid_argument("rule " + id + ": window must be positive");
}

namespace {

std::uint64_t ts_distance(std::uint64_t a, std::uint64_t b) { return a >= b ? a - b : b - a; }

}  // namespace

DetectOutput detect(std::span<const Sequence> sequences, std::span<const CorrelationRule> rules,
                    const MetricTable& table) {
  (void)table;
  DetectOutput out;
  std::set<std::tuple<std::string, std::string, std::uint64_t>> report_keys;
  std::set<std::tuple<std::string, std::string, std::uint64_t>> alert_keys;

  for (const auto& seq : sequences) {
    for (const auto& rule : rules) {
      for (const auto& t : seq.readings) {
        if (t.raw.metric != rule.trigger.metric || !rule.trigger.matches(t.raw.value)) continue;

        bool corroborated = false;
        std::vector<SensorReading> evidence{t.raw};
        for (const auto& r : seq.readings) {
          if (ts_distance(r.raw.ts_ms, t.raw.ts_ms) > rule.window_ms) continue;
          bool corroborator_metric = false;
          for (const auto& c : rule.corroborators) {
            if (r.raw.metric != c.metric) continue;
            corroborator_metric = true;
            if (c.matches(r.raw.value)) corroborated = true;
          }
          if (corroborator_metric) evidence.push_back(r.raw);
        }

        if (corroborated || rule.on_uncorroborated == UncorroboratedVerdict::PatientAlert) {
          if (alert_keys.emplace(rule.id, t.raw.node_id, t.raw.ts_ms).second)
            out.alerts.push_back({rule.id, t.raw.ts_ms, evidence});
        } else {
          if (report_keys.emplace(rule.id, t.raw.node_id, t.raw.ts_ms).second)
            out.reports.push_back({t.raw.node_id, rule.id, t.raw.ts_ms, evidence});
        }
      }
    }
  }

  auto by_ts = [](const auto& a, const auto& b) {
    return std::tie(a.ts_ms, a.rule_id) < std::tie(b.ts_ms, b.rule_id);
  };
  std::sort(out.reports.begin(), out.reports.end(), by_ts);
  std::sort(out.alerts.begin(), out.alerts.end(), by_ts);
  return out;
}

namespace {

Predicate predicate_from_json(const nlohmann::json& j) {
  Predicate p;
  p.metric = j.at("metric").get<std::string>();
  std::string dir = j.at("dir").get<std::string>();
  if (dir == "above")
    p.dir = Direction::Above;
  else if (dir == "below")
    p.dir = Direction::Below;
  else
    throw std::invalid_argument("predicate dir must be above or below");
  p.threshold = j.at("threshold").get<double>();
  return p;
}

}  // namespace

MetricTable metric_table_from_rules_json(const nlohmann::json& j) {
  if (j.contains("metrics")) return MetricTable::from_json(j.at("metrics"));
  return MetricTable::defaults();
}

std::vector<CorrelationRule> rules_from_json(const nlohmann::json& j, const MetricTable& table) {
  std::vector<CorrelationRule> rules;
  for (const auto& r : j.at("rules")) {
    CorrelationRule rule;
    rule.id = r.at("id").get<std::string>();
    rule.trigger = predicate_from_json(r.at("trigger"));
    for (const auto& c : r.value("corroborators", nlohmann::json::array()))
      rule.corroborators.push_back(predicate_from_json(c));
    rule.window_ms = r.value("window_ms", std::uint64_t{60000});
    std::string verdict = r.value("on_uncorroborated", "sensor_misbehaving");
    if (verdict == "sensor_misbehaving")
      rule.on_uncorroborated = UncorroboratedVerdict::SensorMisbehaving;
    else if (verdict == "patient_alert")
      rule.on_uncorroborated = UncorroboratedVerdict::PatientAlert;
    else
      throw std::invalid_argument("on_uncorroborated must be sensor_misbehaving or patient_alert");
    rule.validate(table);
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<SensorReading> readings_from_ndjson(const std::string& text) {
  std::vector<SensorReading> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);  // throws on malformed input
    SensorReading r;
    r.node_id = j.at("node_id").get<std::string>();
    r.metric = j.at("metric").get<std::string>();
    r.value = j.at("value").get<double>();
    r.ts_ms = j.at("ts_ms").get<std::uint64_t>();
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::ordered_json reading_to_json(const SensorReading& r) {
  return nlohmann::ordered_json{
      {"node_id", r.node_id}, {"metric", r.metric}, {"value", r.value}, {"ts_ms", r.ts_ms}};
}

nlohmann::ordered_json report_to_json(const MisbehaviorReport& r) {
  nlohmann::ordered_json evidence = nlohmann::ordered_json::array();
  for (const auto& e : r.evidence) evidence.push_back(reading_to_json(e));
  return nlohmann::ordered_json{{"type", "misbehavior_report"},
                                {"node_id", r.node_id},
                                {"rule_id", r.rule_id},
                                {"ts_ms", r.ts_ms},
                                {"evidence", evidence}};
}

nlohmann::ordered_json alert_to_json(const PatientAlert& a) {
  nlohmann::ordered_json evidence = nlohmann::ordered_json::array();
  for (const auto& e : a.evidence) evidence.push_back(reading_to_json(e));
  return nlohmann::ordered_json{
      {"type", "patient_alert"}, {"rule_id", a.rule_id}, {"ts_ms", a.ts_ms}, {"evidence", evidence}};
}

}  // namespace rpm::anomaly
