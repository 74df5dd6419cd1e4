#include "rpm/simnet/transcript.hpp"

namespace rpm::simnet {

nlohmann::ordered_json Event::to_json() const {
  nlohmann::ordered_json j;
  j["tick"] = tick;
  j["seq"] = seq;
  j["type"] = type;
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) j[key] = v;
  };
  put("from", from);
  put("to", to);
  put("kind", kind);
  put("verdicts", verdicts);
  put("state_before", state_before);
  put("state_after", state_after);
  put("error", error);
  put("detail", detail);
  put("data", data_hex);
  return j;
}

std::string Transcript::to_ndjson() const {
  std::string out;
  for (const auto& e : events) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

std::map<std::string, int> Transcript::detection_counts() const {
  std::map<std::string, int> counts;
  for (const auto& e : events)
    if (e.type == "detect") ++counts[e.error.empty() ? e.kind : e.error];
  return counts;
}

int Transcript::count_type(const std::string& type) const {
  int n = 0;
  for (const auto& e : events)
    if (e.type == type) ++n;
  return n;
}

int Transcript::count(const std::string& type, const std::string& kind) const {
  int n = 0;
  for (const auto& e : events)
    if (e.type == type && e.kind == kind) ++n;
  return n;
}

bool StepPattern::matches(const Event& e) const {
  if (!type.empty() && e.type != type) return false;
  if (!from.empty() && e.from != from) return false;
  if (!to.empty() && e.to != to) return false;
  if (!kind.empty() && e.kind != kind) return false;
  if (!error.empty() && e.error != error) return false;
  if (!detail_substr.empty() && e.detail.find(detail_substr) == std::string::npos) return false;
  return true;
}

SequenceCheck assert_sequence(const Transcript& t, std::span<const StepPattern> steps) {
  std::size_t at = 0;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    bool found = false;
    while (at < t.events.size()) {
      if (steps[s].matches(t.events[at++])) {
        found = true;
        break;
      }
    }
    if (!found) return {false, s};
  }
  return {true, steps.size()};
}

std::vector<StepPattern> patterns_from_json(const nlohmann::json& j) {
  std::vector<StepPattern> out;
  for (const auto& p : j) {
    StepPattern pat;
    pat.type = p.value("type", "");
    pat.from = p.value("from", "");
    pat.to = p.value("to", "");
    pat.kind = p.value("kind", "");
    pat.error = p.value("error", "");
    pat.detail_substr = p.value("detail", "");
    out.push_back(std::move(pat));
  }
  return out;
}

}  // namespace rpm::simnet
