#pragma once

#include <cstdint>
#include <map>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rpm::simnet {

// One NDJSON transcript line. `type` distinguishes wire deliveries from
// actor-side observations:
//   deliver  - an envelope arriving at an actor (data_hex = wire bytes)
//   state    - a session state transition
//   verdict  - a membership classification an actor performed
//   detect   - a rejected/suspicious message (error = reason)
//   intruder - intruder action (observe/modify/replay)
//   registry - RA-side action (login, revoke, publish, ...)
//   note     - everything else worth asserting on
struct Event {
  std::uint64_t tick = 0;
  std::uint64_t seq = 0;
  std::string type;
  std::string from;
  std::string to;
  std::string kind;
  std::string verdicts;
  std::string state_before;
  std::string state_after;
  std::string error;
  std::string detail;
  std::string data_hex;

  nlohmann::ordered_json to_json() const;
};

struct Transcript {
  std::vector<Event> events;

  std::string to_ndjson() const;
  std::map<std::string, int> detection_counts() const;  // error -> count
  int count_type(const std::string& type) const;
  int count(const std::string& type, const std::string& kind) const;
};

// Pattern for ordered-subsequence assertions over a transcript. Empty
// fields match anything; detail matches by substring.
struct StepPattern {
  std::string type;
  std::string from;
  std::string to;
  std::string kind;
  std::string error;
  std::string detail_substr;

  bool matches(const Event& e) const;
};

struct SequenceCheck {
  bool ok = false;
  std::size_t mismatch_step = 0;  // first pattern index with no match
};

// Checks that the patterns appear in order (not necessarily adjacent).
SequenceCheck assert_sequence(const Transcript& t, std::span<const StepPattern> steps);

std::vector<StepPattern> patterns_from_json(const nlohmann::json& j);

}  // namespace rpm::simnet
