// rpm-cli: scenario runner, filter benchmark, registry lifecycle demo, and
// anomaly-rule runner. Structured output goes to stdout, logs to stderr.
// Exit codes: 0 success, 1 assertion/expectation failure, 2 bad input.
#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <string>

#include "rpm/anomaly/anomaly.hpp"
#include "rpm/registry/registry.hpp"
#include "rpm/simnet/scenario.hpp"

namespace {

using rpm::Bytes;
using rpm::Rng;

int run_scenario_cmd(const std::string& config_path, std::optional<std::uint64_t> seed,
                     const std::string& out_path) {
  rpm::simnet::ScenarioFile file;
  try {
    file = rpm::simnet::ScenarioFile::load(config_path);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (seed) file.config.seed = *seed;

  rpm::simnet::RunResult result = rpm::simnet::run_scenario(file.config);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot write " << out_path << "\n";
    return 2;
  }
  out << result.transcript.to_ndjson();
  out.close();

  std::vector<std::string> failures =
      rpm::simnet::check_assertions(file.assertions, result);

  nlohmann::ordered_json summary = result.summary.to_json();
  summary["assertion_failures"] = failures;
  std::cout << summary.dump() << "\n";
  for (const auto& f : failures) std::cerr << "assertion failed: " << f << "\n";
  return failures.empty() ? 0 : 1;
}

int run_filter_bench(std::uint32_t m, std::uint32_t n, std::uint32_t f, double load,
                     std::uint32_t queries, std::uint64_t seed) {
  rpm::filter::FilterParams params{m, n, f, 500, seed};
  try {
    params.validate();
  } catch (const std::exception& e) {
    std::cerr << "invalid params: " << e.what() << "\n";
    return 2;
  }
  if (load < 0.0 || load > 1.0) {
    std::cerr << "invalid params: load must be in [0, 1]\n";
    return 2;
  }
  if (queries == 0) {
    std::cerr << "invalid params: queries must be positive\n";
    return 2;
  }

  rpm::filter::CuckooFilter filter(params);
  Rng root(seed);
  Rng insert_rng = root.child("insert");
  Rng item_rng = root.child("items");

  auto target = static_cast<std::size_t>(load * static_cast<double>(params.slot_count()));
  std::vector<Bytes> items;
  items.reserve(target);
  for (std::size_t i = 0; i < target; ++i) {
    Bytes item(16);
    item_rng.fill(item);
    items.push_back(std::move(item));
  }

  using clock = std::chrono::steady_clock;
  std::size_t failures = 0;
  auto t0 = clock::now();
  for (const auto& item : items)
    if (filter.insert(item, insert_rng) == rpm::filter::InsertResult::FilterFull) ++failures;
  auto t1 = clock::now();

  // Absent queries: fresh random items; a 16-byte random collision with an
  // inserted item is beyond negligible.
  std::size_t positives = 0;
  std::vector<Bytes> probes;
  probes.reserve(queries);
  for (std::uint32_t i = 0; i < queries; ++i) {
    Bytes probe(16);
    item_rng.fill(probe);
    probes.push_back(std::move(probe));
  }
  auto t2 = clock::now();
  for (const auto& probe : probes)
    if (filter.lookup(probe)) ++positives;
  auto t3 = clock::now();

  double achieved_load = filter.load_factor();
  auto t4 = clock::now();
  for (const auto& item : items) filter.erase(item);
  auto t5 = clock::now();

  auto ns_per = [](clock::time_point a, clock::time_point b, std::size_t ops) {
    if (ops == 0) return 0.0;
    return static_cast<double>(
               std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count()) /
           static_cast<double>(ops);
  };

  double expected_fp = static_cast<double>(2 * n) / std::pow(2.0, static_cast<double>(f));
  nlohmann::ordered_json j;
  j["m"] = m;
  j["n"] = n;
  j["f"] = f;
  j["seed"] = seed;
  j["target_load"] = load;
  j["achieved_load"] = achieved_load;
  j["inserted"] = items.size() - failures;
  j["insert_failures"] = failures;
  j["queries"] = queries;
  j["false_positives"] = positives;
  j["fp_rate"] = static_cast<double>(positives) / static_cast<double>(queries);
  j["fp_bound_3x"] = 3.0 * expected_fp;
  // Wall-clock figures; everything above this key is deterministic for a
  // given flag set, the timing subobject is not.
  nlohmann::ordered_json timing;
  timing["insert_ns_per_op"] = ns_per(t0, t1, items.size());
  timing["lookup_ns_per_op"] = ns_per(t2, t3, probes.size());
  timing["delete_ns_per_op"] = ns_per(t4, t5, items.size());
  j["timing"] = timing;
  std::cout << j.dump() << "\n";
  return 0;
}

int run_registry_demo(const std::string& script_path, std::optional<std::uint64_t> seed_flag) {
  nlohmann::json script;
  {
    std::ifstream in(script_path);
    if (!in) {
      std::cerr << "cannot open " << script_path << "\n";
      return 2;
    }
    try {
      script = nlohmann::json::parse(in);
    } catch (const std::exception& e) {
      std::cerr << "script parse error: " << e.what() << "\n";
      return 2;
    }
  }

  try {
    std::uint64_t seed = seed_flag.value_or(script.value("seed", std::uint64_t{1}));
    rpm::filter::FilterParams fp{64, 4, 16, 500, 0};
    if (script.contains("filter")) {
      const auto& jf = script.at("filter");
      fp.bucket_count = jf.value("m", fp.bucket_count);
      fp.entries_per_bucket = jf.value("n", fp.entries_per_bucket);
      fp.fingerprint_bits = jf.value("f", fp.fingerprint_bits);
    }
    Rng root(seed);
    fp.hash_seed = root.child("filter-seed").next();

    Rng key_rng = root.child("ra-keys");
    auto ra_keys = rpm::crypto::generate_keypair(key_rng, 512);
    rpm::registry::RaDirectory::Config cfg;
    cfg.mp_filter = fp;
    cfg.patient_filter = fp;
    cfg.patient_filter.hash_seed = root.child("patient-filter-seed").next();
    cfg.issue_principal_keys = false;
    rpm::registry::RaDirectory directory(cfg, ra_keys, root.child("directory"));

    std::map<std::string, rpm::registry::PseudoId> pids;
    std::optional<rpm::registry::FilterPair> pairs[2];
    bool all_ok = true;
    std::size_t step = 0;

    for (const auto& s : script.at("steps")) {
      ++step;
      std::string op = s.at("op").get<std::string>();
      std::cout << "step " << step << " " << op;

      if (op == "register") {
        std::string name = s.at("name").get<std::string>();
        auto role = s.value("role", "patient") == "mp"
                        ? rpm::registry::Role::MedicalProfessional
                        : rpm::registry::Role::Patient;
        auto res = directory.enroll(role, "identity-" + name, {name, "pw-" + name});
        if (res.error != rpm::registry::RegistryError::None) {
          std::cout << " " << name << " -> DuplicateRegistration\n";
          continue;
        }
        pids[name] = res.pid;
        std::cout << " " << name << " -> ok\n";
      } else if (op == "revoke" || op == "deregister") {
        std::string name = s.at("name").get<std::string>();
        auto it = pids.find(name);
        if (it == pids.end()) throw std::invalid_argument("unknown name: " + name);
        auto err = op == "revoke" ? directory.revoke(it->second)
                                  : directory.deregister(it->second);
        std::cout << " " << name << " -> "
                  << (err == rpm::registry::RegistryError::None ? "ok"
                      : err == rpm::registry::RegistryError::AlreadyRevoked
                          ? "AlreadyRevoked"
                          : "UnknownPid")
                  << "\n";
      } else if (op == "publish") {
        for (auto role :
             {rpm::registry::Role::MedicalProfessional, rpm::registry::Role::Patient}) {
          auto pair = directory.publish_pair(role);
          pairs[static_cast<int>(role)] = std::move(pair);
        }
        std::cout << " -> mp epoch "
                  << pairs[0]->epoch << ", patient epoch " << pairs[1]->epoch << "\n";
      } else if (op == "classify") {
        std::string name = s.at("name").get<std::string>();
        auto it = pids.find(name);
        if (it == pids.end()) throw std::invalid_argument("unknown name: " + name);
        const auto& pair = pairs[static_cast<int>(it->second.role)];
        if (!pair) throw std::invalid_argument("classify before any publish");
        const char* verdict =
            rpm::registry::verdict_name(rpm::registry::classify(it->second, *pair));
        std::cout << " " << name << " -> " << verdict;
        if (s.contains("expect")) {
          std::string expect = s.at("expect").get<std::string>();
          std::cout << " (expected " << expect << ")";
          if (expect != verdict) {
            std::cout << " MISMATCH";
            all_ok = false;
          }
        }
        std::cout << "\n";
      } else if (op == "resolve") {
        std::string name = s.at("name").get<std::string>();
        auto it = pids.find(name);
        if (it == pids.end()) throw std::invalid_argument("unknown name: " + name);
        auto pair = directory.resolve_escalation(it->second);
        if (pair) {
          pairs[static_cast<int>(pair->role)] = std::move(*pair);
          std::cout << " " << name << " -> resolved\n";
        } else {
          std::cout << " " << name << " -> UnknownPid\n";
        }
      } else {
        throw std::invalid_argument("unknown op: " + op);
      }
    }
    return all_ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "script error: " << e.what() << "\n";
    return 2;
  }
}

int run_anomaly(const std::string& readings_path, const std::string& rules_path,
                const std::string& out_path) {
  try {
    std::ifstream rin(readings_path);
    if (!rin) {
      std::cerr << "cannot open " << readings_path << "\n";
      return 2;
    }
    std::string text((std::istreambuf_iterator<char>(rin)), std::istreambuf_iterator<char>());
    auto readings = rpm::anomaly::readings_from_ndjson(text);

    std::ifstream fin(rules_path);
    if (!fin) {
      std::cerr << "cannot open " << rules_path << "\n";
      return 2;
    }
    nlohmann::json rules_json = nlohmann::json::parse(fin);
    auto table = rpm::anomaly::metric_table_from_rules_json(rules_json);
    auto rules = rpm::anomaly::rules_from_json(rules_json, table);
    std::size_t window = rules_json.value("window_size", std::size_t{8});

    auto norm = rpm::anomaly::normalize(readings, table);
    auto sequences = rpm::anomaly::build_sequences(norm.accepted, window);
    auto found = rpm::anomaly::detect(sequences, rules, table);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
      file.open(out_path, std::ios::binary);
      if (!file) {
        std::cerr << "cannot write " << out_path << "\n";
        return 2;
      }
      out = &file;
    }
    for (const auto& s : norm.suspects) {
      nlohmann::ordered_json j = rpm::anomaly::reading_to_json(s);
      j["type"] = "out_of_range";
      *out << j.dump() << "\n";
    }
    for (const auto& r : found.reports) *out << rpm::anomaly::report_to_json(r).dump() << "\n";
    for (const auto& a : found.alerts) *out << rpm::anomaly::alert_to_json(a).dump() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Authenticated remote-monitoring network tools"};
  app.require_subcommand(1);

  auto* scenario = app.add_subcommand("scenario-run", "Run a simulation scenario file");
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::string out_path = "transcript.ndjson";
  scenario->add_option("config", config_path, "Scenario JSON file")->required();
  scenario->add_option("--seed", seed_override, "Override the scenario seed");
  scenario->add_option("--out", out_path, "Transcript output path");

  auto* bench = app.add_subcommand("filter-bench", "Benchmark the cuckoo filter");
  std::uint32_t m = 1024, n = 4, f = 16, queries = 10000;
  double load = 0.7;
  std::uint64_t bench_seed = 1;
  bench->add_option("--m", m, "Bucket count (power of two)");
  bench->add_option("--n", n, "Entries per bucket");
  bench->add_option("--f", f, "Fingerprint bits");
  bench->add_option("--load", load, "Target load factor in [0, 1]");
  bench->add_option("--queries", queries, "Absent-item queries for the FP measurement");
  bench->add_option("--seed", bench_seed, "RNG seed");

  auto* demo = app.add_subcommand("registry-demo", "Run a registry lifecycle script");
  std::string script_path;
  std::optional<std::uint64_t> demo_seed;
  demo->add_option("--script", script_path, "Script JSON file")->required();
  demo->add_option("--seed", demo_seed, "Override the script seed");

  auto* anomaly = app.add_subcommand("anomaly-run", "Evaluate correlation rules over readings");
  std::string readings_path, rules_path, anomaly_out;
  anomaly->add_option("--readings", readings_path, "Readings NDJSON file")->required();
  anomaly->add_option("--rules", rules_path, "Rules JSON file")->required();
  anomaly->add_option("--out", anomaly_out, "Findings output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags are an input error
  }

  if (scenario->parsed()) return run_scenario_cmd(config_path, seed_override, out_path);
  if (bench->parsed()) return run_filter_bench(m, n, f, load, queries, bench_seed);
  if (demo->parsed()) return run_registry_demo(script_path, demo_seed);
  if (anomaly->parsed()) return run_anomaly(readings_path, rules_path, anomaly_out);
  return 2;
}
