#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ptrail {

enum class ScenarioKind : std::uint8_t {
  Rat,                  // mail client, trojan attachment, network scan
  DriveByDownload,      // browser tab, dropped payload, pull from git server
  ImSocialEngineering,  // chat client, hostile link, browser to intranet
  Csrf,                 // browser tab riding a session to an intranet host
  DnsRebinding,         // browser tab re-resolved into the intranet
};

std::string_view scenario_kind_name(ScenarioKind kind);
std::optional<ScenarioKind> scenario_kind_from_name(std::string_view name);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Csrf;
  int benign_units = 10;
  int events_per_unit = 60;   // approximate flow events per benign unit
  int preamble_events = 200;  // approximate startup events
  int opaque_steps = 4;       // exploit-internal hops in the payload chain
  std::uint64_t seed = 1;
};

// Machine-readable answer key for a generated trace. Entities are named in
// the resolver grammar so the checks survive entity-id churn.
struct GroundTruth {
  std::string scenario;
  std::uint64_t seed = 0;
  int benign_units = 0;
  std::string root_spec;            // the true origin
  std::string seed_entity_spec;     // where detection fires
  std::uint64_t seed_at_seq = 0;
  std::string malicious_unit_key;
  std::vector<std::string> benign_input_specs;

  std::string to_json() const;
  static GroundTruth from_json(const std::string& text);
};

struct ScenarioOutput {
  std::string trace_text;  // pipe format, noise records included
  GroundTruth truth;
};

// Deterministic for a fixed spec: same seed, same bytes.
ScenarioOutput generate(const ScenarioSpec& spec);

// Plain high-volume workload for throughput measurement: rotating processes
// doing open/read/write/close cycles, about n_events records.
std::string make_bench_trace(std::size_t n_events, std::uint64_t seed);

}  // namespace ptrail
