#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ptrail/forensics.hpp"
#include "ptrail/graph.hpp"
#include "ptrail/ingest.hpp"
#include "ptrail/partition.hpp"

namespace ptrail {

// What flows between pipeline stages: the events, the graph built from
// them, and optionally unit assignments and a slice. The text form is
// versioned, line-based and deterministic, so dumps are diffable and
// golden-testable.
struct Bundle {
  std::vector<Event> events;
  ProvenanceGraph graph;
  std::optional<PartitionResult> partition;
  std::optional<CausalSlice> slice;
};

std::string save_bundle(const Bundle& bundle);
Bundle load_bundle(const std::string& text);

void save_bundle_file(const Bundle& bundle, const std::string& path);
Bundle load_bundle_file(const std::string& path);

}  // namespace ptrail
