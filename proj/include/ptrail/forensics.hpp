#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptrail/graph.hpp"
#include "ptrail/model.hpp"
#include "ptrail/partition.hpp"

namespace ptrail {

// Where the attack was noticed: an entity plus the seq of the detection
// event touching it.
struct SeedPoint {
  EntityId entity = kNoEntity;
  std::uint64_t at_seq = 0;
};

struct CausalSlice {
  SeedPoint seed;
  std::vector<EntityId> entities;          // ascending id
  std::vector<std::uint32_t> edges;        // edge indexes, ascending seq
  std::vector<EntityId> root_candidates;   // no incoming slice edges
  std::vector<EntityId> untrusted_roots;   // flagged subset of the roots
};

// Flags sockets whose remote side is neither a private address nor a
// trusted name suffix. Stands in for the "known hostile origin" annotation
// on rendered graphs.
struct UntrustedPredicate {
  std::vector<std::string> trusted_suffixes{".local", ".corp", ".internal"};
  bool operator()(const Entity& e) const;
};

// Reverse time-respecting reachability from the seed. Entering a process of
// a partitioned group restricts expansion to edges of the unit that was
// active at the crossing seq; that cut is what keeps one compromised unit
// from dragging in every other input the process ever saw. Pass units ==
// nullptr to traverse without the cut.
CausalSlice backtrack(const ProvenanceGraph& graph,
                      const PartitionResult* units, SeedPoint seed,
                      const UntrustedPredicate& untrusted = {});

// Forward counterpart: everything the root can have influenced after
// from_seq, under the same unit discipline.
CausalSlice forward_track(const ProvenanceGraph& graph,
                          const PartitionResult* units, EntityId root,
                          std::uint64_t from_seq,
                          const UntrustedPredicate& untrusted = {});

struct SliceStats {
  std::size_t slice_edges = 0;
  std::size_t total_edges = 0;
  double reduction_ratio = 0.0;  // 1 - slice/total
};

SliceStats slice_stats(const CausalSlice& slice, const ProvenanceGraph& graph);

CausalSlice merge_slices(const CausalSlice& a, const CausalSlice& b,
                         const ProvenanceGraph& graph,
                         const UntrustedPredicate& untrusted = {});

// A pseudo-slice holding the whole graph; lets the renderer draw unfiltered
// graphs through the same path.
CausalSlice whole_graph_slice(const ProvenanceGraph& graph);

// Entity lookup grammar: proc:<pid>[#inc] | file:<path>[@lo,hi] |
// sock:<laddr>-<raddr> ('*' wildcards allowed in addresses). Resolution must
// be unique.
EntityId resolve_entity_spec(const ProvenanceGraph& graph,
                             const std::string& spec);
std::string entity_spec_of(const Entity& e);

// Loose membership test: does this entity fit the spec pattern? A proc spec
// without an incarnation matches all incarnations, a file spec without a
// range matches every region of the path.
bool entity_matches_spec(const Entity& e, const std::string& spec);

}  // namespace ptrail
