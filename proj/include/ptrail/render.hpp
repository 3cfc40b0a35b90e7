#pragma once

#include <string>

#include "ptrail/forensics.hpp"
#include "ptrail/graph.hpp"

namespace ptrail {

struct RenderOptions {
  bool cluster_by_pgid = true;  // group a process with its threads
  bool numbered_edges = true;   // label edges by their order in the slice
  bool color_units = false;     // tint edges by execution unit
};

// Deterministic DOT text: stable node order (entity id), processes as
// ovals inside one cluster per process group, files as notes, sockets as
// diamonds, edges numbered by seq rank starting at 1. Untrusted roots are
// drawn highlighted instead of getting an artificial origin edge.
std::string to_dot(const CausalSlice& slice, const ProvenanceGraph& graph,
                   const RenderOptions& opts = {});

}  // namespace ptrail
