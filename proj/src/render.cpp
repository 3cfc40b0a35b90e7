#include "ptrail/render.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "ptrail/util.hpp"

namespace ptrail {

namespace {

constexpr std::size_t kMaxLabel = 40;

std::uint32_t fnv1a(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

std::string hex8(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(8, '0');
  for (int i = 7; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

// Long labels are cut at 40 characters; clashing labels pick up a stable
// content hash so two nodes never look identical by accident.
std::string make_label(const std::string& full,
                       std::set<std::string>& used) {
  std::string label = full;
  if (label.size() > kMaxLabel) {
    label = label.substr(0, kMaxLabel - 9) + "~" + hex8(fnv1a(full));
  }
  if (used.count(label)) {
    std::string tagged = label;
    if (tagged.size() + 9 > kMaxLabel && tagged.size() > 9) {
      tagged = tagged.substr(0, tagged.size() - 9);
    }
    label = tagged + "#" + hex8(fnv1a(full));
  }
  used.insert(label);
  return label;
}

const char* kUnitPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                              "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

std::string to_dot(const CausalSlice& slice, const ProvenanceGraph& graph,
                   const RenderOptions& opts) {
  std::ostringstream out;
  out << "digraph provenance {\n";
  out << "  rankdir=TB;\n";
  out << "  node [fontsize=10];\n";

  std::set<EntityId> untrusted(slice.untrusted_roots.begin(),
                               slice.untrusted_roots.end());
  std::set<std::string> used_labels;
  std::map<EntityId, std::string> labels;
  for (EntityId id : slice.entities) {
    labels[id] = make_label(graph.entity(id).label(), used_labels);
  }

  auto emit_node = [&](std::ostream& os, EntityId id, const char* indent) {
    const Entity& e = graph.entity(id);
    os << indent << "e" << id << " [label=\"" << dot_escape(labels[id])
       << "\"";
    switch (e.kind) {
      case EntityKind::Process: os << ", shape=oval"; break;
      case EntityKind::File: os << ", shape=note"; break;
      case EntityKind::Socket: os << ", shape=diamond"; break;
    }
    if (untrusted.count(id)) {
      os << ", color=red, penwidth=2, xlabel=\"untrusted\"";
    }
    if (id == slice.seed.entity) os << ", style=bold";
    os << "];\n";
  };

  if (opts.cluster_by_pgid) {
    // One cluster per process group, everything else at top level.
    std::map<std::int32_t, std::vector<EntityId>> clusters;
    std::vector<EntityId> loose;
    for (EntityId id : slice.entities) {
      const Entity& e = graph.entity(id);
      if (e.kind == EntityKind::Process) {
        clusters[e.pgid].push_back(id);
      } else {
        loose.push_back(id);
      }
    }
    for (const auto& [pgid, members] : clusters) {
      out << "  subgraph cluster_" << pgid << " {\n";
      out << "    label=\"pgid " << pgid << "\";\n";
      out << "    style=dashed;\n";
      for (EntityId id : members) emit_node(out, id, "    ");
      out << "  }\n";
    }
    for (EntityId id : loose) emit_node(out, id, "  ");
  } else {
    for (EntityId id : slice.entities) emit_node(out, id, "  ");
  }

  std::size_t rank = 0;
  for (std::uint32_t ei : slice.edges) {
    const FlowEdge& e = graph.edge(ei);
    ++rank;
    out << "  e" << e.src << " -> e" << e.dst << " [label=\"";
    if (opts.numbered_edges) {
      out << rank;
    } else {
      out << syscall_name(e.call);
    }
    out << "\"";
    if (opts.color_units && e.unit != kNoUnit) {
      out << ", color=\"" << kUnitPalette[e.unit % 8] << "\"";
    }
    out << "];\n";
  }

  out << "}\n";
  return out.str();
}

}  // namespace ptrail
