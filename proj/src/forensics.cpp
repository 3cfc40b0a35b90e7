#include "ptrail/forensics.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "ptrail/util.hpp"

namespace ptrail {

bool UntrustedPredicate::operator()(const Entity& e) const {
  if (e.kind != EntityKind::Socket) return false;
  if (e.remote.empty()) return false;
  std::string_view host = util::host_of(e.remote);
  if (util::is_private_ipv4(host)) return false;
  for (const auto& suffix : trusted_suffixes) {
    if (host.size() >= suffix.size() &&
        host.substr(host.size() - suffix.size()) == suffix) {
      return false;
    }
  }
  if (e.pair) return false;
  return true;
}

namespace {

struct Frontier {
  EntityId entity;
  std::uint64_t limit;     // backward: edges with seq < limit may be taken
  std::uint64_t crossing;  // seq of the edge we arrived on
  bool no_filter = false;  // start entity: never entered through an edge
};

// Unit filter shared by both directions: when x is a process of a
// partitioned group, only edges stamped with the unit active at the crossing
// seq may be expanded from it. kNoUnit as wanted-unit means "no filter".
UnitId wanted_unit(const ProvenanceGraph& graph, const PartitionResult* units,
                   EntityId x, std::uint64_t crossing, bool constrained) {
  if (!units || !constrained) return kNoUnit;
  const Entity& e = graph.entity(x);
  if (e.kind != EntityKind::Process) return kNoUnit;
  auto u = units->unit_at(e.pgid, crossing);
  return u ? *u : kNoUnit;
}

void finalize_slice(CausalSlice& slice, const ProvenanceGraph& graph,
                    const std::set<std::uint32_t>& edge_set,
                    const std::set<EntityId>& entity_set,
                    const UntrustedPredicate& untrusted) {
  slice.edges.assign(edge_set.begin(), edge_set.end());
  std::sort(slice.edges.begin(), slice.edges.end(),
            [&graph](std::uint32_t a, std::uint32_t b) {
              return graph.edge(a).seq < graph.edge(b).seq;
            });
  slice.entities.assign(entity_set.begin(), entity_set.end());
  std::set<EntityId> with_incoming;
  for (std::uint32_t ei : slice.edges) with_incoming.insert(graph.edge(ei).dst);
  for (EntityId id : slice.entities) {
    if (!with_incoming.count(id)) slice.root_candidates.push_back(id);
  }
  for (EntityId id : slice.root_candidates) {
    if (untrusted(graph.entity(id))) slice.untrusted_roots.push_back(id);
  }
}

}  // namespace

CausalSlice backtrack(const ProvenanceGraph& graph,
                      const PartitionResult* units, SeedPoint seed,
                      const UntrustedPredicate& untrusted) {
  if (seed.entity >= graph.entities().size()) {
    throw UserError("seed entity does not exist in the graph");
  }
  auto seed_edge = graph.edge_index_at_seq(seed.at_seq);
  if (!seed_edge || (graph.edge(*seed_edge).src != seed.entity &&
                     graph.edge(*seed_edge).dst != seed.entity)) {
    throw UserError("seed seq " + std::to_string(seed.at_seq) +
                    " is not an edge touching the seed entity");
  }

  CausalSlice slice;
  slice.seed = seed;
  std::set<std::uint32_t> edge_set;
  std::set<EntityId> entity_set{seed.entity};

  // Best limit already expanded per (entity, unit-at-crossing): a repeat
  // visit with a smaller limit under the same unit can add nothing.
  std::map<std::pair<EntityId, UnitId>, std::uint64_t> best;
  std::deque<Frontier> work;
  work.push_back(Frontier{seed.entity, seed.at_seq + 1, seed.at_seq});

  while (!work.empty()) {
    Frontier f = work.front();
    work.pop_front();
    UnitId want = wanted_unit(graph, units, f.entity, f.crossing, true);
    auto key = std::make_pair(f.entity, want);
    auto it = best.find(key);
    if (it != best.end() && it->second >= f.limit) continue;
    best[key] = f.limit;

    for (std::uint32_t ei : graph.incoming(f.entity)) {
      const FlowEdge& e = graph.edge(ei);
      if (e.seq >= f.limit) break;  // incoming list is seq-ordered
      if (want != kNoUnit && e.unit != want) continue;
      edge_set.insert(ei);
      entity_set.insert(e.src);
      work.push_back(Frontier{e.src, e.seq, e.seq});
    }
  }

  finalize_slice(slice, graph, edge_set, entity_set, untrusted);
  return slice;
}

CausalSlice forward_track(const ProvenanceGraph& graph,
                          const PartitionResult* units, EntityId root,
                          std::uint64_t from_seq,
                          const UntrustedPredicate& untrusted) {
  if (root >= graph.entities().size()) {
    throw UserError("root entity does not exist in the graph");
  }

  CausalSlice slice;
  slice.seed = SeedPoint{root, from_seq};
  std::set<std::uint32_t> edge_set;
  std::set<EntityId> entity_set{root};

  std::map<std::pair<EntityId, UnitId>, std::uint64_t> best;
  std::deque<Frontier> work;
  // The start entity is not "entered" through any edge, so no unit filter
  // applies to its own expansion.
  work.push_back(Frontier{root, from_seq, 0, true});

  while (!work.empty()) {
    Frontier f = work.front();
    work.pop_front();
    UnitId want =
        wanted_unit(graph, units, f.entity, f.crossing, !f.no_filter);
    auto key = std::make_pair(f.entity, want);
    auto it = best.find(key);
    // Forward dominance is inverted: a smaller lower bound sees more edges.
    if (it != best.end() && it->second <= f.limit) continue;
    best[key] = f.limit;

    const auto& out = graph.outgoing(f.entity);
    for (std::uint32_t ei : out) {
      const FlowEdge& e = graph.edge(ei);
      if (e.seq <= f.limit) continue;
      if (want != kNoUnit && e.unit != want) continue;
      edge_set.insert(ei);
      entity_set.insert(e.dst);
      work.push_back(Frontier{e.dst, e.seq, e.seq, false});
    }
  }

  finalize_slice(slice, graph, edge_set, entity_set, untrusted);
  return slice;
}

SliceStats slice_stats(const CausalSlice& slice,
                       const ProvenanceGraph& graph) {
  SliceStats stats;
  stats.slice_edges = slice.edges.size();
  stats.total_edges = graph.edges().size();
  stats.reduction_ratio =
      stats.total_edges == 0
          ? 0.0
          : 1.0 - static_cast<double>(stats.slice_edges) /
                      static_cast<double>(stats.total_edges);
  return stats;
}

CausalSlice merge_slices(const CausalSlice& a, const CausalSlice& b,
                         const ProvenanceGraph& graph,
                         const UntrustedPredicate& untrusted) {
  CausalSlice out;
  out.seed = a.seed;
  std::set<std::uint32_t> edge_set(a.edges.begin(), a.edges.end());
  edge_set.insert(b.edges.begin(), b.edges.end());
  std::set<EntityId> entity_set(a.entities.begin(), a.entities.end());
  entity_set.insert(b.entities.begin(), b.entities.end());
  finalize_slice(out, graph, edge_set, entity_set, untrusted);
  return out;
}

CausalSlice whole_graph_slice(const ProvenanceGraph& graph) {
  CausalSlice slice;
  std::set<std::uint32_t> edge_set;
  std::set<EntityId> entity_set;
  for (std::uint32_t i = 0; i < graph.edges().size(); ++i) edge_set.insert(i);
  for (const auto& e : graph.entities()) entity_set.insert(e.id);
  finalize_slice(slice, graph, edge_set, entity_set, UntrustedPredicate{});
  return slice;
}

// ---------------------------------------------------------------------------
// Entity spec grammar.

namespace {

bool addr_matches(const std::string& pattern, const std::string& value) {
  if (pattern == "*" || pattern.empty()) return true;
  return util::glob_match(pattern, value);
}

}  // namespace

EntityId resolve_entity_spec(const ProvenanceGraph& graph,
                             const std::string& spec) {
  std::vector<EntityId> hits;
  auto consider = [&hits](const Entity& e, bool ok) {
    if (ok) hits.push_back(e.id);
  };

  if (spec.starts_with("proc:")) {
    std::string rest = spec.substr(5);
    std::optional<std::uint32_t> inc;
    if (auto pos = rest.find('#'); pos != std::string::npos) {
      auto v = util::parse_uint(rest.substr(pos + 1));
      if (!v) throw UserError("bad incarnation in entity spec: " + spec);
      inc = static_cast<std::uint32_t>(*v);
      rest = rest.substr(0, pos);
    }
    auto pid = util::parse_int(rest);
    if (!pid) throw UserError("bad pid in entity spec: " + spec);
    for (const auto& e : graph.entities()) {
      consider(e, e.kind == EntityKind::Process && e.pid == *pid &&
                      (!inc || e.incarnation == *inc));
    }
    // Without an explicit incarnation, prefer the newest one.
    if (!inc && hits.size() > 1) {
      EntityId newest = hits[0];
      for (EntityId id : hits) {
        if (graph.entity(id).incarnation >
            graph.entity(newest).incarnation) {
          newest = id;
        }
      }
      hits.assign(1, newest);
    }
  } else if (spec.starts_with("file:")) {
    std::string rest = spec.substr(5);
    std::optional<ByteRange> range;
    if (auto pos = rest.rfind('@'); pos != std::string::npos) {
      auto parts = util::split(std::string_view(rest).substr(pos + 1), ',');
      if (parts.size() == 2) {
        auto lo = util::parse_uint(parts[0]);
        auto hi = parts[1] == "end" ? std::optional<std::uint64_t>(kOffsetEnd)
                                    : util::parse_uint(parts[1]);
        if (lo && hi) {
          range = ByteRange{*lo, *hi};
          rest = rest.substr(0, pos);
        }
      }
    }
    for (const auto& e : graph.entities()) {
      bool ok = e.kind == EntityKind::File && e.path == rest;
      if (ok && range) ok = e.range && *e.range == *range;
      if (ok && !range) ok = !e.range;
      consider(e, ok);
    }
    // A bare path with no whole-file node falls back to its interval nodes.
    if (hits.empty() && !range) {
      for (const auto& e : graph.entities()) {
        consider(e, e.kind == EntityKind::File && e.path == rest);
      }
    }
  } else if (spec.starts_with("sock:")) {
    std::string rest = spec.substr(5);
    auto pos = rest.find('-');
    if (pos == std::string::npos) {
      throw UserError("socket spec must be sock:<laddr>-<raddr>: " + spec);
    }
    std::string laddr = rest.substr(0, pos);
    std::string raddr = rest.substr(pos + 1);
    for (const auto& e : graph.entities()) {
      consider(e, e.kind == EntityKind::Socket &&
                      addr_matches(laddr, e.local) &&
                      addr_matches(raddr, e.remote));
    }
  } else {
    throw UserError("entity spec must start with proc:, file: or sock:: " +
                    spec);
  }

  if (hits.empty()) throw UserError("no entity matches spec: " + spec);
  if (hits.size() > 1) {
    throw UserError("entity spec is ambiguous (" +
                    std::to_string(hits.size()) + " matches): " + spec);
  }
  return hits[0];
}

bool entity_matches_spec(const Entity& e, const std::string& spec) {
  if (spec.starts_with("proc:")) {
    if (e.kind != EntityKind::Process) return false;
    std::string rest = spec.substr(5);
    std::optional<std::uint32_t> inc;
    if (auto pos = rest.find('#'); pos != std::string::npos) {
      auto v = util::parse_uint(rest.substr(pos + 1));
      if (!v) return false;
      inc = static_cast<std::uint32_t>(*v);
      rest = rest.substr(0, pos);
    }
    auto pid = util::parse_int(rest);
    return pid && e.pid == *pid && (!inc || e.incarnation == *inc);
  }
  if (spec.starts_with("file:")) {
    if (e.kind != EntityKind::File) return false;
    std::string rest = spec.substr(5);
    std::optional<ByteRange> range;
    if (auto pos = rest.rfind('@'); pos != std::string::npos) {
      auto parts = util::split(std::string_view(rest).substr(pos + 1), ',');
      if (parts.size() == 2) {
        auto lo = util::parse_uint(parts[0]);
        auto hi = parts[1] == "end" ? std::optional<std::uint64_t>(kOffsetEnd)
                                    : util::parse_uint(parts[1]);
        if (lo && hi) {
          range = ByteRange{*lo, *hi};
          rest = rest.substr(0, pos);
        }
      }
    }
    if (e.path != rest) return false;
    if (!range) return true;
    return e.range && *e.range == *range;
  }
  if (spec.starts_with("sock:")) {
    if (e.kind != EntityKind::Socket) return false;
    std::string rest = spec.substr(5);
    auto pos = rest.find('-');
    if (pos == std::string::npos) return false;
    return addr_matches(rest.substr(0, pos), e.local) &&
           addr_matches(rest.substr(pos + 1), e.remote);
  }
  return false;
}

std::string entity_spec_of(const Entity& e) {
  switch (e.kind) {
    case EntityKind::Process:
      return "proc:" + std::to_string(e.pid) + "#" +
             std::to_string(e.incarnation);
    case EntityKind::File: {
      std::string spec = "file:" + e.path;
      if (e.range) {
        spec += "@" + std::to_string(e.range->lo) + ",";
        spec += e.range->hi == kOffsetEnd ? "end"
                                          : std::to_string(e.range->hi);
      }
      return spec;
    }
    case EntityKind::Socket:
      return "sock:" + (e.local.empty() ? "*" : e.local) + "-" +
             (e.remote.empty() ? "*" : e.remote);
  }
  return {};
}

}  // namespace ptrail
