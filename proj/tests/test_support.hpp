#pragma once

#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ptrail/forensics.hpp"
#include "ptrail/graph.hpp"
#include "ptrail/ingest.hpp"
#include "ptrail/model.hpp"
#include "ptrail/partition.hpp"
#include "ptrail/util.hpp"

namespace ptrail::testing {

// ---------------------------------------------------------------------------
// Event construction helpers.

struct EventMaker {
  std::uint64_t seq = 0;
  std::uint64_t ts = 1000;

  Event make(std::int32_t pid, std::int32_t pgid, const std::string& comm,
             const std::string& call, std::vector<Arg> args,
             std::int64_t retval) {
    Event ev;
    ev.seq = ++seq;
    ev.ts_ns = (ts += 100);
    ev.pid = pid;
    ev.tid = pid;
    ev.pgid = pgid;
    ev.comm = comm;
    auto k = syscall_from_name(call);
    REQUIRE(k.has_value());
    ev.call = *k;
    ev.args = std::move(args);
    ev.retval = retval;
    return ev;
  }
};

inline std::vector<Event> parse_fixture_text(const std::string& text) {
  std::istringstream in(text);
  return read_trace(in, TraceFormat::PipeText);
}

inline std::string fixture_path(const std::string& name) {
  return std::string(PTRAIL_FIXTURE_DIR) + "/" + name;
}

// ---------------------------------------------------------------------------
// Independent reference implementations ("oracles").

// Classic quadratic table, length only. Kept deliberately separate from the
// mining code path.
inline std::size_t lcs_length_oracle(const std::vector<std::string>& a,
                                     const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> dp(
      a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      dp[i][j] = a[i - 1] == b[j - 1]
                     ? dp[i - 1][j - 1] + 1
                     : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  return dp[a.size()][b.size()];
}

// Brute-force time- and unit-respecting reachability by fixpoint over
// (entity, bound) pairs; no dominance pruning, no shared code with the
// traversal under test.
struct ReachOracle {
  std::set<EntityId> entities;
  std::set<std::uint32_t> edges;
};

inline ReachOracle backward_oracle(const ProvenanceGraph& graph,
                                   const PartitionResult* units,
                                   SeedPoint seed) {
  std::set<std::pair<EntityId, std::uint64_t>> states;  // (entity, crossing)
  std::vector<std::pair<EntityId, std::uint64_t>> work{{seed.entity,
                                                        seed.at_seq}};
  states.insert(work[0]);
  ReachOracle out;
  out.entities.insert(seed.entity);
  while (!work.empty()) {
    auto [x, crossing] = work.back();
    work.pop_back();
    UnitId want = kNoUnit;
    const Entity& e = graph.entity(x);
    if (units && e.kind == EntityKind::Process) {
      if (auto u = units->unit_at(e.pgid, crossing)) want = *u;
    }
    bool is_seed_state = x == seed.entity && crossing == seed.at_seq;
    for (std::uint32_t ei = 0; ei < graph.edges().size(); ++ei) {
      const FlowEdge& edge = graph.edge(ei);
      if (edge.dst != x) continue;
      // The detection edge itself belongs to the slice; everything else
      // must be strictly earlier than the crossing.
      if (is_seed_state ? edge.seq > crossing : edge.seq >= crossing) continue;
      if (want != kNoUnit && edge.unit != want) continue;
      out.edges.insert(ei);
      out.entities.insert(edge.src);
      auto state = std::make_pair(edge.src, edge.seq);
      if (states.insert(state).second) work.push_back(state);
    }
  }
  return out;
}

inline ReachOracle forward_oracle(const ProvenanceGraph& graph,
                                  const PartitionResult* units,
                                  EntityId root, std::uint64_t from_seq) {
  std::set<std::tuple<EntityId, std::uint64_t, bool>> states;
  std::vector<std::tuple<EntityId, std::uint64_t, bool>> work{
      {root, from_seq, true}};
  states.insert(work[0]);
  ReachOracle out;
  out.entities.insert(root);
  while (!work.empty()) {
    auto [x, bound, is_start] = work.back();
    work.pop_back();
    UnitId want = kNoUnit;
    const Entity& e = graph.entity(x);
    if (!is_start && units && e.kind == EntityKind::Process) {
      if (auto u = units->unit_at(e.pgid, bound)) want = *u;
    }
    for (std::uint32_t ei = 0; ei < graph.edges().size(); ++ei) {
      const FlowEdge& edge = graph.edge(ei);
      if (edge.src != x) continue;
      if (edge.seq <= bound) continue;
      if (want != kNoUnit && edge.unit != want) continue;
      out.edges.insert(ei);
      out.entities.insert(edge.dst);
      auto state = std::make_tuple(edge.dst, edge.seq, false);
      if (states.insert(state).second) work.push_back(state);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random graphs with unit annotations for the traversal equivalence tests.

struct RandomGraph {
  ProvenanceGraph graph;
  PartitionResult partition;
};

inline RandomGraph make_random_graph(std::mt19937_64& rng,
                                     std::size_t max_entities = 50,
                                     std::size_t max_edges = 100) {
  RandomGraph rg;
  std::size_t n = 4 + rng() % (max_entities - 3);
  for (std::size_t i = 0; i < n; ++i) {
    Entity e;
    switch (rng() % 3) {
      case 0:
        e.kind = EntityKind::Process;
        e.pid = static_cast<std::int32_t>(10 + i);
        e.pgid = static_cast<std::int32_t>(10 + rng() % 4);  // few groups
        e.comm = "p" + std::to_string(i);
        break;
      case 1:
        e.kind = EntityKind::File;
        e.path = "/f/" + std::to_string(i);
        break;
      default:
        e.kind = EntityKind::Socket;
        e.remote = "10.0.0." + std::to_string(i % 250) + ":80";
        break;
    }
    rg.graph.add_entity(std::move(e));
  }

  // Partition two of the process groups with random switch tables.
  std::uint64_t horizon = 10 * (max_edges + 2);
  UnitId next_unit = 0;
  for (std::int32_t pgid : {10, 11}) {
    PgidPartition pp;
    pp.pgid = pgid;
    pp.profile = "test";
    std::uint64_t at = 0;
    std::size_t switches = 1 + rng() % 4;
    for (std::size_t s = 0; s < switches; ++s) {
      ExecutionUnit u;
      u.id = next_unit;
      u.owner_pgid = pgid;
      u.index_in_pgid = static_cast<std::uint32_t>(s);
      rg.partition.units.push_back(u);
      pp.switches.emplace_back(at, next_unit++);
      at += 1 + rng() % (horizon / switches);
    }
    rg.partition.by_pgid.emplace(pgid, std::move(pp));
  }

  std::size_t m = 1 + rng() % max_edges;
  std::uint64_t seq = 0;
  for (std::size_t i = 0; i < m; ++i) {
    seq += 1 + rng() % 9;
    EntityId a = static_cast<EntityId>(rng() % n);
    EntityId b = static_cast<EntityId>(rng() % n);
    if (a == b) continue;
    FlowEdge e;
    e.src = a;
    e.dst = b;
    e.seq = seq;
    e.ts_ns = seq * 10;
    e.call = Syscall::Write;
    // Stamp the unit the way the pipeline would: by the process endpoint's
    // active unit at the edge seq.
    for (EntityId endpoint : {a, b}) {
      const Entity& ent = rg.graph.entity(endpoint);
      if (ent.kind == EntityKind::Process) {
        if (auto u = rg.partition.unit_at(ent.pgid, e.seq)) {
          e.unit = *u;
          break;
        }
      }
    }
    rg.graph.add_edge(e);
  }
  return rg;
}

}  // namespace ptrail::testing
