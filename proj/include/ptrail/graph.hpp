#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ptrail/model.hpp"

namespace ptrail {

struct Diagnostic {
  std::uint64_t seq = 0;
  std::string code;
  std::string detail;
};

// Whole-system dependency graph. Built sequentially by GraphBuilder (or the
// dump loader), then treated as immutable; concurrent readers are fine after
// that.
class ProvenanceGraph {
 public:
  EntityId add_entity(Entity e);
  // Edges must arrive in ascending seq order.
  std::uint32_t add_edge(FlowEdge e);

  const std::vector<Entity>& entities() const { return entities_; }
  const Entity& entity(EntityId id) const { return entities_.at(id); }
  Entity& entity_mut(EntityId id) { return entities_.at(id); }

  const std::vector<FlowEdge>& edges() const { return edges_; }
  const FlowEdge& edge(std::uint32_t index) const { return edges_.at(index); }

  // Edge indexes touching an entity, in seq order.
  const std::vector<std::uint32_t>& incoming(EntityId id) const;
  const std::vector<std::uint32_t>& outgoing(EntityId id) const;

  std::optional<std::uint32_t> edge_index_at_seq(std::uint64_t seq) const;

  void set_edge_unit(std::uint32_t index, UnitId unit);

  bool operator==(const ProvenanceGraph& other) const {
    return entities_ == other.entities_ && edges_ == other.edges_;
  }

 private:
  std::vector<Entity> entities_;
  std::vector<FlowEdge> edges_;
  std::vector<std::vector<std::uint32_t>> in_;
  std::vector<std::vector<std::uint32_t>> out_;
};

// Folds events into the graph in seq order. Keeps per-process descriptor
// tables: open/creat/socket/accept install mappings, close removes, dup
// copies, clone and fork copy the whole table to the child, lseek moves the
// stored file offset and reads/writes advance it.
class GraphBuilder {
 public:
  GraphBuilder();

  void apply(const Event& ev);

  ProvenanceGraph& graph() { return graph_; }
  const ProvenanceGraph& graph() const { return graph_; }
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

  // Descriptor-conservation check: every mapped descriptor resolves to a
  // live entity or to a pending file path awaiting its first flow.
  bool validate() const;

 private:
  struct FdEntry {
    bool is_socket = false;
    EntityId entity = kNoEntity;  // sockets and synthetics: always set
    std::string path;             // files: path, entity materializes on flow
    std::uint64_t offset = 0;
    EntityId tail = kNoEntity;  // file interval being extended sequentially
  };

  struct ProcState {
    EntityId entity = kNoEntity;
    bool exec_bound = false;     // this incarnation already ran an exec
    bool pgid_confirmed = false;  // saw an event executed by this pid
    std::map<std::int64_t, FdEntry> fds;
  };

  ProcState& ensure_process(std::int32_t pid, std::int32_t pgid,
                            const std::string& comm);
  EntityId process_for_arg(std::int32_t pid);  // wait targets, maybe exited
  EntityId whole_file(const std::string& path);
  EntityId file_interval(const std::string& path, std::uint64_t lo,
                         std::uint64_t len, FdEntry& entry);
  FdEntry* lookup_fd(ProcState& proc, const Event& ev, std::int64_t fd);
  void diag(const Event& ev, std::string code, std::string detail);

  void handle_flow(const Event& ev, ProcState& proc);
  void handle_creation(const Event& ev, ProcState& proc);
  void handle_preparatory(const Event& ev, ProcState& proc);
  void handle_termination(const Event& ev, ProcState& proc);

  ProvenanceGraph graph_;
  std::vector<Diagnostic> diagnostics_;
  std::unordered_map<std::int32_t, ProcState> procs_;
  std::unordered_map<std::int32_t, std::uint32_t> incarnation_count_;
  std::unordered_map<std::int32_t, EntityId> last_process_entity_;
  // (path + '\0' + lo) -> interval entity; (path) -> whole-file entity.
  std::unordered_map<std::string, EntityId> file_index_;
  std::unordered_map<std::string, EntityId> queue_index_;
  std::uint64_t last_seq_ = 0;
  bool any_event_ = false;
};

struct BuildResult {
  ProvenanceGraph graph;
  std::vector<Diagnostic> diagnostics;
};

BuildResult build_graph(const std::vector<Event>& events);

}  // namespace ptrail
