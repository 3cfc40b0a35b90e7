#include "ptrail/graph.hpp"

#include <algorithm>

#include "ptrail/util.hpp"

namespace ptrail {

namespace {

const std::vector<std::uint32_t> kEmptyAdjacency;

std::string interval_key(const std::string& path, std::uint64_t lo) {
  std::string key = path;
  key += '\0';
  key += std::to_string(lo);
  return key;
}

std::int64_t fd_of(const Event& ev) {
  if (auto fd = ev.int_arg("fd")) return *fd;
  return -1;
}

const char* queue_arg(const Event& ev) {
  if (ev.arg("qid")) return "qid";
  if (ev.arg("msqid")) return "msqid";
  return nullptr;
}

std::string socket_proto(const Event& ev) {
  if (const std::string* p = ev.arg("proto")) return *p;
  if (const std::string* t = ev.arg("type")) {
    if (t->find("DGRAM") != std::string::npos) return "udp";
    if (t->find("STREAM") != std::string::npos) return "tcp";
  }
  return "sock";
}

}  // namespace

EntityId ProvenanceGraph::add_entity(Entity e) {
  e.id = static_cast<EntityId>(entities_.size());
  entities_.push_back(std::move(e));
  in_.emplace_back();
  out_.emplace_back();
  return entities_.back().id;
}

std::uint32_t ProvenanceGraph::add_edge(FlowEdge e) {
  if (e.src == e.dst) {
    throw InternalError("flow edge with identical endpoints at seq " +
                        std::to_string(e.seq));
  }
  if (!edges_.empty() && e.seq <= edges_.back().seq) {
    throw InternalError("flow edges must be appended in ascending seq order");
  }
  auto index = static_cast<std::uint32_t>(edges_.size());
  out_.at(e.src).push_back(index);
  in_.at(e.dst).push_back(index);
  edges_.push_back(e);
  return index;
}

const std::vector<std::uint32_t>& ProvenanceGraph::incoming(
    EntityId id) const {
  return id < in_.size() ? in_[id] : kEmptyAdjacency;
}

const std::vector<std::uint32_t>& ProvenanceGraph::outgoing(
    EntityId id) const {
  return id < out_.size() ? out_[id] : kEmptyAdjacency;
}

std::optional<std::uint32_t> ProvenanceGraph::edge_index_at_seq(
    std::uint64_t seq) const {
  auto it = std::lower_bound(
      edges_.begin(), edges_.end(), seq,
      [](const FlowEdge& e, std::uint64_t s) { return e.seq < s; });
  if (it == edges_.end() || it->seq != seq) return std::nullopt;
  return static_cast<std::uint32_t>(it - edges_.begin());
}

void ProvenanceGraph::set_edge_unit(std::uint32_t index, UnitId unit) {
  edges_.at(index).unit = unit;
}

GraphBuilder::GraphBuilder() = default;

void GraphBuilder::diag(const Event& ev, std::string code,
                        std::string detail) {
  diagnostics_.push_back(Diagnostic{ev.seq, std::move(code),
                                    std::move(detail)});
}

GraphBuilder::ProcState& GraphBuilder::ensure_process(
    std::int32_t pid, std::int32_t pgid, const std::string& comm) {
  auto it = procs_.find(pid);
  if (it != procs_.end()) return it->second;

  Entity e;
  e.kind = EntityKind::Process;
  e.pid = pid;
  e.pgid = pgid;
  e.comm = comm;
  e.incarnation = incarnation_count_[pid]++;
  EntityId id = graph_.add_entity(std::move(e));
  last_process_entity_[pid] = id;
  ProcState state;
  state.entity = id;
  return procs_.emplace(pid, std::move(state)).first->second;
}

EntityId GraphBuilder::process_for_arg(std::int32_t pid) {
  auto it = procs_.find(pid);
  if (it != procs_.end()) return it->second.entity;
  auto last = last_process_entity_.find(pid);
  if (last != last_process_entity_.end()) return last->second;
  return kNoEntity;
}

EntityId GraphBuilder::whole_file(const std::string& path) {
  auto it = file_index_.find(path);
  if (it != file_index_.end()) return it->second;
  Entity e;
  e.kind = EntityKind::File;
  e.path = path;
  EntityId id = graph_.add_entity(std::move(e));
  file_index_.emplace(path, id);
  return id;
}

// Finds or creates the interval entity for [lo, lo+len). Sequential access
// through the same descriptor extends the previous interval in place;
// anything else is keyed by (path, lo) so re-reads of the same region land
// on the same node.
EntityId GraphBuilder::file_interval(const std::string& path,
                                     std::uint64_t lo, std::uint64_t len,
                                     FdEntry& entry) {
  if (len == 0) {
    if (entry.tail != kNoEntity) return entry.tail;
    return whole_file(path);
  }
  std::uint64_t hi = lo + len;
  if (entry.tail != kNoEntity) {
    Entity& tail = graph_.entity_mut(entry.tail);
    if (tail.range && tail.range->hi == lo) {
      tail.range->hi = hi;
      return entry.tail;
    }
  }
  std::string key = interval_key(path, lo);
  auto it = file_index_.find(key);
  if (it != file_index_.end()) {
    Entity& e = graph_.entity_mut(it->second);
    if (e.range && e.range->hi < hi) e.range->hi = hi;
    entry.tail = it->second;
    return it->second;
  }
  Entity e;
  e.kind = EntityKind::File;
  e.path = path;
  e.range = ByteRange{lo, hi};
  EntityId id = graph_.add_entity(std::move(e));
  file_index_.emplace(std::move(key), id);
  entry.tail = id;
  return id;
}

GraphBuilder::FdEntry* GraphBuilder::lookup_fd(ProcState& proc,
                                               const Event& ev,
                                               std::int64_t fd) {
  auto it = proc.fds.find(fd);
  if (it != proc.fds.end()) return &it->second;
  // Trace may begin mid-execution; degrade to a synthetic placeholder node
  // instead of failing.
  diag(ev, "unknown-descriptor",
       "pid " + std::to_string(ev.pid) + " fd " + std::to_string(fd));
  Entity e;
  e.kind = EntityKind::File;
  e.path = "?fd:" + std::to_string(ev.pid) + ":" + std::to_string(fd);
  e.synthetic = true;
  EntityId id = graph_.add_entity(std::move(e));
  FdEntry entry;
  entry.entity = id;
  entry.path = graph_.entity(id).path;
  return &proc.fds.emplace(fd, std::move(entry)).first->second;
}

void GraphBuilder::apply(const Event& ev) {
  if (any_event_ && ev.seq <= last_seq_) {
    throw UserError("events must be applied in ascending seq order (" +
                    std::to_string(last_seq_) + " then " +
                    std::to_string(ev.seq) + ")");
  }
  last_seq_ = ev.seq;
  any_event_ = true;

  ProcState& proc = ensure_process(ev.pid, ev.pgid, ev.comm);
  Entity& pe = graph_.entity_mut(proc.entity);
  if (!proc.pgid_confirmed) {
    // A clone child inherits the parent's pgid provisionally; its first own
    // event is authoritative.
    pe.pgid = ev.pgid;
    if (!proc.exec_bound && pe.comm != ev.comm) pe.comm = ev.comm;
    proc.pgid_confirmed = true;
  }

  switch (categorize(ev)) {
    case SyscallCategory::InformationFlow: handle_flow(ev, proc); break;
    case SyscallCategory::Creation: handle_creation(ev, proc); break;
    case SyscallCategory::Preparatory: handle_preparatory(ev, proc); break;
    case SyscallCategory::Termination: handle_termination(ev, proc); break;
  }
}

void GraphBuilder::handle_flow(const Event& ev, ProcState& proc) {
  EntityId caller = proc.entity;
  EntityId object = kNoEntity;

  switch (ev.call) {
    case Syscall::Clone:
    case Syscall::Fork:
    case Syscall::Vfork:
    case Syscall::Rfork: {
      if (ev.retval <= 0) {
        diag(ev, "failed-spawn", "retval " + std::to_string(ev.retval));
        return;
      }
      auto child_pid = static_cast<std::int32_t>(ev.retval);
      if (procs_.count(child_pid)) {
        diag(ev, "pid-reuse-without-exit", std::to_string(child_pid));
        procs_.erase(child_pid);
      }
      // Copy before inserting the child: insertion may rehash procs_.
      auto inherited = proc.fds;
      caller = proc.entity;
      ProcState& child = ensure_process(child_pid, ev.pgid, ev.comm);
      child.fds = std::move(inherited);  // descriptor inheritance
      child.pgid_confirmed = false;
      object = child.entity;
      break;
    }
    case Syscall::Wait: {
      std::int64_t child = ev.retval;
      if (auto p = ev.int_arg("pid")) child = *p;
      object = process_for_arg(static_cast<std::int32_t>(child));
      if (object == kNoEntity) {
        diag(ev, "unknown-wait-target", std::to_string(child));
        return;
      }
      break;
    }
    case Syscall::Msgsnd:
    case Syscall::Msgrcv: {
      const char* key = queue_arg(ev);
      if (!key) {
        diag(ev, "missing-queue-id", std::string(syscall_name(ev.call)));
        return;
      }
      std::string path = "mq:" + *ev.arg(key);
      auto it = queue_index_.find(path);
      if (it == queue_index_.end()) {
        Entity e;
        e.kind = EntityKind::File;
        e.path = path;
        it = queue_index_.emplace(path, graph_.add_entity(std::move(e))).first;
      }
      object = it->second;
      break;
    }
    case Syscall::Execl:
    case Syscall::Execv:
    case Syscall::Execle:
    case Syscall::Execve:
    case Syscall::Execlp:
    case Syscall::Execvp: {
      const std::string* path = ev.arg("path");
      if (!path) {
        diag(ev, "missing-exec-path", "");
        return;
      }
      if (proc.exec_bound) {
        // Re-exec replaces the program image: a fresh incarnation that
        // inherits the descriptor table.
        ProcState state;
        state.fds = proc.fds;
        state.exec_bound = true;
        state.pgid_confirmed = true;
        Entity e;
        e.kind = EntityKind::Process;
        e.pid = ev.pid;
        e.pgid = ev.pgid;
        e.comm = ev.comm;
        e.incarnation = incarnation_count_[ev.pid]++;
        EntityId fresh = graph_.add_entity(std::move(e));
        state.entity = fresh;
        last_process_entity_[ev.pid] = fresh;
        procs_[ev.pid] = std::move(state);
        caller = fresh;
      } else {
        // First exec binds the image of the incarnation created at fork.
        proc.exec_bound = true;
        graph_.entity_mut(proc.entity).comm = ev.comm;
        caller = proc.entity;
      }
      object = whole_file(*path);
      break;
    }
    default: {  // read/write families over a descriptor
      std::int64_t fd = fd_of(ev);
      FdEntry* entry = lookup_fd(proc, ev, fd);
      if (entry->is_socket || entry->entity != kNoEntity) {
        object = entry->entity;
        if (entry->is_socket) {
          if (const std::string* addr = ev.arg("addr")) {
            Entity& sock = graph_.entity_mut(entry->entity);
            if (sock.remote.empty()) sock.remote = *addr;
          }
        }
      } else {
        // File I/O: resolve the byte interval actually touched.
        bool positioned =
            ev.call == Syscall::Pwrite || ev.call == Syscall::Pwritev;
        std::uint64_t lo = entry->offset;
        if (positioned) {
          if (auto off = ev.int_arg("offset")) {
            lo = static_cast<std::uint64_t>(*off);
          }
        }
        std::uint64_t len =
            ev.retval > 0 ? static_cast<std::uint64_t>(ev.retval) : 0;
        object = file_interval(entry->path, lo, len, *entry);
        if (!positioned && len > 0) entry->offset = lo + len;
      }
      break;
    }
  }

  if (object == kNoEntity || object == caller) {
    if (object == caller) diag(ev, "self-flow-dropped", "");
    return;
  }
  auto [src, dst] = flow_direction(ev, caller, object);
  graph_.add_edge(FlowEdge{src, dst, ev.seq, ev.ts_ns, ev.call, kNoUnit});
}

void GraphBuilder::handle_creation(const Event& ev, ProcState& proc) {
  switch (ev.call) {
    case Syscall::Open:
    case Syscall::Creat: {
      if (ev.retval < 0) return;
      const std::string* path = ev.arg("path");
      if (!path) {
        diag(ev, "missing-path", "open without path arg");
        return;
      }
      FdEntry entry;
      entry.path = *path;
      proc.fds[ev.retval] = std::move(entry);
      break;
    }
    case Syscall::Dup: {
      std::int64_t oldfd = -1;
      if (auto v = ev.int_arg("oldfd")) {
        oldfd = *v;
      } else if (auto v2 = ev.int_arg("fd")) {
        oldfd = *v2;
      }
      if (ev.retval < 0) return;
      FdEntry* entry = lookup_fd(proc, ev, oldfd);
      proc.fds[ev.retval] = *entry;
      break;
    }
    case Syscall::Socket: {
      if (ev.retval < 0) return;
      Entity e;
      e.kind = EntityKind::Socket;
      e.proto = socket_proto(ev);
      FdEntry entry;
      entry.is_socket = true;
      entry.entity = graph_.add_entity(std::move(e));
      proc.fds[ev.retval] = std::move(entry);
      break;
    }
    case Syscall::Socketpair: {
      // Both ends map to one channel node.
      Entity e;
      e.kind = EntityKind::Socket;
      e.pair = true;
      e.proto = "pair";
      e.local = "pair:" + std::to_string(ev.pid) + ":" +
                std::to_string(ev.seq);
      EntityId id = graph_.add_entity(std::move(e));
      for (const char* key : {"sv0", "sv1"}) {
        if (auto fd = ev.int_arg(key)) {
          FdEntry entry;
          entry.is_socket = true;
          entry.entity = id;
          proc.fds[*fd] = std::move(entry);
        }
      }
      break;
    }
    case Syscall::Link:
      break;  // a new name, not a new flow; accesses resolve by path
    default:
      break;
  }
}

void GraphBuilder::handle_preparatory(const Event& ev, ProcState& proc) {
  switch (ev.call) {
    case Syscall::Lseek: {
      std::int64_t fd = fd_of(ev);
      FdEntry* entry = lookup_fd(proc, ev, fd);
      std::int64_t pos = ev.retval;
      if (pos < 0) {
        if (auto off = ev.int_arg("offset")) pos = *off;
      }
      if (pos >= 0) entry->offset = static_cast<std::uint64_t>(pos);
      entry->tail = kNoEntity;  // explicit seek starts a new access region
      break;
    }
    case Syscall::Connect: {
      std::int64_t fd = fd_of(ev);
      auto it = proc.fds.find(fd);
      if (it == proc.fds.end()) {
        diag(ev, "unknown-descriptor",
             "connect on pid " + std::to_string(ev.pid) + " fd " +
                 std::to_string(fd));
        Entity e;
        e.kind = EntityKind::Socket;
        e.synthetic = true;
        FdEntry entry;
        entry.is_socket = true;
        entry.entity = graph_.add_entity(std::move(e));
        it = proc.fds.emplace(fd, std::move(entry)).first;
      }
      if (it->second.is_socket) {
        Entity& sock = graph_.entity_mut(it->second.entity);
        if (const std::string* addr = ev.arg("addr")) sock.remote = *addr;
        if (const std::string* laddr = ev.arg("laddr")) sock.local = *laddr;
      }
      break;
    }
    case Syscall::Bind: {
      std::int64_t fd = fd_of(ev);
      auto it = proc.fds.find(fd);
      if (it != proc.fds.end() && it->second.is_socket) {
        if (const std::string* addr = ev.arg("addr")) {
          graph_.entity_mut(it->second.entity).local = *addr;
        }
      }
      break;
    }
    case Syscall::Accept: {
      if (ev.retval < 0) return;
      std::int64_t fd = fd_of(ev);
      Entity e;
      e.kind = EntityKind::Socket;
      auto it = proc.fds.find(fd);
      if (it != proc.fds.end() && it->second.is_socket) {
        const Entity& listener = graph_.entity(it->second.entity);
        e.local = listener.local;
        e.proto = listener.proto;
      }
      if (const std::string* peer = ev.arg("addr")) e.remote = *peer;
      FdEntry entry;
      entry.is_socket = true;
      entry.entity = graph_.add_entity(std::move(e));
      proc.fds[ev.retval] = std::move(entry);
      break;
    }
    case Syscall::Listen:
      break;
    case Syscall::Clone: {  // thread clone: same group, no flow edge
      if (ev.retval <= 0) return;
      auto child_pid = static_cast<std::int32_t>(ev.retval);
      auto inherited = proc.fds;  // copy first; insertion may rehash procs_
      ProcState& child = ensure_process(child_pid, ev.pgid, ev.comm);
      child.fds = std::move(inherited);
      child.pgid_confirmed = false;
      break;
    }
    default:
      break;
  }
}

void GraphBuilder::handle_termination(const Event& ev, ProcState& proc) {
  switch (ev.call) {
    case Syscall::Close: {
      std::int64_t fd = fd_of(ev);
      if (proc.fds.erase(fd) == 0) {
        diag(ev, "close-unknown-descriptor",
             "pid " + std::to_string(ev.pid) + " fd " + std::to_string(fd));
      }
      break;
    }
    case Syscall::Exit:
    case Syscall::ExitGroup: {
      graph_.entity_mut(proc.entity).exited = true;
      procs_.erase(ev.pid);
      break;
    }
    case Syscall::Unlink:
    case Syscall::Kill:
      break;  // recorded, no structural effect
    default:
      break;
  }
}

bool GraphBuilder::validate() const {
  for (const auto& [pid, proc] : procs_) {
    if (proc.entity >= graph_.entities().size()) return false;
    for (const auto& [fd, entry] : proc.fds) {
      if (entry.entity != kNoEntity) {
        if (entry.entity >= graph_.entities().size()) return false;
      } else if (entry.path.empty()) {
        return false;
      }
    }
  }
  return true;
}

BuildResult build_graph(const std::vector<Event>& events) {
  GraphBuilder builder;
  for (const Event& ev : events) builder.apply(ev);
  return BuildResult{std::move(builder.graph()), builder.diagnostics()};
}

}  // namespace ptrail
