#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ptrail {

// The tracked system-call set. Everything else in a trace is skipped at
// ingest time.
enum class Syscall : std::uint8_t {
  Clone,
  Fork,
  Vfork,
  Rfork,
  Msgsnd,
  Msgrcv,
  Wait,
  Write,
  Pwrite,
  Writev,
  Pwritev,
  Send,
  Sendto,
  Sendmsg,
  Read,
  Recv,
  Recvfrom,
  Recvmsg,
  Execl,
  Execv,
  Execle,
  Execve,
  Execlp,
  Execvp,
  Open,
  Creat,
  Dup,
  Link,
  Socket,
  Socketpair,
  Lseek,
  Connect,
  Listen,
  Accept,
  Bind,
  Close,
  Exit,
  ExitGroup,
  Unlink,
  Kill,
};

enum class SyscallCategory : std::uint8_t {
  InformationFlow,
  Creation,
  Preparatory,
  Termination,
};

std::optional<Syscall> syscall_from_name(std::string_view name);
std::string_view syscall_name(Syscall call);

struct Arg {
  std::string key;
  std::string value;
  bool operator==(const Arg&) const = default;
};

// One parsed trace record. Immutable once built; pgid groups a process with
// its threads.
struct Event {
  std::uint64_t seq = 0;
  std::uint64_t ts_ns = 0;
  std::int32_t pid = 0;
  std::int32_t tid = 0;
  std::int32_t pgid = 0;
  std::string comm;
  Syscall call = Syscall::Open;
  std::vector<Arg> args;
  std::int64_t retval = 0;

  const std::string* arg(std::string_view key) const;
  std::optional<std::int64_t> int_arg(std::string_view key) const;
  bool operator==(const Event&) const = default;
};

struct SyscallKind {
  Syscall call;
  SyscallCategory category;
};

// A clone with CLONE_THREAD in its flags argument creates a thread and is
// preparatory; any other clone creates a process and is an information flow.
bool is_thread_clone(const std::vector<Arg>& args);

// Category lookup for a raw syscall name. nullopt = unrecognized name; the
// caller decides whether that is a skip or an error.
std::optional<SyscallKind> classify(std::string_view name,
                                    const std::vector<Arg>& args);
SyscallCategory categorize(Syscall call, bool thread_clone);
SyscallCategory categorize(const Event& ev);

// ---------------------------------------------------------------------------
// Graph node and edge types.

using EntityId = std::uint32_t;
inline constexpr EntityId kNoEntity = 0xffffffffu;

using UnitId = std::uint32_t;
inline constexpr UnitId kNoUnit = 0xffffffffu;

enum class EntityKind : std::uint8_t { Process, File, Socket };

// Half-open byte range [lo, hi); hi == kOffsetEnd means "to end of file".
inline constexpr std::uint64_t kOffsetEnd = 0xffffffffffffffffull;
struct ByteRange {
  std::uint64_t lo = 0;
  std::uint64_t hi = kOffsetEnd;
  bool operator==(const ByteRange&) const = default;
};

struct Entity {
  EntityId id = kNoEntity;
  EntityKind kind = EntityKind::Process;

  // Process: identity is (pid, incarnation). The incarnation advances on a
  // repeat execve and on pid reuse after exit.
  std::int32_t pid = 0;
  std::int32_t pgid = 0;
  std::uint32_t incarnation = 0;
  std::string comm;
  bool exited = false;

  // File: offset ranges distinguish regions of one path; no range means the
  // whole file. Message queues are carried as files with an "mq:" path.
  std::string path;
  std::optional<ByteRange> range;
  bool synthetic = false;  // placeholder for an unresolvable descriptor

  // Socket: addresses fill in as connect/accept/bind reveal them. pair marks
  // a socketpair (local IPC channel).
  std::string local;
  std::string remote;
  std::string proto;
  bool pair = false;

  std::string label() const;
  bool operator==(const Entity&) const = default;
};

struct FlowEdge {
  EntityId src = kNoEntity;
  EntityId dst = kNoEntity;
  std::uint64_t seq = 0;
  std::uint64_t ts_ns = 0;
  Syscall call = Syscall::Read;
  UnitId unit = kNoUnit;
  bool operator==(const FlowEdge&) const = default;
};

// Ordered (src, dst) for an information-flow event: child-bearing and
// write-side calls flow caller -> object, read-side calls object -> caller.
std::pair<EntityId, EntityId> flow_direction(const Event& ev, EntityId caller,
                                             EntityId object);

// ---------------------------------------------------------------------------
// Signatures: gap-tolerant ordered syscall patterns that mark the creation
// or activation of an execution unit.

enum class SignatureKind : std::uint8_t { UnitStart, UnitSwitch };
enum class DescClass : std::uint8_t { File, Socket, Pipe };

struct ArgConstraint {
  enum class Kind : std::uint8_t {
    Exact,
    SameAsStep,  // value equals the same arg of an earlier matched step
    Any,
    PathPrefix,
    DescriptorClass,
  };
  std::size_t arg_index = 0;
  Kind kind = Kind::Any;
  std::string value;     // Exact / PathPrefix
  std::size_t step = 0;  // SameAsStep, 1-based, must reference an earlier step
  DescClass dclass = DescClass::File;
  bool operator==(const ArgConstraint&) const = default;
};

struct SignaturePattern {
  Syscall call = Syscall::Open;
  std::vector<ArgConstraint> constraints;
  bool operator==(const SignaturePattern&) const = default;
};

struct Signature {
  std::vector<SignaturePattern> steps;
  SignatureKind kind = SignatureKind::UnitStart;
  std::string app;
  // Arg position (of the final step) whose value identifies which unit a
  // completed switch activates. Without it every completion opens a new unit.
  std::optional<std::size_t> key_arg;
  // Consecutive non-matching events tolerated before the cursor resets.
  // Unset = unlimited.
  std::optional<std::uint64_t> gap_budget;
  bool operator==(const Signature&) const = default;
};

// ---------------------------------------------------------------------------
// Execution units.

enum class UnitState : std::uint8_t { Active, Inactive, Closed };

struct ExecutionUnit {
  UnitId id = kNoUnit;
  std::int32_t owner_pgid = 0;
  std::uint32_t index_in_pgid = 0;  // 0 is the preamble unit
  std::string key;
  UnitState state = UnitState::Inactive;
  std::vector<EntityId> provenance;                          // sorted
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;  // [from, to)
  std::vector<std::uint64_t> member_seqs;                    // ascending
};

std::string_view unit_state_name(UnitState s);
std::optional<UnitState> unit_state_from_name(std::string_view s);

}  // namespace ptrail
