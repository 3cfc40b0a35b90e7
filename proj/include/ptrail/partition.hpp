#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ptrail/graph.hpp"
#include "ptrail/model.hpp"

namespace ptrail {

// ---------------------------------------------------------------------------
// Signature inference.

// Repeated recordings of one user activity. Every trace starts at its
// boundary marker (a pseudo-record with syscall name "mark", stripped by the
// loader).
struct InferenceCorpus {
  std::string activity_label;
  std::vector<std::vector<Event>> traces;
};

InferenceCorpus load_corpus(const std::string& dir,
                            const std::string& activity_label = "");

struct NoSignature {
  std::string reason;
};

using MineResult = std::variant<Signature, NoSignature>;

// Extracts the longest ordered syscall subsequence common to every trace
// (gaps allowed), then abstracts arguments: identical everywhere -> exact,
// same descriptor class everywhere -> class, otherwise unconstrained.
// Multi-trace inputs are folded through pairwise subsequence extraction, and
// the result is re-verified against every trace. Shorter than min_len ->
// NoSignature. Throws UserError for fewer than two traces.
MineResult mine_signature(const InferenceCorpus& corpus,
                          std::size_t min_len = 3);

// ---------------------------------------------------------------------------
// Online matching.

// Descriptor-class bookkeeping good enough for constraint evaluation:
// which class of object a (pid, fd) refers to at a point in the stream.
class FdClassTracker {
 public:
  void apply(const Event& ev);
  std::optional<DescClass> lookup(std::int32_t pid, std::int64_t fd) const;

 private:
  std::map<std::pair<std::int32_t, std::int64_t>, DescClass> fds_;
};

using DescClassFn =
    std::function<std::optional<DescClass>(const Event&, std::size_t)>;

enum class MatchOutcome : std::uint8_t { Advance, Complete, NoMatch };

// Gap-tolerant cursor over one signature for one process group. Events that
// do not satisfy the next step are gaps and never reset the cursor, unless
// the signature carries a gap budget and it runs out.
class SignatureMatcher {
 public:
  explicit SignatureMatcher(const Signature* sig) : sig_(sig) {}

  MatchOutcome feed(const Event& ev, const DescClassFn& desc_class);
  void reset();

  const std::vector<Event>& matched() const { return matched_; }
  std::uint64_t first_matched_seq() const;

 private:
  bool satisfies(const Event& ev, const SignaturePattern& step) const;

  const Signature* sig_;
  std::vector<Event> matched_;
  std::uint64_t gap_run_ = 0;
};

// ---------------------------------------------------------------------------
// Application profiles.

struct BuiltinRule {
  enum class Kind : std::uint8_t {
    IpcPeerSwitch,    // trigger syscall carrying a peer-process key argument
    FileOffsetSwitch,  // read at a tracked file offset keys the unit
    FilePathSwitch,    // read of a per-task file keys the unit by path
  };
  Kind kind = Kind::FilePathSwitch;
  Syscall trigger = Syscall::Recvmsg;  // IpcPeerSwitch only
  std::string key_arg = "peer";        // IpcPeerSwitch only
  std::string path_glob;               // File*Switch
  // IpcPeerSwitch: process groups whose leader comm matches one of these
  // globs and whose pid is a unit key are folded into that unit.
  std::vector<std::string> member_match_comm;
};

std::string_view builtin_rule_name(BuiltinRule::Kind kind);

struct AppProfile {
  std::string name;
  std::vector<std::string> match_comm;  // globs against the group leader comm
  std::optional<BuiltinRule> builtin;
  std::vector<Signature> signatures;
  std::optional<std::uint64_t> gap_budget;
  std::string provenance = "all-inputs";
};

std::vector<AppProfile> parse_profiles(const std::string& json_text);
std::vector<AppProfile> load_profiles_file(const std::string& path);
std::string serialize_profiles(const std::vector<AppProfile>& profiles);
// chrome / thunderbird / pidgin family rules
const std::string& default_profiles_json();

// ---------------------------------------------------------------------------
// Partitioning.

struct PgidPartition {
  std::int32_t pgid = 0;
  std::string profile;
  // (from_seq, unit) activation points, ascending; entry 0 is the preamble.
  std::vector<std::pair<std::uint64_t, UnitId>> switches;
};

struct PartitionResult {
  std::vector<ExecutionUnit> units;  // unit id == index
  std::map<std::int32_t, PgidPartition> by_pgid;
  std::vector<Diagnostic> diagnostics;

  bool partitioned(std::int32_t pgid) const { return by_pgid.count(pgid) > 0; }
  std::optional<UnitId> unit_at(std::int32_t pgid, std::uint64_t seq) const;
};

// Applies the profile rules over the event stream: a completed unit-start
// opens a new unit and makes it active, a completed unit-switch reactivates
// the unit named by its key, and every event of a partitioned group lands in
// the unit active at its seq. Events before the first boundary belong to the
// group's preamble unit.
PartitionResult partition_events(const std::vector<Event>& events,
                                 const ProvenanceGraph& graph,
                                 const std::vector<AppProfile>& profiles);

// Stamps each edge with the unit of its generating event.
void annotate_edge_units(ProvenanceGraph& graph,
                         const std::vector<Event>& events,
                         const PartitionResult& partition);

// Recomputes unit membership (member_seqs) from the event stream; used by
// the dump loader, which persists only activation spans.
void rebuild_members(PartitionResult& partition,
                     const std::vector<Event>& events);

// External-input entities (sockets and files read) whose flow edges fall
// inside the unit. This set labels everything the unit writes.
std::vector<EntityId> unit_provenance(const ExecutionUnit& unit,
                                      const ProvenanceGraph& graph);

}  // namespace ptrail
