#include "ptrail/partition.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "ptrail/ingest.hpp"
#include "ptrail/util.hpp"

#include "json.hpp"

namespace ptrail {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Corpus loading.

InferenceCorpus load_corpus(const std::string& dir,
                            const std::string& activity_label) {
  InferenceCorpus corpus;
  corpus.activity_label =
      activity_label.empty() ? fs::path(dir).filename().string()
                             : activity_label;
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  if (ec) throw UserError("cannot read corpus directory: " + dir);
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    TraceFormat format = file.extension() == ".jsonl" ? TraceFormat::JsonLines
                                                      : TraceFormat::PipeText;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw UserError("cannot open corpus trace: " + file.string());

    // The first record must be the activity boundary marker.
    std::string first_line;
    bool got_marker = false;
    while (std::getline(in, first_line)) {
      if (!first_line.empty() && first_line.back() == '\r') {
        first_line.pop_back();
      }
      if (first_line.empty()) continue;
      ParseResult res = parse_line(first_line, format, 1);
      auto* skip = std::get_if<Skip>(&res);
      if (!skip || skip->syscall != "mark") {
        throw UserError("corpus trace does not begin at a boundary marker: " +
                        file.string());
      }
      got_marker = true;
      break;
    }
    if (!got_marker) {
      throw UserError("empty corpus trace: " + file.string());
    }
    corpus.traces.push_back(read_trace(in, format));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Descriptor class tracking.

void FdClassTracker::apply(const Event& ev) {
  auto key = [&](std::int64_t fd) { return std::make_pair(ev.pid, fd); };
  switch (ev.call) {
    case Syscall::Open:
    case Syscall::Creat:
      if (ev.retval >= 0) fds_[key(ev.retval)] = DescClass::File;
      break;
    case Syscall::Socket:
      if (ev.retval >= 0) fds_[key(ev.retval)] = DescClass::Socket;
      break;
    case Syscall::Accept:
      if (ev.retval >= 0) fds_[key(ev.retval)] = DescClass::Socket;
      break;
    case Syscall::Socketpair:
      for (const char* k : {"sv0", "sv1"}) {
        if (auto fd = ev.int_arg(k)) fds_[key(*fd)] = DescClass::Pipe;
      }
      break;
    case Syscall::Dup: {
      std::optional<std::int64_t> oldfd = ev.int_arg("oldfd");
      if (!oldfd) oldfd = ev.int_arg("fd");
      if (oldfd && ev.retval >= 0) {
        auto it = fds_.find(key(*oldfd));
        if (it != fds_.end()) fds_[key(ev.retval)] = it->second;
      }
      break;
    }
    case Syscall::Clone:
    case Syscall::Fork:
    case Syscall::Vfork:
    case Syscall::Rfork: {
      if (ev.retval <= 0) break;
      auto child = static_cast<std::int32_t>(ev.retval);
      auto lo = fds_.lower_bound({ev.pid, std::numeric_limits<std::int64_t>::min()});
      std::vector<std::pair<std::int64_t, DescClass>> copied;
      for (auto it = lo; it != fds_.end() && it->first.first == ev.pid; ++it) {
        copied.emplace_back(it->first.second, it->second);
      }
      for (const auto& [fd, cls] : copied) fds_[{child, fd}] = cls;
      break;
    }
    case Syscall::Close:
      if (auto fd = ev.int_arg("fd")) fds_.erase(key(*fd));
      break;
    case Syscall::Exit:
    case Syscall::ExitGroup: {
      auto lo = fds_.lower_bound({ev.pid, std::numeric_limits<std::int64_t>::min()});
      auto it = lo;
      while (it != fds_.end() && it->first.first == ev.pid) it = fds_.erase(it);
      break;
    }
    default:
      break;
  }
}

std::optional<DescClass> FdClassTracker::lookup(std::int32_t pid,
                                                std::int64_t fd) const {
  auto it = fds_.find({pid, fd});
  if (it == fds_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Matching.

bool SignatureMatcher::satisfies(const Event& ev,
                                 const SignaturePattern& step) const {
  if (ev.call != step.call) return false;
  for (const auto& c : step.constraints) {
    if (c.kind == ArgConstraint::Kind::Any) continue;
    if (c.arg_index >= ev.args.size()) return false;
    const std::string& value = ev.args[c.arg_index].value;
    switch (c.kind) {
      case ArgConstraint::Kind::Exact:
        if (value != c.value) return false;
        break;
      case ArgConstraint::Kind::SameAsStep: {
        if (c.step == 0 || c.step > matched_.size()) return false;
        const Event& earlier = matched_[c.step - 1];
        if (c.arg_index >= earlier.args.size()) return false;
        if (earlier.args[c.arg_index].value != value) return false;
        break;
      }
      case ArgConstraint::Kind::PathPrefix:
        if (!value.starts_with(c.value)) return false;
        break;
      case ArgConstraint::Kind::DescriptorClass:
        break;  // checked in feed(), which has the resolver
      case ArgConstraint::Kind::Any:
        break;
    }
  }
  return true;
}

MatchOutcome SignatureMatcher::feed(const Event& ev,
                                    const DescClassFn& desc_class) {
  if (matched_.size() >= sig_->steps.size()) return MatchOutcome::NoMatch;
  const SignaturePattern& step = sig_->steps[matched_.size()];
  bool ok = ev.call == step.call;
  if (ok) {
    for (const auto& c : step.constraints) {
      if (c.kind == ArgConstraint::Kind::DescriptorClass) {
        if (c.arg_index >= ev.args.size() || !desc_class) {
          ok = false;
          break;
        }
        auto cls = desc_class(ev, c.arg_index);
        if (!cls || *cls != c.dclass) {
          ok = false;
          break;
        }
      }
    }
    if (ok) ok = satisfies(ev, step);
  }
  if (!ok) {
    if (sig_->gap_budget && matched_.size() > 0 &&
        ++gap_run_ > *sig_->gap_budget) {
      reset();
    }
    return MatchOutcome::NoMatch;
  }
  gap_run_ = 0;
  matched_.push_back(ev);
  return matched_.size() == sig_->steps.size() ? MatchOutcome::Complete
                                               : MatchOutcome::Advance;
}

void SignatureMatcher::reset() {
  matched_.clear();
  gap_run_ = 0;
}

std::uint64_t SignatureMatcher::first_matched_seq() const {
  return matched_.empty() ? 0 : matched_.front().seq;
}

// ---------------------------------------------------------------------------
// Mining.

namespace {

// Longest common subsequence of two syscall sequences, reconstructed with
// the earliest possible positions in `a`.
std::vector<Syscall> lcs_pair(const std::vector<Syscall>& a,
                              const std::vector<Syscall>& b) {
  std::size_t n = a.size(), m = b.size();
  // dp[i][j] = LCS length of a[i..) and b[j..)
  std::vector<std::vector<std::uint32_t>> dp(n + 1,
                                             std::vector<std::uint32_t>(m + 1));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      dp[i][j] = a[i] == b[j]
                     ? dp[i + 1][j + 1] + 1
                     : std::max(dp[i + 1][j], dp[i][j + 1]);
    }
  }
  std::vector<Syscall> out;
  std::size_t i = 0, j = 0;
  std::uint32_t need = dp[0][0];
  while (need > 0) {
    if (a[i] == b[j] && dp[i + 1][j + 1] == need - 1) {
      out.push_back(a[i]);
      ++i;
      ++j;
      --need;
    } else if (dp[i][j + 1] == need) {
      ++j;
    } else {
      ++i;
    }
  }
  return out;
}

// Leftmost gap-tolerant embedding of the syscall names into a trace.
std::optional<std::vector<std::size_t>> embed(
    const std::vector<Syscall>& names, const std::vector<Event>& trace) {
  std::vector<std::size_t> pos;
  std::size_t at = 0;
  for (Syscall want : names) {
    while (at < trace.size() && trace[at].call != want) ++at;
    if (at == trace.size()) return std::nullopt;
    pos.push_back(at++);
  }
  return pos;
}

std::vector<Syscall> names_of(const std::vector<Event>& trace) {
  std::vector<Syscall> names;
  names.reserve(trace.size());
  for (const auto& ev : trace) names.push_back(ev.call);
  return names;
}

// Per-argument descriptor classes at the embedded positions of one trace.
std::vector<std::vector<std::optional<DescClass>>> classes_at(
    const std::vector<Event>& trace, const std::vector<std::size_t>& pos) {
  std::vector<std::vector<std::optional<DescClass>>> out(pos.size());
  FdClassTracker tracker;
  std::size_t next = 0;
  for (std::size_t i = 0; i < trace.size() && next < pos.size(); ++i) {
    if (i == pos[next]) {
      const Event& ev = trace[i];
      out[next].resize(ev.args.size());
      for (std::size_t k = 0; k < ev.args.size(); ++k) {
        if (auto fd = util::parse_int(ev.args[k].value)) {
          out[next][k] = tracker.lookup(ev.pid, *fd);
        }
      }
      ++next;
    }
    tracker.apply(trace[i]);
  }
  return out;
}

bool verify_signature(const Signature& sig,
                      const std::vector<Event>& trace) {
  FdClassTracker tracker;
  DescClassFn resolve = [&tracker](const Event& ev, std::size_t k)
      -> std::optional<DescClass> {
    if (k >= ev.args.size()) return std::nullopt;
    auto fd = util::parse_int(ev.args[k].value);
    if (!fd) return std::nullopt;
    return tracker.lookup(ev.pid, *fd);
  };
  SignatureMatcher matcher(&sig);
  for (const auto& ev : trace) {
    MatchOutcome outcome = matcher.feed(ev, resolve);
    tracker.apply(ev);
    if (outcome == MatchOutcome::Complete) return true;
  }
  return false;
}

}  // namespace

MineResult mine_signature(const InferenceCorpus& corpus, std::size_t min_len) {
  if (corpus.traces.size() < 2) {
    throw UserError("signature inference needs at least two traces, got " +
                    std::to_string(corpus.traces.size()));
  }

  // Fold the traces through pairwise extraction. The result is a common
  // subsequence of every trace; maximality is best-effort for three or more.
  std::vector<Syscall> common = names_of(corpus.traces[0]);
  for (std::size_t t = 1; t < corpus.traces.size() && !common.empty(); ++t) {
    common = lcs_pair(common, names_of(corpus.traces[t]));
  }
  if (common.size() < min_len) {
    return NoSignature{"common subsequence length " +
                       std::to_string(common.size()) + " is below minimum " +
                       std::to_string(min_len)};
  }

  // Argument abstraction across the per-trace embeddings.
  std::vector<std::vector<std::size_t>> positions;
  for (const auto& trace : corpus.traces) {
    auto pos = embed(common, trace);
    if (!pos) {
      throw InternalError("mined subsequence does not embed in its corpus");
    }
    positions.push_back(std::move(*pos));
  }
  std::vector<std::vector<std::vector<std::optional<DescClass>>>> classes;
  for (std::size_t t = 0; t < corpus.traces.size(); ++t) {
    classes.push_back(classes_at(corpus.traces[t], positions[t]));
  }

  Signature sig;
  sig.kind = SignatureKind::UnitStart;
  sig.app = corpus.activity_label;
  for (std::size_t s = 0; s < common.size(); ++s) {
    SignaturePattern step;
    step.call = common[s];
    std::size_t min_args = SIZE_MAX;
    for (std::size_t t = 0; t < corpus.traces.size(); ++t) {
      min_args = std::min(min_args,
                          corpus.traces[t][positions[t][s]].args.size());
    }
    if (min_args == SIZE_MAX) min_args = 0;
    for (std::size_t k = 0; k < min_args; ++k) {
      bool all_equal = true;
      const std::string& first =
          corpus.traces[0][positions[0][s]].args[k].value;
      for (std::size_t t = 1; t < corpus.traces.size() && all_equal; ++t) {
        all_equal = corpus.traces[t][positions[t][s]].args[k].value == first;
      }
      if (all_equal) {
        ArgConstraint c;
        c.arg_index = k;
        c.kind = ArgConstraint::Kind::Exact;
        c.value = first;
        step.constraints.push_back(std::move(c));
        continue;
      }
      bool class_agrees = classes[0][s].size() > k && classes[0][s][k].has_value();
      DescClass cls = class_agrees ? *classes[0][s][k] : DescClass::File;
      for (std::size_t t = 1; t < corpus.traces.size() && class_agrees; ++t) {
        class_agrees = classes[t][s].size() > k &&
                       classes[t][s][k].has_value() &&
                       *classes[t][s][k] == cls;
      }
      if (class_agrees) {
        ArgConstraint c;
        c.arg_index = k;
        c.kind = ArgConstraint::Kind::DescriptorClass;
        c.dclass = cls;
        step.constraints.push_back(std::move(c));
      }
      // otherwise unconstrained
    }
    sig.steps.push_back(std::move(step));
  }

  // The abstraction must gap-match inside every trace; if the greedy matcher
  // cannot thread the constrained version, fall back to the bare sequence.
  bool valid = true;
  for (const auto& trace : corpus.traces) {
    if (!verify_signature(sig, trace)) {
      valid = false;
      break;
    }
  }
  if (!valid) {
    for (auto& step : sig.steps) step.constraints.clear();
    for (const auto& trace : corpus.traces) {
      if (!verify_signature(sig, trace)) {
        throw InternalError("bare mined subsequence failed to re-match");
      }
    }
  }
  return sig;
}

// ---------------------------------------------------------------------------
// Profile schema.

std::string_view builtin_rule_name(BuiltinRule::Kind kind) {
  switch (kind) {
    case BuiltinRule::Kind::IpcPeerSwitch: return "ipc-peer-switch";
    case BuiltinRule::Kind::FileOffsetSwitch: return "file-offset-switch";
    case BuiltinRule::Kind::FilePathSwitch: return "file-path-switch";
  }
  return "";
}

namespace {

std::optional<BuiltinRule::Kind> builtin_rule_from_name(std::string_view s) {
  if (s == "ipc-peer-switch") return BuiltinRule::Kind::IpcPeerSwitch;
  if (s == "file-offset-switch") return BuiltinRule::Kind::FileOffsetSwitch;
  if (s == "file-path-switch") return BuiltinRule::Kind::FilePathSwitch;
  return std::nullopt;
}

ArgConstraint parse_constraint(const json& j) {
  ArgConstraint c;
  if (!j.contains("arg") || !j["arg"].is_number_unsigned()) {
    throw UserError("profile constraint needs an unsigned \"arg\" index");
  }
  c.arg_index = j["arg"].get<std::size_t>();
  std::string kind = j.value("kind", "any");
  if (kind == "exact") {
    c.kind = ArgConstraint::Kind::Exact;
    c.value = j.value("value", "");
  } else if (kind == "same-as-step") {
    c.kind = ArgConstraint::Kind::SameAsStep;
    c.step = j.value("step", std::size_t{0});
  } else if (kind == "path-prefix") {
    c.kind = ArgConstraint::Kind::PathPrefix;
    c.value = j.value("value", "");
  } else if (kind == "class") {
    c.kind = ArgConstraint::Kind::DescriptorClass;
    std::string cls = j.value("class", "file");
    if (cls == "file") {
      c.dclass = DescClass::File;
    } else if (cls == "socket") {
      c.dclass = DescClass::Socket;
    } else if (cls == "pipe") {
      c.dclass = DescClass::Pipe;
    } else {
      throw UserError("unknown descriptor class: " + cls);
    }
  } else if (kind == "any") {
    c.kind = ArgConstraint::Kind::Any;
  } else {
    throw UserError("unknown constraint kind: " + kind);
  }
  return c;
}

json constraint_to_json(const ArgConstraint& c) {
  json j{{"arg", c.arg_index}};
  switch (c.kind) {
    case ArgConstraint::Kind::Exact:
      j["kind"] = "exact";
      j["value"] = c.value;
      break;
    case ArgConstraint::Kind::SameAsStep:
      j["kind"] = "same-as-step";
      j["step"] = c.step;
      break;
    case ArgConstraint::Kind::PathPrefix:
      j["kind"] = "path-prefix";
      j["value"] = c.value;
      break;
    case ArgConstraint::Kind::DescriptorClass:
      j["kind"] = "class";
      j["class"] = c.dclass == DescClass::File     ? "file"
                   : c.dclass == DescClass::Socket ? "socket"
                                                   : "pipe";
      break;
    case ArgConstraint::Kind::Any:
      j["kind"] = "any";
      break;
  }
  return j;
}

Signature parse_signature(const json& j) {
  Signature sig;
  std::string kind = j.value("kind", "start");
  if (kind == "start") {
    sig.kind = SignatureKind::UnitStart;
  } else if (kind == "switch") {
    sig.kind = SignatureKind::UnitSwitch;
  } else {
    throw UserError("signature kind must be start or switch, got " + kind);
  }
  sig.app = j.value("app", "");
  if (j.contains("key_arg") && !j["key_arg"].is_null()) {
    sig.key_arg = j["key_arg"].get<std::size_t>();
  }
  if (j.contains("gap_budget") && !j["gap_budget"].is_null()) {
    sig.gap_budget = j["gap_budget"].get<std::uint64_t>();
  }
  if (!j.contains("steps") || !j["steps"].is_array() || j["steps"].empty()) {
    throw UserError("signature needs a non-empty steps array");
  }
  std::size_t index = 0;
  for (const auto& js : j["steps"]) {
    ++index;
    SignaturePattern step;
    std::string name = js.value("syscall", "");
    auto call = syscall_from_name(name);
    if (!call) throw UserError("unknown syscall in signature step: " + name);
    step.call = *call;
    if (js.contains("constraints")) {
      for (const auto& jc : js["constraints"]) {
        ArgConstraint c = parse_constraint(jc);
        if (c.kind == ArgConstraint::Kind::SameAsStep &&
            (c.step == 0 || c.step >= index)) {
          throw UserError(
              "same-as-step must reference an earlier step (step " +
              std::to_string(index) + ")");
        }
        step.constraints.push_back(std::move(c));
      }
    }
    sig.steps.push_back(std::move(step));
  }
  if (sig.kind == SignatureKind::UnitSwitch && !sig.key_arg) {
    throw UserError("a switch signature needs key_arg to name its unit");
  }
  return sig;
}

json signature_to_json(const Signature& sig) {
  json steps = json::array();
  for (const auto& step : sig.steps) {
    json js{{"syscall", std::string(syscall_name(step.call))}};
    if (!step.constraints.empty()) {
      json cs = json::array();
      for (const auto& c : step.constraints) cs.push_back(constraint_to_json(c));
      js["constraints"] = cs;
    }
    steps.push_back(js);
  }
  json j{{"kind", sig.kind == SignatureKind::UnitStart ? "start" : "switch"},
         {"steps", steps}};
  if (!sig.app.empty()) j["app"] = sig.app;
  if (sig.key_arg) j["key_arg"] = *sig.key_arg;
  if (sig.gap_budget) j["gap_budget"] = *sig.gap_budget;
  return j;
}

}  // namespace

std::vector<AppProfile> parse_profiles(const std::string& json_text) {
  json root = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded() || !root.is_object() ||
      !root.contains("profiles") || !root["profiles"].is_array()) {
    throw UserError("profile file must be {\"profiles\": [...]}");
  }
  std::vector<AppProfile> out;
  for (const auto& jp : root["profiles"]) {
    AppProfile p;
    p.name = jp.value("name", "");
    if (p.name.empty()) throw UserError("profile without a name");
    if (!jp.contains("match_comm") || !jp["match_comm"].is_array() ||
        jp["match_comm"].empty()) {
      throw UserError("profile " + p.name + " needs match_comm globs");
    }
    for (const auto& g : jp["match_comm"]) {
      p.match_comm.push_back(g.get<std::string>());
    }
    p.provenance = jp.value("provenance", "all-inputs");
    if (p.provenance != "all-inputs" && p.provenance != "socket-reads" &&
        p.provenance != "file-reads") {
      throw UserError("profile " + p.name + ": provenance must be " +
                      "all-inputs, socket-reads or file-reads");
    }
    if (jp.contains("gap_budget") && !jp["gap_budget"].is_null()) {
      p.gap_budget = jp["gap_budget"].get<std::uint64_t>();
    }
    if (jp.contains("rule")) {
      const json& jr = jp["rule"];
      std::string name = jr.value("builtin", "");
      auto kind = builtin_rule_from_name(name);
      if (!kind) throw UserError("unknown builtin rule: " + name);
      BuiltinRule rule;
      rule.kind = *kind;
      if (rule.kind == BuiltinRule::Kind::IpcPeerSwitch) {
        std::string trigger = jr.value("syscall", "recvmsg");
        auto call = syscall_from_name(trigger);
        if (!call) throw UserError("unknown trigger syscall: " + trigger);
        rule.trigger = *call;
        rule.key_arg = jr.value("key_arg", "peer");
        if (jr.contains("member_match_comm")) {
          for (const auto& g : jr["member_match_comm"]) {
            rule.member_match_comm.push_back(g.get<std::string>());
          }
        }
      } else {
        rule.path_glob = jr.value("path_glob", "*");
      }
      p.builtin = std::move(rule);
    }
    if (jp.contains("signatures")) {
      for (const auto& js : jp["signatures"]) {
        Signature sig = parse_signature(js);
        if (!sig.gap_budget) sig.gap_budget = p.gap_budget;
        p.signatures.push_back(std::move(sig));
      }
    }
    if (!p.builtin && p.signatures.empty()) {
      throw UserError("profile " + p.name +
                      " has neither a builtin rule nor signatures");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<AppProfile> load_profiles_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open profile file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_profiles(text);
}

std::string serialize_profiles(const std::vector<AppProfile>& profiles) {
  json arr = json::array();
  for (const auto& p : profiles) {
    json jp{{"name", p.name}, {"match_comm", p.match_comm}};
    if (p.provenance != "all-inputs") jp["provenance"] = p.provenance;
    if (p.gap_budget) jp["gap_budget"] = *p.gap_budget;
    if (p.builtin) {
      json jr{{"builtin", std::string(builtin_rule_name(p.builtin->kind))}};
      if (p.builtin->kind == BuiltinRule::Kind::IpcPeerSwitch) {
        jr["syscall"] = std::string(syscall_name(p.builtin->trigger));
        jr["key_arg"] = p.builtin->key_arg;
        if (!p.builtin->member_match_comm.empty()) {
          jr["member_match_comm"] = p.builtin->member_match_comm;
        }
      } else {
        jr["path_glob"] = p.builtin->path_glob;
      }
      jp["rule"] = jr;
    }
    if (!p.signatures.empty()) {
      json sigs = json::array();
      for (const auto& sig : p.signatures) sigs.push_back(signature_to_json(sig));
      jp["signatures"] = sigs;
    }
    arr.push_back(jp);
  }
  return json{{"profiles", arr}}.dump(2) + "\n";
}

const std::string& default_profiles_json() {
  static const std::string text = R"({"profiles": [
  {"name": "chrome", "match_comm": ["chrome"],
   "rule": {"builtin": "ipc-peer-switch", "syscall": "recvmsg",
            "key_arg": "peer", "member_match_comm": ["chrome_rend*"]}},
  {"name": "thunderbird", "match_comm": ["thunderbird"],
   "rule": {"builtin": "file-offset-switch", "path_glob": "*/INBOX"}},
  {"name": "pidgin", "match_comm": ["pidgin"],
   "rule": {"builtin": "file-path-switch", "path_glob": "*/.purple/logs/*"}}
]}
)";
  return text;
}

// ---------------------------------------------------------------------------
// Partitioning.

namespace {

struct PgidInfo {
  std::int32_t pgid = 0;
  std::int32_t leader_pid = 0;
  std::string leader_comm;
  bool leader_seen = false;
  std::vector<std::string> exec_comms;
};

struct Mark {
  std::uint64_t seq = 0;
  std::int32_t pgid = 0;
  std::string key;
  bool always_new = false;
};

}  // namespace

std::optional<UnitId> PartitionResult::unit_at(std::int32_t pgid,
                                               std::uint64_t seq) const {
  auto it = by_pgid.find(pgid);
  if (it == by_pgid.end()) return std::nullopt;
  const auto& switches = it->second.switches;
  auto pos = std::upper_bound(
      switches.begin(), switches.end(), seq,
      [](std::uint64_t s, const auto& sw) { return s < sw.first; });
  if (pos == switches.begin()) return std::nullopt;
  return std::prev(pos)->second;
}

PartitionResult partition_events(const std::vector<Event>& events,
                                 const ProvenanceGraph& graph,
                                 const std::vector<AppProfile>& profiles) {
  PartitionResult result;

  // Pass 0: group discovery. A group's identity for matching purposes is the
  // comm of its leader (pid == pgid), falling back to its first event.
  std::vector<std::int32_t> pgid_order;
  std::map<std::int32_t, PgidInfo> groups;
  for (const auto& ev : events) {
    auto it = groups.find(ev.pgid);
    if (it == groups.end()) {
      PgidInfo info;
      info.pgid = ev.pgid;
      info.leader_pid = ev.pid;
      info.leader_comm = ev.comm;
      info.leader_seen = ev.pid == ev.pgid;
      groups.emplace(ev.pgid, std::move(info));
      pgid_order.push_back(ev.pgid);
    } else if (!it->second.leader_seen && ev.pid == ev.pgid) {
      it->second.leader_pid = ev.pid;
      it->second.leader_comm = ev.comm;
      it->second.leader_seen = true;
    }
    if (ev.pid == ev.pgid && ev.call >= Syscall::Execl &&
        ev.call <= Syscall::Execvp) {
      groups.at(ev.pgid).exec_comms.push_back(ev.comm);
    }
  }

  auto matches_any = [](const std::vector<std::string>& globs,
                        const std::string& comm) {
    for (const auto& g : globs) {
      if (util::glob_match(g, comm)) return true;
    }
    return false;
  };

  // Bind each group: member groups (folded into another group's units) take
  // precedence over owner groups; among owners the first profile wins.
  struct Binding {
    const AppProfile* owner = nullptr;
    const AppProfile* member_of = nullptr;
  };
  std::map<std::int32_t, Binding> bindings;
  for (std::int32_t pgid : pgid_order) {
    const PgidInfo& info = groups.at(pgid);
    Binding b;
    for (const auto& p : profiles) {
      if (p.builtin && p.builtin->kind == BuiltinRule::Kind::IpcPeerSwitch &&
          matches_any(p.builtin->member_match_comm, info.leader_comm)) {
        b.member_of = &p;
        break;
      }
    }
    if (!b.member_of) {
      for (const auto& p : profiles) {
        if (matches_any(p.match_comm, info.leader_comm)) {
          if (!b.owner) {
            b.owner = &p;
          } else {
            result.diagnostics.push_back(Diagnostic{
                0, "profile-conflict",
                "pgid " + std::to_string(pgid) + " matches both " +
                    b.owner->name + " and " + p.name + "; keeping " +
                    b.owner->name});
          }
        }
      }
      if (b.owner) {
        for (const auto& comm : info.exec_comms) {
          if (!matches_any(b.owner->match_comm, comm)) {
            for (const auto& p : profiles) {
              if (&p != b.owner && matches_any(p.match_comm, comm)) {
                result.diagnostics.push_back(Diagnostic{
                    0, "profile-conflict",
                    "pgid " + std::to_string(pgid) + " renamed to " + comm +
                        " which matches " + p.name + "; keeping " +
                        b.owner->name});
              }
            }
          }
        }
      }
    }
    if (b.owner || b.member_of) bindings[pgid] = b;
  }

  // Pass 1: collect boundary marks from the built-in rules and signature
  // matchers of owner groups.
  std::vector<Mark> marks;
  FdClassTracker tracker;
  DescClassFn resolve = [&tracker](const Event& ev, std::size_t k)
      -> std::optional<DescClass> {
    if (k >= ev.args.size()) return std::nullopt;
    auto fd = util::parse_int(ev.args[k].value);
    if (!fd) return std::nullopt;
    return tracker.lookup(ev.pid, *fd);
  };
  std::map<std::pair<std::int32_t, std::size_t>, SignatureMatcher> matchers;
  for (const auto& [pgid, b] : bindings) {
    if (!b.owner) continue;
    for (std::size_t s = 0; s < b.owner->signatures.size(); ++s) {
      matchers.emplace(std::make_pair(pgid, s),
                       SignatureMatcher(&b.owner->signatures[s]));
    }
  }

  for (const auto& ev : events) {
    auto bit = bindings.find(ev.pgid);
    if (bit != bindings.end() && bit->second.owner) {
      const AppProfile& profile = *bit->second.owner;
      if (profile.builtin) {
        const BuiltinRule& rule = *profile.builtin;
        switch (rule.kind) {
          case BuiltinRule::Kind::IpcPeerSwitch:
            if (ev.call == rule.trigger) {
              if (const std::string* key = ev.arg(rule.key_arg)) {
                marks.push_back(Mark{ev.seq, ev.pgid, *key, false});
              }
            }
            break;
          case BuiltinRule::Kind::FileOffsetSwitch:
          case BuiltinRule::Kind::FilePathSwitch:
            if (ev.call == Syscall::Read) {
              if (auto ei = graph.edge_index_at_seq(ev.seq)) {
                const Entity& src = graph.entity(graph.edge(*ei).src);
                if (src.kind == EntityKind::File &&
                    util::glob_match(rule.path_glob, src.path)) {
                  std::string key = src.path;
                  if (rule.kind == BuiltinRule::Kind::FileOffsetSwitch) {
                    key += "@" +
                           std::to_string(src.range ? src.range->lo : 0);
                  }
                  marks.push_back(Mark{ev.seq, ev.pgid, key, false});
                }
              }
            }
            break;
        }
      }
      for (std::size_t s = 0; s < profile.signatures.size(); ++s) {
        auto& matcher = matchers.at({ev.pgid, s});
        if (matcher.feed(ev, resolve) == MatchOutcome::Complete) {
          const Signature& sig = profile.signatures[s];
          std::uint64_t from = matcher.first_matched_seq();
          if (sig.kind == SignatureKind::UnitStart && !sig.key_arg) {
            marks.push_back(Mark{from, ev.pgid, "", true});
          } else if (sig.key_arg) {
            const Event& last = matcher.matched().back();
            if (*sig.key_arg < last.args.size()) {
              marks.push_back(
                  Mark{from, ev.pgid, last.args[*sig.key_arg].value,
                       sig.kind == SignatureKind::UnitStart});
            } else {
              result.diagnostics.push_back(Diagnostic{
                  ev.seq, "missing-key-arg",
                  "signature completed without key argument " +
                      std::to_string(*sig.key_arg)});
            }
          }
          matcher.reset();
        }
      }
    }
    tracker.apply(ev);
  }

  // Signature completions anchor at their first matched step, which can
  // predate marks recorded since; restore seq order before finalizing.
  std::stable_sort(marks.begin(), marks.end(),
                   [](const Mark& a, const Mark& b) { return a.seq < b.seq; });

  // Finalize owner units: preamble units in group-appearance order, then
  // activation points in stream order. A mark keyed to an existing unit
  // reactivates it; anything else opens a new unit.
  std::map<std::int32_t, std::map<std::string, UnitId>> keyed_units;
  std::map<std::int32_t, std::uint32_t> unit_counter;
  auto new_unit = [&result, &unit_counter](std::int32_t pgid,
                                           const std::string& key) {
    ExecutionUnit unit;
    unit.id = static_cast<UnitId>(result.units.size());
    unit.owner_pgid = pgid;
    unit.index_in_pgid = unit_counter[pgid]++;
    unit.key = key;
    result.units.push_back(std::move(unit));
    return result.units.back().id;
  };

  for (std::int32_t pgid : pgid_order) {
    auto bit = bindings.find(pgid);
    if (bit == bindings.end() || !bit->second.owner) continue;
    PgidPartition part;
    part.pgid = pgid;
    part.profile = bit->second.owner->name;
    part.switches.emplace_back(0, new_unit(pgid, ""));  // preamble
    result.by_pgid.emplace(pgid, std::move(part));
  }
  for (const Mark& mark : marks) {
    auto& part = result.by_pgid.at(mark.pgid);
    UnitId target = kNoUnit;
    if (!mark.always_new) {
      auto& keyed = keyed_units[mark.pgid];
      auto it = keyed.find(mark.key);
      if (it != keyed.end()) target = it->second;
    }
    if (target == kNoUnit) {
      target = new_unit(mark.pgid, mark.key);
      if (!mark.key.empty()) keyed_units[mark.pgid][mark.key] = target;
    }
    if (part.switches.back().second == target) continue;  // already active
    part.switches.emplace_back(mark.seq, target);
  }

  // Member groups attach to the unit keyed by their leader pid.
  for (std::int32_t pgid : pgid_order) {
    auto bit = bindings.find(pgid);
    if (bit == bindings.end() || !bit->second.member_of) continue;
    const PgidInfo& info = groups.at(pgid);
    std::string want = std::to_string(info.leader_pid);
    UnitId found = kNoUnit;
    for (const auto& unit : result.units) {
      if (unit.key != want) continue;
      auto owner = result.by_pgid.find(unit.owner_pgid);
      if (owner != result.by_pgid.end() &&
          owner->second.profile == bit->second.member_of->name) {
        found = unit.id;
        break;
      }
    }
    if (found == kNoUnit) {
      result.diagnostics.push_back(Diagnostic{
          0, "member-without-unit",
          "pgid " + std::to_string(pgid) + " (" + info.leader_comm +
              ") has no unit keyed to pid " + want});
      continue;
    }
    PgidPartition part;
    part.pgid = pgid;
    part.profile = bit->second.member_of->name;
    part.switches.emplace_back(0, found);
    result.by_pgid.emplace(pgid, std::move(part));
  }

  // Pass 2: membership, provenance and final states. The profile's
  // provenance mode can narrow the seed set to one input kind.
  rebuild_members(result, events);
  for (auto& unit : result.units) {
    unit.provenance = unit_provenance(unit, graph);
    auto owner = result.by_pgid.find(unit.owner_pgid);
    if (owner == result.by_pgid.end()) continue;
    std::string mode = "all-inputs";
    for (const auto& p : profiles) {
      if (p.name == owner->second.profile) {
        mode = p.provenance;
        break;
      }
    }
    if (mode == "all-inputs") continue;
    EntityKind keep =
        mode == "socket-reads" ? EntityKind::Socket : EntityKind::File;
    std::erase_if(unit.provenance, [&graph, keep](EntityId id) {
      return graph.entity(id).kind != keep;
    });
  }

  std::map<std::int32_t, bool> pgid_alive;
  for (const auto& entity : graph.entities()) {
    if (entity.kind == EntityKind::Process && !entity.exited) {
      pgid_alive[entity.pgid] = true;
    }
  }
  for (auto& [pgid, part] : result.by_pgid) {
    if (part.switches.empty()) continue;
    UnitId last_active = part.switches.back().second;
    if (result.units[last_active].owner_pgid == pgid) {
      result.units[last_active].state = UnitState::Active;
    }
  }
  for (auto& unit : result.units) {
    if (!pgid_alive.count(unit.owner_pgid)) unit.state = UnitState::Closed;
  }

  return result;
}

void rebuild_members(PartitionResult& partition,
                     const std::vector<Event>& events) {
  for (auto& unit : partition.units) {
    unit.member_seqs.clear();
    unit.spans.clear();
  }
  for (const auto& ev : events) {
    if (auto unit = partition.unit_at(ev.pgid, ev.seq)) {
      partition.units[*unit].member_seqs.push_back(ev.seq);
    }
  }
  // Coverage spans from the switch tables, closed off at the next switch.
  for (const auto& [pgid, part] : partition.by_pgid) {
    for (std::size_t i = 0; i < part.switches.size(); ++i) {
      std::uint64_t from = part.switches[i].first;
      std::uint64_t to = i + 1 < part.switches.size()
                             ? part.switches[i + 1].first
                             : kOffsetEnd;
      partition.units[part.switches[i].second].spans.emplace_back(from, to);
    }
  }
}

void annotate_edge_units(ProvenanceGraph& graph,
                         const std::vector<Event>& events,
                         const PartitionResult& partition) {
  std::size_t edge_at = 0;
  const auto& edges = graph.edges();
  for (const auto& ev : events) {
    if (edge_at == edges.size()) break;
    if (edges[edge_at].seq != ev.seq) continue;
    if (auto unit = partition.unit_at(ev.pgid, ev.seq)) {
      graph.set_edge_unit(static_cast<std::uint32_t>(edge_at), *unit);
    }
    ++edge_at;
  }
}

std::vector<EntityId> unit_provenance(const ExecutionUnit& unit,
                                      const ProvenanceGraph& graph) {
  std::set<EntityId> inputs;
  for (std::uint64_t seq : unit.member_seqs) {
    auto ei = graph.edge_index_at_seq(seq);
    if (!ei) continue;
    const FlowEdge& edge = graph.edge(*ei);
    const Entity& src = graph.entity(edge.src);
    if (src.kind == EntityKind::File || src.kind == EntityKind::Socket) {
      inputs.insert(src.id);
    }
  }
  return {inputs.begin(), inputs.end()};
}

}  // namespace ptrail
