#include "ptrail/model.hpp"

#include <array>
#include <unordered_map>

#include "ptrail/util.hpp"

namespace ptrail {

namespace {

struct SyscallInfo {
  std::string_view name;
  Syscall call;
  SyscallCategory category;  // category of the non-thread interpretation
};

constexpr std::array<SyscallInfo, 40> kSyscalls{{
    {"clone", Syscall::Clone, SyscallCategory::InformationFlow},
    {"fork", Syscall::Fork, SyscallCategory::InformationFlow},
    {"vfork", Syscall::Vfork, SyscallCategory::InformationFlow},
    {"rfork", Syscall::Rfork, SyscallCategory::InformationFlow},
    {"msgsnd", Syscall::Msgsnd, SyscallCategory::InformationFlow},
    {"msgrcv", Syscall::Msgrcv, SyscallCategory::InformationFlow},
    {"wait", Syscall::Wait, SyscallCategory::InformationFlow},
    {"write", Syscall::Write, SyscallCategory::InformationFlow},
    {"pwrite", Syscall::Pwrite, SyscallCategory::InformationFlow},
    {"writev", Syscall::Writev, SyscallCategory::InformationFlow},
    {"pwritev", Syscall::Pwritev, SyscallCategory::InformationFlow},
    {"send", Syscall::Send, SyscallCategory::InformationFlow},
    {"sendto", Syscall::Sendto, SyscallCategory::InformationFlow},
    {"sendmsg", Syscall::Sendmsg, SyscallCategory::InformationFlow},
    {"read", Syscall::Read, SyscallCategory::InformationFlow},
    {"recv", Syscall::Recv, SyscallCategory::InformationFlow},
    {"recvfrom", Syscall::Recvfrom, SyscallCategory::InformationFlow},
    {"recvmsg", Syscall::Recvmsg, SyscallCategory::InformationFlow},
    {"execl", Syscall::Execl, SyscallCategory::InformationFlow},
    {"execv", Syscall::Execv, SyscallCategory::InformationFlow},
    {"execle", Syscall::Execle, SyscallCategory::InformationFlow},
    {"execve", Syscall::Execve, SyscallCategory::InformationFlow},
    {"execlp", Syscall::Execlp, SyscallCategory::InformationFlow},
    {"execvp", Syscall::Execvp, SyscallCategory::InformationFlow},
    {"open", Syscall::Open, SyscallCategory::Creation},
    {"creat", Syscall::Creat, SyscallCategory::Creation},
    {"dup", Syscall::Dup, SyscallCategory::Creation},
    {"link", Syscall::Link, SyscallCategory::Creation},
    {"socket", Syscall::Socket, SyscallCategory::Creation},
    {"socketpair", Syscall::Socketpair, SyscallCategory::Creation},
    {"lseek", Syscall::Lseek, SyscallCategory::Preparatory},
    {"connect", Syscall::Connect, SyscallCategory::Preparatory},
    {"listen", Syscall::Listen, SyscallCategory::Preparatory},
    {"accept", Syscall::Accept, SyscallCategory::Preparatory},
    {"bind", Syscall::Bind, SyscallCategory::Preparatory},
    {"close", Syscall::Close, SyscallCategory::Termination},
    {"exit", Syscall::Exit, SyscallCategory::Termination},
    {"exit_group", Syscall::ExitGroup, SyscallCategory::Termination},
    {"unlink", Syscall::Unlink, SyscallCategory::Termination},
    {"kill", Syscall::Kill, SyscallCategory::Termination},
}};

const std::unordered_map<std::string_view, const SyscallInfo*>& name_index() {
  static const auto* index = [] {
    auto* m = new std::unordered_map<std::string_view, const SyscallInfo*>();
    for (const auto& info : kSyscalls) m->emplace(info.name, &info);
    return m;
  }();
  return *index;
}

constexpr std::uint64_t kCloneThreadFlag = 0x10000;  // CLONE_THREAD

}  // namespace

std::optional<Syscall> syscall_from_name(std::string_view name) {
  auto it = name_index().find(name);
  if (it == name_index().end()) return std::nullopt;
  return it->second->call;
}

std::string_view syscall_name(Syscall call) {
  return kSyscalls[static_cast<std::size_t>(call)].name;
}

const std::string* Event::arg(std::string_view key) const {
  for (const auto& a : args) {
    if (a.key == key) return &a.value;
  }
  return nullptr;
}

std::optional<std::int64_t> Event::int_arg(std::string_view key) const {
  const std::string* v = arg(key);
  if (!v) return std::nullopt;
  return util::parse_int(*v);
}

bool is_thread_clone(const std::vector<Arg>& args) {
  for (const auto& a : args) {
    if (a.key != "flags") continue;
    if (a.value.find("CLONE_THREAD") != std::string::npos) return true;
    // Numeric flag words, decimal or hex.
    std::string_view v = a.value;
    std::uint64_t bits = 0;
    if (v.starts_with("0x") || v.starts_with("0X")) {
      bits = std::strtoull(a.value.c_str() + 2, nullptr, 16);
    } else if (auto n = util::parse_uint(v)) {
      bits = *n;
    }
    if (bits & kCloneThreadFlag) return true;
  }
  return false;
}

std::optional<SyscallKind> classify(std::string_view name,
                                    const std::vector<Arg>& args) {
  auto it = name_index().find(name);
  if (it == name_index().end()) return std::nullopt;
  const SyscallInfo& info = *it->second;
  SyscallCategory cat = info.category;
  if (info.call == Syscall::Clone && is_thread_clone(args)) {
    cat = SyscallCategory::Preparatory;
  }
  return SyscallKind{info.call, cat};
}

SyscallCategory categorize(Syscall call, bool thread_clone) {
  if (call == Syscall::Clone && thread_clone) {
    return SyscallCategory::Preparatory;
  }
  return kSyscalls[static_cast<std::size_t>(call)].category;
}

SyscallCategory categorize(const Event& ev) {
  return categorize(ev.call, ev.call == Syscall::Clone &&
                                 is_thread_clone(ev.args));
}

std::pair<EntityId, EntityId> flow_direction(const Event& ev, EntityId caller,
                                             EntityId object) {
  switch (ev.call) {
    case Syscall::Clone:
    case Syscall::Fork:
    case Syscall::Vfork:
    case Syscall::Rfork:
    case Syscall::Msgsnd:
    case Syscall::Write:
    case Syscall::Pwrite:
    case Syscall::Writev:
    case Syscall::Pwritev:
    case Syscall::Send:
    case Syscall::Sendto:
    case Syscall::Sendmsg:
      return {caller, object};
    case Syscall::Wait:
    case Syscall::Msgrcv:
    case Syscall::Read:
    case Syscall::Recv:
    case Syscall::Recvfrom:
    case Syscall::Recvmsg:
    case Syscall::Execl:
    case Syscall::Execv:
    case Syscall::Execle:
    case Syscall::Execve:
    case Syscall::Execlp:
    case Syscall::Execvp:
      return {object, caller};
    default:
      throw InternalError("flow_direction called for a non-flow syscall: " +
                          std::string(syscall_name(ev.call)));
  }
}

std::string Entity::label() const {
  switch (kind) {
    case EntityKind::Process:
      return comm + "(" + std::to_string(pid) + ")";
    case EntityKind::File: {
      std::string name(util::basename_of(path));
      if (range) {
        name += "[" + std::to_string(range->lo) + ",";
        name += range->hi == kOffsetEnd ? "end" : std::to_string(range->hi);
        name += ")";
      }
      return name;
    }
    case EntityKind::Socket:
      if (!remote.empty()) return remote;
      if (!local.empty()) return local;
      return pair ? "ipc-pair" : "socket";
  }
  return {};
}

std::string_view unit_state_name(UnitState s) {
  switch (s) {
    case UnitState::Active: return "active";
    case UnitState::Inactive: return "inactive";
    case UnitState::Closed: return "closed";
  }
  return "inactive";
}

std::optional<UnitState> unit_state_from_name(std::string_view s) {
  if (s == "active") return UnitState::Active;
  if (s == "inactive") return UnitState::Inactive;
  if (s == "closed") return UnitState::Closed;
  return std::nullopt;
}

}  // namespace ptrail
