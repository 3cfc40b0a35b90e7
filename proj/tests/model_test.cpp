#include "doctest.h"

#include "test_support.hpp"

#include "ptrail/model.hpp"

using namespace ptrail;

namespace {

const std::vector<Arg> kNoArgs;

std::vector<Arg> flags(const std::string& v) { return {{"flags", v}}; }

}  // namespace

TEST_CASE("every tracked syscall name classifies into its category") {
  struct Expect {
    const char* name;
    SyscallCategory category;
  };
  const Expect table[] = {
      {"fork", SyscallCategory::InformationFlow},
      {"vfork", SyscallCategory::InformationFlow},
      {"rfork", SyscallCategory::InformationFlow},
      {"msgsnd", SyscallCategory::InformationFlow},
      {"msgrcv", SyscallCategory::InformationFlow},
      {"wait", SyscallCategory::InformationFlow},
      {"write", SyscallCategory::InformationFlow},
      {"pwrite", SyscallCategory::InformationFlow},
      {"writev", SyscallCategory::InformationFlow},
      {"pwritev", SyscallCategory::InformationFlow},
      {"send", SyscallCategory::InformationFlow},
      {"sendto", SyscallCategory::InformationFlow},
      {"sendmsg", SyscallCategory::InformationFlow},
      {"read", SyscallCategory::InformationFlow},
      {"recv", SyscallCategory::InformationFlow},
      {"recvfrom", SyscallCategory::InformationFlow},
      {"recvmsg", SyscallCategory::InformationFlow},
      {"execl", SyscallCategory::InformationFlow},
      {"execv", SyscallCategory::InformationFlow},
      {"execle", SyscallCategory::InformationFlow},
      {"execve", SyscallCategory::InformationFlow},
      {"execlp", SyscallCategory::InformationFlow},
      {"execvp", SyscallCategory::InformationFlow},
      {"open", SyscallCategory::Creation},
      {"creat", SyscallCategory::Creation},
      {"dup", SyscallCategory::Creation},
      {"link", SyscallCategory::Creation},
      {"socket", SyscallCategory::Creation},
      {"socketpair", SyscallCategory::Creation},
      {"lseek", SyscallCategory::Preparatory},
      {"connect", SyscallCategory::Preparatory},
      {"listen", SyscallCategory::Preparatory},
      {"accept", SyscallCategory::Preparatory},
      {"bind", SyscallCategory::Preparatory},
      {"close", SyscallCategory::Termination},
      {"exit", SyscallCategory::Termination},
      {"exit_group", SyscallCategory::Termination},
      {"unlink", SyscallCategory::Termination},
      {"kill", SyscallCategory::Termination},
  };
  for (const auto& e : table) {
    auto kind = classify(e.name, kNoArgs);
    REQUIRE_MESSAGE(kind.has_value(), e.name);
    CHECK_MESSAGE(kind->category == e.category, e.name);
  }
}

TEST_CASE("classify disambiguates clone by its flags") {
  auto proc = classify("clone", flags("CLONE_FILES"));
  REQUIRE(proc.has_value());
  CHECK(proc->category == SyscallCategory::InformationFlow);

  auto thread = classify("clone", flags("CLONE_THREAD|CLONE_VM"));
  REQUIRE(thread.has_value());
  CHECK(thread->category == SyscallCategory::Preparatory);

  // Numeric flag words carry CLONE_THREAD as bit 0x10000.
  auto numeric = classify("clone", flags("0x10100"));
  REQUIRE(numeric.has_value());
  CHECK(numeric->category == SyscallCategory::Preparatory);

  auto bare = classify("clone", kNoArgs);
  REQUIRE(bare.has_value());
  CHECK(bare->category == SyscallCategory::InformationFlow);
}

TEST_CASE("classify examples") {
  CHECK(classify("write", {{"fd", "4"}})->category ==
        SyscallCategory::InformationFlow);
  CHECK(classify("lseek", {{"fd", "3"}, {"off", "1024"}})->category ==
        SyscallCategory::Preparatory);
  CHECK_FALSE(classify("getpid", kNoArgs).has_value());
  CHECK_FALSE(classify("", kNoArgs).has_value());
}

TEST_CASE("flow direction follows the source/destination table") {
  testing::EventMaker mk;
  EntityId caller = 1, object = 2;

  Event read = mk.make(10, 10, "p", "read", {{"fd", "3"}}, 100);
  CHECK(flow_direction(read, caller, object) ==
        std::pair<EntityId, EntityId>{object, caller});

  Event write = mk.make(10, 10, "p", "write", {{"fd", "4"}}, 100);
  CHECK(flow_direction(write, caller, object) ==
        std::pair<EntityId, EntityId>{caller, object});

  Event fork = mk.make(10, 10, "p", "fork", {}, 11);
  CHECK(flow_direction(fork, caller, object) ==
        std::pair<EntityId, EntityId>{caller, object});

  Event wait = mk.make(10, 10, "p", "wait", {{"pid", "11"}}, 11);
  CHECK(flow_direction(wait, caller, object) ==
        std::pair<EntityId, EntityId>{object, caller});

  Event exec = mk.make(10, 10, "p", "execve", {{"path", "/bin/x"}}, 0);
  CHECK(flow_direction(exec, caller, object) ==
        std::pair<EntityId, EntityId>{object, caller});
}

TEST_CASE("flow direction is antisymmetric for every flow syscall") {
  const char* flow_calls[] = {"clone",   "fork",    "vfork",   "rfork",
                              "msgsnd",  "msgrcv",  "wait",    "write",
                              "pwrite",  "writev",  "pwritev", "send",
                              "sendto",  "sendmsg", "read",    "recv",
                              "recvfrom", "recvmsg", "execve"};
  testing::EventMaker mk;
  for (const char* name : flow_calls) {
    Event ev = mk.make(10, 10, "p", name, {}, 1);
    auto ab = flow_direction(ev, 1, 2);
    auto ba = flow_direction(ev, 2, 1);
    CHECK_MESSAGE(ab != ba, name);
  }
}

TEST_CASE("flow direction refuses non-flow calls") {
  testing::EventMaker mk;
  Event ev = mk.make(10, 10, "p", "open", {{"path", "/x"}}, 3);
  CHECK_THROWS_AS(flow_direction(ev, 1, 2), InternalError);
}

TEST_CASE("entity labels") {
  Entity p;
  p.kind = EntityKind::Process;
  p.pid = 42;
  p.comm = "bash";
  CHECK(p.label() == "bash(42)");

  Entity f;
  f.kind = EntityKind::File;
  f.path = "/home/alice/.mail/INBOX";
  f.range = ByteRange{4096, 4608};
  CHECK(f.label() == "INBOX[4096,4608)");

  Entity s;
  s.kind = EntityKind::Socket;
  s.remote = "203.0.113.7:80";
  CHECK(s.label() == "203.0.113.7:80");
}

TEST_CASE("event arg accessors") {
  testing::EventMaker mk;
  Event ev = mk.make(1, 1, "p", "open", {{"path", "/x"}, {"flags", "0"}}, 3);
  REQUIRE(ev.arg("path") != nullptr);
  CHECK(*ev.arg("path") == "/x");
  CHECK(ev.arg("nope") == nullptr);
  CHECK(ev.int_arg("flags") == 0);
  CHECK_FALSE(ev.int_arg("path").has_value());
}
