#include "doctest.h"

#include "test_support.hpp"

#include <fstream>

#include "ptrail/graph.hpp"

using namespace ptrail;
using testing::EventMaker;

namespace {

std::vector<Event> load_fixture(const std::string& name) {
  std::ifstream in(testing::fixture_path(name));
  REQUIRE(in.good());
  return read_trace(in, TraceFormat::PipeText);
}

const Entity* find_file(const ProvenanceGraph& g, const std::string& path) {
  for (const auto& e : g.entities()) {
    if (e.kind == EntityKind::File && e.path == path) return &e;
  }
  return nullptr;
}

}  // namespace

// Hand-enumerated expectation: open and close touch only the descriptor
// table, exit retires the process, and the three flow events produce one
// edge each. The write hits an unmapped descriptor, so a synthetic node and
// a diagnostic appear. Four entities, three edges.
TEST_CASE("six-event fixture builds 4 entities and 3 edges") {
  auto events = load_fixture("six_event.pt");
  REQUIRE(events.size() == 6);
  GraphBuilder builder;
  for (const auto& ev : events) builder.apply(ev);
  const ProvenanceGraph& g = builder.graph();

  CHECK(g.entities().size() == 4);
  REQUIRE(g.edges().size() == 3);
  CHECK(g.edges()[0].call == Syscall::Read);
  CHECK(g.edges()[1].call == Syscall::Fork);
  CHECK(g.edges()[2].call == Syscall::Write);
  REQUIRE(builder.diagnostics().size() == 1);
  CHECK(builder.diagnostics()[0].code == "unknown-descriptor");

  const Entity* passwd = find_file(g, "/etc/passwd");
  REQUIRE(passwd != nullptr);
  REQUIRE(passwd->range.has_value());
  CHECK(passwd->range->lo == 0);
  CHECK(passwd->range->hi == 100);
  // read: file -> caller
  CHECK(g.edges()[0].src == passwd->id);
}

TEST_CASE("lseek positions the interval of the following read") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "open", {{"path", "/data/log"}}, 3));
  b.apply(mk.make(5, 5, "p", "lseek",
                  {{"fd", "3"}, {"offset", "4096"}, {"whence", "SEEK_SET"}},
                  4096));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 512));
  const Entity* f = find_file(b.graph(), "/data/log");
  REQUIRE(f != nullptr);
  REQUIRE(f->range.has_value());
  CHECK(f->range->lo == 4096);
  CHECK(f->range->hi == 4608);
}

TEST_CASE("sequential reads extend one interval, a seek starts another") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "open", {{"path", "/data/log"}}, 3));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 100));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 100));
  // Contiguous reads merge into [0, 200).
  std::size_t files = 0;
  for (const auto& e : b.graph().entities()) {
    files += e.kind == EntityKind::File;
  }
  CHECK(files == 1);
  b.apply(mk.make(5, 5, "p", "lseek", {{"fd", "3"}, {"offset", "100"}}, 100));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 50));
  // The seek breaks the run even though the range is numerically adjacent;
  // the re-read of [100, 150) must not fold into the first region's tail.
  files = 0;
  const Entity* second = nullptr;
  for (const auto& e : b.graph().entities()) {
    if (e.kind == EntityKind::File) {
      ++files;
      if (e.range && e.range->lo == 100) second = &e;
    }
  }
  CHECK(files == 2);
  REQUIRE(second != nullptr);
  CHECK(second->range->hi == 150);
}

TEST_CASE("re-reading a stored region lands on the same node") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "open", {{"path", "/mail/box"}}, 3));
  b.apply(mk.make(5, 5, "p", "lseek", {{"fd", "3"}, {"offset", "4096"}}, 4096));
  b.apply(mk.make(5, 5, "p", "write", {{"fd", "3"}}, 700));
  b.apply(mk.make(5, 5, "p", "lseek", {{"fd", "3"}, {"offset", "4096"}}, 4096));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 700));
  REQUIRE(b.graph().edges().size() == 2);
  CHECK(b.graph().edges()[0].dst == b.graph().edges()[1].src);
}

TEST_CASE("positioned writes use their own offset and do not advance") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "open", {{"path", "/data/db"}}, 3));
  b.apply(mk.make(5, 5, "p", "pwrite", {{"fd", "3"}, {"offset", "8192"}}, 64));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 16));  // still at 0
  const Entity* at_8k = nullptr;
  const Entity* at_0 = nullptr;
  for (const auto& e : b.graph().entities()) {
    if (e.kind != EntityKind::File) continue;
    if (e.range && e.range->lo == 8192) at_8k = &e;
    if (e.range && e.range->lo == 0) at_0 = &e;
  }
  REQUIRE(at_8k != nullptr);
  CHECK(at_8k->range->hi == 8256);
  REQUIRE(at_0 != nullptr);
  CHECK(at_0->range->hi == 16);
}

TEST_CASE("clone copies the descriptor table to the child") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "open", {{"path", "/shared"}}, 3));
  b.apply(mk.make(5, 5, "p", "clone", {{"flags", "CLONE_FILES"}}, 6));
  b.apply(mk.make(6, 5, "p", "read", {{"fd", "3"}}, 10));
  CHECK(b.diagnostics().empty());
  REQUIRE(b.graph().edges().size() == 2);
  const FlowEdge& clone_edge = b.graph().edges()[0];
  CHECK(b.graph().entity(clone_edge.src).pid == 5);
  CHECK(b.graph().entity(clone_edge.dst).pid == 6);
}

TEST_CASE("thread clone creates no flow edge but shares descriptors") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "open", {{"path", "/shared"}}, 3));
  b.apply(mk.make(5, 5, "p", "clone", {{"flags", "CLONE_THREAD|CLONE_VM"}}, 6));
  b.apply(mk.make(6, 5, "thr", "read", {{"fd", "3"}}, 10));
  CHECK(b.diagnostics().empty());
  REQUIRE(b.graph().edges().size() == 1);  // just the read
  CHECK(b.graph().edges()[0].call == Syscall::Read);
}

// First exec binds the image of the incarnation created at spawn; only a
// repeat exec opens a new incarnation.
TEST_CASE("exec twice yields two incarnations, each fed by its binary") {
  auto events = load_fixture("exec_twice.pt");
  BuildResult built = build_graph(events);
  std::vector<const Entity*> procs;
  for (const auto& e : built.graph.entities()) {
    if (e.kind == EntityKind::Process && e.pid == 9) procs.push_back(&e);
  }
  REQUIRE(procs.size() == 2);
  CHECK(procs[0]->incarnation == 0);
  CHECK(procs[0]->comm == "prog1");
  CHECK(procs[1]->incarnation == 1);
  CHECK(procs[1]->comm == "prog2");
  // Each incarnation has an exec edge from its program file.
  const Entity* bin1 = find_file(built.graph, "/bin/prog1");
  const Entity* bin2 = find_file(built.graph, "/bin/prog2");
  REQUIRE(bin1 != nullptr);
  REQUIRE(bin2 != nullptr);
  bool exec1 = false, exec2 = false;
  for (const auto& e : built.graph.edges()) {
    if (e.call == Syscall::Execve) {
      exec1 |= e.src == bin1->id && e.dst == procs[0]->id;
      exec2 |= e.src == bin2->id && e.dst == procs[1]->id;
    }
  }
  CHECK(exec1);
  CHECK(exec2);
}

TEST_CASE("fork then exec keeps one incarnation so causality holds") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "sh", "fork", {}, 6));
  b.apply(mk.make(6, 6, "tool", "execve", {{"path", "/bin/tool"}}, 0));
  std::size_t procs6 = 0;
  const Entity* child = nullptr;
  for (const auto& e : b.graph().entities()) {
    if (e.kind == EntityKind::Process && e.pid == 6) {
      ++procs6;
      child = &e;
    }
  }
  CHECK(procs6 == 1);
  REQUIRE(child != nullptr);
  CHECK(child->comm == "tool");
  CHECK(child->pgid == 6);
}

TEST_CASE("pid reuse after exit opens a new incarnation") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "a", "open", {{"path", "/x"}}, 3));
  b.apply(mk.make(5, 5, "a", "exit", {}, 0));
  b.apply(mk.make(5, 5, "b", "open", {{"path", "/y"}}, 3));
  std::size_t incarnations = 0;
  for (const auto& e : b.graph().entities()) {
    if (e.kind == EntityKind::Process && e.pid == 5) ++incarnations;
  }
  CHECK(incarnations == 2);
}

TEST_CASE("message queues pair send and receive through one node") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "a", "msgsnd", {{"qid", "7"}}, 0));
  b.apply(mk.make(8, 8, "b", "msgrcv", {{"qid", "7"}}, 32));
  REQUIRE(b.graph().edges().size() == 2);
  const Entity* q = find_file(b.graph(), "mq:7");
  REQUIRE(q != nullptr);
  CHECK(b.graph().edges()[0].dst == q->id);  // sender -> queue
  CHECK(b.graph().edges()[1].src == q->id);  // queue -> receiver
}

TEST_CASE("wait flows from the reaped child to the caller") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "sh", "fork", {}, 6));
  b.apply(mk.make(6, 6, "sh", "exit", {}, 0));
  b.apply(mk.make(5, 5, "sh", "wait", {{"pid", "6"}}, 6));
  REQUIRE(b.graph().edges().size() == 2);
  const FlowEdge& w = b.graph().edges()[1];
  CHECK(b.graph().entity(w.src).pid == 6);
  CHECK(b.graph().entity(w.dst).pid == 5);
}

TEST_CASE("dup copies a mapping and close removes it") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "open", {{"path", "/x"}}, 3));
  b.apply(mk.make(5, 5, "p", "dup", {{"oldfd", "3"}}, 9));
  b.apply(mk.make(5, 5, "p", "close", {{"fd", "3"}}, 0));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "9"}}, 10));
  CHECK(b.diagnostics().empty());
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 10));
  CHECK(b.diagnostics().size() == 1);  // 3 is gone
}

TEST_CASE("sockets pick up addresses from connect and accept") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "socket", {{"type", "SOCK_STREAM"}}, 3));
  b.apply(mk.make(5, 5, "p", "connect",
                  {{"fd", "3"}, {"addr", "10.0.0.9:443"},
                   {"laddr", "10.0.0.2:40000"}},
                  0));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 64));
  const Entity& sock = b.graph().entity(b.graph().edges()[0].src);
  CHECK(sock.kind == EntityKind::Socket);
  CHECK(sock.remote == "10.0.0.9:443");
  CHECK(sock.local == "10.0.0.2:40000");
  CHECK(sock.proto == "tcp");
}

TEST_CASE("socketpair maps both descriptors to one channel") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "socketpair", {{"sv0", "3"}, {"sv1", "4"}}, 0));
  b.apply(mk.make(5, 5, "p", "write", {{"fd", "3"}}, 10));
  b.apply(mk.make(5, 5, "p", "read", {{"fd", "4"}}, 10));
  REQUIRE(b.graph().edges().size() == 2);
  CHECK(b.graph().edges()[0].dst == b.graph().edges()[1].src);
  CHECK(b.graph().entity(b.graph().edges()[0].dst).pair);
}

TEST_CASE("build_graph is deterministic") {
  auto events = load_fixture("six_event.pt");
  BuildResult a = build_graph(events);
  BuildResult b = build_graph(events);
  CHECK(a.graph == b.graph);
}

TEST_CASE("streaming chunks equal one-shot building") {
  EventMaker mk;
  std::vector<Event> events;
  events.push_back(mk.make(5, 5, "p", "open", {{"path", "/x"}}, 3));
  events.push_back(mk.make(5, 5, "p", "read", {{"fd", "3"}}, 64));
  events.push_back(mk.make(5, 5, "p", "fork", {}, 6));
  events.push_back(mk.make(6, 6, "q", "read", {{"fd", "3"}}, 16));
  events.push_back(mk.make(6, 6, "q", "socket", {}, 5));
  events.push_back(mk.make(6, 6, "q", "write", {{"fd", "5"}}, 8));
  BuildResult whole = build_graph(events);
  for (std::size_t split = 0; split <= events.size(); ++split) {
    GraphBuilder chunked;
    for (std::size_t i = 0; i < split; ++i) chunked.apply(events[i]);
    for (std::size_t i = split; i < events.size(); ++i) {
      chunked.apply(events[i]);
    }
    CHECK(chunked.graph() == whole.graph);
  }
}

TEST_CASE("descriptor tables always resolve while building") {
  EventMaker mk;
  GraphBuilder b;
  b.apply(mk.make(5, 5, "p", "open", {{"path", "/x"}}, 3));
  CHECK(b.validate());
  b.apply(mk.make(5, 5, "p", "socket", {}, 4));
  CHECK(b.validate());
  b.apply(mk.make(5, 5, "p", "clone", {{"flags", "0"}}, 6));
  CHECK(b.validate());
  b.apply(mk.make(6, 5, "p", "read", {{"fd", "3"}}, 10));
  CHECK(b.validate());
}

TEST_CASE("events out of order are rejected") {
  EventMaker mk;
  GraphBuilder b;
  Event e1 = mk.make(5, 5, "p", "open", {{"path", "/x"}}, 3);
  Event e2 = mk.make(5, 5, "p", "read", {{"fd", "3"}}, 1);
  b.apply(e2);
  CHECK_THROWS_AS(b.apply(e1), UserError);
}
