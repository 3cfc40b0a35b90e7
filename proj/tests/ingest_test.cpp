#include "doctest.h"

#include "test_support.hpp"

#include <random>
#include <sstream>

#include "ptrail/ingest.hpp"

using namespace ptrail;

TEST_CASE("pipe line parses into an event") {
  auto res = parse_line("7|1500|42|42|42|bash|open|path=/tmp/x;flags=O_RDONLY|3",
                        TraceFormat::PipeText, 1);
  auto* ev = std::get_if<Event>(&res);
  REQUIRE(ev != nullptr);
  CHECK(ev->seq == 7);
  CHECK(ev->ts_ns == 1500);
  CHECK(ev->pid == 42);
  CHECK(ev->tid == 42);
  CHECK(ev->pgid == 42);
  CHECK(ev->comm == "bash");
  CHECK(ev->call == Syscall::Open);
  CHECK(ev->retval == 3);
  REQUIRE(ev->args.size() == 2);
  CHECK(ev->args[0].key == "path");
  CHECK(ev->args[0].value == "/tmp/x");
  CHECK(ev->args[1].key == "flags");
  CHECK(ev->args[1].value == "O_RDONLY");
}

TEST_CASE("untracked syscalls are skips, not errors") {
  auto res = parse_line("8|1600|42|42|42|bash|getpid||0",
                        TraceFormat::PipeText, 1);
  auto* skip = std::get_if<Skip>(&res);
  REQUIRE(skip != nullptr);
  CHECK(skip->syscall == "getpid");
  CHECK(skip->seq == 8);
}

TEST_CASE("non-numeric pid is malformed at field 3") {
  auto res = parse_line("7|1500|x42|42|42|bash|open|path=/tmp/x|3",
                        TraceFormat::PipeText, 9);
  auto* bad = std::get_if<Malformed>(&res);
  REQUIRE(bad != nullptr);
  CHECK(bad->field == 3);
  CHECK(bad->line_no == 9);
}

TEST_CASE("escaped separators survive a round trip") {
  Event ev;
  ev.seq = 1;
  ev.ts_ns = 10;
  ev.pid = ev.tid = ev.pgid = 1;
  ev.comm = "we|rd;na\\me";
  ev.call = Syscall::Open;
  ev.args = {{"path", "/tmp/odd|file;with\\stuff"}, {"note", "line\nbreak"}};
  ev.retval = 5;
  std::string line = serialize_event(ev, TraceFormat::PipeText);
  CHECK(line.find('\n') == std::string::npos);
  auto res = parse_line(line, TraceFormat::PipeText, 1);
  auto* back = std::get_if<Event>(&res);
  REQUIRE(back != nullptr);
  CHECK(*back == ev);
}

TEST_CASE("jsonl round trip") {
  Event ev;
  ev.seq = 3;
  ev.ts_ns = 30;
  ev.pid = ev.tid = ev.pgid = 7;
  ev.comm = "prog";
  ev.call = Syscall::Connect;
  ev.args = {{"fd", "4"}, {"addr", "10.0.0.1:80"}};
  ev.retval = 0;
  std::string line = serialize_event(ev, TraceFormat::JsonLines);
  auto res = parse_line(line, TraceFormat::JsonLines, 1);
  auto* back = std::get_if<Event>(&res);
  REQUIRE(back != nullptr);
  CHECK(*back == ev);
}

TEST_CASE("empty input yields no events and zero stats") {
  std::istringstream in("");
  ReadStats stats;
  auto events = read_trace(in, TraceFormat::PipeText, &stats);
  CHECK(events.empty());
  CHECK(stats.parsed == 0);
  CHECK(stats.skipped == 0);
  CHECK(stats.malformed == 0);
}

TEST_CASE("three valid lines in order") {
  std::istringstream in(
      "1|10|1|1|1|p|open|path=/a|3\n"
      "2|20|1|1|1|p|read|fd=3|8\n"
      "3|30|1|1|1|p|close|fd=3|0\n");
  ReadStats stats;
  auto events = read_trace(in, TraceFormat::PipeText, &stats);
  CHECK(events.size() == 3);
  CHECK(stats.parsed == 3);
}

TEST_CASE("out-of-order seq is fatal and names both values") {
  std::istringstream in(
      "1|10|1|1|1|p|open|path=/a|3\n"
      "3|20|1|1|1|p|read|fd=3|8\n"
      "2|30|1|1|1|p|close|fd=3|0\n");
  try {
    read_trace(in, TraceFormat::PipeText);
    FAIL("expected UserError");
  } catch (const UserError& e) {
    std::string msg = e.what();
    CHECK(msg.find("3") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
}

TEST_CASE("duplicate seq is fatal") {
  std::istringstream in(
      "1|10|1|1|1|p|open|path=/a|3\n"
      "1|20|1|1|1|p|read|fd=3|8\n");
  CHECK_THROWS_AS(read_trace(in, TraceFormat::PipeText), UserError);
}

TEST_CASE("seq discipline covers skipped records too") {
  std::istringstream in(
      "5|10|1|1|1|p|getpid||0\n"
      "4|20|1|1|1|p|open|path=/a|3\n");
  CHECK_THROWS_AS(read_trace(in, TraceFormat::PipeText), UserError);
}

TEST_CASE("stats partition the line count") {
  std::istringstream in(
      "1|10|1|1|1|p|open|path=/a|3\n"
      "2|20|1|1|1|p|stat||0\n"
      "not a line at all\n"
      "3|30|1|1|1|p|close|fd=3|0\n");
  ReadStats stats;
  std::vector<Malformed> problems;
  auto events = read_trace(in, TraceFormat::PipeText, &stats, &problems);
  CHECK(events.size() == 2);
  CHECK(stats.parsed == 2);
  CHECK(stats.skipped == 1);
  CHECK(stats.malformed == 1);
  CHECK(stats.total() == 4);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].line_no == 3);
}

TEST_CASE("timestamp regressions are rejected as malformed") {
  std::istringstream in(
      "1|100|1|1|1|p|open|path=/a|3\n"
      "2|50|1|1|1|p|read|fd=3|8\n");
  ReadStats stats;
  auto events = read_trace(in, TraceFormat::PipeText, &stats);
  CHECK(events.size() == 1);
  CHECK(stats.malformed == 1);
}

TEST_CASE("arbitrary bytes never crash the parser") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 2000; ++i) {
    std::string line;
    std::size_t len = rng() % 120;
    for (std::size_t j = 0; j < len; ++j) {
      line += static_cast<char>(rng() % 256);
    }
    // Strip newlines: the reader hands parse_line single lines.
    std::erase(line, '\n');
    for (TraceFormat f : {TraceFormat::PipeText, TraceFormat::JsonLines}) {
      auto res = parse_line(line, f, 1);
      bool one_of = std::holds_alternative<Event>(res) ||
                    std::holds_alternative<Skip>(res) ||
                    std::holds_alternative<Malformed>(res);
      CHECK(one_of);
    }
  }
}

TEST_CASE("fuzzed events round-trip through both formats") {
  std::mt19937_64 rng(7);
  const char* calls[] = {"open", "read", "write", "close", "connect",
                         "execve", "clone", "lseek", "sendto"};
  auto rand_string = [&rng]() {
    std::string s;
    std::size_t len = rng() % 12;
    for (std::size_t i = 0; i < len; ++i) {
      s += static_cast<char>(32 + rng() % 95);  // printable
    }
    return s;
  };
  std::uint64_t seq = 0, ts = 0;
  for (int i = 0; i < 1000; ++i) {
    Event ev;
    ev.seq = (seq += 1 + rng() % 5);
    ev.ts_ns = (ts += rng() % 100);
    ev.pid = static_cast<std::int32_t>(rng() % 100000);
    ev.tid = ev.pid;
    ev.pgid = static_cast<std::int32_t>(rng() % 100000);
    ev.comm = rand_string();
    ev.call = *syscall_from_name(calls[rng() % 9]);
    std::size_t n_args = rng() % 4;
    for (std::size_t a = 0; a < n_args; ++a) {
      std::string key = "k" + std::to_string(a);
      ev.args.push_back({key, rand_string()});
    }
    ev.retval = static_cast<std::int64_t>(rng() % 100000) - 50000;
    for (TraceFormat f : {TraceFormat::PipeText, TraceFormat::JsonLines}) {
      std::string line = serialize_event(ev, f);
      auto res = parse_line(line, f, 1);
      auto* back = std::get_if<Event>(&res);
      REQUIRE(back != nullptr);
      CHECK(*back == ev);
      // Canonical text form is stable under reserialization.
      CHECK(serialize_event(*back, f) == line);
    }
  }
}
