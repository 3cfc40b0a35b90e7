#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ptrail/model.hpp"

namespace ptrail {

enum class TraceFormat : std::uint8_t { PipeText, JsonLines };

std::optional<TraceFormat> trace_format_from_name(std::string_view name);

// Per-line parse outcomes. A line is exactly one of: a tracked event, a skip
// (recognized record whose syscall is outside the tracked set), or malformed.
struct Skip {
  std::string syscall;  // the untracked syscall name
  std::optional<std::uint64_t> seq;
};

struct Malformed {
  std::uint64_t line_no = 0;  // 1-based
  int field = 0;              // 1-based index of the first offending field
  std::string message;
};

using ParseResult = std::variant<Event, Skip, Malformed>;

// line must not include the trailing newline. line_no is used only for error
// reporting.
ParseResult parse_line(std::string_view line, TraceFormat format,
                       std::uint64_t line_no = 0);

// Canonical single-line text forms (no trailing newline).
std::string serialize_event(const Event& ev, TraceFormat format);

struct ReadStats {
  std::uint64_t parsed = 0;
  std::uint64_t skipped = 0;
  std::uint64_t malformed = 0;
  std::uint64_t total() const { return parsed + skipped + malformed; }
};

// Streaming reader: pulls one record at a time, so memory use is bounded by
// a single record regardless of trace length. Sequence numbers must be
// strictly increasing across all lines (skips included); violations throw
// UserError. Malformed lines are counted and reported, not fatal.
class TraceReader {
 public:
  TraceReader(std::istream& in, TraceFormat format);

  std::optional<Event> next();

  const ReadStats& stats() const { return stats_; }
  const std::vector<Malformed>& problems() const { return problems_; }

 private:
  std::istream& in_;
  TraceFormat format_;
  ReadStats stats_;
  std::vector<Malformed> problems_;
  std::uint64_t line_no_ = 0;
  bool seen_any_seq_ = false;
  std::uint64_t last_seq_ = 0;
  std::uint64_t last_ts_ = 0;
};

// Reads a whole stream. Convenience over TraceReader for the non-streaming
// callers.
std::vector<Event> read_trace(std::istream& in, TraceFormat format,
                              ReadStats* stats = nullptr,
                              std::vector<Malformed>* problems = nullptr);
std::vector<Event> read_trace_file(const std::string& path, TraceFormat format,
                                   ReadStats* stats = nullptr,
                                   std::vector<Malformed>* problems = nullptr);

void write_trace(std::ostream& out, const std::vector<Event>& events,
                 TraceFormat format);

}  // namespace ptrail
