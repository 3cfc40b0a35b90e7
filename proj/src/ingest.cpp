#include "ptrail/ingest.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ptrail/util.hpp"

#include "json.hpp"

namespace ptrail {

namespace {

using nlohmann::json;

Malformed bad(std::uint64_t line_no, int field, std::string msg) {
  return Malformed{line_no, field, std::move(msg)};
}

// Pipe format: seq|timestamp_ns|pid|tid|pgid|comm|syscall|args|retval
// args = semicolon-separated key=value pairs, backslash-escaped.
ParseResult parse_pipe(std::string_view line, std::uint64_t line_no) {
  auto fields = util::split(line, '|');
  // A backslash at the end of a field means the '|' was escaped; re-join.
  std::vector<std::string> joined;
  std::string cur;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    cur += fields[i];
    // Count trailing backslashes: an odd count escapes the separator.
    std::size_t bs = 0;
    while (bs < cur.size() && cur[cur.size() - 1 - bs] == '\\') ++bs;
    if (bs % 2 == 1 && i + 1 < fields.size()) {
      cur += '|';
    } else {
      joined.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) joined.push_back(std::move(cur));
  if (joined.size() != 9) {
    return bad(line_no, static_cast<int>(joined.size()),
               "expected 9 pipe-separated fields, got " +
                   std::to_string(joined.size()));
  }

  Event ev;
  auto seq = util::parse_uint(joined[0]);
  if (!seq) return bad(line_no, 1, "seq is not an unsigned integer");
  ev.seq = *seq;
  auto ts = util::parse_uint(joined[1]);
  if (!ts) return bad(line_no, 2, "timestamp is not an unsigned integer");
  ev.ts_ns = *ts;
  auto pid = util::parse_int(joined[2]);
  if (!pid) return bad(line_no, 3, "pid is not an integer");
  ev.pid = static_cast<std::int32_t>(*pid);
  auto tid = util::parse_int(joined[3]);
  if (!tid) return bad(line_no, 4, "tid is not an integer");
  ev.tid = static_cast<std::int32_t>(*tid);
  auto pgid = util::parse_int(joined[4]);
  if (!pgid) return bad(line_no, 5, "pgid is not an integer");
  ev.pgid = static_cast<std::int32_t>(*pgid);
  auto comm = util::unescape_field(joined[5]);
  if (!comm) return bad(line_no, 6, "bad escape in comm");
  ev.comm = std::move(*comm);

  const std::string& name = joined[6];
  auto retval = util::parse_int(joined[8]);
  if (!retval) return bad(line_no, 9, "retval is not an integer");
  ev.retval = *retval;

  if (!joined[7].empty()) {
    // Split on unescaped ';', then on the first '=' of each pair.
    std::string_view rest = joined[7];
    std::vector<std::string> pairs;
    std::string piece;
    for (std::size_t i = 0; i < rest.size(); ++i) {
      char c = rest[i];
      if (c == '\\' && i + 1 < rest.size()) {
        piece += c;
        piece += rest[++i];
        continue;
      }
      if (c == ';') {
        pairs.push_back(std::move(piece));
        piece.clear();
      } else {
        piece += c;
      }
    }
    pairs.push_back(std::move(piece));
    for (const auto& p : pairs) {
      std::size_t eq = std::string::npos;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == '\\') {
          ++i;
          continue;
        }
        if (p[i] == '=') {
          eq = i;
          break;
        }
      }
      if (eq == std::string::npos || eq == 0) {
        return bad(line_no, 8, "arg is not key=value: " + p);
      }
      auto key = util::unescape_field(std::string_view(p).substr(0, eq));
      auto value = util::unescape_field(std::string_view(p).substr(eq + 1));
      if (!key || !value) return bad(line_no, 8, "bad escape in arg: " + p);
      ev.args.push_back(Arg{std::move(*key), std::move(*value)});
    }
  }

  auto kind = syscall_from_name(name);
  if (!kind) return Skip{name, ev.seq};
  ev.call = *kind;
  return ev;
}

ParseResult parse_jsonl(std::string_view line, std::uint64_t line_no) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    return bad(line_no, 1, "not a JSON object");
  }
  Event ev;
  auto get_u64 = [&](const char* key, std::uint64_t& out) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) return false;
    out = j[key].get<std::uint64_t>();
    return true;
  };
  auto get_i32 = [&](const char* key, std::int32_t& out) {
    if (!j.contains(key) || !j[key].is_number_integer()) return false;
    out = j[key].get<std::int32_t>();
    return true;
  };
  if (!get_u64("seq", ev.seq)) return bad(line_no, 1, "missing/invalid seq");
  if (!get_u64("ts", ev.ts_ns)) return bad(line_no, 2, "missing/invalid ts");
  if (!get_i32("pid", ev.pid)) return bad(line_no, 3, "missing/invalid pid");
  if (!get_i32("tid", ev.tid)) return bad(line_no, 4, "missing/invalid tid");
  if (!get_i32("pgid", ev.pgid)) {
    return bad(line_no, 5, "missing/invalid pgid");
  }
  if (!j.contains("comm") || !j["comm"].is_string()) {
    return bad(line_no, 6, "missing/invalid comm");
  }
  ev.comm = j["comm"].get<std::string>();
  if (!j.contains("syscall") || !j["syscall"].is_string()) {
    return bad(line_no, 7, "missing/invalid syscall");
  }
  std::string name = j["syscall"].get<std::string>();
  if (j.contains("args")) {
    if (!j["args"].is_array()) return bad(line_no, 8, "args must be an array");
    for (const auto& item : j["args"]) {
      // Each arg is a [key, value] pair; order is significant.
      if (!item.is_array() || item.size() != 2 || !item[0].is_string() ||
          !item[1].is_string()) {
        return bad(line_no, 8, "each arg must be a [key, value] string pair");
      }
      ev.args.push_back(
          Arg{item[0].get<std::string>(), item[1].get<std::string>()});
    }
  }
  if (!j.contains("retval") || !j["retval"].is_number_integer()) {
    return bad(line_no, 9, "missing/invalid retval");
  }
  ev.retval = j["retval"].get<std::int64_t>();

  auto kind = syscall_from_name(name);
  if (!kind) return Skip{name, ev.seq};
  ev.call = *kind;
  return ev;
}

}  // namespace

std::optional<TraceFormat> trace_format_from_name(std::string_view name) {
  if (name == "pipe") return TraceFormat::PipeText;
  if (name == "jsonl") return TraceFormat::JsonLines;
  return std::nullopt;
}

ParseResult parse_line(std::string_view line, TraceFormat format,
                       std::uint64_t line_no) {
  switch (format) {
    case TraceFormat::PipeText: return parse_pipe(line, line_no);
    case TraceFormat::JsonLines: return parse_jsonl(line, line_no);
  }
  return bad(line_no, 0, "unknown format");
}

std::string serialize_event(const Event& ev, TraceFormat format) {
  if (format == TraceFormat::PipeText) {
    std::string out;
    out += std::to_string(ev.seq);
    out += '|';
    out += std::to_string(ev.ts_ns);
    out += '|';
    out += std::to_string(ev.pid);
    out += '|';
    out += std::to_string(ev.tid);
    out += '|';
    out += std::to_string(ev.pgid);
    out += '|';
    out += util::escape_field(ev.comm);
    out += '|';
    out += syscall_name(ev.call);
    out += '|';
    for (std::size_t i = 0; i < ev.args.size(); ++i) {
      if (i) out += ';';
      out += util::escape_field(ev.args[i].key);
      out += '=';
      out += util::escape_field(ev.args[i].value);
    }
    out += '|';
    out += std::to_string(ev.retval);
    return out;
  }
  json args = json::array();
  for (const auto& a : ev.args) args.push_back({a.key, a.value});
  json j{{"seq", ev.seq},   {"ts", ev.ts_ns},
         {"pid", ev.pid},   {"tid", ev.tid},
         {"pgid", ev.pgid}, {"comm", ev.comm},
         {"syscall", std::string(syscall_name(ev.call))},
         {"args", args},    {"retval", ev.retval}};
  return j.dump();
}

TraceReader::TraceReader(std::istream& in, TraceFormat format)
    : in_(in), format_(format) {}

std::optional<Event> TraceReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++stats_.skipped;
      continue;
    }
    ParseResult res = parse_line(line, format_, line_no_);
    if (auto* m = std::get_if<Malformed>(&res)) {
      ++stats_.malformed;
      problems_.push_back(std::move(*m));
      continue;
    }
    // Sequence discipline applies to skipped records too.
    std::uint64_t seq_here = 0;
    bool have_seq = false;
    if (auto* ev = std::get_if<Event>(&res)) {
      seq_here = ev->seq;
      have_seq = true;
    } else if (auto* sk = std::get_if<Skip>(&res); sk && sk->seq) {
      seq_here = *sk->seq;
      have_seq = true;
    }
    if (have_seq && seen_any_seq_) {
      if (seq_here == last_seq_) {
        throw UserError("duplicate seq " + std::to_string(seq_here) +
                        " at line " + std::to_string(line_no_));
      }
      if (seq_here < last_seq_) {
        throw UserError("out-of-order seq: " + std::to_string(last_seq_) +
                        " followed by " + std::to_string(seq_here) +
                        " at line " + std::to_string(line_no_));
      }
    }
    if (have_seq) {
      last_seq_ = seq_here;
      seen_any_seq_ = true;
    }

    if (auto* ev = std::get_if<Event>(&res)) {
      if (ev->ts_ns < last_ts_) {
        ++stats_.malformed;
        problems_.push_back(bad(line_no_, 2,
                                "timestamp regressed: " +
                                    std::to_string(ev->ts_ns) + " after " +
                                    std::to_string(last_ts_)));
        continue;
      }
      last_ts_ = ev->ts_ns;
      ++stats_.parsed;
      return std::move(*ev);
    }
    ++stats_.skipped;
  }
  return std::nullopt;
}

std::vector<Event> read_trace(std::istream& in, TraceFormat format,
                              ReadStats* stats,
                              std::vector<Malformed>* problems) {
  TraceReader reader(in, format);
  std::vector<Event> events;
  while (auto ev = reader.next()) events.push_back(std::move(*ev));
  if (stats) *stats = reader.stats();
  if (problems) *problems = reader.problems();
  return events;
}

std::vector<Event> read_trace_file(const std::string& path, TraceFormat format,
                                   ReadStats* stats,
                                   std::vector<Malformed>* problems) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open trace file: " + path);
  return read_trace(in, format, stats, problems);
}

void write_trace(std::ostream& out, const std::vector<Event>& events,
                 TraceFormat format) {
  for (const auto& ev : events) {
    out << serialize_event(ev, format) << '\n';
  }
}

}  // namespace ptrail
