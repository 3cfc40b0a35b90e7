#include "ptrail/bundle.hpp"

#include <fstream>
#include <sstream>

#include "ptrail/util.hpp"

namespace ptrail {

namespace {

constexpr std::string_view kMagic = "ptrail-bundle 1";

std::string tok(std::string_view s) { return util::escape_token(s); }

std::string untok(std::string_view s, const char* what) {
  auto v = util::unescape_token(s);
  if (!v) throw UserError(std::string("bundle: bad token in ") + what);
  return *v;
}

std::uint64_t num(std::string_view s, const char* what) {
  auto v = util::parse_uint(s);
  if (!v) throw UserError(std::string("bundle: bad number in ") + what);
  return *v;
}

std::int64_t signed_num(std::string_view s, const char* what) {
  auto v = util::parse_int(s);
  if (!v) throw UserError(std::string("bundle: bad number in ") + what);
  return *v;
}

std::string csv_u64(const std::vector<std::uint64_t>& values) {
  if (values.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::vector<std::uint64_t> parse_csv_u64(std::string_view s,
                                         const char* what) {
  std::vector<std::uint64_t> out;
  if (s == "-") return out;
  for (auto piece : util::split(s, ',')) out.push_back(num(piece, what));
  return out;
}

void write_entity(std::ostream& os, const Entity& e) {
  switch (e.kind) {
    case EntityKind::Process:
      os << "proc " << e.id << ' ' << e.pid << ' ' << e.pgid << ' '
         << e.incarnation << ' ' << tok(e.comm) << ' ' << (e.exited ? 1 : 0)
         << '\n';
      break;
    case EntityKind::File:
      os << "file " << e.id << ' ' << tok(e.path) << ' ';
      if (e.range) {
        os << e.range->lo << ' ';
        if (e.range->hi == kOffsetEnd) {
          os << "end";
        } else {
          os << e.range->hi;
        }
      } else {
        os << "- -";
      }
      os << ' ' << (e.synthetic ? 1 : 0) << '\n';
      break;
    case EntityKind::Socket:
      os << "sock " << e.id << ' ' << tok(e.local) << ' ' << tok(e.remote)
         << ' ' << tok(e.proto) << ' ' << (e.pair ? 1 : 0) << ' '
         << (e.synthetic ? 1 : 0) << '\n';
      break;
  }
}

Entity read_entity(const std::vector<std::string_view>& f) {
  Entity e;
  if (f[0] == "proc") {
    if (f.size() != 7) throw UserError("bundle: bad proc line");
    e.kind = EntityKind::Process;
    e.id = static_cast<EntityId>(num(f[1], "proc id"));
    e.pid = static_cast<std::int32_t>(signed_num(f[2], "pid"));
    e.pgid = static_cast<std::int32_t>(signed_num(f[3], "pgid"));
    e.incarnation = static_cast<std::uint32_t>(num(f[4], "incarnation"));
    e.comm = untok(f[5], "comm");
    e.exited = f[6] == "1";
  } else if (f[0] == "file") {
    if (f.size() != 6) throw UserError("bundle: bad file line");
    e.kind = EntityKind::File;
    e.id = static_cast<EntityId>(num(f[1], "file id"));
    e.path = untok(f[2], "path");
    if (f[3] != "-") {
      ByteRange r;
      r.lo = num(f[3], "range lo");
      r.hi = f[4] == "end" ? kOffsetEnd : num(f[4], "range hi");
      e.range = r;
    }
    e.synthetic = f[5] == "1";
  } else if (f[0] == "sock") {
    if (f.size() != 7) throw UserError("bundle: bad sock line");
    e.kind = EntityKind::Socket;
    e.id = static_cast<EntityId>(num(f[1], "sock id"));
    e.local = untok(f[2], "local");
    e.remote = untok(f[3], "remote");
    e.proto = untok(f[4], "proto");
    e.pair = f[5] == "1";
    e.synthetic = f[6] == "1";
  } else {
    throw UserError("bundle: unknown entity kind line");
  }
  return e;
}

}  // namespace

std::string save_bundle(const Bundle& bundle) {
  std::ostringstream os;
  os << kMagic << '\n';

  os << "events " << bundle.events.size() << '\n';
  for (const auto& ev : bundle.events) {
    os << serialize_event(ev, TraceFormat::PipeText) << '\n';
  }

  os << "entities " << bundle.graph.entities().size() << '\n';
  for (const auto& e : bundle.graph.entities()) write_entity(os, e);

  os << "edges " << bundle.graph.edges().size() << '\n';
  for (const auto& e : bundle.graph.edges()) {
    os << e.seq << ' ' << e.ts_ns << ' ' << syscall_name(e.call) << ' '
       << e.src << ' ' << e.dst << ' ';
    if (e.unit == kNoUnit) {
      os << '-';
    } else {
      os << e.unit;
    }
    os << '\n';
  }

  if (bundle.partition) {
    const PartitionResult& part = *bundle.partition;
    os << "units " << part.units.size() << '\n';
    for (const auto& u : part.units) {
      os << "unit " << u.id << ' ' << u.owner_pgid << ' ' << u.index_in_pgid
         << ' ' << tok(u.key) << ' ' << unit_state_name(u.state) << " prov "
         << csv_u64({u.provenance.begin(), u.provenance.end()}) << '\n';
    }
    os << "pgids " << part.by_pgid.size() << '\n';
    for (const auto& [pgid, pp] : part.by_pgid) {
      os << "pgid " << pgid << ' ' << tok(pp.profile) << " switches ";
      for (std::size_t i = 0; i < pp.switches.size(); ++i) {
        if (i) os << ',';
        os << pp.switches[i].first << ':' << pp.switches[i].second;
      }
      os << '\n';
    }
    os << "pdiags " << part.diagnostics.size() << '\n';
    for (const auto& d : part.diagnostics) {
      os << "pdiag " << d.seq << ' ' << tok(d.code) << ' ' << tok(d.detail)
         << '\n';
    }
  }

  if (bundle.slice) {
    const CausalSlice& slice = *bundle.slice;
    os << "slice " << slice.seed.entity << ' ' << slice.seed.at_seq << '\n';
    std::vector<std::uint64_t> edge_seqs;
    for (std::uint32_t ei : slice.edges) {
      edge_seqs.push_back(bundle.graph.edge(ei).seq);
    }
    os << "sliceedges " << csv_u64(edge_seqs) << '\n';
    os << "sliceentities "
       << csv_u64({slice.entities.begin(), slice.entities.end()}) << '\n';
    os << "sliceroots "
       << csv_u64({slice.root_candidates.begin(), slice.root_candidates.end()})
       << '\n';
    os << "sliceuntrusted "
       << csv_u64({slice.untrusted_roots.begin(), slice.untrusted_roots.end()})
       << '\n';
  }

  os << "end\n";
  return os.str();
}

Bundle load_bundle(const std::string& text) {
  Bundle bundle;
  std::istringstream in(text);
  std::string line;

  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) {
      throw UserError(std::string("bundle: truncated before ") + what);
    }
    return std::string_view(line);
  };

  if (next_line("header") != kMagic) {
    throw UserError("bundle: bad or unsupported header");
  }

  auto header = util::split(next_line("events header"), ' ');
  if (header.size() != 2 || header[0] != "events") {
    throw UserError("bundle: expected events section");
  }
  std::uint64_t n_events = num(header[1], "event count");
  bundle.events.reserve(n_events);
  for (std::uint64_t i = 0; i < n_events; ++i) {
    ParseResult res =
        parse_line(next_line("event"), TraceFormat::PipeText, i + 1);
    auto* ev = std::get_if<Event>(&res);
    if (!ev) throw UserError("bundle: event line failed to parse");
    bundle.events.push_back(std::move(*ev));
  }

  header = util::split(next_line("entities header"), ' ');
  if (header.size() != 2 || header[0] != "entities") {
    throw UserError("bundle: expected entities section");
  }
  std::uint64_t n_entities = num(header[1], "entity count");
  for (std::uint64_t i = 0; i < n_entities; ++i) {
    auto f = util::split(next_line("entity"), ' ');
    Entity e = read_entity(f);
    if (e.id != i) throw UserError("bundle: entity ids must be sequential");
    bundle.graph.add_entity(std::move(e));
  }

  header = util::split(next_line("edges header"), ' ');
  if (header.size() != 2 || header[0] != "edges") {
    throw UserError("bundle: expected edges section");
  }
  std::uint64_t n_edges = num(header[1], "edge count");
  for (std::uint64_t i = 0; i < n_edges; ++i) {
    auto f = util::split(next_line("edge"), ' ');
    if (f.size() != 6) throw UserError("bundle: bad edge line");
    FlowEdge e;
    e.seq = num(f[0], "edge seq");
    e.ts_ns = num(f[1], "edge ts");
    auto call = syscall_from_name(f[2]);
    if (!call) throw UserError("bundle: unknown edge syscall");
    e.call = *call;
    e.src = static_cast<EntityId>(num(f[3], "edge src"));
    e.dst = static_cast<EntityId>(num(f[4], "edge dst"));
    e.unit = f[5] == "-" ? kNoUnit : static_cast<UnitId>(num(f[5], "unit"));
    if (e.src >= bundle.graph.entities().size() ||
        e.dst >= bundle.graph.entities().size()) {
      throw UserError("bundle: edge endpoint out of range");
    }
    bundle.graph.add_edge(e);
  }

  // Optional sections, in order: units/pgids/pdiags, slice lines, end.
  std::string_view cur = next_line("trailer");
  if (cur.starts_with("units ")) {
    PartitionResult part;
    std::uint64_t n_units = num(util::split(cur, ' ')[1], "unit count");
    for (std::uint64_t i = 0; i < n_units; ++i) {
      auto f = util::split(next_line("unit"), ' ');
      if (f.size() != 8 || f[0] != "unit" || f[6] != "prov") {
        throw UserError("bundle: bad unit line");
      }
      ExecutionUnit u;
      u.id = static_cast<UnitId>(num(f[1], "unit id"));
      if (u.id != i) throw UserError("bundle: unit ids must be sequential");
      u.owner_pgid = static_cast<std::int32_t>(signed_num(f[2], "unit pgid"));
      u.index_in_pgid = static_cast<std::uint32_t>(num(f[3], "unit index"));
      u.key = untok(f[4], "unit key");
      auto state = unit_state_from_name(f[5]);
      if (!state) throw UserError("bundle: bad unit state");
      u.state = *state;
      for (std::uint64_t id : parse_csv_u64(f[7], "unit prov")) {
        if (id >= bundle.graph.entities().size()) {
          throw UserError("bundle: unit provenance references a missing entity");
        }
        u.provenance.push_back(static_cast<EntityId>(id));
      }
      part.units.push_back(std::move(u));
    }
    auto pheader = util::split(next_line("pgids header"), ' ');
    if (pheader.size() != 2 || pheader[0] != "pgids") {
      throw UserError("bundle: expected pgids section");
    }
    std::uint64_t n_pgids = num(pheader[1], "pgid count");
    for (std::uint64_t i = 0; i < n_pgids; ++i) {
      auto f = util::split(next_line("pgid"), ' ');
      if (f.size() != 5 || f[0] != "pgid" || f[3] != "switches") {
        throw UserError("bundle: bad pgid line");
      }
      PgidPartition pp;
      pp.pgid = static_cast<std::int32_t>(signed_num(f[1], "pgid"));
      pp.profile = untok(f[2], "profile");
      for (auto piece : util::split(f[4], ',')) {
        auto parts = util::split(piece, ':');
        if (parts.size() != 2) throw UserError("bundle: bad switch entry");
        auto unit = static_cast<UnitId>(num(parts[1], "switch unit"));
        if (unit >= part.units.size()) {
          throw UserError("bundle: switch references a missing unit");
        }
        pp.switches.emplace_back(num(parts[0], "switch seq"), unit);
      }
      part.by_pgid.emplace(pp.pgid, std::move(pp));
    }
    auto dheader = util::split(next_line("pdiags header"), ' ');
    if (dheader.size() != 2 || dheader[0] != "pdiags") {
      throw UserError("bundle: expected pdiags section");
    }
    std::uint64_t n_diags = num(dheader[1], "pdiag count");
    for (std::uint64_t i = 0; i < n_diags; ++i) {
      auto f = util::split(next_line("pdiag"), ' ');
      if (f.size() != 4 || f[0] != "pdiag") {
        throw UserError("bundle: bad pdiag line");
      }
      part.diagnostics.push_back(Diagnostic{num(f[1], "pdiag seq"),
                                            untok(f[2], "pdiag code"),
                                            untok(f[3], "pdiag detail")});
    }
    rebuild_members(part, bundle.events);
    bundle.partition = std::move(part);
    cur = next_line("trailer");
  }

  if (cur.starts_with("slice ")) {
    CausalSlice slice;
    auto f = util::split(cur, ' ');
    if (f.size() != 3) throw UserError("bundle: bad slice line");
    slice.seed.entity = static_cast<EntityId>(num(f[1], "slice seed"));
    slice.seed.at_seq = num(f[2], "slice seq");
    auto read_list = [&](const char* name) {
      auto lf = util::split(next_line(name), ' ');
      if (lf.size() != 2 || lf[0] != name) {
        throw UserError(std::string("bundle: expected ") + name);
      }
      return parse_csv_u64(lf[1], name);
    };
    auto checked_entity = [&bundle](std::uint64_t id) {
      if (id >= bundle.graph.entities().size()) {
        throw UserError("bundle: slice references a missing entity");
      }
      return static_cast<EntityId>(id);
    };
    for (std::uint64_t seq : read_list("sliceedges")) {
      auto ei = bundle.graph.edge_index_at_seq(seq);
      if (!ei) throw UserError("bundle: slice edge seq not in graph");
      slice.edges.push_back(*ei);
    }
    for (std::uint64_t id : read_list("sliceentities")) {
      slice.entities.push_back(checked_entity(id));
    }
    for (std::uint64_t id : read_list("sliceroots")) {
      slice.root_candidates.push_back(checked_entity(id));
    }
    for (std::uint64_t id : read_list("sliceuntrusted")) {
      slice.untrusted_roots.push_back(checked_entity(id));
    }
    bundle.slice = std::move(slice);
    cur = next_line("trailer");
  }

  if (cur != "end") throw UserError("bundle: missing end marker");
  return bundle;
}

void save_bundle_file(const Bundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write bundle file: " + path);
  out << save_bundle(bundle);
}

Bundle load_bundle_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open bundle file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return load_bundle(text);
}

}  // namespace ptrail
