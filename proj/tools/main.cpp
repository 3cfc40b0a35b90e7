#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ptrail/bundle.hpp"
#include "ptrail/forensics.hpp"
#include "ptrail/graph.hpp"
#include "ptrail/ingest.hpp"
#include "ptrail/model.hpp"
#include "ptrail/partition.hpp"
#include "ptrail/render.hpp"
#include "ptrail/scenario.hpp"
#include "ptrail/util.hpp"

namespace {

using namespace ptrail;
using nlohmann::json;

TraceFormat format_flag(const std::string& name) {
  auto f = trace_format_from_name(name);
  if (!f) throw UserError("unknown format (use pipe or jsonl): " + name);
  return *f;
}

std::string slurp(std::istream& in) {
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") return slurp(std::cin);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open input: " + path);
  return slurp(in);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write output: " + path);
  out << text;
}

std::vector<Event> events_from_text(const std::string& text,
                                    TraceFormat format, ReadStats* stats,
                                    std::vector<Malformed>* problems) {
  std::istringstream in(text);
  return read_trace(in, format, stats, problems);
}

void report_problems(const std::vector<Malformed>& problems) {
  std::size_t shown = 0;
  for (const auto& m : problems) {
    if (++shown > 10) {
      std::cerr << "  ... " << problems.size() - 10 << " more\n";
      break;
    }
    std::cerr << "  line " << m.line_no << " field " << m.field << ": "
              << m.message << "\n";
  }
}

Bundle load_input_bundle(const std::string& path) {
  return load_bundle(read_input(path));
}

std::vector<AppProfile> profiles_from_flag(const std::string& path) {
  if (path.empty() || path == "builtin") {
    return parse_profiles(default_profiles_json());
  }
  return load_profiles_file(path);
}

// Parses "<entity-spec>@<seq>"; the spec itself may contain '@' (file
// ranges), so split on the last one.
std::pair<std::string, std::uint64_t> split_seed(const std::string& s) {
  auto pos = s.rfind('@');
  if (pos == std::string::npos) {
    throw UserError("seed must be <entity-spec>@<seq>: " + s);
  }
  auto seq = util::parse_uint(std::string_view(s).substr(pos + 1));
  if (!seq) {
    throw UserError("seed must end with a sequence number: " + s);
  }
  return {s.substr(0, pos), *seq};
}

json slice_report(const CausalSlice& slice, const ProvenanceGraph& graph) {
  SliceStats stats = slice_stats(slice, graph);
  json roots = json::array();
  for (EntityId id : slice.root_candidates) {
    roots.push_back(entity_spec_of(graph.entity(id)));
  }
  json flagged = json::array();
  for (EntityId id : slice.untrusted_roots) {
    flagged.push_back(entity_spec_of(graph.entity(id)));
  }
  return json{{"entities", slice.entities.size()},
              {"edges", stats.slice_edges},
              {"total_edges", stats.total_edges},
              {"reduction_ratio", stats.reduction_ratio},
              {"roots", roots},
              {"untrusted_roots", flagged}};
}

void print_slice_report(const CausalSlice& slice,
                        const ProvenanceGraph& graph, const char* verb) {
  SliceStats stats = slice_stats(slice, graph);
  std::cout << verb << ": " << slice.entities.size() << " entities, "
            << stats.slice_edges << "/" << stats.total_edges
            << " edges (reduction " << stats.reduction_ratio << ")\n";
  std::cout << "root candidates:\n";
  for (EntityId id : slice.root_candidates) {
    const Entity& e = graph.entity(id);
    bool flagged = std::find(slice.untrusted_roots.begin(),
                             slice.untrusted_roots.end(),
                             id) != slice.untrusted_roots.end();
    std::cout << "  " << entity_spec_of(e) << (flagged ? "  [untrusted]" : "")
              << "\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"provenance analysis over system-call traces"};
  app.require_subcommand(1);

  // ---- ingest ----
  auto* ingest = app.add_subcommand(
      "ingest", "parse a trace, report stats, optionally convert");
  std::string in_format = "pipe", in_path, ingest_to, ingest_out;
  bool ingest_json = false;
  ingest->add_option("--format", in_format, "input format (pipe|jsonl)");
  ingest->add_option("--in", in_path, "input file (default stdin)");
  ingest->add_option("--to", ingest_to, "re-emit as this format");
  ingest->add_option("--out", ingest_out, "converted trace output");
  ingest->add_flag("--json", ingest_json, "machine-readable summary");

  // ---- build ----
  auto* build = app.add_subcommand("build", "build the dependency graph");
  std::string build_format = "pipe", build_in, build_out;
  bool build_json = false;
  build->add_option("--format", build_format, "input format (pipe|jsonl)");
  build->add_option("--in", build_in, "trace file (default stdin)");
  build->add_option("--out", build_out, "bundle output (default stdout)");
  build->add_flag("--json", build_json, "machine-readable summary");

  // ---- partition ----
  auto* partition =
      app.add_subcommand("partition", "assign execution units to a bundle");
  std::string part_profiles, part_in, part_out;
  bool part_json = false;
  partition->add_option("--profiles", part_profiles,
                        "profile JSON file (default: builtin)");
  partition->add_option("--in", part_in, "bundle input (default stdin)");
  partition->add_option("--out", part_out, "bundle output (default stdout)");
  partition->add_flag("--json", part_json, "machine-readable summary");

  // ---- infer ----
  auto* infer = app.add_subcommand(
      "infer", "mine a boundary signature from an activity corpus");
  std::string corpus_dir, infer_activity, infer_comm, infer_out;
  std::size_t min_len = 3;
  std::optional<std::size_t> infer_key_arg;
  bool infer_switch = false;
  infer->add_option("--corpus", corpus_dir, "directory of repeated traces")
      ->required();
  infer->add_option("--min-len", min_len, "minimum signature length");
  infer->add_option("--activity", infer_activity, "activity label");
  infer->add_option("--comm", infer_comm, "comm glob for the emitted profile");
  infer->add_option("--key-arg", infer_key_arg,
                    "final-step arg index identifying the unit");
  infer->add_flag("--switch", infer_switch,
                  "emit a unit-switch signature instead of unit-start");
  infer->add_option("--out", infer_out, "profile output (default stdout)");

  // ---- backtrack ----
  auto* backtrack_cmd =
      app.add_subcommand("backtrack", "root-cause slice from a seed point");
  std::string bt_seed, bt_in, bt_out;
  bool bt_json = false, bt_merge = false, bt_no_units = false;
  std::vector<std::string> trusted_suffixes;
  backtrack_cmd->add_option("--seed", bt_seed, "<entity-spec>@<seq>")
      ->required();
  backtrack_cmd->add_option("--in", bt_in, "bundle input (default stdin)");
  backtrack_cmd->add_option("--out", bt_out, "bundle+slice output");
  backtrack_cmd->add_flag("--json", bt_json, "machine-readable report");
  backtrack_cmd->add_flag("--merge", bt_merge,
                          "merge the forward impact of flagged roots");
  backtrack_cmd->add_flag("--no-units", bt_no_units,
                          "ignore unit assignments (whole-process slices)");
  backtrack_cmd->add_option("--trusted-suffix", trusted_suffixes,
                            "extra trusted host suffixes");

  // ---- forward ----
  auto* forward_cmd =
      app.add_subcommand("forward", "impact slice from a root entity");
  std::string fw_root, fw_in, fw_out;
  std::uint64_t fw_from = 0;
  bool fw_json = false, fw_no_units = false;
  forward_cmd->add_option("--root", fw_root, "entity-spec")->required();
  forward_cmd->add_option("--from", fw_from, "starting seq (default 0)");
  forward_cmd->add_option("--in", fw_in, "bundle input (default stdin)");
  forward_cmd->add_option("--out", fw_out, "bundle+slice output");
  forward_cmd->add_flag("--json", fw_json, "machine-readable report");
  forward_cmd->add_flag("--no-units", fw_no_units,
                        "ignore unit assignments");

  // ---- render ----
  auto* render_cmd = app.add_subcommand("render", "emit DOT for a slice");
  std::string rd_in, rd_out = "graph.dot";
  bool rd_no_cluster = false, rd_no_numbers = false, rd_color = false;
  render_cmd->add_option("--in", rd_in, "bundle input (default stdin)");
  render_cmd->add_option("--out", rd_out, "DOT output path");
  render_cmd->add_flag("--no-cluster", rd_no_cluster,
                       "do not cluster process groups");
  render_cmd->add_flag("--no-numbers", rd_no_numbers,
                       "label edges with syscalls, not sequence ranks");
  render_cmd->add_flag("--color-units", rd_color, "tint edges per unit");

  // ---- simulate ----
  auto* simulate = app.add_subcommand(
      "simulate", "generate a synthetic attack trace with ground truth");
  std::string sim_kind = "csrf", sim_out, sim_truth;
  ScenarioSpec spec;
  simulate->add_option("--scenario", sim_kind,
                       "rat|drive-by|im|csrf|dns-rebinding");
  simulate->add_option("--benign-units", spec.benign_units,
                       "benign compartments");
  simulate->add_option("--events-per-unit", spec.events_per_unit,
                       "rough flow events per benign unit");
  simulate->add_option("--preamble", spec.preamble_events,
                       "rough startup events");
  simulate->add_option("--opaque", spec.opaque_steps,
                       "payload-internal hops (drive-by)");
  simulate->add_option("--seed", spec.seed, "generator seed");
  simulate->add_option("--out", sim_out, "trace output (default stdout)");
  simulate->add_option("--truth", sim_truth, "ground-truth JSON output");

  // ---- bench ----
  auto* bench = app.add_subcommand(
      "bench", "parse+build throughput on a synthetic workload");
  std::size_t bench_events = 1000000;
  std::uint64_t bench_seed = 1;
  bool bench_json = false;
  bench->add_option("--events", bench_events, "approximate record count");
  bench->add_option("--seed", bench_seed, "workload seed");
  bench->add_flag("--json", bench_json, "machine-readable report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad usage is a user error; --help is not
  }

  if (*ingest) {
    ReadStats stats;
    std::vector<Malformed> problems;
    std::vector<Event> events = events_from_text(
        read_input(in_path), format_flag(in_format), &stats, &problems);
    if (!ingest_to.empty()) {
      std::ostringstream os;
      write_trace(os, events, format_flag(ingest_to));
      write_output(ingest_out, os.str());
    }
    if (ingest_json) {
      std::cout << json{{"parsed", stats.parsed},
                        {"skipped", stats.skipped},
                        {"malformed", stats.malformed}}
                       .dump()
                << "\n";
    } else {
      std::cerr << "parsed " << stats.parsed << ", skipped " << stats.skipped
                << ", malformed " << stats.malformed << "\n";
    }
    report_problems(problems);
    return 0;
  }

  if (*build) {
    if (build_json && (build_out.empty() || build_out == "-")) {
      throw UserError("build --json needs --out for the bundle");
    }
    ReadStats stats;
    std::vector<Malformed> problems;
    Bundle bundle;
    bundle.events = events_from_text(
        read_input(build_in), format_flag(build_format), &stats, &problems);
    BuildResult built = build_graph(bundle.events);
    bundle.graph = std::move(built.graph);
    write_output(build_out, save_bundle(bundle));
    std::ostream& meta = build_json ? std::cout : std::cerr;
    if (build_json) {
      meta << json{{"events", bundle.events.size()},
                   {"entities", bundle.graph.entities().size()},
                   {"edges", bundle.graph.edges().size()},
                   {"diagnostics", built.diagnostics.size()},
                   {"skipped", stats.skipped},
                   {"malformed", stats.malformed}}
                  .dump()
           << "\n";
    } else {
      meta << "events " << bundle.events.size() << ", entities "
           << bundle.graph.entities().size() << ", edges "
           << bundle.graph.edges().size() << ", diagnostics "
           << built.diagnostics.size() << "\n";
      for (const auto& d : built.diagnostics) {
        std::cerr << "  seq " << d.seq << " " << d.code << ": " << d.detail
                  << "\n";
      }
    }
    report_problems(problems);
    return 0;
  }

  if (*partition) {
    if (part_json && (part_out.empty() || part_out == "-")) {
      throw UserError("partition --json needs --out for the bundle");
    }
    Bundle bundle = load_input_bundle(part_in);
    std::vector<AppProfile> profiles = profiles_from_flag(part_profiles);
    PartitionResult result =
        partition_events(bundle.events, bundle.graph, profiles);
    annotate_edge_units(bundle.graph, bundle.events, result);
    std::size_t n_units = result.units.size();
    std::size_t n_pgids = result.by_pgid.size();
    std::vector<Diagnostic> diags = result.diagnostics;
    bundle.partition = std::move(result);
    write_output(part_out, save_bundle(bundle));
    if (part_json) {
      std::cout << json{{"units", n_units},
                        {"partitioned_pgids", n_pgids},
                        {"diagnostics", diags.size()}}
                       .dump()
                << "\n";
    } else {
      std::cerr << "units " << n_units << " across " << n_pgids
                << " process groups\n";
      for (const auto& d : diags) {
        std::cerr << "  " << d.code << ": " << d.detail << "\n";
      }
    }
    return 0;
  }

  if (*infer) {
    InferenceCorpus corpus = load_corpus(corpus_dir, infer_activity);
    MineResult mined = mine_signature(corpus, min_len);
    if (auto* none = std::get_if<NoSignature>(&mined)) {
      std::cerr << "no signature: " << none->reason << "\n";
      return 1;
    }
    Signature sig = std::get<Signature>(mined);
    if (infer_switch) sig.kind = SignatureKind::UnitSwitch;
    sig.key_arg = infer_key_arg;
    if (sig.kind == SignatureKind::UnitSwitch && !sig.key_arg) {
      throw UserError("--switch needs --key-arg to identify the unit");
    }
    AppProfile profile;
    profile.name = corpus.activity_label;
    profile.match_comm = {infer_comm.empty() ? corpus.activity_label + "*"
                                             : infer_comm};
    profile.signatures.push_back(std::move(sig));
    write_output(infer_out, serialize_profiles({profile}));
    return 0;
  }

  if (*backtrack_cmd) {
    Bundle bundle = load_input_bundle(bt_in);
    UntrustedPredicate untrusted;
    untrusted.trusted_suffixes.insert(untrusted.trusted_suffixes.end(),
                                      trusted_suffixes.begin(),
                                      trusted_suffixes.end());
    auto [spec_str, at_seq] = split_seed(bt_seed);
    SeedPoint seed{resolve_entity_spec(bundle.graph, spec_str), at_seq};
    const PartitionResult* units =
        (!bt_no_units && bundle.partition) ? &*bundle.partition : nullptr;
    CausalSlice slice = backtrack(bundle.graph, units, seed, untrusted);
    if (bt_merge) {
      for (EntityId root : slice.untrusted_roots) {
        CausalSlice fwd =
            forward_track(bundle.graph, units, root, 0, untrusted);
        slice = merge_slices(slice, fwd, bundle.graph, untrusted);
      }
    }
    if (bt_json) {
      std::cout << slice_report(slice, bundle.graph).dump() << "\n";
    } else {
      print_slice_report(slice, bundle.graph, "backward slice");
    }
    if (!bt_out.empty()) {
      bundle.slice = slice;
      write_output(bt_out, save_bundle(bundle));
    }
    return 0;
  }

  if (*forward_cmd) {
    Bundle bundle = load_input_bundle(fw_in);
    EntityId root = resolve_entity_spec(bundle.graph, fw_root);
    const PartitionResult* units =
        (!fw_no_units && bundle.partition) ? &*bundle.partition : nullptr;
    CausalSlice slice =
        forward_track(bundle.graph, units, root, fw_from, {});
    if (fw_json) {
      std::cout << slice_report(slice, bundle.graph).dump() << "\n";
    } else {
      print_slice_report(slice, bundle.graph, "forward slice");
    }
    if (!fw_out.empty()) {
      bundle.slice = slice;
      write_output(fw_out, save_bundle(bundle));
    }
    return 0;
  }

  if (*render_cmd) {
    Bundle bundle = load_input_bundle(rd_in);
    RenderOptions opts;
    opts.cluster_by_pgid = !rd_no_cluster;
    opts.numbered_edges = !rd_no_numbers;
    opts.color_units = rd_color;
    CausalSlice slice =
        bundle.slice ? *bundle.slice : whole_graph_slice(bundle.graph);
    write_output(rd_out, to_dot(slice, bundle.graph, opts));
    return 0;
  }

  if (*simulate) {
    auto kind = scenario_kind_from_name(sim_kind);
    if (!kind) throw UserError("unknown scenario: " + sim_kind);
    spec.kind = *kind;
    ScenarioOutput out = generate(spec);
    write_output(sim_out, out.trace_text);
    if (!sim_truth.empty()) write_output(sim_truth, out.truth.to_json());
    return 0;
  }

  if (*bench) {
    std::string trace = make_bench_trace(bench_events, bench_seed);
    auto start = std::chrono::steady_clock::now();
    std::istringstream in(trace);
    TraceReader reader(in, TraceFormat::PipeText);
    GraphBuilder builder;
    std::uint64_t n = 0;
    while (auto ev = reader.next()) {
      builder.apply(*ev);
      ++n;
    }
    auto elapsed = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    double rate = elapsed > 0 ? static_cast<double>(reader.stats().total()) /
                                    elapsed
                              : 0;
    if (bench_json) {
      std::cout << json{{"records", reader.stats().total()},
                        {"events", n},
                        {"entities", builder.graph().entities().size()},
                        {"edges", builder.graph().edges().size()},
                        {"seconds", elapsed},
                        {"records_per_second", rate}}
                       .dump()
                << "\n";
    } else {
      std::cout << "parsed+built " << reader.stats().total() << " records ("
                << n << " events) in " << elapsed << " s: " << rate
                << " records/s\n";
    }
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
