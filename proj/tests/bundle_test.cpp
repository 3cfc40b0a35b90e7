#include "doctest.h"

#include "test_support.hpp"

#include "ptrail/bundle.hpp"
#include "ptrail/scenario.hpp"

using namespace ptrail;

namespace {

Bundle scenario_bundle() {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::ImSocialEngineering;
  spec.seed = 6;
  spec.benign_units = 3;
  ScenarioOutput out = generate(spec);
  Bundle bundle;
  bundle.events = testing::parse_fixture_text(out.trace_text);
  BuildResult built = build_graph(bundle.events);
  bundle.graph = std::move(built.graph);
  PartitionResult part = partition_events(
      bundle.events, bundle.graph, parse_profiles(default_profiles_json()));
  annotate_edge_units(bundle.graph, bundle.events, part);
  bundle.partition = std::move(part);
  SeedPoint seed{
      resolve_entity_spec(bundle.graph, out.truth.seed_entity_spec),
      out.truth.seed_at_seq};
  bundle.slice = backtrack(bundle.graph, &*bundle.partition, seed);
  return bundle;
}

}  // namespace

TEST_CASE("bundles round-trip bit for bit") {
  Bundle bundle = scenario_bundle();
  std::string once = save_bundle(bundle);
  Bundle loaded = load_bundle(once);
  std::string twice = save_bundle(loaded);
  CHECK(once == twice);

  CHECK(loaded.events == bundle.events);
  CHECK(loaded.graph == bundle.graph);
  REQUIRE(loaded.partition.has_value());
  CHECK(loaded.partition->units.size() == bundle.partition->units.size());
  for (std::size_t i = 0; i < loaded.partition->units.size(); ++i) {
    CHECK(loaded.partition->units[i].member_seqs ==
          bundle.partition->units[i].member_seqs);
    CHECK(loaded.partition->units[i].key == bundle.partition->units[i].key);
    CHECK(loaded.partition->units[i].provenance ==
          bundle.partition->units[i].provenance);
  }
  REQUIRE(loaded.slice.has_value());
  CHECK(loaded.slice->edges == bundle.slice->edges);
  CHECK(loaded.slice->entities == bundle.slice->entities);
  CHECK(loaded.slice->root_candidates == bundle.slice->root_candidates);
  CHECK(loaded.slice->untrusted_roots == bundle.slice->untrusted_roots);
}

TEST_CASE("graph-only bundles work too") {
  Bundle bundle;
  bundle.events = testing::parse_fixture_text(
      "1|10|5|5|5|p|open|path=/tmp/x with space|3\n"
      "2|20|5|5|5|p|read|fd=3|64\n");
  bundle.graph = build_graph(bundle.events).graph;
  Bundle loaded = load_bundle(save_bundle(bundle));
  CHECK(loaded.graph == bundle.graph);
  CHECK_FALSE(loaded.partition.has_value());
  CHECK_FALSE(loaded.slice.has_value());
}

TEST_CASE("corrupt bundles raise user errors") {
  CHECK_THROWS_AS(load_bundle(""), UserError);
  CHECK_THROWS_AS(load_bundle("not a bundle\n"), UserError);
  Bundle bundle = scenario_bundle();
  std::string text = save_bundle(bundle);
  CHECK_THROWS_AS(load_bundle(text.substr(0, text.size() / 2)), UserError);
}
