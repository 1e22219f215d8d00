#include <gtest/gtest.h>

#include <random>

#include "occmap/ontology.hpp"

using namespace occmap::ontology;

namespace {

EntityId driver_id(const std::string& s) { return {EntityKind::Driver, s}; }
EntityId segment_id(const std::string& s) { return {EntityKind::Segment, s}; }
EntityId title_id(const std::string& s) { return {EntityKind::IndustryTitle, s}; }
EntityId skill_id(const std::string& s) { return {EntityKind::Skill, s}; }

OntologyErrc error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const OntologyError& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected OntologyError";
  return OntologyErrc::FormatError;
}

// Driver -> S1 -> {T1, T2}; Driver -> S2 -> {T2, T3}; T1 -> {K1}, T2 -> {K2},
// T3 -> {K1, K3}; K4 only reachable from an unrelated title T4.
OntologyGraph path_fixture() {
  OntologyGraph g;
  g.add_entity(make_driver("cloud", "Cloud Computing", DriverKind::Transformation, "Cloud computing is on-demand ..."));
  g.add_entity(make_segment("s1", "Cohort one"));
  g.add_entity(make_segment("s2", "Cohort two"));
  g.add_entity(make_title("t1", "Cloud Engineers"));
  g.add_entity(make_title("t2", "Architects"));
  g.add_entity(make_title("t3", "Site Reliability Engineers"));
  g.add_entity(make_title("t4", "Pastry Chefs"));
  for (const auto* k : {"k1", "k2", "k3", "k4"}) g.add_entity(make_skill(k, std::string("Skill ") + k));
  g.add_edge(driver_id("cloud"), Relation::Drives, segment_id("s1"));
  g.add_edge(driver_id("cloud"), Relation::Drives, segment_id("s2"));
  g.add_edge(segment_id("s1"), Relation::MapsTo, title_id("t1"));
  g.add_edge(segment_id("s1"), Relation::MapsTo, title_id("t2"));
  g.add_edge(segment_id("s2"), Relation::MapsTo, title_id("t2"));
  g.add_edge(segment_id("s2"), Relation::MapsTo, title_id("t3"));
  g.add_edge(title_id("t1"), Relation::Requires, skill_id("k1"));
  g.add_edge(title_id("t2"), Relation::Requires, skill_id("k2"));
  g.add_edge(title_id("t3"), Relation::Requires, skill_id("k1"));
  g.add_edge(title_id("t3"), Relation::Requires, skill_id("k3"));
  g.add_edge(title_id("t4"), Relation::Requires, skill_id("k4"));
  return g;
}

Entity random_entity(std::mt19937_64& rng, EntityKind kind, const std::string& local) {
  switch (kind) {
    case EntityKind::Workforce: return make_workforce(local, "W " + local);
    case EntityKind::Segment: return make_segment(local, "S " + local, {{"geography", "AU"}});
    case EntityKind::IndustryTitle: return make_title(local, "T " + local, {"alias " + local});
    case EntityKind::Driver:
      return make_driver(local, "D " + local, (rng() & 1) ? DriverKind::Core : DriverKind::Transformation, "def " + local,
                         {{"name", Provenance::Manual}});
    case EntityKind::Skill: return make_skill(local, "K " + local);
  }
  return make_skill(local, local);
}

constexpr EntityKind kAllKinds[] = {EntityKind::Workforce, EntityKind::Segment, EntityKind::IndustryTitle, EntityKind::Driver,
                                    EntityKind::Skill};
constexpr Relation kAllRelations[] = {Relation::HasSegment, Relation::MapsTo, Relation::Drives, Relation::Requires};

// Random graph of up to `max_nodes` entities with random (valid) edges.
OntologyGraph random_graph(std::mt19937_64& rng, int max_nodes) {
  OntologyGraph g;
  std::uniform_int_distribution<int> n_dist(1, max_nodes);
  const int n = n_dist(rng);
  std::vector<EntityId> ids;
  for (int i = 0; i < n; ++i) {
    const auto kind = kAllKinds[rng() % 5];
    const auto e = random_entity(rng, kind, "n" + std::to_string(i));
    ids.push_back(id_of(e));
    g.add_entity(e);
  }
  const int attempts = n * 4;
  for (int i = 0; i < attempts; ++i) {
    const auto& s = ids[rng() % ids.size()];
    const auto& t = ids[rng() % ids.size()];
    const auto r = kAllRelations[rng() % 4];
    try {
      g.add_edge(s, r, t);
    } catch (const OntologyError&) {
    }
  }
  return g;
}

}  // namespace

TEST(AddEntity, EmptyGraphGainsOne) {
  OntologyGraph g;
  g.add_entity(make_driver("cloud-computing", "Cloud Computing", DriverKind::Transformation, "text"));
  EXPECT_EQ(g.entities().size(), 1u);
}

TEST(AddEntity, IdenticalReAddIsNoOp) {
  OntologyGraph g;
  const auto d = make_driver("cloud-computing", "Cloud Computing", DriverKind::Transformation, "text");
  g.add_entity(d);
  const auto before = g;
  g.add_entity(d);
  EXPECT_EQ(g, before);
}

TEST(AddEntity, SameIdDifferentPayloadConflicts) {
  OntologyGraph g;
  g.add_entity(make_driver("cloud", "Cloud Computing", DriverKind::Transformation, "text"));
  WorkforceSegment impostor = make_segment("cloud", "Cloud cohort");
  impostor.id.kind = EntityKind::Driver;
  EXPECT_EQ(error_code_of([&] { g.add_entity(impostor); }), OntologyErrc::DuplicateIdConflict);
  EXPECT_EQ(error_code_of([&] { g.add_entity(make_driver("cloud", "Cloud", DriverKind::Core)); }), OntologyErrc::DuplicateIdConflict);
  // Payload kind must agree with the id kind.
  impostor.id.local_id = "other";
  EXPECT_EQ(error_code_of([&] { g.add_entity(impostor); }), OntologyErrc::KindMismatch);
}

TEST(AddEdge, AcceptsSignatureMatches) {
  OntologyGraph g;
  g.add_entity(make_driver("cloud", "Cloud Computing", DriverKind::Transformation, "text"));
  g.add_entity(make_segment("cohort", "Cloud matched cohort"));
  g.add_entity(make_title("data-scientists", "Data Scientist"));
  g.add_edge(driver_id("cloud"), Relation::Drives, segment_id("cohort"));
  g.add_edge(segment_id("cohort"), Relation::MapsTo, title_id("data-scientists"));
  g.add_edge(segment_id("cohort"), Relation::MapsTo, title_id("data-scientists"));
  EXPECT_EQ(g.edges().size(), 2u);
}

TEST(AddEdge, DriverToTitleIsForbiddenForEveryRelation) {
  OntologyGraph g;
  g.add_entity(make_driver("cloud", "Cloud Computing", DriverKind::Transformation, "text"));
  g.add_entity(make_title("t", "Cloud Engineers"));
  for (const auto r : kAllRelations) {
    EXPECT_EQ(error_code_of([&] { g.add_edge(driver_id("cloud"), r, title_id("t")); }), OntologyErrc::ForbiddenRelation);
  }
  EXPECT_TRUE(g.edges().empty());
}

TEST(AddEdge, KindMismatchAndMissingEndpoint) {
  OntologyGraph g;
  g.add_entity(make_driver("cloud", "Cloud Computing", DriverKind::Transformation, "text"));
  g.add_entity(make_skill("k8s", "Kubernetes"));
  EXPECT_EQ(error_code_of([&] { g.add_edge(driver_id("cloud"), Relation::Drives, skill_id("k8s")); }), OntologyErrc::KindMismatch);
  EXPECT_EQ(error_code_of([&] { g.add_edge(driver_id("cloud"), Relation::Drives, segment_id("nope")); }),
            OntologyErrc::MissingEndpoint);
}

TEST(AddEdge, RandomInsertionsNeverBreakSignatures) {
  std::mt19937_64 rng(31337);
  OntologyGraph g;
  std::vector<EntityId> ids;
  for (int i = 0; i < 40; ++i) {
    const auto e = random_entity(rng, kAllKinds[i % 5], "e" + std::to_string(i));
    ids.push_back(id_of(e));
    g.add_entity(e);
  }
  int accepted = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& s = ids[rng() % ids.size()];
    const auto& t = ids[rng() % ids.size()];
    const auto r = kAllRelations[rng() % 4];
    const auto sig = signature(r);
    const bool valid = s.kind == sig.source && t.kind == sig.target;
    try {
      g.add_edge(s, r, t);
      ++accepted;
      ASSERT_TRUE(valid) << to_string(Edge{s, r, t});
    } catch (const OntologyError& e) {
      ASSERT_FALSE(valid) << to_string(Edge{s, r, t});
      if (s.kind == EntityKind::Driver && t.kind == EntityKind::IndustryTitle) {
        ASSERT_EQ(e.code(), OntologyErrc::ForbiddenRelation);
      }
    }
  }
  EXPECT_GT(accepted, 0);
  EXPECT_TRUE(validate_graph(g).empty());
}

TEST(TitlesForDriver, TwoHopFixture) {
  const auto g = path_fixture();
  const auto titles = titles_for_driver(g, driver_id("cloud"));
  std::vector<std::string> names;
  for (const auto& t : titles) names.push_back(t.canonical_name);
  EXPECT_EQ(names, (std::vector<std::string>{"Architects", "Cloud Engineers", "Site Reliability Engineers"}));
}

TEST(TitlesForDriver, NoSegmentsAndUnknownDriver) {
  OntologyGraph g;
  g.add_entity(make_driver("lonely", "Lonely", DriverKind::Core));
  EXPECT_TRUE(titles_for_driver(g, driver_id("lonely")).empty());
  EXPECT_EQ(error_code_of([&] { titles_for_driver(g, driver_id("ghost")); }), OntologyErrc::UnknownEntity);
  EXPECT_EQ(error_code_of([&] { skills_for_driver(g, driver_id("ghost")); }), OntologyErrc::UnknownEntity);
}

TEST(TitlesForDriver, MatchesBruteForceOnRandomGraphs) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = random_graph(rng, 50);
    for (const auto& [id, entity] : g.entities()) {
      if (id.kind != EntityKind::Driver) continue;
      // Oracle: enumerate every (edge, edge) pair.
      std::set<EntityId> expected;
      for (const auto& e1 : g.edges()) {
        if (e1.source != id || e1.relation != Relation::Drives) continue;
        for (const auto& e2 : g.edges()) {
          if (e2.source == e1.target && e2.relation == Relation::MapsTo) expected.insert(e2.target);
        }
      }
      std::set<EntityId> got;
      for (const auto& t : titles_for_driver(g, id)) {
        ASSERT_EQ(t.id.kind, EntityKind::IndustryTitle);
        got.insert(t.id);
      }
      ASSERT_EQ(got, expected);
      for (const auto& k : skills_for_driver(g, id)) ASSERT_EQ(k.id.kind, EntityKind::Skill);
    }
  }
}

TEST(SkillsForDriver, ThreeHopFixture) {
  const auto g = path_fixture();
  const auto skills = skills_for_driver(g, driver_id("cloud"));
  ASSERT_EQ(skills.size(), 3u);
  EXPECT_EQ(skills[0].id.local_id, "k1");
  EXPECT_EQ(skills[1].id.local_id, "k2");
  EXPECT_EQ(skills[2].id.local_id, "k3");
}

TEST(SkillsForDriver, TitlesWithoutSkills) {
  OntologyGraph g;
  g.add_entity(make_driver("d", "D", DriverKind::Transformation, "x"));
  g.add_entity(make_segment("s", "S"));
  g.add_entity(make_title("t", "T"));
  g.add_edge(driver_id("d"), Relation::Drives, segment_id("s"));
  g.add_edge(segment_id("s"), Relation::MapsTo, title_id("t"));
  EXPECT_TRUE(skills_for_driver(g, driver_id("d")).empty());
}

TEST(ValidateGraph, EmptyGraphIsValid) { EXPECT_TRUE(validate_graph(OntologyGraph{}).empty()); }

TEST(ValidateGraph, DanglingEdgeFromRawFile) {
  const std::string raw = R"({"schema":1,"entities":[{"kind":"Segment","id":"s","name":"S","dimensions":{}}],
    "edges":[{"source":{"kind":"Segment","id":"s"},"relation":"MAPS_TO","target":{"kind":"IndustryTitle","id":"ghost"}}]})";
  const auto g = deserialize(raw);
  const auto violations = validate_graph(g);
  ASSERT_EQ(violations.size(), 1u);
  EXPECT_EQ(violations[0].rule, Rule::MissingEndpoint);
}

TEST(ValidateGraph, ForbiddenAndMismatchedEdgesFromRawFile) {
  const std::string raw = R"({"schema":1,"entities":[
      {"kind":"Driver","id":"d","name":"D","driver_kind":"Core","definition_text":"","provenance":{}},
      {"kind":"IndustryTitle","id":"t","canonical_name":"T","aliases":["T"]},
      {"kind":"Skill","id":"k","name":"K"}],
    "edges":[{"source":{"kind":"Driver","id":"d"},"relation":"DRIVES","target":{"kind":"IndustryTitle","id":"t"}},
             {"source":{"kind":"Skill","id":"k"},"relation":"REQUIRES","target":{"kind":"IndustryTitle","id":"t"}}]})";
  const auto violations = validate_graph(deserialize(raw));
  ASSERT_EQ(violations.size(), 2u);
  EXPECT_EQ(violations[0].rule, Rule::ForbiddenRelation);
  EXPECT_EQ(violations[1].rule, Rule::KindMismatch);
}

TEST(ValidateGraph, TransformationDriverNeedsDefinition) {
  OntologyGraph g;
  g.add_entity(make_driver("d", "Blockchain", DriverKind::Transformation, "  "));
  g.add_entity(make_driver("c", "Hospital admissions", DriverKind::Core));
  const auto violations = validate_graph(g);
  ASSERT_EQ(violations.size(), 1u);
  EXPECT_EQ(violations[0].rule, Rule::EmptyDefinition);
  EXPECT_EQ(violations[0].subject, "Driver:d");
}

TEST(ValidateGraph, NamesAndAliasClosure) {
  auto t = make_title("t", "Cloud Engineers");
  t.aliases.erase("Cloud Engineers");
  const auto g = OntologyGraph::from_parts({{t.id, t}, {EntityId{EntityKind::Skill, "k"}, make_skill("k", "")}}, {});
  const auto violations = validate_graph(g);
  ASSERT_EQ(violations.size(), 2u);
  EXPECT_EQ(violations[0].rule, Rule::AliasClosure);
  EXPECT_EQ(violations[1].rule, Rule::EmptyName);
}

TEST(Serialization, RoundTripAndDeterminism) {
  auto g = path_fixture();
  g.add_entity(make_workforce("acme", "Acme Corp"));
  g.add_entity(make_segment("sydney-it", "Sydney IT", {{"geography", "Sydney"}, {"function", "IT"}}));
  g.add_edge({EntityKind::Workforce, "acme"}, Relation::HasSegment, segment_id("sydney-it"));
  const auto bytes = serialize(g);
  EXPECT_EQ(serialize(g), bytes);
  const auto back = deserialize(bytes);
  EXPECT_EQ(back, g);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_NE(bytes.find("\"schema\": 1"), std::string::npos);
}

TEST(Serialization, RoundTripOnRandomGraphs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = random_graph(rng, 30);
    const auto bytes = serialize(g);
    ASSERT_EQ(deserialize(bytes), g);
    ASSERT_EQ(serialize(deserialize(bytes)), bytes);
  }
}

TEST(Serialization, StableOrdering) {
  OntologyGraph a;
  OntologyGraph b;
  const std::vector<Entity> es = {make_skill("z", "Z"), make_title("m", "M"), make_driver("a", "A", DriverKind::Core)};
  for (const auto& e : es) a.add_entity(e);
  for (auto it = es.rbegin(); it != es.rend(); ++it) b.add_entity(*it);
  EXPECT_EQ(serialize(a), serialize(b));
  const auto doc = nlohmann::json::parse(serialize(a));
  EXPECT_EQ(doc["entities"][0]["kind"], "IndustryTitle");
  EXPECT_EQ(doc["entities"][1]["kind"], "Driver");
  EXPECT_EQ(doc["entities"][2]["kind"], "Skill");
}

TEST(Serialization, MalformedInputs) {
  const auto bytes = serialize(path_fixture());
  try {
    deserialize(bytes.substr(0, bytes.size() / 2));
    FAIL();
  } catch (const OntologyError& e) {
    EXPECT_EQ(e.code(), OntologyErrc::FormatError);
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
  }
  try {
    deserialize(R"({"schema":1,"entities":[{"kind":"Planet","id":"x"}],"edges":[]})");
    FAIL();
  } catch (const OntologyError& e) {
    EXPECT_EQ(e.code(), OntologyErrc::FormatError);
    EXPECT_NE(std::string(e.what()).find("/entities/0/kind"), std::string::npos);
  }
  EXPECT_EQ(error_code_of([] { deserialize(R"({"schema":2,"entities":[],"edges":[]})"); }), OntologyErrc::FormatError);
  EXPECT_EQ(error_code_of([] { deserialize(R"({"schema":1,"entities":[],"edges":[{"relation":"LIKES"}]})"); }),
            OntologyErrc::FormatError);
}

TEST(LocalIds, SlugWithCollisionSuffix) {
  OntologyGraph g;
  EXPECT_EQ(make_local_id(g, EntityKind::IndustryTitle, "Cloud Engineers"), "cloud-engineers");
  g.add_entity(make_title("cloud-engineers", "Cloud Engineers"));
  EXPECT_EQ(make_local_id(g, EntityKind::IndustryTitle, "Cloud  engineers!"), "cloud-engineers-2");
  EXPECT_EQ(make_local_id(g, EntityKind::Skill, "Cloud Engineers"), "cloud-engineers");
}
