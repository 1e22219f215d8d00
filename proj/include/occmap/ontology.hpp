#pragma once

// Workforce ontology: five entity kinds joined by four typed relations.
// Demand drivers reach industry titles only through workforce segments.

#include <algorithm>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "occmap/error.hpp"
#include "occmap/text.hpp"

namespace occmap::ontology {

enum class OntologyErrc { DuplicateIdConflict, KindMismatch, MissingEndpoint, ForbiddenRelation, UnknownEntity, FormatError };

using OntologyError = CodedError<OntologyErrc>;

enum class EntityKind { Workforce, Segment, IndustryTitle, Driver, Skill };

inline constexpr std::string_view to_string(EntityKind k) {
  switch (k) {
    case EntityKind::Workforce: return "Workforce";
    case EntityKind::Segment: return "Segment";
    case EntityKind::IndustryTitle: return "IndustryTitle";
    case EntityKind::Driver: return "Driver";
    case EntityKind::Skill: return "Skill";
  }
  return "?";
}

inline std::optional<EntityKind> entity_kind_from(std::string_view s) {
  for (const auto k : {EntityKind::Workforce, EntityKind::Segment, EntityKind::IndustryTitle, EntityKind::Driver, EntityKind::Skill}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct EntityId {
  EntityKind kind = EntityKind::Workforce;
  std::string local_id;

  friend auto operator<=>(const EntityId&, const EntityId&) = default;
  friend bool operator==(const EntityId&, const EntityId&) = default;
};

inline std::string to_string(const EntityId& id) { return std::string(to_string(id.kind)) + ":" + id.local_id; }

enum class DriverKind { Core, Transformation };
enum class Provenance { Manual, Matched };

struct OrganisationWorkforce {
  EntityId id;
  std::string name;
  friend bool operator==(const OrganisationWorkforce&, const OrganisationWorkforce&) = default;
};

struct WorkforceSegment {
  EntityId id;
  std::string name;
  std::map<std::string, std::string> dimensions;  // e.g. geography, function, department
  friend bool operator==(const WorkforceSegment&, const WorkforceSegment&) = default;
};

struct IndustryTitle {
  EntityId id;
  std::string canonical_name;
  std::set<std::string> aliases;  // always contains canonical_name
  friend bool operator==(const IndustryTitle&, const IndustryTitle&) = default;
};

struct DemandDriver {
  EntityId id;
  std::string name;
  DriverKind kind = DriverKind::Transformation;
  std::string definition_text;
  std::map<std::string, Provenance> provenance;  // attribute name -> origin
  friend bool operator==(const DemandDriver&, const DemandDriver&) = default;
};

struct Skill {
  EntityId id;
  std::string name;
  friend bool operator==(const Skill&, const Skill&) = default;
};

using Entity = std::variant<OrganisationWorkforce, WorkforceSegment, IndustryTitle, DemandDriver, Skill>;

inline const EntityId& id_of(const Entity& e) {
  return std::visit([](const auto& x) -> const EntityId& { return x.id; }, e);
}

// Kind implied by the payload type, independent of the id it carries.
inline EntityKind payload_kind(const Entity& e) {
  constexpr EntityKind kinds[] = {EntityKind::Workforce, EntityKind::Segment, EntityKind::IndustryTitle, EntityKind::Driver,
                                  EntityKind::Skill};
  return kinds[e.index()];
}

inline OrganisationWorkforce make_workforce(std::string local_id, std::string name) {
  return {{EntityKind::Workforce, std::move(local_id)}, std::move(name)};
}

inline WorkforceSegment make_segment(std::string local_id, std::string name, std::map<std::string, std::string> dimensions = {}) {
  return {{EntityKind::Segment, std::move(local_id)}, std::move(name), std::move(dimensions)};
}

inline IndustryTitle make_title(std::string local_id, std::string canonical_name, std::set<std::string> aliases = {}) {
  aliases.insert(canonical_name);
  return {{EntityKind::IndustryTitle, std::move(local_id)}, std::move(canonical_name), std::move(aliases)};
}

inline DemandDriver make_driver(std::string local_id, std::string name, DriverKind kind, std::string definition_text = {},
                                std::map<std::string, Provenance> provenance = {}) {
  return {{EntityKind::Driver, std::move(local_id)}, std::move(name), kind, std::move(definition_text), std::move(provenance)};
}

inline Skill make_skill(std::string local_id, std::string name) { return {{EntityKind::Skill, std::move(local_id)}, std::move(name)}; }

// ---------------------------------------------------------------------------
// Relations

enum class Relation { HasSegment, MapsTo, Drives, Requires };

inline constexpr std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::HasSegment: return "HAS_SEGMENT";
    case Relation::MapsTo: return "MAPS_TO";
    case Relation::Drives: return "DRIVES";
    case Relation::Requires: return "REQUIRES";
  }
  return "?";
}

inline std::optional<Relation> relation_from(std::string_view s) {
  for (const auto r : {Relation::HasSegment, Relation::MapsTo, Relation::Drives, Relation::Requires}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

struct RelationSignature {
  EntityKind source;
  EntityKind target;
};

inline constexpr RelationSignature signature(Relation r) {
  switch (r) {
    case Relation::HasSegment: return {EntityKind::Workforce, EntityKind::Segment};
    case Relation::MapsTo: return {EntityKind::Segment, EntityKind::IndustryTitle};
    case Relation::Drives: return {EntityKind::Driver, EntityKind::Segment};
    case Relation::Requires: return {EntityKind::IndustryTitle, EntityKind::Skill};
  }
  return {EntityKind::Workforce, EntityKind::Workforce};
}

struct Edge {
  EntityId source;
  Relation relation = Relation::HasSegment;
  EntityId target;

  friend auto operator<=>(const Edge&, const Edge&) = default;
  friend bool operator==(const Edge&, const Edge&) = default;
};

inline std::string to_string(const Edge& e) {
  return to_string(e.source) + " -" + std::string(to_string(e.relation)) + "-> " + to_string(e.target);
}

// ---------------------------------------------------------------------------
// Graph

class OntologyGraph {
 public:
  // Re-adding an identical entity is a no-op.
  void add_entity(Entity entity) {
    const EntityId& id = id_of(entity);
    if (const auto it = entities_.find(id); it != entities_.end()) {
      if (it->second == entity) return;
      throw OntologyError(OntologyErrc::DuplicateIdConflict, "entity " + to_string(id) + " already exists with different content");
    }
    if (payload_kind(entity) != id.kind) {
      throw OntologyError(OntologyErrc::KindMismatch, "entity " + to_string(id) + " carries a " +
                                                          std::string(to_string(payload_kind(entity))) + " payload");
    }
    EntityId key = id;
    entities_.emplace(std::move(key), std::move(entity));
  }

  void add_edge(const EntityId& source, Relation relation, const EntityId& target) {
    if (!contains(source)) throw OntologyError(OntologyErrc::MissingEndpoint, "unknown edge source " + to_string(source));
    if (!contains(target)) throw OntologyError(OntologyErrc::MissingEndpoint, "unknown edge target " + to_string(target));
    if (source.kind == EntityKind::Driver && target.kind == EntityKind::IndustryTitle) {
      throw OntologyError(OntologyErrc::ForbiddenRelation,
                          "drivers link to industry titles only through segments: " + to_string(source) + " -> " + to_string(target));
    }
    const auto sig = signature(relation);
    if (source.kind != sig.source || target.kind != sig.target) {
      throw OntologyError(OntologyErrc::KindMismatch, std::string(to_string(relation)) + " expects " +
                                                          std::string(to_string(sig.source)) + " -> " +
                                                          std::string(to_string(sig.target)) + ", got " + to_string(source) +
                                                          " -> " + to_string(target));
    }
    edges_.insert(Edge{source, relation, target});
  }

  bool contains(const EntityId& id) const { return entities_.count(id) != 0; }

  const Entity* find(const EntityId& id) const {
    const auto it = entities_.find(id);
    return it == entities_.end() ? nullptr : &it->second;
  }

  template <typename T>
  const T* find_as(const EntityId& id) const {
    const Entity* e = find(id);
    return e == nullptr ? nullptr : std::get_if<T>(e);
  }

  const std::map<EntityId, Entity>& entities() const { return entities_; }
  const std::set<Edge>& edges() const { return edges_; }

  // Targets of `relation` edges leaving `source`, in EntityId order.
  std::vector<EntityId> targets(const EntityId& source, Relation relation) const {
    std::vector<EntityId> out;
    const Edge lo{source, relation, EntityId{EntityKind::Workforce, {}}};
    for (auto it = edges_.lower_bound(lo); it != edges_.end() && it->source == source && it->relation == relation; ++it) {
      out.push_back(it->target);
    }
    return out;
  }

  // Builds a graph without checking any constraint. Used by deserialization
  // so that validate_graph can report what is wrong with a file.
  static OntologyGraph from_parts(std::map<EntityId, Entity> entities, std::set<Edge> edges) {
    OntologyGraph g;
    g.entities_ = std::move(entities);
    g.edges_ = std::move(edges);
    return g;
  }

  friend bool operator==(const OntologyGraph&, const OntologyGraph&) = default;

 private:
  std::map<EntityId, Entity> entities_;
  std::set<Edge> edges_;
};

// slug(name), or slug(name)-N for the smallest N >= 2 that is free.
inline std::string make_local_id(const OntologyGraph& graph, EntityKind kind, std::string_view name) {
  const std::string base = text::slugify(name);
  if (!graph.contains({kind, base})) return base;
  for (int n = 2;; ++n) {
    std::string candidate = base + "-" + std::to_string(n);
    if (!graph.contains({kind, candidate})) return candidate;
  }
}

// ---------------------------------------------------------------------------
// Queries

namespace detail {

inline void require_driver(const OntologyGraph& graph, const EntityId& driver_id) {
  if (driver_id.kind != EntityKind::Driver || graph.find_as<DemandDriver>(driver_id) == nullptr) {
    throw OntologyError(OntologyErrc::UnknownEntity, "unknown driver " + to_string(driver_id));
  }
}

inline std::set<EntityId> title_ids_for_driver(const OntologyGraph& graph, const EntityId& driver_id) {
  std::set<EntityId> titles;
  for (const auto& segment : graph.targets(driver_id, Relation::Drives)) {
    for (const auto& title : graph.targets(segment, Relation::MapsTo)) {
      if (graph.find_as<IndustryTitle>(title) != nullptr) titles.insert(title);
    }
  }
  return titles;
}

}  // namespace detail

// { t : driver DRIVES s, s MAPS_TO t }, ordered by canonical name then id.
inline std::vector<IndustryTitle> titles_for_driver(const OntologyGraph& graph, const EntityId& driver_id) {
  detail::require_driver(graph, driver_id);
  std::vector<IndustryTitle> out;
  for (const auto& id : detail::title_ids_for_driver(graph, driver_id)) out.push_back(*graph.find_as<IndustryTitle>(id));
  std::sort(out.begin(), out.end(), [](const IndustryTitle& a, const IndustryTitle& b) {
    return std::tie(a.canonical_name, a.id) < std::tie(b.canonical_name, b.id);
  });
  return out;
}

// { k : driver DRIVES s, s MAPS_TO t, t REQUIRES k }, ordered by name then id.
inline std::vector<Skill> skills_for_driver(const OntologyGraph& graph, const EntityId& driver_id) {
  detail::require_driver(graph, driver_id);
  std::set<EntityId> skill_ids;
  for (const auto& title : detail::title_ids_for_driver(graph, driver_id)) {
    for (const auto& skill : graph.targets(title, Relation::Requires)) {
      if (graph.find_as<Skill>(skill) != nullptr) skill_ids.insert(skill);
    }
  }
  std::vector<Skill> out;
  for (const auto& id : skill_ids) out.push_back(*graph.find_as<Skill>(id));
  std::sort(out.begin(), out.end(), [](const Skill& a, const Skill& b) { return std::tie(a.name, a.id) < std::tie(b.name, b.id); });
  return out;
}

// ---------------------------------------------------------------------------
// Validation

enum class Rule { MissingEndpoint, KindMismatch, ForbiddenRelation, IdKindMismatch, EmptyName, AliasClosure, EmptyDefinition };

inline constexpr std::string_view to_string(Rule r) {
  switch (r) {
    case Rule::MissingEndpoint: return "MissingEndpoint";
    case Rule::KindMismatch: return "KindMismatch";
    case Rule::ForbiddenRelation: return "ForbiddenRelation";
    case Rule::IdKindMismatch: return "IdKindMismatch";
    case Rule::EmptyName: return "EmptyName";
    case Rule::AliasClosure: return "AliasClosure";
    case Rule::EmptyDefinition: return "EmptyDefinition";
  }
  return "?";
}

struct Violation {
  Rule rule;
  std::string subject;  // entity id or edge rendering
  friend bool operator==(const Violation&, const Violation&) = default;
};

// Empty iff every graph invariant holds. Transformation drivers are query
// sources, so an empty definition text is a violation for them.
inline std::vector<Violation> validate_graph(const OntologyGraph& graph) {
  std::vector<Violation> out;
  for (const auto& [key, entity] : graph.entities()) {
    const std::string subject = to_string(key);
    if (id_of(entity) != key || payload_kind(entity) != key.kind) out.push_back({Rule::IdKindMismatch, subject});
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, IndustryTitle>) {
            if (text::trim(e.canonical_name).empty()) out.push_back({Rule::EmptyName, subject});
            if (e.aliases.count(e.canonical_name) == 0) out.push_back({Rule::AliasClosure, subject});
          } else {
            if (text::trim(e.name).empty()) out.push_back({Rule::EmptyName, subject});
          }
          if constexpr (std::is_same_v<T, DemandDriver>) {
            if (e.kind == DriverKind::Transformation && text::trim(e.definition_text).empty()) {
              out.push_back({Rule::EmptyDefinition, subject});
            }
          }
        },
        entity);
  }
  for (const auto& edge : graph.edges()) {
    const std::string subject = to_string(edge);
    if (!graph.contains(edge.source) || !graph.contains(edge.target)) {
      out.push_back({Rule::MissingEndpoint, subject});
      continue;
    }
    if (edge.source.kind == EntityKind::Driver && edge.target.kind == EntityKind::IndustryTitle) {
      out.push_back({Rule::ForbiddenRelation, subject});
      continue;
    }
    const auto sig = signature(edge.relation);
    if (edge.source.kind != sig.source || edge.target.kind != sig.target) out.push_back({Rule::KindMismatch, subject});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: {"schema": 1, "entities": [...], "edges": [...]}, entities
// ordered by (kind, local_id) and edges by (source, relation, target).

inline constexpr int kGraphSchemaVersion = 1;

namespace detail {

inline nlohmann::json id_json(const EntityId& id) { return {{"kind", to_string(id.kind)}, {"id", id.local_id}}; }

inline std::string_view to_string(DriverKind k) { return k == DriverKind::Core ? "Core" : "Transformation"; }
inline std::string_view to_string(Provenance p) { return p == Provenance::Manual ? "manual" : "matched"; }

[[noreturn]] inline void format_error(const std::string& where, const std::string& what) {
  throw OntologyError(OntologyErrc::FormatError, "graph format error at " + where + ": " + what);
}

inline const nlohmann::json& member(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) format_error(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) format_error(where + "/" + key, "missing member");
  return *it;
}

inline std::string string_member(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = member(obj, key, where);
  if (!v.is_string()) format_error(where + "/" + key, "expected a string");
  return v.get<std::string>();
}

inline EntityId parse_id(const nlohmann::json& j, const std::string& where) {
  const auto kind = entity_kind_from(string_member(j, "kind", where));
  if (!kind) format_error(where + "/kind", "unknown entity kind");
  return {*kind, string_member(j, "id", where)};
}

inline Entity parse_entity(const nlohmann::json& j, const std::string& where) {
  const EntityId id = parse_id(j, where);
  switch (id.kind) {
    case EntityKind::Workforce:
      return OrganisationWorkforce{id, string_member(j, "name", where)};
    case EntityKind::Segment: {
      WorkforceSegment s{id, string_member(j, "name", where), {}};
      const auto& dims = member(j, "dimensions", where);
      if (!dims.is_object()) format_error(where + "/dimensions", "expected an object");
      for (const auto& [k, v] : dims.items()) {
        if (!v.is_string()) format_error(where + "/dimensions/" + k, "expected a string");
        s.dimensions[k] = v.get<std::string>();
      }
      return s;
    }
    case EntityKind::IndustryTitle: {
      IndustryTitle t{id, string_member(j, "canonical_name", where), {}};
      const auto& aliases = member(j, "aliases", where);
      if (!aliases.is_array()) format_error(where + "/aliases", "expected an array");
      for (std::size_t i = 0; i < aliases.size(); ++i) {
        if (!aliases[i].is_string()) format_error(where + "/aliases/" + std::to_string(i), "expected a string");
        t.aliases.insert(aliases[i].get<std::string>());
      }
      return t;
    }
    case EntityKind::Driver: {
      DemandDriver d{id, string_member(j, "name", where), DriverKind::Transformation, string_member(j, "definition_text", where), {}};
      const auto kind = string_member(j, "driver_kind", where);
      if (kind == "Core") d.kind = DriverKind::Core;
      else if (kind != "Transformation") format_error(where + "/driver_kind", "expected Core or Transformation");
      const auto& prov = member(j, "provenance", where);
      if (!prov.is_object()) format_error(where + "/provenance", "expected an object");
      for (const auto& [k, v] : prov.items()) {
        if (v == "manual") d.provenance[k] = Provenance::Manual;
        else if (v == "matched") d.provenance[k] = Provenance::Matched;
        else format_error(where + "/provenance/" + k, "expected manual or matched");
      }
      return d;
    }
    case EntityKind::Skill:
      return Skill{id, string_member(j, "name", where)};
  }
  format_error(where, "unreachable");
}

}  // namespace detail

inline nlohmann::json to_json(const Entity& entity) {
  nlohmann::json j = detail::id_json(id_of(entity));
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, OrganisationWorkforce> || std::is_same_v<T, Skill>) {
          j["name"] = e.name;
        } else if constexpr (std::is_same_v<T, WorkforceSegment>) {
          j["name"] = e.name;
          j["dimensions"] = e.dimensions;
        } else if constexpr (std::is_same_v<T, IndustryTitle>) {
          j["canonical_name"] = e.canonical_name;
          j["aliases"] = std::vector<std::string>(e.aliases.begin(), e.aliases.end());
        } else {
          j["name"] = e.name;
          j["driver_kind"] = detail::to_string(e.kind);
          j["definition_text"] = e.definition_text;
          j["provenance"] = nlohmann::json::object();
          for (const auto& [attr, p] : e.provenance) j["provenance"][attr] = detail::to_string(p);
        }
      },
      entity);
  return j;
}

// Byte-deterministic: ordered containers plus sorted object keys.
inline std::string serialize(const OntologyGraph& graph) {
  nlohmann::json doc;
  doc["schema"] = kGraphSchemaVersion;
  doc["entities"] = nlohmann::json::array();
  for (const auto& [id, entity] : graph.entities()) doc["entities"].push_back(to_json(entity));
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges()) {
    doc["edges"].push_back({{"source", detail::id_json(e.source)},
                            {"relation", to_string(e.relation)},
                            {"target", detail::id_json(e.target)}});
  }
  return doc.dump(2) + "\n";
}

// Structural parse only; graph constraints are left to validate_graph.
inline OntologyGraph deserialize(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    detail::format_error("byte " + std::to_string(e.byte), e.what());
  }
  const auto& schema = detail::member(doc, "schema", "");
  if (!schema.is_number_integer() || schema.get<int>() != kGraphSchemaVersion) {
    detail::format_error("/schema", "unsupported schema version");
  }
  std::map<EntityId, Entity> entities;
  const auto& ents = detail::member(doc, "entities", "");
  if (!ents.is_array()) detail::format_error("/entities", "expected an array");
  for (std::size_t i = 0; i < ents.size(); ++i) {
    const std::string where = "/entities/" + std::to_string(i);
    Entity e = detail::parse_entity(ents[i], where);
    EntityId key = id_of(e);
    if (!entities.emplace(std::move(key), std::move(e)).second) detail::format_error(where, "duplicate entity id");
  }
  std::set<Edge> edges;
  const auto& edge_list = detail::member(doc, "edges", "");
  if (!edge_list.is_array()) detail::format_error("/edges", "expected an array");
  for (std::size_t i = 0; i < edge_list.size(); ++i) {
    const std::string where = "/edges/" + std::to_string(i);
    const auto relation = relation_from(detail::string_member(edge_list[i], "relation", where));
    if (!relation) detail::format_error(where + "/relation", "unknown relation");
    edges.insert(Edge{detail::parse_id(detail::member(edge_list[i], "source", where), where + "/source"), *relation,
                      detail::parse_id(detail::member(edge_list[i], "target", where), where + "/target")});
  }
  return OntologyGraph::from_parts(std::move(entities), std::move(edges));
}

}  // namespace occmap::ontology
