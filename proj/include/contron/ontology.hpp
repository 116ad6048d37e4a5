#pragma once

#include <algorithm>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "contron/entity.hpp"
#include "contron/error.hpp"
#include "contron/text.hpp"

namespace contron::ontology {

enum class ReviewStatus {
  kUnreviewed,
  kAutoEnriched,
  kExpertConfirmed,
  kNeedsReview,
  kNoMatch,
};

inline std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::kUnreviewed: return "unreviewed";
    case ReviewStatus::kAutoEnriched: return "auto_enriched";
    case ReviewStatus::kExpertConfirmed: return "expert_confirmed";
    case ReviewStatus::kNeedsReview: return "needs_review";
    case ReviewStatus::kNoMatch: return "no_match";
  }
  return "unreviewed";
}

inline std::optional<ReviewStatus> parse_review_status(std::string_view s) {
  for (auto st : {ReviewStatus::kUnreviewed, ReviewStatus::kAutoEnriched,
                  ReviewStatus::kExpertConfirmed, ReviewStatus::kNeedsReview,
                  ReviewStatus::kNoMatch}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

enum class EnrichMode { kAuto, kExpert };

/// What a matched entity contributed, so a later disjoint can undo it.
struct EnrichmentRecord {
  std::string entity_id;
  std::vector<std::string> added_labels;
  std::vector<std::string> added_alt_labels;
  std::vector<std::string> added_categories;
  std::optional<std::string> previous_description;

  friend bool operator==(const EnrichmentRecord&, const EnrichmentRecord&) = default;
};

struct OntologyClass {
  std::string class_id;
  std::string name;
  std::vector<std::string> labels;
  std::vector<std::string> alt_labels;
  std::vector<std::string> synonyms;
  std::vector<std::string> categories;
  std::optional<std::string> description;
  std::optional<std::string> matched_entity;
  std::vector<std::string> disjoint_entities;
  ReviewStatus review_status = ReviewStatus::kUnreviewed;
  std::optional<std::string> parent;
  bool intrinsic = true;
  std::optional<EnrichmentRecord> enrichment;

  bool is_disjoint(std::string_view entity_id) const {
    return std::find(disjoint_entities.begin(), disjoint_entities.end(), entity_id) !=
           disjoint_entities.end();
  }

  friend bool operator==(const OntologyClass&, const OntologyClass&) = default;
};

struct Ontology {
  std::string ontology_id;
  long version = 0;
  std::vector<OntologyClass> classes;
  std::vector<std::string> imports;

  const OntologyClass* find(std::string_view class_id) const {
    for (const auto& c : classes) {
      if (c.class_id == class_id) return &c;
    }
    return nullptr;
  }
  OntologyClass* find(std::string_view class_id) {
    for (auto& c : classes) {
      if (c.class_id == class_id) return &c;
    }
    return nullptr;
  }
  std::size_t intrinsic_count() const {
    return static_cast<std::size_t>(
        std::count_if(classes.begin(), classes.end(), [](const auto& c) { return c.intrinsic; }));
  }

  friend bool operator==(const Ontology&, const Ontology&) = default;
};

/// Keywords used by the extractor, in priority order: name, labels,
/// alternative labels, synonyms, categories. Lowercase, '_' read as a space,
/// duplicates dropped.
inline std::vector<std::string> keywords_of(const OntologyClass& c) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto add = [&](const std::string& raw) {
    auto k = text::collapse_whitespace(text::to_lower(text::replace_all(raw, '_', ' ')));
    if (k.empty()) return;
    if (seen.insert(k).second) out.push_back(std::move(k));
  };
  add(c.name);
  for (const auto* list : {&c.labels, &c.alt_labels, &c.synonyms, &c.categories}) {
    for (const auto& s : *list) add(s);
  }
  return out;
}

namespace detail {

inline bool contains_ci(const std::vector<std::string>& v, std::string_view s) {
  return std::any_of(v.begin(), v.end(), [&](const auto& x) { return text::iequals(x, s); });
}

inline void erase_values(std::vector<std::string>& v, const std::vector<std::string>& drop) {
  v.erase(std::remove_if(v.begin(), v.end(),
                         [&](const auto& x) {
                           return std::find(drop.begin(), drop.end(), x) != drop.end();
                         }),
          v.end());
}

inline void strip_enrichment(OntologyClass& c) {
  if (!c.enrichment) return;
  erase_values(c.labels, c.enrichment->added_labels);
  erase_values(c.alt_labels, c.enrichment->added_alt_labels);
  erase_values(c.categories, c.enrichment->added_categories);
  c.description = c.enrichment->previous_description;
  c.enrichment.reset();
  c.matched_entity.reset();
}

inline OntologyClass& require_class(Ontology& o, std::string_view class_id) {
  auto* c = o.find(class_id);
  if (!c) {
    throw Error(ErrorCode::kUnknownClass,
                "'" + std::string(class_id) + "' in ontology " + o.ontology_id);
  }
  return *c;
}

}  // namespace detail

/// Schema and invariant check; the message names the offending record.
inline void validate(const Ontology& o) {
  auto fail = [](const std::string& where, const std::string& what) {
    throw Error(ErrorCode::kSchemaViolation, where + ": " + what);
  };
  if (o.ontology_id.empty()) fail("ontology_id", "must be nonempty");
  if (o.version < 0) fail("version", "must be >= 0");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < o.classes.size(); ++i) {
    const auto& c = o.classes[i];
    const auto where = "classes[" + std::to_string(i) + "]";
    if (c.class_id.empty()) fail(where + ".class_id", "must be nonempty");
    if (!ids.insert(c.class_id).second) fail(where + ".class_id", "duplicate '" + c.class_id + "'");
    if (text::trim(c.name).empty()) fail(where + ".name", "must be nonempty");
    if (c.matched_entity && c.is_disjoint(*c.matched_entity)) {
      fail(where + ".matched_entity", "is listed in disjoint_entities");
    }
    if ((c.review_status == ReviewStatus::kAutoEnriched ||
         c.review_status == ReviewStatus::kExpertConfirmed) &&
        !c.matched_entity) {
      fail(where + ".review_status", "requires matched_entity");
    }
  }
  for (std::size_t i = 0; i < o.classes.size(); ++i) {
    const auto& p = o.classes[i].parent;
    if (!p || ids.contains(*p)) continue;
    const auto colon = p->find(':');
    const bool imported =
        colon != std::string::npos &&
        std::find(o.imports.begin(), o.imports.end(), p->substr(0, colon)) != o.imports.end();
    if (!imported) {
      fail("classes[" + std::to_string(i) + "].parent", "unresolved '" + *p + "'");
    }
  }
}

/// Merges the entity into the class (label, aliases, description, category
/// labels) and records the match. Re-applying replaces the previous match's
/// contributions, so applying the same entity twice only changes the version.
inline Ontology apply_enrichment(Ontology o, std::string_view class_id, const KbEntity& entity,
                                 EnrichMode mode) {
  auto& c = detail::require_class(o, class_id);
  if (entity.entity_id.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "entity without id");
  }
  if (c.is_disjoint(entity.entity_id)) {
    throw Error(ErrorCode::kDisjointViolation,
                entity.entity_id + " is disjoint from " + c.class_id);
  }
  detail::strip_enrichment(c);
  EnrichmentRecord rec;
  rec.entity_id = entity.entity_id;
  rec.previous_description = c.description;
  auto merge = [&](std::vector<std::string>& target, std::vector<std::string>& added,
                   const std::string& value) {
    if (text::trim(value).empty()) return;
    if (text::iequals(value, c.name) || detail::contains_ci(target, value)) return;
    target.push_back(value);
    added.push_back(value);
  };
  merge(c.labels, rec.added_labels, entity.label);
  for (const auto& a : entity.aliases) {
    if (detail::contains_ci(c.labels, a)) continue;
    merge(c.alt_labels, rec.added_alt_labels, a);
  }
  for (const auto& cat : entity.category_labels) merge(c.categories, rec.added_categories, cat);
  if (entity.description) c.description = entity.description;
  c.matched_entity = entity.entity_id;
  c.enrichment = std::move(rec);
  c.review_status = mode == EnrichMode::kAuto ? ReviewStatus::kAutoEnriched
                                              : ReviewStatus::kExpertConfirmed;
  ++o.version;
  return o;
}

/// Marks entities as never representing the class. Disjointing the current
/// match removes it with everything it contributed.
inline Ontology disjoint_entities(Ontology o, std::string_view class_id,
                                  const std::vector<std::string>& entity_ids) {
  auto& c = detail::require_class(o, class_id);
  for (const auto& id : entity_ids) {
    if (id.empty()) throw Error(ErrorCode::kInvalidArgument, "empty entity id");
    if (!c.is_disjoint(id)) c.disjoint_entities.push_back(id);
    if (c.matched_entity == id) {
      detail::strip_enrichment(c);
      c.review_status = ReviewStatus::kNeedsReview;
    }
  }
  ++o.version;
  return o;
}

inline Ontology disjoint_entity(Ontology o, std::string_view class_id,
                                const std::string& entity_id) {
  return disjoint_entities(std::move(o), class_id, {entity_id});
}

/// Lexical fallback when the knowledge base had nothing for the class.
inline Ontology add_fallback_synonyms(Ontology o, std::string_view class_id,
                                      const std::vector<std::string>& terms) {
  auto& c = detail::require_class(o, class_id);
  for (const auto& t : terms) {
    if (!detail::contains_ci(c.synonyms, t)) c.synonyms.push_back(t);
  }
  if (!c.matched_entity) c.review_status = ReviewStatus::kNoMatch;
  ++o.version;
  return o;
}

inline Ontology set_review_status(Ontology o, std::string_view class_id, ReviewStatus status) {
  auto& c = detail::require_class(o, class_id);
  if ((status == ReviewStatus::kAutoEnriched || status == ReviewStatus::kExpertConfirmed) &&
      !c.matched_entity) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(to_string(status)) + " requires a matched entity");
  }
  c.review_status = status;
  ++o.version;
  return o;
}

// ---------------------------------------------------------------------------
// Mutations: the unit of the change log. Replaying them on the base snapshot
// reproduces any committed version.

struct ApplyEnrichment {
  std::string class_id;
  KbEntity entity;
  EnrichMode mode = EnrichMode::kAuto;
};
struct DisjointEntities {
  std::string class_id;
  std::vector<std::string> entity_ids;
};
struct AddFallbackSynonyms {
  std::string class_id;
  std::vector<std::string> terms;
};
struct SetReviewStatus {
  std::string class_id;
  ReviewStatus status = ReviewStatus::kUnreviewed;
};

using Mutation = std::variant<ApplyEnrichment, DisjointEntities, AddFallbackSynonyms, SetReviewStatus>;

inline Ontology apply_mutation(Ontology o, const Mutation& m) {
  return std::visit(
      [&](const auto& x) -> Ontology {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ApplyEnrichment>) {
          return apply_enrichment(std::move(o), x.class_id, x.entity, x.mode);
        } else if constexpr (std::is_same_v<T, DisjointEntities>) {
          return disjoint_entities(std::move(o), x.class_id, x.entity_ids);
        } else if constexpr (std::is_same_v<T, AddFallbackSynonyms>) {
          return add_fallback_synonyms(std::move(o), x.class_id, x.terms);
        } else {
          return set_review_status(std::move(o), x.class_id, x.status);
        }
      },
      m);
}

inline nlohmann::ordered_json to_json(const Mutation& m) {
  nlohmann::ordered_json j;
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ApplyEnrichment>) {
          j["op"] = "apply_enrichment";
          j["class_id"] = x.class_id;
          j["mode"] = x.mode == EnrichMode::kAuto ? "auto" : "expert";
          j["entity"] = contron::to_json(x.entity);
        } else if constexpr (std::is_same_v<T, DisjointEntities>) {
          j["op"] = "disjoint_entities";
          j["class_id"] = x.class_id;
          j["entity_ids"] = x.entity_ids;
        } else if constexpr (std::is_same_v<T, AddFallbackSynonyms>) {
          j["op"] = "add_fallback_synonyms";
          j["class_id"] = x.class_id;
          j["terms"] = x.terms;
        } else {
          j["op"] = "set_review_status";
          j["class_id"] = x.class_id;
          j["status"] = to_string(x.status);
        }
      },
      m);
  return j;
}

inline Mutation mutation_from_json(const nlohmann::json& j) {
  const auto op = j.at("op").get<std::string>();
  const auto cls = j.at("class_id").get<std::string>();
  if (op == "apply_enrichment") {
    const auto mode = j.at("mode").get<std::string>();
    return ApplyEnrichment{cls, entity_from_json(j.at("entity")),
                           mode == "expert" ? EnrichMode::kExpert : EnrichMode::kAuto};
  }
  if (op == "disjoint_entities") {
    return DisjointEntities{cls, j.at("entity_ids").get<std::vector<std::string>>()};
  }
  if (op == "add_fallback_synonyms") {
    return AddFallbackSynonyms{cls, j.at("terms").get<std::vector<std::string>>()};
  }
  if (op == "set_review_status") {
    const auto st = parse_review_status(j.at("status").get<std::string>());
    if (!st) throw Error(ErrorCode::kSchemaViolation, "unknown status in change log");
    return SetReviewStatus{cls, *st};
  }
  throw Error(ErrorCode::kSchemaViolation, "unknown mutation '" + op + "'");
}

// ---------------------------------------------------------------------------
// Interchange format (JSON, stable key order):
//   {"format": "contron-ontology", "schema_version": 1, "ontology_id", "version",
//    "imports": [...], "classes": [{class fields...}]}

inline constexpr const char* kOntologyFormat = "contron-ontology";

namespace detail {

inline nlohmann::ordered_json opt(const std::optional<std::string>& s) {
  return s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const Ontology& o) {
  nlohmann::ordered_json j;
  j["format"] = kOntologyFormat;
  j["schema_version"] = 1;
  j["ontology_id"] = o.ontology_id;
  j["version"] = o.version;
  j["imports"] = o.imports;
  auto& arr = j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : o.classes) {
    nlohmann::ordered_json k;
    k["class_id"] = c.class_id;
    k["name"] = c.name;
    k["labels"] = c.labels;
    k["alt_labels"] = c.alt_labels;
    k["synonyms"] = c.synonyms;
    k["categories"] = c.categories;
    k["description"] = detail::opt(c.description);
    k["matched_entity"] = detail::opt(c.matched_entity);
    k["disjoint_entities"] = c.disjoint_entities;
    k["review_status"] = to_string(c.review_status);
    k["parent"] = detail::opt(c.parent);
    k["intrinsic"] = c.intrinsic;
    if (c.enrichment) {
      nlohmann::ordered_json e;
      e["entity_id"] = c.enrichment->entity_id;
      e["added_labels"] = c.enrichment->added_labels;
      e["added_alt_labels"] = c.enrichment->added_alt_labels;
      e["added_categories"] = c.enrichment->added_categories;
      e["previous_description"] = detail::opt(c.enrichment->previous_description);
      k["enrichment"] = std::move(e);
    } else {
      k["enrichment"] = nullptr;
    }
    arr.push_back(std::move(k));
  }
  return j;
}

inline Ontology ontology_from_json(const nlohmann::json& j) {
  std::string where = "$";
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kSchemaViolation, where + ": " + what);
  };
  auto str_list = [&](const nlohmann::json& obj, const char* key) {
    std::vector<std::string> out;
    if (!obj.contains(key) || obj[key].is_null()) return out;
    if (!obj[key].is_array()) fail(std::string(key) + " must be an array");
    for (const auto& v : obj[key]) {
      if (!v.is_string()) fail(std::string(key) + " must contain strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  auto opt_str = [&](const nlohmann::json& obj, const char* key) -> std::optional<std::string> {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_string()) fail(std::string(key) + " must be a string or null");
    return obj[key].get<std::string>();
  };
  if (!j.is_object()) fail("expected an object");
  if (j.value("format", "") != kOntologyFormat) fail("format must be 'contron-ontology'");
  if (j.value("schema_version", 0) != 1) fail("unsupported schema_version");
  Ontology o;
  if (!j.contains("ontology_id") || !j["ontology_id"].is_string()) fail("ontology_id missing");
  o.ontology_id = j["ontology_id"].get<std::string>();
  if (!j.contains("version") || !j["version"].is_number_integer()) fail("version missing");
  o.version = j["version"].get<long>();
  o.imports = str_list(j, "imports");
  if (!j.contains("classes") || !j["classes"].is_array()) fail("classes must be an array");
  std::size_t i = 0;
  for (const auto& k : j["classes"]) {
    where = "classes[" + std::to_string(i++) + "]";
    if (!k.is_object()) fail("expected an object");
    OntologyClass c;
    if (!k.contains("class_id") || !k["class_id"].is_string()) fail("class_id missing");
    c.class_id = k["class_id"].get<std::string>();
    if (!k.contains("name") || !k["name"].is_string()) fail("name missing");
    c.name = k["name"].get<std::string>();
    c.labels = str_list(k, "labels");
    c.alt_labels = str_list(k, "alt_labels");
    c.synonyms = str_list(k, "synonyms");
    c.categories = str_list(k, "categories");
    c.description = opt_str(k, "description");
    c.matched_entity = opt_str(k, "matched_entity");
    c.disjoint_entities = str_list(k, "disjoint_entities");
    const auto status = k.value("review_status", std::string("unreviewed"));
    const auto parsed = parse_review_status(status);
    if (!parsed) fail("unknown review_status '" + status + "'");
    c.review_status = *parsed;
    c.parent = opt_str(k, "parent");
    if (k.contains("intrinsic") && !k["intrinsic"].is_boolean()) fail("intrinsic must be boolean");
    c.intrinsic = k.value("intrinsic", true);
    if (k.contains("enrichment") && !k["enrichment"].is_null()) {
      const auto& e = k["enrichment"];
      if (!e.is_object() || !e.contains("entity_id")) fail("enrichment must name entity_id");
      EnrichmentRecord rec;
      rec.entity_id = e["entity_id"].get<std::string>();
      rec.added_labels = str_list(e, "added_labels");
      rec.added_alt_labels = str_list(e, "added_alt_labels");
      rec.added_categories = str_list(e, "added_categories");
      rec.previous_description = opt_str(e, "previous_description");
      c.enrichment = std::move(rec);
    }
    o.classes.push_back(std::move(c));
  }
  validate(o);
  return o;
}

inline std::string dump(const Ontology& o) { return to_json(o).dump(2) + "\n"; }

inline Ontology parse(std::string_view raw, const std::string& origin = "ontology") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSchemaViolation, origin + ": " + e.what());
  }
  try {
    return ontology_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, origin + ": " + e.what());
  }
}

inline Ontology load(const std::filesystem::path& path) {
  return parse(text::read_file(path), path.string());
}

inline void save(const Ontology& o, const std::filesystem::path& path) {
  validate(o);
  text::write_file_atomic(path, dump(o));
}

// ---------------------------------------------------------------------------

/// File-backed single-writer store: `base.json` (initial snapshot),
/// `snapshot.json` (current) and `changes.jsonl` (one committed mutation per
/// line, tagged with the version it produced).
class OntologyStore {
 public:
  static OntologyStore create(const std::filesystem::path& dir, const Ontology& initial) {
    validate(initial);
    std::filesystem::create_directories(dir);
    save(initial, dir / "base.json");
    save(initial, dir / "snapshot.json");
    text::write_file_atomic(dir / "changes.jsonl", "");
    return OntologyStore(dir, initial);
  }

  static OntologyStore open(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "snapshot.json")) {
      throw Error(ErrorCode::kIo, "no ontology store in " + dir.string());
    }
    return OntologyStore(dir, load(dir / "snapshot.json"));
  }

  OntologyStore(OntologyStore&& other) noexcept
      : dir_(std::move(other.dir_)), current_(std::move(other.current_)) {}

  Ontology current() const {
    std::shared_lock lock(mu_);
    return current_;
  }

  long version() const {
    std::shared_lock lock(mu_);
    return current_.version;
  }

  Ontology commit(const Mutation& m) {
    std::unique_lock lock(mu_);
    auto next = apply_mutation(current_, m);
    validate(next);
    auto line = to_json(m);
    line["version"] = next.version;
    line["committed_at"] = text::utc_timestamp();
    text::append_line(dir_ / "changes.jsonl", line.dump());
    save(next, dir_ / "snapshot.json");
    current_ = next;
    return next;
  }

  std::vector<nlohmann::json> history() const {
    std::shared_lock lock(mu_);
    return read_log();
  }

  /// Rebuilds the ontology as it was right after `version` was committed.
  Ontology at_version(long version) const {
    std::shared_lock lock(mu_);
    auto o = load(dir_ / "base.json");
    if (version < o.version || version > current_.version) {
      throw Error(ErrorCode::kInvalidArgument, "no version " + std::to_string(version));
    }
    for (const auto& line : read_log()) {
      if (o.version >= version) break;
      o = apply_mutation(std::move(o), mutation_from_json(line));
    }
    return o;
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  OntologyStore(std::filesystem::path dir, Ontology current)
      : dir_(std::move(dir)), current_(std::move(current)) {}

  std::vector<nlohmann::json> read_log() const {
    std::vector<nlohmann::json> out;
    const auto path = dir_ / "changes.jsonl";
    if (!std::filesystem::exists(path)) return out;
    std::istringstream in(text::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      out.push_back(nlohmann::json::parse(line));
    }
    return out;
  }

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  Ontology current_;
};

}  // namespace contron::ontology
