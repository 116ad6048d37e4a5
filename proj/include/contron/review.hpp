#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contron/entity.hpp"
#include "contron/error.hpp"
#include "contron/oe.hpp"
#include "contron/ontology.hpp"
#include "contron/text.hpp"

namespace contron::review {

struct ReviewItem {
  std::string item_id;
  std::string class_id;
  std::string class_name;
  oe::Decision kind = oe::Decision::kReview;  // review or no_match
  std::vector<oe::CandidateMatch> candidates;
  std::vector<std::string> fallback_terms;
  std::string created_at;
  std::string updated_at;
  std::optional<std::string> run_id;
  bool resolved = false;
  std::optional<nlohmann::json> resolution;  // {"decision": ..., "result": ...}

  double best_similarity() const { return candidates.empty() ? 0.0 : candidates.front().similarity; }

  const oe::CandidateMatch* candidate(std::string_view entity_id) const {
    for (const auto& c : candidates) {
      if (c.entity.entity_id == entity_id) return &c;
    }
    return nullptr;
  }
};

enum class Action { kSelect, kDisjoint, kNoMatch, kSkip };

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::kSelect: return "select";
    case Action::kDisjoint: return "disjoint";
    case Action::kNoMatch: return "no_match";
    case Action::kSkip: return "skip";
  }
  return "skip";
}

inline std::optional<Action> parse_action(std::string_view s) {
  for (auto a : {Action::kSelect, Action::kDisjoint, Action::kNoMatch, Action::kSkip}) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

struct ReviewDecision {
  std::string item_id;
  Action action = Action::kSkip;
  std::string entity_id;                // select
  std::vector<std::string> entity_ids;  // disjoint
  std::string actor;
  std::string timestamp;

  /// The fields that identify a decision for replay detection.
  bool same_request(const ReviewDecision& o) const {
    return action == o.action && entity_id == o.entity_id && entity_ids == o.entity_ids;
  }
};

inline nlohmann::ordered_json to_json(const ReviewDecision& d) {
  nlohmann::ordered_json j;
  j["item_id"] = d.item_id;
  j["action"] = to_string(d.action);
  if (d.action == Action::kSelect) j["entity_id"] = d.entity_id;
  if (d.action == Action::kDisjoint) j["entity_ids"] = d.entity_ids;
  j["actor"] = d.actor;
  j["timestamp"] = d.timestamp;
  return j;
}

/// Request body parser; every problem is an InvalidArgument with the field.
inline ReviewDecision decision_from_json(const nlohmann::json& j, std::string item_id = {}) {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (!j.is_object()) bad("decision body must be an object");
  ReviewDecision d;
  d.item_id = j.contains("item_id") && j["item_id"].is_string() ? j["item_id"].get<std::string>() : item_id;
  if (!item_id.empty() && d.item_id != item_id) bad("item_id does not match the path");
  if (!j.contains("action") || !j["action"].is_string()) bad("action: required string");
  const auto a = parse_action(j["action"].get<std::string>());
  if (!a) bad("action: expected select, disjoint, no_match or skip");
  d.action = *a;
  if (d.action == Action::kSelect) {
    if (!j.contains("entity_id") || !j["entity_id"].is_string() || j["entity_id"].get<std::string>().empty()) {
      bad("entity_id: required for select");
    }
    d.entity_id = j["entity_id"].get<std::string>();
  }
  if (d.action == Action::kDisjoint) {
    if (j.contains("entity_ids") && j["entity_ids"].is_array()) {
      for (const auto& e : j["entity_ids"]) {
        if (!e.is_string()) bad("entity_ids: strings expected");
        d.entity_ids.push_back(e.get<std::string>());
      }
    } else if (j.contains("entity_id") && j["entity_id"].is_string()) {
      d.entity_ids.push_back(j["entity_id"].get<std::string>());
    }
    if (d.entity_ids.empty()) bad("entity_ids: required for disjoint");
  }
  d.actor = j.contains("actor") && j["actor"].is_string() ? j["actor"].get<std::string>() : "expert";
  d.timestamp = j.contains("timestamp") && j["timestamp"].is_string() ? j["timestamp"].get<std::string>()
                                                                     : text::utc_timestamp();
  return d;
}

inline nlohmann::ordered_json candidate_json(const oe::CandidateMatch& m) {
  auto j = contron::to_json(m.entity);
  j["similarity"] = m.similarity;
  return j;
}

inline nlohmann::ordered_json to_json(const ReviewItem& it) {
  nlohmann::ordered_json j;
  j["item_id"] = it.item_id;
  j["class_id"] = it.class_id;
  j["class_name"] = it.class_name;
  j["kind"] = oe::to_string(it.kind);
  j["best_similarity"] = it.best_similarity();
  auto& cands = j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& c : it.candidates) cands.push_back(review::candidate_json(c));
  j["fallback_terms"] = it.fallback_terms;
  j["created_at"] = it.created_at;
  j["updated_at"] = it.updated_at;
  j["run_id"] = it.run_id ? nlohmann::ordered_json(*it.run_id) : nlohmann::ordered_json(nullptr);
  j["resolved"] = it.resolved;
  j["resolution"] = it.resolution ? nlohmann::ordered_json(*it.resolution) : nlohmann::ordered_json(nullptr);
  return j;
}

inline ReviewItem item_from_json(const nlohmann::json& j) {
  ReviewItem it;
  it.item_id = j.at("item_id").get<std::string>();
  it.class_id = j.at("class_id").get<std::string>();
  it.class_name = j.at("class_name").get<std::string>();
  const auto kind = oe::parse_decision(j.at("kind").get<std::string>());
  if (!kind || *kind == oe::Decision::kAuto) {
    throw Error(ErrorCode::kSchemaViolation, "item " + it.item_id + ": bad kind");
  }
  it.kind = *kind;
  for (const auto& c : j.at("candidates")) {
    it.candidates.push_back({it.class_id, entity_from_json(c), c.at("similarity").get<double>()});
  }
  it.fallback_terms = j.value("fallback_terms", std::vector<std::string>{});
  it.created_at = j.value("created_at", "");
  it.updated_at = j.value("updated_at", "");
  if (j.contains("run_id") && j["run_id"].is_string()) it.run_id = j["run_id"].get<std::string>();
  it.resolved = j.value("resolved", false);
  if (j.contains("resolution") && !j["resolution"].is_null()) it.resolution = j["resolution"];
  return it;
}

struct DecisionResult {
  std::string item_id;
  std::string class_id;
  Action action = Action::kSkip;
  bool resolved = false;
  bool replayed = false;
  long ontology_version = 0;
  std::string review_status;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["item_id"] = item_id;
    j["class_id"] = class_id;
    j["action"] = review::to_string(action);
    j["resolved"] = resolved;
    j["replayed"] = replayed;
    j["ontology_version"] = ontology_version;
    j["review_status"] = review_status;
    return j;
  }
};

inline constexpr const char* kQueueFormat = "contron-review-queue";

/// Review items produced by enrichment sweeps. At most one unresolved item
/// per class; a new sweep refreshes it in place.
class ReviewQueue {
 public:
  std::vector<ReviewItem> items;
  long next_id = 1;

  ReviewItem* find(std::string_view item_id) {
    for (auto& it : items) {
      if (it.item_id == item_id) return &it;
    }
    return nullptr;
  }
  const ReviewItem* find(std::string_view item_id) const {
    return const_cast<ReviewQueue*>(this)->find(item_id);
  }

  /// Unresolved items, most promising first (best similarity desc, then age).
  std::vector<const ReviewItem*> unresolved() const {
    std::vector<const ReviewItem*> out;
    for (const auto& it : items) {
      if (!it.resolved) out.push_back(&it);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
      return a->best_similarity() > b->best_similarity();
    });
    return out;
  }

  /// Folds a sweep's outcomes in: review / no_match classes get a fresh or
  /// refreshed item, auto classes lose any stale unresolved item.
  void merge_outcomes(const std::vector<oe::EnrichmentOutcome>& outcomes, const std::string& timestamp,
                      const std::optional<std::string>& run_id = std::nullopt) {
    for (const auto& o : outcomes) {
      auto open = std::find_if(items.begin(), items.end(),
                               [&](const auto& it) { return !it.resolved && it.class_id == o.class_id; });
      if (o.decision == oe::Decision::kAuto) {
        if (open != items.end()) items.erase(open);
        continue;
      }
      ReviewItem* it = nullptr;
      if (open != items.end()) {
        it = &*open;
      } else {
        items.push_back({});
        it = &items.back();
        it->item_id = "q" + std::to_string(next_id++);
        it->class_id = o.class_id;
        it->created_at = timestamp;
      }
      it->class_name = o.class_name;
      it->kind = o.decision;
      it->candidates = o.candidates;
      it->fallback_terms = o.fallback_terms;
      it->updated_at = timestamp;
      it->run_id = run_id;
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["format"] = kQueueFormat;
    j["version"] = 1;
    j["next_id"] = next_id;
    auto& arr = j["items"] = nlohmann::ordered_json::array();
    for (const auto& it : items) arr.push_back(review::to_json(it));
    return j;
  }

  static ReviewQueue from_json(const nlohmann::json& j) {
    if (j.value("format", "") != kQueueFormat) {
      throw Error(ErrorCode::kSchemaViolation, "format: expected " + std::string(kQueueFormat));
    }
    ReviewQueue q;
    q.next_id = j.at("next_id").get<long>();
    for (const auto& it : j.at("items")) q.items.push_back(item_from_json(it));
    return q;
  }

  static ReviewQueue load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    try {
      return from_json(nlohmann::json::parse(text::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaViolation, path.string() + ": " + e.what());
    }
  }

  void save(const std::filesystem::path& path) const {
    text::write_file_atomic(path, to_json().dump(2) + "\n");
  }
};

/// Applies an expert decision to the store and resolves the item.
///   select    -> expert-confirmed enrichment with a listed candidate
///   disjoint  -> listed candidates become disjoint entities of the class
///   no_match  -> class marked no_match
///   skip      -> nothing changes, the item stays open
/// Each accepted non-skip decision is exactly one committed mutation.
/// Replaying the decision that resolved an item returns the stored result.
inline DecisionResult decide(ReviewQueue& queue, ontology::OntologyStore& store, const ReviewDecision& d) {
  auto* it = queue.find(d.item_id);
  if (!it) throw Error(ErrorCode::kNotFound, "review item '" + d.item_id + "'");

  DecisionResult r;
  r.item_id = it->item_id;
  r.class_id = it->class_id;
  r.action = d.action;

  if (it->resolved) {
    const auto& res = *it->resolution;
    const auto prior = decision_from_json(res.at("decision"));
    if (!prior.same_request(d)) {
      throw Error(ErrorCode::kConflict, "item " + it->item_id + " already resolved by " +
                                            std::string(to_string(prior.action)));
    }
    const auto& stored = res.at("result");
    r.resolved = true;
    r.replayed = true;
    r.ontology_version = stored.at("ontology_version").get<long>();
    r.review_status = stored.at("review_status").get<std::string>();
    return r;
  }

  std::optional<ontology::Mutation> mutation;
  switch (d.action) {
    case Action::kSelect: {
      const auto* c = it->candidate(d.entity_id);
      if (!c) {
        throw Error(ErrorCode::kInvalidArgument,
                    "entity " + d.entity_id + " is not a candidate of item " + it->item_id);
      }
      mutation = ontology::ApplyEnrichment{it->class_id, c->entity, ontology::EnrichMode::kExpert};
      break;
    }
    case Action::kDisjoint:
      if (d.entity_ids.empty()) throw Error(ErrorCode::kInvalidArgument, "no entity to disjoint");
      for (const auto& id : d.entity_ids) {
        if (!it->candidate(id)) {
          throw Error(ErrorCode::kInvalidArgument, "entity " + id + " is not a candidate of item " + it->item_id);
        }
      }
      mutation = ontology::DisjointEntities{it->class_id, d.entity_ids};
      break;
    case Action::kNoMatch:
      mutation = ontology::SetReviewStatus{it->class_id, ontology::ReviewStatus::kNoMatch};
      break;
    case Action::kSkip:
      break;
  }

  ontology::Ontology after;
  try {
    after = mutation ? store.commit(*mutation) : store.current();
  } catch (const Error& e) {
    // A rule violation on the class (e.g. already disjoint) is a bad request.
    if (e.code() == ErrorCode::kDisjointViolation || e.code() == ErrorCode::kSchemaViolation) {
      throw Error(ErrorCode::kInvalidArgument, e.what());
    }
    throw;
  }
  const auto* cls = after.find(it->class_id);
  r.ontology_version = after.version;
  r.review_status = cls ? std::string(ontology::to_string(cls->review_status)) : "";
  if (d.action == Action::kSkip) return r;

  r.resolved = true;
  it->resolved = true;
  nlohmann::json res;
  res["decision"] = to_json(d);
  res["result"] = r.to_json();
  it->resolution = res;
  if (d.action == Action::kDisjoint) {
    // Other open items of the class must not keep offering these entities.
    for (auto& other : queue.items) {
      if (other.resolved || other.class_id != it->class_id) continue;
      std::erase_if(other.candidates, [&](const auto& c) {
        return std::find(d.entity_ids.begin(), d.entity_ids.end(), c.entity.entity_id) != d.entity_ids.end();
      });
    }
  }
  return r;
}

}  // namespace contron::review
