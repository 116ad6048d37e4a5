#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "contron/corpus.hpp"
#include "contron/dke.hpp"
#include "contron/entity.hpp"
#include "contron/error.hpp"
#include "contron/kb.hpp"
#include "contron/lexicon.hpp"
#include "contron/ontology.hpp"
#include "contron/text.hpp"

namespace contron::oe {

using ontology::Ontology;
using ontology::OntologyClass;

inline constexpr double kDefaultThreshold = 0.3;

using TermCounts = std::map<std::string, std::size_t>;

/// Unigram lemma counts, tokenized like corpus documents (stop words and
/// letterless tokens dropped).
inline TermCounts terms_of(std::string_view raw) {
  corpus::Document d;
  d.text = std::string(raw);
  return corpus::tokenize(d, 1).counts;
}

/// Topic lemma, gloss and member lemmas of every concept, as one bag.
struct DomainDocument {
  TermCounts terms;

  static DomainDocument from_concepts(const std::vector<dke::DomainConcept>& concepts) {
    std::string all;
    for (const auto& c : concepts) {
      all += text::replace_all(c.topic.lemma, corpus::kNgramSeparator, ' ') + "\n";
      all += c.gloss + "\n";
      for (const auto& l : c.lemmas) all += text::replace_all(l, corpus::kNgramSeparator, ' ') + "\n";
    }
    return {terms_of(all)};
  }

  bool empty() const { return terms.empty(); }
};

/// label + description + aliases + category labels.
inline std::string entity_text(const KbEntity& e) {
  std::string s = e.label;
  if (e.description) s += "\n" + *e.description;
  for (const auto& a : e.aliases) s += "\n" + a;
  for (const auto& c : e.category_labels) s += "\n" + c;
  return s;
}

enum class Weighting { kTfIdf, kRawCount };

inline std::string_view to_string(Weighting w) {
  return w == Weighting::kTfIdf ? "tfidf" : "raw";
}

struct Vsm {
  std::vector<std::string> vocabulary;         // sorted
  std::vector<std::vector<double>> vectors;    // one per input document
};

/// Vectors over the union vocabulary. TF-IDF weight = count *
/// (ln((1+N)/(1+df)) + 1), so a term present in every document keeps a
/// positive weight and two identical texts score exactly 1.
inline Vsm build_vsm(const std::vector<TermCounts>& docs, Weighting weighting = Weighting::kTfIdf) {
  if (docs.empty()) throw Error(ErrorCode::kInvalidArgument, "VSM needs at least one document");
  std::map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    for (const auto& [t, c] : d) {
      if (c > 0) ++df[t];
    }
  }
  Vsm vsm;
  std::map<std::string, std::size_t> index;
  for (const auto& [t, n] : df) {
    index[t] = vsm.vocabulary.size();
    vsm.vocabulary.push_back(t);
  }
  const double n_docs = static_cast<double>(docs.size());
  for (const auto& d : docs) {
    std::vector<double> v(vsm.vocabulary.size(), 0.0);
    for (const auto& [t, c] : d) {
      if (c == 0) continue;
      double w = static_cast<double>(c);
      if (weighting == Weighting::kTfIdf) {
        w *= std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[t]))) + 1.0;
      }
      v[index[t]] = w;
    }
    vsm.vectors.push_back(std::move(v));
  }
  return vsm;
}

/// Cosine of two non-negative vectors; 0 when either is the zero vector.
inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

/// Similarity of every text to the domain document, in input order.
inline std::vector<double> similarities(const std::vector<std::string>& texts,
                                        const DomainDocument& domain,
                                        Weighting weighting = Weighting::kTfIdf) {
  std::vector<TermCounts> docs;
  docs.reserve(texts.size() + 1);
  for (const auto& t : texts) docs.push_back(terms_of(t));
  docs.push_back(domain.terms);
  const auto vsm = build_vsm(docs, weighting);
  std::vector<double> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(cosine(vsm.vectors[i], vsm.vectors.back()));
  return out;
}

struct CandidateMatch {
  std::string class_id;
  KbEntity entity;
  double similarity = 0.0;
};

enum class Decision { kAuto, kReview, kNoMatch };

inline std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::kAuto: return "auto";
    case Decision::kReview: return "review";
    case Decision::kNoMatch: return "no_match";
  }
  return "review";
}

inline std::optional<Decision> parse_decision(std::string_view s) {
  for (auto d : {Decision::kAuto, Decision::kReview, Decision::kNoMatch}) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

struct EnrichmentOutcome {
  std::string class_id;
  std::string class_name;
  Decision decision = Decision::kNoMatch;
  std::vector<CandidateMatch> candidates;  // similarity desc, ties by entity_id
  std::size_t above_threshold = 0;
  std::optional<KbEntity> entity;           // set for auto
  std::vector<std::string> fallback_terms;  // set for no_match
  std::size_t disjoint_filtered = 0;

  double best_similarity() const { return candidates.empty() ? 0.0 : candidates.front().similarity; }
};

/// Sorts the candidates and applies the decision rule: auto iff exactly one
/// candidate reaches the threshold, no_match iff there is no candidate.
inline Decision classify(std::vector<CandidateMatch>& candidates, double threshold,
                         std::size_t* above = nullptr) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.entity.entity_id < b.entity.entity_id;
  });
  const auto n = static_cast<std::size_t>(std::count_if(
      candidates.begin(), candidates.end(), [&](const auto& c) { return c.similarity >= threshold; }));
  if (above) *above = n;
  if (candidates.empty()) return Decision::kNoMatch;
  return n == 1 ? Decision::kAuto : Decision::kReview;
}

using EntitySearch = std::function<std::vector<KbEntity>(const std::string& name)>;

inline EntitySearch search_with(kb::KbClient& client, std::size_t limit = kb::kDefaultLimit) {
  return [&client, limit](const std::string& name) { return client.search_entities(name, limit); };
}

struct MatchOptions {
  double threshold = kDefaultThreshold;
  Weighting weighting = Weighting::kTfIdf;
  std::size_t workers = 1;  // parallel class matching in enrich_ontology
};

/// Lexicon terms for a class the knowledge base knows nothing about: the
/// synonyms and hypernym lemmas of the whole name, else of each of its words.
inline std::vector<std::string> fallback_terms(const std::string& name, const lexicon::Lexicon* lex) {
  std::vector<std::string> out;
  if (!lex) return out;
  const auto words = text::split_whitespace(text::to_lower(name));
  if (words.empty()) return out;
  std::vector<std::string> found = lex->synonyms_and_related(text::join(words, "_"));
  if (found.empty()) {
    std::set<std::string> seen(words.begin(), words.end());
    for (const auto& w : words) {
      for (auto& t : lex->synonyms_and_related(w)) {
        if (seen.insert(t).second) found.push_back(std::move(t));
      }
    }
  }
  for (auto& t : found) out.push_back(text::replace_all(t, corpus::kNgramSeparator, ' '));
  return out;
}

/// Ranks the knowledge-base candidates for one class against the domain
/// document. Pure: the caller applies the outcome (see enrich_ontology).
inline EnrichmentOutcome match_class(const OntologyClass& c, const DomainDocument& domain,
                                     const EntitySearch& search, const lexicon::Lexicon* lex,
                                     const MatchOptions& options = {}) {
  if (text::trim(c.name).empty()) {
    throw Error(ErrorCode::kUnknownClass, "class '" + c.class_id + "' has no name");
  }
  if (!c.intrinsic) {
    throw Error(ErrorCode::kInvalidArgument, "class '" + c.class_id + "' is imported");
  }
  if (!(options.threshold >= 0.0 && options.threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must be in [0,1]");
  }
  EnrichmentOutcome out;
  out.class_id = c.class_id;
  out.class_name = c.name;
  std::vector<KbEntity> entities;
  for (auto& e : search(c.name)) {
    if (c.is_disjoint(e.entity_id)) {
      ++out.disjoint_filtered;
      continue;
    }
    entities.push_back(std::move(e));
  }
  if (!entities.empty()) {
    std::vector<std::string> texts;
    for (const auto& e : entities) texts.push_back(entity_text(e));
    const auto sims = similarities(texts, domain, options.weighting);
    for (std::size_t i = 0; i < entities.size(); ++i) {
      out.candidates.push_back({c.class_id, std::move(entities[i]), sims[i]});
    }
  }
  out.decision = classify(out.candidates, options.threshold, &out.above_threshold);
  if (out.decision == Decision::kAuto) {
    out.entity = out.candidates.front().entity;
  } else if (out.decision == Decision::kNoMatch) {
    out.fallback_terms = fallback_terms(c.name, lex);
  }
  return out;
}

struct ClassError {
  std::string class_id;
  ErrorCode code = ErrorCode::kIo;
  std::string message;
};

struct EnrichResult {
  Ontology ontology;
  std::vector<EnrichmentOutcome> outcomes;        // intrinsic, non-confirmed classes in order
  std::vector<std::string> skipped;               // expert_confirmed
  std::vector<ClassError> errors;
  std::vector<ontology::Mutation> mutations;      // what produced `ontology`, in order
};

/// The ontology change an outcome implies, if any.
inline std::optional<ontology::Mutation> mutation_for(const OntologyClass& c,
                                                      const EnrichmentOutcome& o) {
  using ontology::ReviewStatus;
  switch (o.decision) {
    case Decision::kAuto:
      if (c.review_status == ReviewStatus::kAutoEnriched && c.matched_entity == o.entity->entity_id) {
        return std::nullopt;
      }
      return ontology::ApplyEnrichment{c.class_id, *o.entity, ontology::EnrichMode::kAuto};
    case Decision::kReview:
      if (c.review_status == ReviewStatus::kNeedsReview) return std::nullopt;
      return ontology::SetReviewStatus{c.class_id, ReviewStatus::kNeedsReview};
    case Decision::kNoMatch: {
      const bool has_all = std::all_of(o.fallback_terms.begin(), o.fallback_terms.end(), [&](const auto& t) {
        return ontology::detail::contains_ci(c.synonyms, t);
      });
      if (c.review_status == ReviewStatus::kNoMatch && has_all) return std::nullopt;
      return ontology::AddFallbackSynonyms{c.class_id, o.fallback_terms};
    }
  }
  return std::nullopt;
}

/// One enrichment sweep over the intrinsic classes. Matching may run on
/// several workers; mutations are applied afterwards in class order.
inline EnrichResult enrich_ontology(const Ontology& input, const std::vector<dke::DomainConcept>& concepts,
                                    const EntitySearch& search, const lexicon::Lexicon* lex,
                                    const MatchOptions& options = {}) {
  EnrichResult result;
  result.ontology = input;
  const auto domain = DomainDocument::from_concepts(concepts);

  std::vector<const OntologyClass*> todo;
  for (const auto& c : input.classes) {
    if (!c.intrinsic) continue;
    if (c.review_status == ontology::ReviewStatus::kExpertConfirmed) {
      result.skipped.push_back(c.class_id);
      continue;
    }
    todo.push_back(&c);
  }

  std::vector<std::optional<EnrichmentOutcome>> outcomes(todo.size());
  std::vector<std::optional<ClassError>> errors(todo.size());
  auto run = [&](std::size_t i) {
    try {
      outcomes[i] = match_class(*todo[i], domain, search, lex, options);
    } catch (const Error& e) {
      errors[i] = ClassError{todo[i]->class_id, e.code(), e.what()};
    }
  };
  const auto workers = std::max<std::size_t>(1, std::min(options.workers, todo.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < todo.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < todo.size();) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (errors[i]) {
      result.errors.push_back(*errors[i]);
      continue;
    }
    auto& o = *outcomes[i];
    if (auto m = mutation_for(*result.ontology.find(o.class_id), o)) {
      result.ontology = ontology::apply_mutation(std::move(result.ontology), *m);
      result.mutations.push_back(std::move(*m));
    }
    result.outcomes.push_back(std::move(o));
  }
  if (!todo.empty() && result.errors.size() == todo.size()) {
    const auto& first = result.errors.front();
    throw Error(first.code, "every class failed to match; first: " + first.message);
  }
  ontology::validate(result.ontology);
  return result;
}

// ---------------------------------------------------------------------------
// Outcome ledger: one record per class, stable field order, no timestamps so
// repeated runs over the same cache are byte-identical.

inline nlohmann::ordered_json candidate_json(const CandidateMatch& m) {
  nlohmann::ordered_json j;
  j["entity_id"] = m.entity.entity_id;
  j["label"] = m.entity.label;
  j["description"] = m.entity.description ? nlohmann::ordered_json(*m.entity.description)
                                          : nlohmann::ordered_json(nullptr);
  j["aliases"] = m.entity.aliases;
  j["category_labels"] = m.entity.category_labels;
  j["similarity"] = m.similarity;
  return j;
}

inline nlohmann::ordered_json outcome_json(const EnrichmentOutcome& o) {
  nlohmann::ordered_json j;
  j["class_id"] = o.class_id;
  j["class_name"] = o.class_name;
  j["decision"] = to_string(o.decision);
  j["entity_id"] = o.entity ? nlohmann::ordered_json(o.entity->entity_id) : nlohmann::ordered_json(nullptr);
  j["above_threshold"] = o.above_threshold;
  j["disjoint_filtered"] = o.disjoint_filtered;
  auto& cands = j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& c : o.candidates) cands.push_back(candidate_json(c));
  j["fallback_terms"] = o.fallback_terms;
  return j;
}

inline constexpr const char* kLedgerFormat = "contron-oe-ledger";

inline nlohmann::ordered_json ledger_json(const EnrichResult& r, const Ontology& input,
                                          const MatchOptions& options) {
  nlohmann::ordered_json j;
  j["format"] = kLedgerFormat;
  j["version"] = 1;
  j["ontology_id"] = input.ontology_id;
  j["ontology_version_in"] = input.version;
  j["ontology_version_out"] = r.ontology.version;
  j["threshold"] = options.threshold;
  j["weighting"] = to_string(options.weighting);
  std::map<std::string, std::size_t> histogram{{"auto", 0}, {"review", 0}, {"no_match", 0}};
  for (const auto& o : r.outcomes) ++histogram[std::string(to_string(o.decision))];
  j["histogram"] = {{"auto", histogram["auto"]},
                    {"review", histogram["review"]},
                    {"no_match", histogram["no_match"]}};
  auto& outs = j["outcomes"] = nlohmann::ordered_json::array();
  for (const auto& o : r.outcomes) outs.push_back(outcome_json(o));
  j["skipped"] = r.skipped;
  auto& errs = j["errors"] = nlohmann::ordered_json::array();
  for (const auto& e : r.errors) {
    errs.push_back({{"class_id", e.class_id}, {"code", to_string(e.code)}, {"message", e.message}});
  }
  return j;
}

}  // namespace contron::oe
