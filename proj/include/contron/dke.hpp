#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "contron/corpus.hpp"
#include "contron/error.hpp"
#include "contron/lexicon.hpp"
#include "contron/text.hpp"

namespace contron::dke {

using lexicon::Pos;
using lexicon::Synset;
using lexicon::SynsetId;

struct TopicCandidate {
  corpus::Term term;
  double score = 0.0;
};

struct DomainConcept {
  corpus::Term topic;
  SynsetId synset;
  std::string gloss;
  double accumulated_weight = 0.0;
  std::vector<std::string> lemmas;  // synset members, used by the enricher
};

struct GraphVertex {
  std::size_t topic = 0;       // index into DisambiguationGraph::topics
  std::size_t sense_rank = 0;  // 0 = first sense in database order
  const Synset* synset = nullptr;
};

struct GraphEdge {
  std::size_t a = 0, b = 0;  // vertex indices
  double weight = 0.0;
};

struct DisambiguationGraph {
  std::vector<corpus::Term> topics;
  std::vector<GraphVertex> vertices;
  std::vector<GraphEdge> edges;  // zero-weight pairs omitted
  std::size_t candidate_pairs = 0;

  double accumulated(std::size_t vertex) const {
    double sum = 0.0;
    for (const auto& e : edges) {
      if (e.a == vertex || e.b == vertex) sum += e.weight;
    }
    return sum;
  }
};

struct Options {
  int max_arity = corpus::kDefaultMaxArity;
  std::size_t top_k = 1000;
  double min_score = 0.0;
  std::size_t senses_per_topic = 5;
};

template <class T>
concept SenseInventory = requires(const T& inv, std::string_view lemma,
                                  std::optional<Pos> pos) {
  { inv.synsets_of(lemma, pos) } -> std::same_as<std::vector<const Synset*>>;
};

template <class F>
concept SimilarityFn = std::invocable<F&, const Synset&, const Synset&> &&
    std::convertible_to<std::invoke_result_t<F&, const Synset&, const Synset&>, double>;

/// Per-term score: mean over the documents containing the term of
/// (count / document tokens) * ln(N / df). Sorted by score descending, ties
/// by lemma.
inline std::vector<TopicCandidate> compute_tfidf(const corpus::CorpusStats& stats,
                                                 const std::vector<corpus::BagOfWords>& bags) {
  if (stats.document_count == 0 || bags.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "no documents");
  }
  const double n = static_cast<double>(stats.document_count);
  std::map<std::string, double> sums;
  for (const auto& bag : bags) {
    if (bag.token_count == 0) continue;
    for (const auto& [lemma, count] : bag.counts) {
      const double tf = static_cast<double>(count) / static_cast<double>(bag.token_count);
      const double idf = std::log(n / static_cast<double>(stats.df(lemma)));
      sums[lemma] += tf * idf;
    }
  }
  std::vector<TopicCandidate> out;
  out.reserve(sums.size());
  for (const auto& [lemma, sum] : sums) {
    const double score = sum / static_cast<double>(stats.df(lemma));
    out.push_back({corpus::Term::from_lemma(lemma), score > 0.0 ? score : 0.0});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.term.lemma < b.term.lemma;
  });
  return out;
}

/// Top-k candidates scoring above `min_score` that the inventory knows.
template <SenseInventory Inventory>
std::vector<TopicCandidate> select_topics(const std::vector<TopicCandidate>& candidates,
                                          std::size_t k, double min_score,
                                          const Inventory& inventory) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::vector<TopicCandidate> out;
  for (const auto& c : candidates) {
    if (out.size() >= k) break;
    if (!(c.score > min_score)) continue;
    if (inventory.synsets_of(c.term.lemma, std::nullopt).empty()) continue;
    out.push_back(c);
  }
  return out;
}

/// Noun senses when the topic has any, otherwise every sense.
template <SenseInventory Inventory>
std::vector<const Synset*> candidate_senses(const Inventory& inventory,
                                            std::string_view lemma, std::size_t cap) {
  auto senses = inventory.synsets_of(lemma, Pos::kNoun);
  if (senses.empty()) senses = inventory.synsets_of(lemma, std::nullopt);
  if (senses.size() > cap) senses.resize(cap);
  return senses;
}

/// Complete multipartite graph: one part per topic, edge weight = similarity.
template <SenseInventory Inventory, SimilarityFn Similarity>
DisambiguationGraph build_graph(const std::vector<corpus::Term>& topics,
                                const Inventory& inventory,
                                std::size_t senses_per_topic, Similarity&& similarity) {
  if (senses_per_topic < 1) {
    throw Error(ErrorCode::kInvalidArgument, "senses_per_topic must be >= 1");
  }
  DisambiguationGraph g;
  g.topics = topics;
  for (std::size_t t = 0; t < topics.size(); ++t) {
    const auto senses = candidate_senses(inventory, topics[t].lemma, senses_per_topic);
    if (senses.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "topic '" + topics[t].lemma + "' has no synsets");
    }
    for (std::size_t r = 0; r < senses.size(); ++r) {
      g.vertices.push_back({t, r, senses[r]});
    }
  }
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    for (std::size_t j = i + 1; j < g.vertices.size(); ++j) {
      if (g.vertices[i].topic == g.vertices[j].topic) continue;
      ++g.candidate_pairs;
      const double w = similarity(*g.vertices[i].synset, *g.vertices[j].synset);
      if (!(w >= 0.0 && w <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "similarity outside [0,1] for " + g.vertices[i].synset->id.str() +
                        " / " + g.vertices[j].synset->id.str());
      }
      if (w > 0.0) g.edges.push_back({i, j, w});
    }
  }
  return g;
}

/// Wu-Palmer over a lexicon, caching ancestor sets per vertex so the
/// quadratic pair loop does not re-walk the taxonomy.
class CachedWup {
 public:
  explicit CachedWup(const lexicon::Lexicon& lex) : lex_(&lex) {}

  double operator()(const Synset& a, const Synset& b) {
    const auto& anc_a = ancestors(a);
    const auto& anc_b = ancestors(b);
    int best = 0;
    auto ia = anc_a.begin();
    auto ib = anc_b.begin();
    while (ia != anc_a.end() && ib != anc_b.end()) {
      if (*ia < *ib) {
        ++ia;
      } else if (*ib < *ia) {
        ++ib;
      } else {
        best = std::max(best, lex_->all()[*ia].depth);
        ++ia;
        ++ib;
      }
    }
    if (best == 0) return 0.0;
    return 2.0 * best / static_cast<double>(a.depth + b.depth);
  }

 private:
  const std::vector<std::size_t>& ancestors(const Synset& s) {
    const auto idx = lex_->index_of(s);
    auto it = cache_.find(idx);
    if (it != cache_.end()) return it->second;
    std::vector<std::size_t> out{idx};
    std::vector<std::size_t> stack{idx};
    std::unordered_map<std::size_t, bool> visited{{idx, true}};
    while (!stack.empty()) {
      const auto cur = stack.back();
      stack.pop_back();
      for (auto h : lex_->hypernym_indices(cur)) {
        if (visited.emplace(h, true).second) {
          out.push_back(h);
          stack.push_back(h);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return cache_.emplace(idx, std::move(out)).first->second;
  }

  const lexicon::Lexicon* lex_;
  std::unordered_map<std::size_t, std::vector<std::size_t>> cache_;
};

inline DisambiguationGraph build_graph(const std::vector<corpus::Term>& topics,
                                       const lexicon::Lexicon& lex,
                                       std::size_t senses_per_topic) {
  return build_graph(topics, lex, senses_per_topic, CachedWup(lex));
}

/// For each topic, the vertex with the highest sum of adjacent edge weights;
/// ties go to the earlier sense, then the smaller synset id.
inline std::vector<DomainConcept> disambiguate(const DisambiguationGraph& graph) {
  std::vector<double> acc(graph.vertices.size(), 0.0);
  for (const auto& e : graph.edges) {
    acc[e.a] += e.weight;
    acc[e.b] += e.weight;
  }
  std::vector<std::optional<std::size_t>> best(graph.topics.size());
  for (std::size_t v = 0; v < graph.vertices.size(); ++v) {
    const auto& vx = graph.vertices[v];
    auto& cur = best[vx.topic];
    if (!cur) {
      cur = v;
      continue;
    }
    const auto& bx = graph.vertices[*cur];
    const bool better =
        acc[v] > acc[*cur] ||
        (acc[v] == acc[*cur] &&
         (vx.sense_rank < bx.sense_rank ||
          (vx.sense_rank == bx.sense_rank && vx.synset->id < bx.synset->id)));
    if (better) cur = v;
  }
  std::vector<DomainConcept> out;
  for (std::size_t t = 0; t < graph.topics.size(); ++t) {
    if (!best[t]) continue;
    const auto& vx = graph.vertices[*best[t]];
    out.push_back({graph.topics[t], vx.synset->id, vx.synset->gloss, acc[*best[t]],
                   vx.synset->lemmas});
  }
  return out;
}

/// tokenize -> TF-IDF -> topic selection -> similarity graph -> argmax senses.
inline std::vector<DomainConcept> extract_domain_knowledge(
    const std::vector<corpus::Document>& docs, const lexicon::Lexicon& lex,
    const Options& options = {}) {
  if (docs.empty()) throw Error(ErrorCode::kEmptyCorpus, "no documents");
  std::vector<corpus::BagOfWords> bags;
  bags.reserve(docs.size());
  const auto multiword = [&lex](std::string_view s) { return lex.is_multiword(s); };
  for (const auto& d : docs) bags.push_back(corpus::tokenize(d, options.max_arity, multiword));
  const auto stats = corpus::corpus_stats(bags);
  const auto topics =
      select_topics(compute_tfidf(stats, bags), options.top_k, options.min_score, lex);
  std::vector<corpus::Term> terms;
  terms.reserve(topics.size());
  for (const auto& t : topics) terms.push_back(t.term);
  return disambiguate(build_graph(terms, lex, options.senses_per_topic));
}

// ---------------------------------------------------------------------------
// Concepts file (JSON):
//   {"format": "contron-concepts", "version": 1,
//    "concepts": [{"topic", "synset", "gloss", "accumulated_weight", "lemmas"}]}

inline constexpr const char* kConceptsFormat = "contron-concepts";

inline nlohmann::ordered_json concepts_to_json(const std::vector<DomainConcept>& concepts) {
  nlohmann::ordered_json j;
  j["format"] = kConceptsFormat;
  j["version"] = 1;
  auto& arr = j["concepts"] = nlohmann::ordered_json::array();
  for (const auto& c : concepts) {
    nlohmann::ordered_json o;
    o["topic"] = c.topic.lemma;
    o["synset"] = c.synset.str();
    o["gloss"] = c.gloss;
    o["accumulated_weight"] = c.accumulated_weight;
    o["lemmas"] = c.lemmas;
    arr.push_back(std::move(o));
  }
  return j;
}

inline std::vector<DomainConcept> concepts_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kConceptsFormat ||
      !j.contains("concepts") || !j["concepts"].is_array()) {
    throw Error(ErrorCode::kSchemaViolation, "not a concepts document");
  }
  std::vector<DomainConcept> out;
  std::size_t i = 0;
  for (const auto& o : j["concepts"]) {
    const auto where = "concepts[" + std::to_string(i++) + "]";
    try {
      DomainConcept c;
      c.topic = corpus::Term::from_lemma(o.at("topic").get<std::string>());
      c.synset = SynsetId::parse(o.at("synset").get<std::string>());
      c.gloss = o.value("gloss", "");
      c.accumulated_weight = o.value("accumulated_weight", 0.0);
      c.lemmas = o.value("lemmas", std::vector<std::string>{});
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaViolation, where + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kSchemaViolation, where + ": " + e.what());
    }
  }
  return out;
}

inline void write_concepts(const std::filesystem::path& path,
                           const std::vector<DomainConcept>& concepts) {
  text::write_file_atomic(path, concepts_to_json(concepts).dump(2) + "\n");
}

inline std::vector<DomainConcept> read_concepts(const std::filesystem::path& path) {
  const auto raw = text::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSchemaViolation, path.string() + ": " + e.what());
  }
  return concepts_from_json(j);
}

}  // namespace contron::dke
