#include <random>
#include <set>

#include <gtest/gtest.h>

#include "contron/oe.hpp"
#include "contron/review.hpp"
#include "iteration_sim.hpp"
#include "support.hpp"

using namespace contron;
using oe::CandidateMatch;
using oe::Decision;
using testing_support::fixture;
using testing_support::TempDir;

namespace {

KbEntity entity(const std::string& id, const std::string& label = "x") {
  KbEntity e;
  e.entity_id = id;
  e.label = label;
  return e;
}

std::vector<CandidateMatch> candidates(const std::vector<double>& sims) {
  std::vector<CandidateMatch> out;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    out.push_back({"C", entity("Q" + std::to_string(100 + i)), sims[i]});
  }
  return out;
}

const lexicon::Lexicon& mini() {
  static const auto lex = lexicon::Lexicon::load(fixture("mini-wordnet"));
  return lex;
}

const ontology::Ontology& core() {
  static const auto o = ontology::load(fixture("ontologies/core.json"));
  return o;
}

std::vector<dke::DomainConcept> concepts_of(const std::string& manifest) {
  return dke::extract_domain_knowledge(corpus::load_corpus(fixture("datasheets/" + manifest)), mini());
}

kb::ClientOptions fast() {
  kb::ClientOptions o;
  o.requests_per_second = 0;
  return o;
}

struct FixtureKb {
  kb::KbClient client{fast(), std::make_shared<kb::FixtureTransport>(fixture("kb"))};
  oe::EntitySearch search = oe::search_with(client);
};

struct ForbiddenTransport : kb::Transport {
  kb::HttpResponse get(const std::string&, const kb::Params&) override {
    ADD_FAILURE() << "transport used while offline";
    return {500, ""};
  }
};

oe::MatchOptions at_fixture_threshold() {
  oe::MatchOptions mo;
  mo.threshold = iteration_sim::kFixtureThreshold;
  return mo;
}

const oe::EnrichmentOutcome& outcome(const oe::EnrichResult& r, const std::string& class_id) {
  for (const auto& o : r.outcomes) {
    if (o.class_id == class_id) return o;
  }
  throw std::runtime_error("no outcome for " + class_id);
}

}  // namespace

// ---------------------------------------------------------------------------
// Vector space model

// Reference cosines computed with an independent script (plain Python
// dictionaries, smoothed idf) and frozen here.
TEST(Vsm, MatchesIndependentComputation) {
  const std::vector<oe::TermCounts> docs = {
      {{"attitude", 2}, {"sensor", 1}},
      {{"sensor", 1}, {"quaternion", 3}},
      {{"attitude", 1}, {"quaternion", 1}, {"baffle", 1}}};
  const auto tfidf = oe::build_vsm(docs, oe::Weighting::kTfIdf);
  EXPECT_EQ(tfidf.vocabulary, (std::vector<std::string>{"attitude", "baffle", "quaternion", "sensor"}));
  EXPECT_NEAR(oe::cosine(tfidf.vectors[0], tfidf.vectors[2]), 0.4631845913259998, 1e-9);
  EXPECT_NEAR(oe::cosine(tfidf.vectors[1], tfidf.vectors[2]), 0.4912814482016012, 1e-9);
  EXPECT_NEAR(oe::cosine(tfidf.vectors[0], tfidf.vectors[1]), 0.1414213562373095, 1e-9);

  const auto raw = oe::build_vsm(docs, oe::Weighting::kRawCount);
  EXPECT_NEAR(oe::cosine(raw.vectors[0], raw.vectors[2]), 0.5163977794943222, 1e-9);
  EXPECT_NEAR(oe::cosine(raw.vectors[1], raw.vectors[2]), 0.5477225575051661, 1e-9);
}

TEST(Vsm, IdenticalTextsScoreOne) {
  oe::DomainDocument domain{oe::terms_of("star tracker attitude quaternion")};
  for (auto w : {oe::Weighting::kTfIdf, oe::Weighting::kRawCount}) {
    const auto s = oe::similarities({"star tracker attitude quaternion"}, domain, w);
    EXPECT_NEAR(s[0], 1.0, 1e-12);
  }
}

TEST(Vsm, DisjointVocabulariesScoreZero) {
  oe::DomainDocument domain{oe::terms_of("star tracker attitude")};
  EXPECT_EQ(oe::similarities({"liturgy bread wine"}, domain)[0], 0.0);
  EXPECT_EQ(oe::similarities({""}, domain)[0], 0.0);
  EXPECT_EQ(oe::similarities({"star"}, oe::DomainDocument{})[0], 0.0);
}

TEST(Vsm, Validation) {
  EXPECT_THROW(oe::build_vsm({}), Error);
  EXPECT_THROW(oe::cosine({1.0}, {1.0, 2.0}), Error);
}

// Cosine ignores vector length, and idf depends only on which documents
// contain a term, so multiplying the domain counts changes nothing.
TEST(Vsm, ScalingDomainCountsKeepsSimilarities) {
  oe::DomainDocument domain{oe::terms_of("mass weight physical quantity matter inertia body satellite")};
  const std::vector<std::string> texts = {"mass physical quantity inertia", "mass liturgy", "band album"};
  for (auto w : {oe::Weighting::kTfIdf, oe::Weighting::kRawCount}) {
    const auto base = oe::similarities(texts, domain, w);
    for (std::size_t k : {2u, 7u}) {
      oe::DomainDocument scaled = domain;
      for (auto& [t, n] : scaled.terms) n *= k;
      const auto s = oe::similarities(texts, scaled, w);
      for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_NEAR(s[i], base[i], 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// Decision rule

TEST(Classify, SingleStrongCandidateIsAuto) {
  auto c = candidates({0.05, 0.9, 0.05});
  std::size_t above = 0;
  EXPECT_EQ(oe::classify(c, 0.3, &above), Decision::kAuto);
  EXPECT_EQ(above, 1u);
  EXPECT_EQ(c.front().similarity, 0.9);
}

TEST(Classify, Boundaries) {
  auto none = candidates({});
  EXPECT_EQ(oe::classify(none, 0.3), Decision::kNoMatch);
  auto two = candidates({0.3, 0.31});
  EXPECT_EQ(oe::classify(two, 0.3), Decision::kReview);
  auto weak = candidates({0.29, 0.1});
  EXPECT_EQ(oe::classify(weak, 0.3), Decision::kReview);
  auto exact = candidates({0.3});
  EXPECT_EQ(oe::classify(exact, 0.3), Decision::kAuto);
}

TEST(Classify, TiesBrokenByEntityId) {
  std::vector<CandidateMatch> c = {{"C", entity("Q9"), 0.5}, {"C", entity("Q1"), 0.5}, {"C", entity("Q5"), 0.7}};
  oe::classify(c, 0.3);
  EXPECT_EQ(c[0].entity.entity_id, "Q5");
  EXPECT_EQ(c[1].entity.entity_id, "Q1");
  EXPECT_EQ(c[2].entity.entity_id, "Q9");
}

TEST(Classify, RandomizedDecisionRule) {
  std::mt19937_64 rng(20241019);
  std::uniform_int_distribution<int> size(0, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<double> sims(static_cast<std::size_t>(size(rng)));
    for (auto& s : sims) s = unit(rng) < 0.2 ? 0.5 : unit(rng);  // some exact ties
    const double t = unit(rng) < 0.1 ? 0.5 : unit(rng);
    auto c = candidates(sims);
    const auto expected_above = std::count_if(sims.begin(), sims.end(), [&](double s) { return s >= t; });
    std::size_t above = 0;
    const auto d = oe::classify(c, t, &above);
    ASSERT_EQ(above, static_cast<std::size_t>(expected_above));
    ASSERT_EQ(d == Decision::kAuto, expected_above == 1) << "trial " << trial;
    ASSERT_EQ(d == Decision::kNoMatch, sims.empty());
    for (std::size_t i = 1; i < c.size(); ++i) ASSERT_GE(c[i - 1].similarity, c[i].similarity);
  }
}

// ---------------------------------------------------------------------------
// Class matching

TEST(MatchClass, DisjointEntitiesNeverProposed) {
  FixtureKb kb;
  const auto domain = oe::DomainDocument::from_concepts(concepts_of("manifest.tsv"));
  const std::vector<std::string> ids = {"Q9000101", "Q9000102", "Q9000103"};
  std::mt19937 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    auto cls = *core().find("Mass");
    std::set<std::string> banned;
    for (const auto& id : ids) {
      if (rng() % 2) banned.insert(id);
    }
    cls.disjoint_entities.assign(banned.begin(), banned.end());
    for (double t : {0.0, 0.07, 0.3}) {
      oe::MatchOptions mo;
      mo.threshold = t;
      const auto o = oe::match_class(cls, domain, kb.search, &mini(), mo);
      EXPECT_EQ(o.disjoint_filtered, banned.size());
      EXPECT_EQ(o.candidates.size(), ids.size() - banned.size());
      for (const auto& c : o.candidates) EXPECT_FALSE(banned.count(c.entity.entity_id));
      if (o.entity) {
        EXPECT_FALSE(banned.count(o.entity->entity_id));
      }
      if (banned.size() == ids.size()) {
        EXPECT_EQ(o.decision, Decision::kNoMatch);
      }
    }
  }
}

TEST(MatchClass, InjectedSimilaritiesFollowRule) {
  // A search returning one entity that shares the whole domain vocabulary and
  // two unrelated ones: the first scores 1, the others 0.
  oe::DomainDocument domain{oe::terms_of("attitude quaternion star")};
  oe::EntitySearch search = [](const std::string&) {
    auto a = entity("Q1", "attitude quaternion star");
    auto b = entity("Q2", "liturgy");
    auto c = entity("Q3", "album");
    return std::vector<KbEntity>{b, a, c};
  };
  auto cls = *core().find("Mass");
  const auto o = oe::match_class(cls, domain, search, nullptr);
  EXPECT_EQ(o.decision, Decision::kAuto);
  ASSERT_TRUE(o.entity);
  EXPECT_EQ(o.entity->entity_id, "Q1");
  EXPECT_NEAR(o.candidates[0].similarity, 1.0, 1e-12);
}

TEST(MatchClass, RejectsBadInput) {
  FixtureKb kb;
  oe::DomainDocument domain;
  auto cls = *core().find("Mass");
  oe::MatchOptions mo;
  mo.threshold = 1.5;
  EXPECT_THROW(oe::match_class(cls, domain, kb.search, nullptr, mo), Error);
  cls.name = "  ";
  try {
    oe::match_class(cls, domain, kb.search, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownClass);
  }
  auto imported = *core().find("Mass");
  imported.intrinsic = false;
  EXPECT_THROW(oe::match_class(imported, domain, kb.search, nullptr), Error);
}

TEST(Fallback, UsesLexiconRelations) {
  const auto terms = oe::fallback_terms("Radiation Tolerance", &mini());
  EXPECT_FALSE(terms.empty());
  EXPECT_NE(std::find(terms.begin(), terms.end(), "physical property"), terms.end());
  for (const auto& t : terms) EXPECT_EQ(t.find('_'), std::string::npos) << t;
  EXPECT_TRUE(oe::fallback_terms("Radiation Tolerance", nullptr).empty());
}

// ---------------------------------------------------------------------------
// Enrichment sweeps

TEST(Enrich, FixtureCorpusOutcomes) {
  FixtureKb kb;
  const auto r = oe::enrich_ontology(core(), concepts_of("manifest.tsv"), kb.search, &mini(), at_fixture_threshold());
  EXPECT_TRUE(r.errors.empty());
  EXPECT_EQ(r.outcomes.size(), core().intrinsic_count());

  const auto& iface = outcome(r, "Interface");
  EXPECT_EQ(iface.decision, Decision::kReview);
  EXPECT_GE(iface.above_threshold, 2u);
  EXPECT_EQ(r.ontology.find("Interface")->review_status, ontology::ReviewStatus::kNeedsReview);

  const auto& rad = outcome(r, "RadiationTolerance");
  EXPECT_EQ(rad.decision, Decision::kNoMatch);
  EXPECT_TRUE(rad.candidates.empty());
  const auto* rc = r.ontology.find("RadiationTolerance");
  EXPECT_EQ(rc->review_status, ontology::ReviewStatus::kNoMatch);
  for (const auto& t : rad.fallback_terms) EXPECT_TRUE(ontology::detail::contains_ci(rc->synonyms, t));

  // "mean lifetime" just reaches the threshold on the full corpus.
  const auto& life = outcome(r, "Lifetime");
  EXPECT_EQ(life.decision, Decision::kReview);
  EXPECT_EQ(life.candidates.front().entity.entity_id, "Q9000191");

  // Imported classes are never matched.
  for (const auto& o : r.outcomes) EXPECT_TRUE(core().find(o.class_id)->intrinsic);
}

TEST(Enrich, AutoMatchMergesAliases) {
  FixtureKb kb;
  const auto r = oe::enrich_ontology(core(), concepts_of("manifest-b.tsv"), kb.search, &mini(), at_fixture_threshold());
  const auto& life = outcome(r, "Lifetime");
  EXPECT_EQ(life.decision, Decision::kAuto);
  EXPECT_EQ(life.entity->entity_id, "Q9000191");
  const auto* cls = r.ontology.find("Lifetime");
  EXPECT_EQ(cls->review_status, ontology::ReviewStatus::kAutoEnriched);
  EXPECT_TRUE(ontology::detail::contains_ci(cls->alt_labels, "life span"));
}

TEST(Enrich, EmptyConceptsMeanNothingIsAutomatic) {
  FixtureKb kb;
  const auto r = oe::enrich_ontology(core(), {}, kb.search, &mini());
  for (const auto& o : r.outcomes) {
    EXPECT_NE(o.decision, Decision::kAuto) << o.class_id;
    if (!o.candidates.empty()) {
      EXPECT_EQ(o.decision, Decision::kReview) << o.class_id;
    }
    for (const auto& c : o.candidates) EXPECT_EQ(c.similarity, 0.0);
  }
}

TEST(Enrich, ExpertConfirmedClassesAreSkipped) {
  FixtureKb kb;
  auto input = ontology::apply_enrichment(core(), "Interface", kb.client.search_entities("Interface")[1],
                                          ontology::EnrichMode::kExpert);
  const auto r = oe::enrich_ontology(input, concepts_of("manifest.tsv"), kb.search, &mini(), at_fixture_threshold());
  EXPECT_EQ(r.skipped, std::vector<std::string>{"Interface"});
  for (const auto& o : r.outcomes) EXPECT_NE(o.class_id, "Interface");
  EXPECT_EQ(*r.ontology.find("Interface"), *input.find("Interface"));
}

TEST(Enrich, SecondSweepOverSameInputsIsQuiet) {
  FixtureKb kb;
  const auto concepts = concepts_of("manifest.tsv");
  const auto first = oe::enrich_ontology(core(), concepts, kb.search, &mini(), at_fixture_threshold());
  const auto second = oe::enrich_ontology(first.ontology, concepts, kb.search, &mini(), at_fixture_threshold());
  EXPECT_TRUE(second.mutations.empty());
  EXPECT_EQ(second.ontology, first.ontology);
}

TEST(Enrich, PerClassFailuresAreCollected) {
  FixtureKb kb;
  oe::EntitySearch flaky = [&](const std::string& name) -> std::vector<KbEntity> {
    if (name == "Mass") throw Error(ErrorCode::kNetworkError, "down");
    return kb.client.search_entities(name);
  };
  const auto r = oe::enrich_ontology(core(), concepts_of("manifest-a.tsv"), flaky, &mini(), at_fixture_threshold());
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].class_id, "Mass");
  EXPECT_EQ(r.errors[0].code, ErrorCode::kNetworkError);
  EXPECT_EQ(r.outcomes.size(), core().intrinsic_count() - 1);

  oe::EntitySearch dead = [](const std::string&) -> std::vector<KbEntity> {
    throw Error(ErrorCode::kNetworkError, "down");
  };
  EXPECT_THROW(oe::enrich_ontology(core(), {}, dead, &mini()), Error);
}

TEST(Enrich, ParallelWorkersGiveSameResult) {
  FixtureKb kb;
  const auto concepts = concepts_of("manifest.tsv");
  auto mo = at_fixture_threshold();
  const auto serial = oe::enrich_ontology(core(), concepts, kb.search, &mini(), mo);
  mo.workers = 4;
  const auto parallel = oe::enrich_ontology(core(), concepts, kb.search, &mini(), mo);
  EXPECT_EQ(parallel.ontology, serial.ontology);
  EXPECT_EQ(oe::ledger_json(parallel, core(), mo).dump(), oe::ledger_json(serial, core(), mo).dump());
}

TEST(Enrich, LedgersAreByteIdenticalUnderFixedCache) {
  TempDir tmp;
  const auto concepts = concepts_of("manifest.tsv");
  auto opts = fast();
  opts.cache_dir = tmp / "cache";
  {
    kb::KbClient warm(opts, std::make_shared<kb::FixtureTransport>(fixture("kb")));
    oe::enrich_ontology(core(), concepts, oe::search_with(warm), &mini(), at_fixture_threshold());
  }
  opts.offline = true;
  std::set<std::string> ledgers;
  for (int run = 0; run < 3; ++run) {
    kb::KbClient offline(opts, std::make_shared<ForbiddenTransport>());
    auto mo = at_fixture_threshold();
    mo.workers = run + 1;
    const auto r = oe::enrich_ontology(core(), concepts, oe::search_with(offline), &mini(), mo);
    mo.workers = 1;
    ledgers.insert(oe::ledger_json(r, core(), mo).dump(2));
    EXPECT_EQ(offline.requests_made(), 0u);
  }
  EXPECT_EQ(ledgers.size(), 1u);
  const auto j = nlohmann::json::parse(*ledgers.begin());
  EXPECT_EQ(j["format"], oe::kLedgerFormat);
  EXPECT_EQ(j["histogram"]["auto"].get<int>() + j["histogram"]["review"].get<int>() +
                j["histogram"]["no_match"].get<int>(),
            static_cast<int>(core().intrinsic_count()));
}

// ---------------------------------------------------------------------------
// Iterations with a simulated expert

TEST(Iteration, CorrectClassesGrowAcrossSweeps) {
  TempDir tmp;
  const auto run = iteration_sim::simulate(CONTRON_FIXTURE_DIR, tmp.path());
  ASSERT_EQ(run.iterations.size(), 3u);
  bool grew = false;
  for (std::size_t i = 1; i < run.iterations.size(); ++i) {
    EXPECT_GE(run.iterations[i].correct_after_sweep, run.iterations[i - 1].correct_after_sweep);
    grew |= run.iterations[i].correct_after_sweep > run.iterations[i - 1].correct_after_sweep;
  }
  EXPECT_TRUE(grew);
}

// The enriched fixture ontology used by the extraction tests is the state
// after the three simulated sweeps.
TEST(Iteration, CheckedInEnrichedOntologyIsReproducible) {
  TempDir tmp;
  const auto run = iteration_sim::simulate(CONTRON_FIXTURE_DIR, tmp.path());
  EXPECT_EQ(ontology::dump(run.final_ontology), text::read_file(fixture("ontologies/core-enriched.json")));
}

// ---------------------------------------------------------------------------
// Review queue

namespace {

struct QueueFixture {
  TempDir tmp;
  ontology::OntologyStore store = ontology::OntologyStore::create(tmp / "store", core());
  review::ReviewQueue queue;
  FixtureKb kb;

  QueueFixture() {
    const auto r = oe::enrich_ontology(store.current(), concepts_of("manifest.tsv"), kb.search, &mini(),
                                       at_fixture_threshold());
    for (const auto& m : r.mutations) store.commit(m);
    queue.merge_outcomes(r.outcomes, "t0", "run-1");
  }

  const review::ReviewItem& item_for(const std::string& class_id) {
    for (const auto& it : queue.items) {
      if (it.class_id == class_id && !it.resolved) return it;
    }
    throw std::runtime_error("no open item for " + class_id);
  }

  review::ReviewDecision decision(const std::string& item, review::Action a, const std::string& entity = {}) {
    review::ReviewDecision d;
    d.item_id = item;
    d.action = a;
    if (a == review::Action::kSelect) d.entity_id = entity;
    if (a == review::Action::kDisjoint) d.entity_ids = {entity};
    d.actor = "tester";
    d.timestamp = "t1";
    return d;
  }
};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIo;
}

}  // namespace

TEST(ReviewQueue, HoldsReviewAndNoMatchClassesOnly) {
  QueueFixture f;
  for (const auto& it : f.queue.items) {
    EXPECT_NE(it.kind, Decision::kAuto);
    EXPECT_FALSE(it.resolved);
    EXPECT_EQ(it.run_id, "run-1");
  }
  EXPECT_EQ(f.item_for("RadiationTolerance").kind, Decision::kNoMatch);
  EXPECT_EQ(f.item_for("Interface").kind, Decision::kReview);
  const auto open = f.queue.unresolved();
  for (std::size_t i = 1; i < open.size(); ++i) {
    EXPECT_GE(open[i - 1]->best_similarity(), open[i]->best_similarity());
  }
}

TEST(ReviewQueue, MergeRefreshesInPlaceAndDropsAutoClasses) {
  QueueFixture f;
  const auto before = f.queue.items.size();
  const auto id = f.item_for("Interface").item_id;
  f.queue.merge_outcomes({}, "t2");
  EXPECT_EQ(f.queue.items.size(), before);

  oe::EnrichmentOutcome refreshed;
  refreshed.class_id = "Interface";
  refreshed.class_name = "Interface";
  refreshed.decision = Decision::kReview;
  refreshed.candidates = {{"Interface", entity("Q9000241"), 0.4}, {"Interface", entity("Q9000242"), 0.35}};
  f.queue.merge_outcomes({refreshed}, "t2", "run-2");
  EXPECT_EQ(f.queue.items.size(), before);
  EXPECT_EQ(f.item_for("Interface").item_id, id);
  EXPECT_EQ(f.item_for("Interface").updated_at, "t2");
  EXPECT_EQ(f.item_for("Interface").created_at, "t0");

  refreshed.decision = Decision::kAuto;
  refreshed.entity = refreshed.candidates[0].entity;
  f.queue.merge_outcomes({refreshed}, "t3");
  EXPECT_EQ(f.queue.find(id), nullptr);
}

TEST(ReviewQueue, SelectConfirmsEnrichment) {
  QueueFixture f;
  const auto id = f.item_for("Interface").item_id;
  const auto v = f.store.version();
  const auto res = review::decide(f.queue, f.store, f.decision(id, review::Action::kSelect, "Q9000241"));
  EXPECT_TRUE(res.resolved);
  EXPECT_FALSE(res.replayed);
  EXPECT_EQ(res.review_status, "expert_confirmed");
  EXPECT_EQ(f.store.version(), v + 1);
  const auto cls = *f.store.current().find("Interface");
  EXPECT_EQ(cls.matched_entity, "Q9000241");
  EXPECT_EQ(cls.review_status, ontology::ReviewStatus::kExpertConfirmed);
  for (const auto* it : f.queue.unresolved()) EXPECT_NE(it->item_id, id);
}

TEST(ReviewQueue, ReplayIsIdempotentAndConflictsAreRejected) {
  QueueFixture f;
  const auto id = f.item_for("Interface").item_id;
  const auto d = f.decision(id, review::Action::kSelect, "Q9000241");
  const auto first = review::decide(f.queue, f.store, d);
  const auto v = f.store.version();
  const auto again = review::decide(f.queue, f.store, d);
  EXPECT_TRUE(again.replayed);
  EXPECT_EQ(again.ontology_version, first.ontology_version);
  EXPECT_EQ(f.store.version(), v);
  EXPECT_EQ(code_of([&] { review::decide(f.queue, f.store, f.decision(id, review::Action::kSelect, "Q9000242")); }),
            ErrorCode::kConflict);
  EXPECT_EQ(code_of([&] { review::decide(f.queue, f.store, f.decision("q999", review::Action::kSkip)); }),
            ErrorCode::kNotFound);
}

TEST(ReviewQueue, SelectRequiresListedCandidate) {
  QueueFixture f;
  const auto id = f.item_for("Interface").item_id;
  EXPECT_EQ(code_of([&] { review::decide(f.queue, f.store, f.decision(id, review::Action::kSelect, "Q1")); }),
            ErrorCode::kInvalidArgument);
  EXPECT_FALSE(f.queue.find(id)->resolved);
}

TEST(ReviewQueue, DisjointMarksEntitiesAndFutureSweepsSkipThem) {
  QueueFixture f;
  const auto id = f.item_for("Interface").item_id;
  const auto res = review::decide(f.queue, f.store, f.decision(id, review::Action::kDisjoint, "Q9000242"));
  EXPECT_TRUE(res.resolved);
  const auto after = f.store.current();
  EXPECT_TRUE(after.find("Interface")->is_disjoint("Q9000242"));
  const auto r = oe::enrich_ontology(after, concepts_of("manifest.tsv"), f.kb.search, &mini(), at_fixture_threshold());
  const auto& o = outcome(r, "Interface");
  for (const auto& c : o.candidates) EXPECT_NE(c.entity.entity_id, "Q9000242");
  EXPECT_EQ(o.disjoint_filtered, 1u);
}

TEST(ReviewQueue, SkipLeavesEverythingAsItWas) {
  QueueFixture f;
  const auto id = f.item_for("Interface").item_id;
  const auto v = f.store.version();
  const auto res = review::decide(f.queue, f.store, f.decision(id, review::Action::kSkip));
  EXPECT_FALSE(res.resolved);
  EXPECT_EQ(f.store.version(), v);
  EXPECT_FALSE(f.queue.find(id)->resolved);
}

TEST(ReviewQueue, NoMatchSetsStatus) {
  QueueFixture f;
  const auto id = f.item_for("RadiationTolerance").item_id;
  const auto res = review::decide(f.queue, f.store, f.decision(id, review::Action::kNoMatch));
  EXPECT_TRUE(res.resolved);
  EXPECT_EQ(res.review_status, "no_match");
}

TEST(ReviewQueue, EveryAcceptedDecisionIsOneCommittedMutation) {
  QueueFixture f;
  const auto base = f.store.history().size();
  std::size_t accepted = 0;
  for (const auto* it : f.queue.unresolved()) {
    const auto id = it->item_id;
    const auto d = it->candidates.empty() ? f.decision(id, review::Action::kNoMatch)
                                          : f.decision(id, review::Action::kSelect, it->candidates.front().entity.entity_id);
    review::decide(f.queue, f.store, d);
    ++accepted;
  }
  EXPECT_GT(accepted, 0u);
  EXPECT_EQ(f.store.history().size(), base + accepted);
  EXPECT_TRUE(f.queue.unresolved().empty());
}

TEST(ReviewQueue, SavesAndLoads) {
  QueueFixture f;
  const auto id = f.item_for("Interface").item_id;
  review::decide(f.queue, f.store, f.decision(id, review::Action::kSelect, "Q9000241"));
  const auto path = f.tmp / "queue.json";
  f.queue.save(path);
  const auto loaded = review::ReviewQueue::load(path);
  EXPECT_EQ(loaded.to_json().dump(), f.queue.to_json().dump());
  EXPECT_TRUE(review::ReviewQueue::load(f.tmp / "missing.json").items.empty());
  text::write_file_atomic(f.tmp / "bad.json", "{\"format\":\"other\"}");
  EXPECT_THROW(review::ReviewQueue::load(f.tmp / "bad.json"), Error);
}

TEST(ReviewDecisionJson, FieldErrors) {
  using nlohmann::json;
  auto code = [](const json& j) {
    return code_of([&] { review::decision_from_json(j, "q1"); });
  };
  EXPECT_EQ(code(json::array()), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code(json{{"action", "frobnicate"}}), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code(json{{"action", "select"}}), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code(json{{"action", "disjoint"}}), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code(json{{"action", "skip"}, {"item_id", "q2"}}), ErrorCode::kInvalidArgument);

  const auto d = review::decision_from_json(json{{"action", "disjoint"}, {"entity_id", "Q5"}}, "q1");
  EXPECT_EQ(d.entity_ids, std::vector<std::string>{"Q5"});
  EXPECT_EQ(d.actor, "expert");
  EXPECT_FALSE(d.timestamp.empty());
  const auto round = review::decision_from_json(review::to_json(d));
  EXPECT_TRUE(round.same_request(d));
}
