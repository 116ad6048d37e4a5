#include <cmath>
#include <cstdlib>
#include <random>

#include <gtest/gtest.h>

#include "contron/lexicon.hpp"
#include "support.hpp"

using namespace contron;
using lexicon::Lexicon;
using lexicon::Pos;
using lexicon::SynsetId;
using testing_support::fixture;
using testing_support::TempDir;

namespace {

const Lexicon& mini() {
  static const Lexicon lex = Lexicon::load(fixture("mini-wordnet"));
  return lex;
}

std::vector<std::string> ids(const std::vector<const lexicon::Synset*>& v) {
  std::vector<std::string> out;
  for (const auto* s : v) out.push_back(s->id.str());
  return out;
}

}  // namespace

TEST(SynsetId, ParsesCanonicalKeys) {
  const auto id = SynsetId::parse("outer_space.n.01");
  EXPECT_EQ(id.lemma(), "outer_space");
  EXPECT_EQ(id.pos(), Pos::kNoun);
  EXPECT_EQ(id.sense(), 1);
  EXPECT_EQ(SynsetId::make("a.b", Pos::kSatellite, 12).str(), "a.b.s.12");
  EXPECT_EQ(SynsetId::parse("a.b.s.12").lemma(), "a.b");
  EXPECT_FALSE(SynsetId::try_parse("space.x.01"));
  EXPECT_FALSE(SynsetId::try_parse("space.n.00"));
  EXPECT_FALSE(SynsetId::try_parse("space"));
  EXPECT_THROW(SynsetId::parse(".n.01"), Error);
}

TEST(LexiconLoad, MiniFixture) {
  const auto& lex = mini();
  EXPECT_EQ(lex.size(), 50u);
  const auto space = ids(lex.synsets_of("space"));
  EXPECT_GE(space.size(), 2u);
  EXPECT_NE(std::find(space.begin(), space.end(), "space.n.01"), space.end());
  EXPECT_NE(std::find(space.begin(), space.end(), "outer_space.n.01"), space.end());
  EXPECT_EQ(ids(lex.synsets_of("satellite")),
            (std::vector<std::string>{"artificial_satellite.n.01", "satellite.n.02"}));
  EXPECT_EQ(ids(lex.synsets_of("antenna")), (std::vector<std::string>{"antenna.n.01"}));
  EXPECT_TRUE(lex.synsets_of("zzzz-notaword").empty());
}

TEST(LexiconLoad, PosFilterAndOrder) {
  const auto& lex = mini();
  EXPECT_EQ(ids(lex.synsets_of("space")),
            (std::vector<std::string>{"space.n.01", "outer_space.n.01", "space.v.01"}));
  EXPECT_EQ(ids(lex.synsets_of("space", Pos::kVerb)), (std::vector<std::string>{"space.v.01"}));
  EXPECT_EQ(lex.synsets_of("orbital", Pos::kSatellite).size(), 1u);
  EXPECT_TRUE(lex.synsets_of("orbital", Pos::kNoun).empty());
}

TEST(LexiconLoad, MultiwordEntries) {
  const auto& lex = mini();
  EXPECT_TRUE(lex.is_multiword("magnetic_field"));
  EXPECT_TRUE(lex.is_multiword("outer_space"));
  EXPECT_FALSE(lex.is_multiword("space"));
  EXPECT_FALSE(lex.is_multiword("blue_sky"));
}

TEST(LexiconLoad, MissingDatabase) {
  TempDir tmp;
  for (const auto& dir : {tmp.path(), tmp / "does-not-exist"}) {
    try {
      Lexicon::load(dir);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kMissingDatabase);
    }
  }
}

TEST(LexiconLoad, CorruptDatabase) {
  TempDir tmp;
  std::filesystem::copy(fixture("mini-wordnet"), tmp.path());
  text::write_file_atomic(tmp / "data.noun",
                          "  1 header\n00000058 03 n zz entity 0 000 | broken\n");
  try {
    Lexicon::load(tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptDatabase);
  }
}

TEST(LexiconLoad, Deterministic) {
  const auto a = Lexicon::load(fixture("mini-wordnet"));
  const auto b = Lexicon::load(fixture("mini-wordnet"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.all()[i].id, b.all()[i].id);
    EXPECT_EQ(a.all()[i].depth, b.all()[i].depth);
    EXPECT_EQ(a.all()[i].lemmas, b.all()[i].lemmas);
    EXPECT_EQ(a.all()[i].hypernyms, b.all()[i].hypernyms);
  }
}

TEST(LexiconDepth, RootIsOneAndChildIsOnePlusMinParent) {
  const auto& lex = mini();
  for (const auto& s : lex.all()) {
    if (s.hypernyms.empty()) {
      EXPECT_EQ(s.depth, 1) << s.id.str();
      continue;
    }
    int best = INT32_MAX;
    for (const auto& h : s.hypernyms) best = std::min(best, lex.at(h).depth);
    EXPECT_EQ(s.depth, best + 1) << s.id.str();
  }
  // Multiple inheritance: tolerance hangs under ability (depth 4) and
  // physical_property (depth 5).
  EXPECT_EQ(lex.at(SynsetId::parse("tolerance.n.01")).depth, 5);
}

TEST(Wup, MatchesBruteForceOracleForAllPairs) {
  const auto& lex = mini();
  testing_support::BruteForceWup oracle(lex);
  for (const auto& a : lex.all()) {
    EXPECT_EQ(a.depth, oracle.depth(a.id.str())) << a.id.str();
    for (const auto& b : lex.all()) {
      EXPECT_NEAR(lex.wup_similarity(a, b), oracle(a.id.str(), b.id.str()), 1e-12)
          << a.id.str() << " / " << b.id.str();
    }
  }
}

TEST(Wup, IdentitySymmetryAndRange) {
  const auto& lex = mini();
  std::mt19937 rng(7);
  const auto n = lex.size();
  for (int k = 0; k < 1000; ++k) {
    const auto& a = lex.all()[rng() % n];
    const auto& b = lex.all()[rng() % n];
    EXPECT_DOUBLE_EQ(lex.wup_similarity(a, a), 1.0);
    EXPECT_DOUBLE_EQ(lex.wup_similarity(a, b), lex.wup_similarity(b, a));
    const double w = lex.wup_similarity(a, b);
    if (lex.lowest_common_subsumer(a, b)) {
      EXPECT_GT(w, 0.0);
      EXPECT_LE(w, 1.0);
    } else {
      EXPECT_EQ(w, 0.0);
    }
  }
}

TEST(Wup, FixtureValues) {
  const auto& lex = mini();
  const auto& os = lex.at(SynsetId::parse("outer_space.n.01"));
  const auto& ant = lex.at(SynsetId::parse("antenna.n.01"));
  // outer_space depth 5, antenna depth 9, lcs physical_entity depth 2.
  EXPECT_EQ(lex.lowest_common_subsumer(os, ant)->id.str(), "physical_entity.n.01");
  EXPECT_NEAR(lex.wup_similarity(os, ant), 4.0 / 14.0, 1e-12);
  // Disconnected: the verb has no hypernyms shared with nouns.
  const auto& verb = lex.at(SynsetId::parse("space.v.01"));
  EXPECT_EQ(lex.wup_similarity(os, verb), 0.0);
}

TEST(Wup, LcsTieBreakIsSmallestId) {
  // Two equally deep shared parents: b.n.01 and c.n.01 both at depth 2.
  std::vector<lexicon::Synset> s(5);
  s[0].id = SynsetId::parse("root.n.01");
  s[1].id = SynsetId::parse("c.n.01");
  s[1].hypernyms = {s[0].id};
  s[2].id = SynsetId::parse("b.n.01");
  s[2].hypernyms = {s[0].id};
  s[3].id = SynsetId::parse("x.n.01");
  s[3].hypernyms = {s[1].id, s[2].id};
  s[4].id = SynsetId::parse("y.n.01");
  s[4].hypernyms = {s[2].id, s[1].id};
  for (auto& x : s) x.lemmas = {std::string(x.id.lemma())};
  const auto lex = Lexicon::build(s);
  EXPECT_EQ(lex.lowest_common_subsumer(lex.at(s[3].id), lex.at(s[4].id))->id.str(), "b.n.01");
}

TEST(SynonymsAndRelated, Satellite) {
  const auto& lex = mini();
  EXPECT_EQ(lex.synonyms_and_related("satellite"),
            (std::vector<std::string>{"artificial_satellite", "orbiter", "equipment",
                                      "celestial_body", "heavenly_body"}));
}

TEST(SynonymsAndRelated, UnknownAndExclusion) {
  const auto& lex = mini();
  EXPECT_TRUE(lex.synonyms_and_related("zzzz").empty());
  for (const auto& s : lex.all()) {
    for (const auto& l : s.lemmas) {
      const auto rel = lex.synonyms_and_related(l);
      EXPECT_EQ(std::find(rel.begin(), rel.end(), l), rel.end()) << l;
      std::set<std::string> uniq(rel.begin(), rel.end());
      EXPECT_EQ(uniq.size(), rel.size()) << l;
    }
  }
}

// Optional: real WordNet 3.0 dict directory via CONTRON_WORDNET_DIR.
TEST(WupFullDatabase, OuterSpaceAntenna) {
  const char* dir = std::getenv("CONTRON_WORDNET_DIR");
  if (!dir || !*dir) GTEST_SKIP() << "CONTRON_WORDNET_DIR not set";
  const auto lex = Lexicon::load(dir);
  const auto ant = lex.synsets_of("antenna", Pos::kNoun);
  ASSERT_FALSE(ant.empty());
  EXPECT_EQ(ant.front()->id.str(), "antenna.n.01");
  const double w = lex.wup_similarity(lex.at(SynsetId::parse("outer_space.n.01")),
                                      lex.at(SynsetId::parse("antenna.n.01")));
  EXPECT_NEAR(w, 0.429, 0.02);
}
