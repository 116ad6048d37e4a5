#include <set>

#include <gtest/gtest.h>

#include "contron/service.hpp"
#include "support.hpp"

using namespace contron;
using nlohmann::json;
using testing_support::fixture;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

json fixture_config() {
  return {{"corpus_manifest", fixture("datasheets/manifest.tsv").string()},
          {"lexicon_dir", fixture("mini-wordnet").string()},
          {"kb_fixture_dir", fixture("kb").string()},
          {"threshold", 0.07},
          {"kb", {{"requests_per_second", 0}}}};
}

struct Running {
  TempDir tmp;
  std::unique_ptr<service::Service> svc;
  std::unique_ptr<httplib::Client> http;

  explicit Running(json config = fixture_config()) {
    service::initialize(tmp.path(), ontology::load(fixture("ontologies/core.json")), config);
    start();
  }

  void start() {
    svc = std::make_unique<service::Service>(tmp.path());
    const int port = svc->start();
    http = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  void restart() {
    http.reset();
    svc.reset();
    start();
  }

  json get(const std::string& path, int expect = 200) {
    auto r = http->Get(path);
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << ": " << r->body;
    return json::parse(r->body);
  }

  std::pair<int, json> post(const std::string& path, const json& body = json::object()) {
    auto r = http->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r) << path;
    if (!r) return {0, {}};
    return {r->status, r->body.empty() ? json() : json::parse(r->body)};
  }

  json run(const std::string& kind) {
    auto [status, rec] = post("/api/pipeline/" + kind);
    EXPECT_EQ(status, 202);
    return svc->wait_for(rec["run_id"]);
  }

  std::string item_for(const std::string& class_id) {
    const auto q = get("/api/queue");
    for (const auto& it : q["items"]) {
      if (it["class_id"] == class_id) return it["item_id"];
    }
    return {};
  }
};

}  // namespace

TEST(Service, HealthAndOntology) {
  Running s;
  EXPECT_EQ(s.get("/api/health")["status"], "ok");
  const auto o = s.get("/api/ontology");
  EXPECT_EQ(o["version"], s.get("/api/ontology/history")["version"]);
  EXPECT_TRUE(s.get("/api/ontology/history")["changes"].empty());
  EXPECT_TRUE(s.get("/api/queue")["items"].empty());
}

TEST(Service, EnrichRunFillsQueue) {
  Running s;
  const auto rec = s.run("enrich");
  ASSERT_EQ(rec["status"], "succeeded") << rec.dump();
  EXPECT_EQ(rec["ledger"]["format"], "contron-oe-ledger");
  EXPECT_GT(rec["ontology_version_out"].get<long>(), rec["ontology_version_in"].get<long>());
  const auto q = s.get("/api/queue");
  EXPECT_EQ(q["ontology_version"], rec["ontology_version_out"]);
  std::set<std::string> classes;
  for (const auto& it : q["items"]) {
    classes.insert(it["class_id"]);
    EXPECT_NE(it["kind"], "auto");
  }
  EXPECT_TRUE(classes.count("Interface"));
  EXPECT_TRUE(classes.count("Lifetime"));
  EXPECT_TRUE(classes.count("RadiationTolerance"));
  const auto id = s.item_for("Interface");
  EXPECT_EQ(s.get("/api/queue/" + id)["class_id"], "Interface");
  s.get("/api/queue/q-missing", 404);
}

TEST(Service, SelectConfirmsAndLeavesQueue) {
  Running s;
  s.run("enrich");
  const auto id = s.item_for("Interface");
  ASSERT_FALSE(id.empty());
  const long v = s.get("/api/ontology")["version"];
  auto [status, res] = s.post("/api/queue/" + id + "/decision", {{"action", "select"}, {"entity_id", "Q9000241"}});
  ASSERT_EQ(status, 200) << res.dump();
  EXPECT_EQ(res["review_status"], "expert_confirmed");
  EXPECT_EQ(res["ontology_version"], v + 1);
  EXPECT_FALSE(res["replayed"].get<bool>());

  const auto o = s.get("/api/ontology");
  for (const auto& c : o["classes"]) {
    if (c["class_id"] == "Interface") {
      EXPECT_EQ(c["review_status"], "expert_confirmed");
      EXPECT_EQ(c["matched_entity"], "Q9000241");
    }
  }
  EXPECT_TRUE(s.item_for("Interface").empty());
  // One line per accepted decision.
  const auto log = text::read_file(s.tmp / "decisions.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1);
}

TEST(Service, ReplayAndConflict) {
  Running s;
  s.run("enrich");
  const auto id = s.item_for("Interface");
  const json body = {{"action", "select"}, {"entity_id", "Q9000241"}};
  const auto first = s.post("/api/queue/" + id + "/decision", body);
  ASSERT_EQ(first.first, 200);
  const auto again = s.post("/api/queue/" + id + "/decision", body);
  EXPECT_EQ(again.first, 200);
  EXPECT_TRUE(again.second["replayed"].get<bool>());
  EXPECT_EQ(again.second["ontology_version"], first.second["ontology_version"]);
  EXPECT_EQ(s.get("/api/ontology")["version"], first.second["ontology_version"]);

  const auto other = s.post("/api/queue/" + id + "/decision", {{"action", "no_match"}});
  EXPECT_EQ(other.first, 409);
  EXPECT_EQ(other.second["error"], "Conflict");
  EXPECT_TRUE(other.second["item"]["resolved"].get<bool>());
  const auto log = text::read_file(s.tmp / "decisions.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1);
}

TEST(Service, BadDecisions) {
  Running s;
  s.run("enrich");
  const auto id = s.item_for("Interface");
  const long v = s.get("/api/ontology")["version"];
  EXPECT_EQ(s.post("/api/queue/" + id + "/decision", {{"action", "select"}, {"entity_id", "Q1"}}).first, 400);
  EXPECT_EQ(s.post("/api/queue/" + id + "/decision", {{"action", "promote"}}).first, 400);
  EXPECT_EQ(s.post("/api/queue/" + id + "/decision", {{"action", "select"}}).first, 400);
  EXPECT_EQ(s.post("/api/queue/nope/decision", {{"action", "skip"}}).first, 404);
  auto raw = s.http->Post("/api/queue/" + id + "/decision", "{not json", "application/json");
  ASSERT_TRUE(raw);
  EXPECT_EQ(raw->status, 400);
  EXPECT_EQ(s.get("/api/ontology")["version"], v);
  EXPECT_FALSE(s.item_for("Interface").empty());
}

TEST(Service, SkipKeepsItemOpen) {
  Running s;
  s.run("enrich");
  const auto id = s.item_for("Lifetime");
  const long v = s.get("/api/ontology")["version"];
  const auto r = s.post("/api/queue/" + id + "/decision", {{"action", "skip"}});
  EXPECT_EQ(r.first, 200);
  EXPECT_FALSE(r.second["resolved"].get<bool>());
  EXPECT_EQ(s.get("/api/ontology")["version"], v);
  EXPECT_EQ(s.item_for("Lifetime"), id);
}

TEST(Service, VersionAdvancesOncePerDecision) {
  Running s;
  s.run("enrich");
  const long v = s.get("/api/ontology")["version"];
  const auto items = s.get("/api/queue")["items"];
  ASSERT_FALSE(items.empty());
  long k = 0;
  for (const auto& it : items) {
    const auto r = s.post("/api/queue/" + it["item_id"].get<std::string>() + "/decision", {{"action", "no_match"}});
    ASSERT_EQ(r.first, 200) << r.second.dump();
    ++k;
  }
  EXPECT_EQ(s.get("/api/ontology")["version"], v + k);
  const long base = ontology::load(fixture("ontologies/core.json")).version;
  EXPECT_EQ(static_cast<long>(s.get("/api/ontology/history")["changes"].size()), v + k - base);
  EXPECT_TRUE(s.get("/api/queue")["items"].empty());
}

TEST(Service, DisjointEntityNeverReturns) {
  Running s;
  s.run("enrich");
  const auto id = s.item_for("Lifetime");
  ASSERT_FALSE(id.empty());
  const auto item = s.get("/api/queue/" + id);
  const std::string top = item["candidates"][0]["entity_id"];
  ASSERT_EQ(s.post("/api/queue/" + id + "/decision", {{"action", "disjoint"}, {"entity_ids", {top}}}).first, 200);
  ASSERT_EQ(s.run("enrich")["status"], "succeeded");
  const auto q = s.get("/api/queue");
  for (const auto& it : q["items"]) {
    if (it["class_id"] != "Lifetime") continue;
    for (const auto& c : it["candidates"]) EXPECT_NE(c["entity_id"], top);
  }
  const auto o = s.get("/api/ontology");
  for (const auto& c : o["classes"]) {
    if (c["class_id"] == "Lifetime" && c.contains("matched_entity")) {
      EXPECT_NE(c["matched_entity"], top);
    }
  }
}

TEST(Service, RunsAreQueuedInOrder) {
  Running s;
  const auto a = s.post("/api/pipeline/enrich");
  const auto b = s.post("/api/pipeline/extract");
  ASSERT_EQ(a.first, 202);
  ASSERT_EQ(b.first, 202);
  EXPECT_NE(a.second["run_id"], b.second["run_id"]);
  const auto ra = s.svc->wait_for(a.second["run_id"]);
  const auto rb = s.svc->wait_for(b.second["run_id"]);
  EXPECT_EQ(ra["status"], "succeeded");
  EXPECT_EQ(rb["status"], "succeeded");
  // The extraction saw the enriched ontology.
  EXPECT_EQ(rb["summary"]["ontology_version"], ra["ontology_version_out"]);
  EXPECT_LE(ra["finished_at"].get<std::string>(), rb["started_at"].get<std::string>());
  EXPECT_EQ(s.get("/api/pipeline/runs").size(), 2u);
  EXPECT_EQ(s.get("/api/pipeline/runs/" + b.second["run_id"].get<std::string>())["kind"], "extract");
  s.get("/api/pipeline/runs/run-9999", 404);
}

TEST(Service, FailedRunReportsError) {
  auto cfg = fixture_config();
  cfg.erase("corpus_manifest");
  Running s(cfg);
  const auto rec = s.run("extract");
  EXPECT_EQ(rec["status"], "failed");
  EXPECT_NE(rec["error"].get<std::string>().find("corpus_manifest"), std::string::npos);
}

TEST(Service, AnnotationsEndpoint) {
  Running s;
  s.get("/api/documents/st-100/annotations", 404);
  ASSERT_EQ(s.run("extract")["status"], "succeeded");
  const auto a = s.get("/api/documents/st-100/annotations");
  EXPECT_EQ(a["format"], "contron-annotations");
  EXPECT_EQ(a["doc_id"], "st-100");
  EXPECT_FALSE(a["annotations"].empty());
  const auto pairs = ie::parse_pairs_tsv(text::read_file(s.tmp / "pairs.tsv"));
  EXPECT_FALSE(pairs.empty());
  s.get("/api/documents/none/annotations", 404);
}

TEST(Service, StateSurvivesRestart) {
  Running s;
  s.run("enrich");
  const auto id = s.item_for("Interface");
  s.post("/api/queue/" + id + "/decision", {{"action", "select"}, {"entity_id", "Q9000241"}});
  const auto before = s.get("/api/queue");
  const auto version = s.get("/api/ontology")["version"];
  s.restart();
  EXPECT_EQ(s.get("/api/queue"), before);
  EXPECT_EQ(s.get("/api/ontology")["version"], version);
  // Replay after restart is still recognised.
  const auto again = s.post("/api/queue/" + id + "/decision", {{"action", "select"}, {"entity_id", "Q9000241"}});
  EXPECT_EQ(again.first, 200);
  EXPECT_TRUE(again.second["replayed"].get<bool>());
  // New run ids continue after the old ones.
  const auto next = s.post("/api/pipeline/extract").second["run_id"].get<std::string>();
  EXPECT_EQ(next, "run-0002");
  s.svc->wait_for(next);
}

TEST(Service, InterruptedRunsMarkedFailedOnRestart) {
  TempDir tmp;
  service::initialize(tmp.path(), ontology::load(fixture("ontologies/core.json")), fixture_config());
  fs::create_directories(tmp / "runs");
  text::write_file_atomic(tmp / "runs" / "run-0001.json", R"({"run_id":"run-0001","kind":"enrich","status":"running"})");
  service::Service svc(tmp.path());
  const auto rec = svc.run_json("run-0001");
  EXPECT_EQ(rec["status"], "failed");
}

TEST(Service, TokenRequiredWhenConfigured) {
  auto cfg = fixture_config();
  cfg["token"] = "s3cret";
  Running s(cfg);
  auto r = s.http->Get("/api/queue");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 401);
  r = s.http->Get("/api/queue", {{service::kTokenHeader, "s3cret"}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
}

TEST(Service, ConfigValidation) {
  EXPECT_THROW(service::ServiceConfig::from_json({{"threshold", 2.0}}, "/"), Error);
  EXPECT_THROW(service::ServiceConfig::from_json({{"weighting", "bm25"}}, "/"), Error);
  EXPECT_THROW(service::ServiceConfig::from_json(json::array(), "/"), Error);
  const auto c = service::ServiceConfig::from_json({{"corpus_manifest", "sheets/m.tsv"}}, "/data");
  EXPECT_EQ(*c.corpus_manifest, fs::path("/data/sheets/m.tsv"));
  EXPECT_DOUBLE_EQ(c.threshold, oe::kDefaultThreshold);
}

TEST(Service, InitializeRefusesExistingStore) {
  TempDir tmp;
  const auto core = ontology::load(fixture("ontologies/core.json"));
  service::initialize(tmp.path(), core);
  EXPECT_THROW(service::initialize(tmp.path(), core), Error);
}
