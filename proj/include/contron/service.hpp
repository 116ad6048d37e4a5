#pragma once

// HTTP facade over a data directory:
//
//   config.json       pipeline configuration (see ServiceConfig)
//   store/            ontology snapshot + change log (OntologyStore)
//   queue.json        review queue
//   decisions.jsonl   accepted expert decisions, append-only
//   runs/<id>.json    one record per pipeline run (enrichment ledger inside)
//   annotations/      per-document annotation files from the last extraction
//   pairs.tsv         pairs export from the last extraction

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "contron/corpus.hpp"
#include "contron/dke.hpp"
#include "contron/error.hpp"
#include "contron/ie.hpp"
#include "contron/kb.hpp"
#include "contron/lexicon.hpp"
#include "contron/oe.hpp"
#include "contron/ontology.hpp"
#include "contron/review.hpp"
#include "contron/text.hpp"

namespace contron::service {

namespace fs = std::filesystem;

inline constexpr const char* kTokenHeader = "X-Contron-Token";
inline constexpr std::size_t kMaxPendingRuns = 8;

/// Pipeline settings, read from <data-dir>/config.json. Relative paths are
/// resolved against the data directory.
struct ServiceConfig {
  std::optional<fs::path> corpus_manifest;  // data sheets for DKE and extraction
  std::optional<fs::path> lexicon_dir;
  double threshold = oe::kDefaultThreshold;
  oe::Weighting weighting = oe::Weighting::kTfIdf;
  kb::ClientOptions kb;
  std::optional<fs::path> kb_fixture_dir;  // serve knowledge-base calls from fixture files
  bool baseline_text_search = false;
  std::optional<fs::path> units_file;
  std::optional<std::string> token;
  std::optional<fs::path> static_dir;

  static ServiceConfig from_json(const nlohmann::json& j, const fs::path& base) {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::kSchemaViolation, "config: " + what); };
    if (!j.is_object()) bad("expected an object");
    auto path = [&](const char* key) -> std::optional<fs::path> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      if (!j[key].is_string()) bad(std::string(key) + " must be a string");
      fs::path p = j[key].get<std::string>();
      return p.is_absolute() ? p : base / p;
    };
    ServiceConfig c;
    c.corpus_manifest = path("corpus_manifest");
    c.lexicon_dir = path("lexicon_dir");
    c.units_file = path("units_file");
    c.static_dir = path("static_dir");
    c.kb_fixture_dir = path("kb_fixture_dir");
    if (j.contains("threshold")) {
      if (!j["threshold"].is_number()) bad("threshold must be a number");
      c.threshold = j["threshold"].get<double>();
      if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) bad("threshold must be in [0,1]");
    }
    if (j.contains("weighting")) {
      const auto w = j["weighting"].get<std::string>();
      if (w == "tfidf") {
        c.weighting = oe::Weighting::kTfIdf;
      } else if (w == "raw") {
        c.weighting = oe::Weighting::kRawCount;
      } else {
        bad("weighting must be tfidf or raw");
      }
    }
    if (j.contains("kb")) {
      const auto& k = j["kb"];
      if (!k.is_object()) bad("kb must be an object");
      if (k.contains("endpoint")) c.kb.endpoint = k["endpoint"].get<std::string>();
      if (k.contains("cache_dir") && !k["cache_dir"].is_null()) {
        fs::path p = k["cache_dir"].get<std::string>();
        c.kb.cache_dir = p.is_absolute() ? p : base / p;
      }
      if (k.contains("offline")) c.kb.offline = k["offline"].get<bool>();
      if (k.contains("requests_per_second")) c.kb.requests_per_second = k["requests_per_second"].get<double>();
    }
    if (j.contains("baseline_text_search")) c.baseline_text_search = j["baseline_text_search"].get<bool>();
    if (j.contains("token") && j["token"].is_string() && !j["token"].get<std::string>().empty()) {
      c.token = j["token"].get<std::string>();
    }
    return c;
  }

  static ServiceConfig load(const fs::path& data_dir) {
    const auto path = data_dir / "config.json";
    ServiceConfig c;
    try {
      if (fs::exists(path)) c = from_json(nlohmann::json::parse(text::read_file(path)), data_dir);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchemaViolation, path.string() + ": " + e.what());
    }
    c.kb.apply_environment();
    return c;
  }
};

enum class RunKind { kEnrich, kExtract };

inline std::string_view to_string(RunKind k) { return k == RunKind::kEnrich ? "enrich" : "extract"; }

/// Seeds a data directory with an ontology; the config file is optional.
inline void initialize(const fs::path& data_dir, const ontology::Ontology& initial,
                       const std::optional<nlohmann::json>& config = std::nullopt) {
  if (fs::exists(data_dir / "store" / "snapshot.json")) {
    throw Error(ErrorCode::kConflict, data_dir.string() + " already holds an ontology store");
  }
  fs::create_directories(data_dir);
  ontology::OntologyStore::create(data_dir / "store", initial);
  if (config) text::write_file_atomic(data_dir / "config.json", config->dump(2) + "\n");
}

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
    case ErrorCode::kUnknownClass:
      return 404;
    case ErrorCode::kConflict:
      return 409;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kDisjointViolation:
      return 400;
    default:
      return 500;
  }
}

class Service {
 public:
  Service(fs::path data_dir, ServiceConfig config)
      : dir_(std::move(data_dir)),
        config_(std::move(config)),
        store_(ontology::OntologyStore::open(dir_ / "store")),
        queue_(review::ReviewQueue::load(dir_ / "queue.json")) {
    fs::create_directories(dir_ / "runs");
    fs::create_directories(dir_ / "annotations");
    recover_runs();
    worker_ = std::thread([this] { work(); });
  }

  explicit Service(const fs::path& data_dir) : Service(data_dir, ServiceConfig::load(data_dir)) {}

  ~Service() {
    stop();
    {
      std::lock_guard lock(runs_mu_);
      stopping_ = true;
    }
    runs_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // -------------------------------------------------------------------------
  // Operations, callable without HTTP.

  nlohmann::ordered_json queue_json() const {
    std::shared_lock lock(state_mu_);
    nlohmann::ordered_json j;
    j["ontology_version"] = store_.version();
    auto& items = j["items"] = nlohmann::ordered_json::array();
    for (const auto* it : queue_.unresolved()) items.push_back(review::to_json(*it));
    return j;
  }

  nlohmann::ordered_json item_json(const std::string& item_id) const {
    std::shared_lock lock(state_mu_);
    const auto* it = queue_.find(item_id);
    if (!it) throw Error(ErrorCode::kNotFound, "review item '" + item_id + "'");
    return review::to_json(*it);
  }

  /// Applies a decision; durable (store, queue file, decision log) before
  /// returning.
  review::DecisionResult decide(const review::ReviewDecision& d) {
    std::unique_lock lock(state_mu_);
    const auto result = review::decide(queue_, store_, d);
    if (!result.replayed && d.action != review::Action::kSkip) {
      queue_.save(dir_ / "queue.json");
      nlohmann::ordered_json line;
      line["decision"] = review::to_json(d);
      line["result"] = result.to_json();
      text::append_line(dir_ / "decisions.jsonl", line.dump());
    }
    return result;
  }

  nlohmann::ordered_json ontology_json() const { return ontology::to_json(store_.current()); }

  nlohmann::ordered_json history_json() const {
    nlohmann::ordered_json j;
    j["version"] = store_.version();
    auto& changes = j["changes"] = nlohmann::ordered_json::array();
    for (const auto& c : store_.history()) changes.push_back(nlohmann::ordered_json::parse(c.dump()));
    return j;
  }

  /// Queues a pipeline run and returns its record.
  nlohmann::ordered_json submit(RunKind kind) {
    std::lock_guard lock(runs_mu_);
    if (pending_.size() >= kMaxPendingRuns) {
      throw Error(ErrorCode::kConflict, "too many pipeline runs waiting");
    }
    const auto id = next_run_id();
    nlohmann::ordered_json rec;
    rec["run_id"] = id;
    rec["kind"] = to_string(kind);
    rec["status"] = "queued";
    rec["requested_at"] = text::utc_timestamp();
    write_run(rec);
    pending_.push_back({id, kind});
    runs_cv_.notify_all();
    return rec;
  }

  nlohmann::json run_json(const std::string& run_id) const {
    const auto path = dir_ / "runs" / (run_id + ".json");
    if (!valid_id(run_id) || !fs::exists(path)) throw Error(ErrorCode::kNotFound, "run '" + run_id + "'");
    std::lock_guard lock(runs_mu_);
    return nlohmann::json::parse(text::read_file(path));
  }

  nlohmann::json runs_json() const {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir_ / "runs")) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    nlohmann::json out = nlohmann::json::array();
    std::lock_guard lock(runs_mu_);
    for (const auto& f : files) out.push_back(nlohmann::json::parse(text::read_file(f)));
    return out;
  }

  /// Blocks until the run leaves the queued/running states.
  nlohmann::json wait_for(const std::string& run_id, std::chrono::milliseconds timeout = std::chrono::seconds(60)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      auto rec = run_json(run_id);
      const auto status = rec.value("status", "");
      if (status != "queued" && status != "running") return rec;
      if (std::chrono::steady_clock::now() > deadline) {
        throw Error(ErrorCode::kIo, "timed out waiting for run " + run_id);
      }
      std::unique_lock lock(runs_mu_);
      runs_cv_.wait_for(lock, std::chrono::milliseconds(20));
    }
  }

  std::string annotations(const std::string& doc_id) const {
    const auto path = dir_ / "annotations" / (doc_id + ".json");
    if (!valid_id(doc_id) || !fs::exists(path)) {
      throw Error(ErrorCode::kNotFound, "no annotations for document '" + doc_id + "'");
    }
    return text::read_file(path);
  }

  const fs::path& data_dir() const { return dir_; }

  // -------------------------------------------------------------------------
  // HTTP

  /// Serves on host:port (port 0 picks a free one). Returns once listening.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    server_ = std::make_unique<httplib::Server>();
    routes(*server_);
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
    listener_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
  }

  /// Serves in the calling thread until stop().
  void serve(const std::string& host, int port) {
    server_ = std::make_unique<httplib::Server>();
    routes(*server_);
    if (!server_->listen(host, port)) throw Error(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  }

  void stop() {
    if (server_) server_->stop();
    if (listener_.joinable()) listener_.join();
  }

 private:
  struct PendingRun {
    std::string run_id;
    RunKind kind;
  };

  static bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 200 && id.find_first_of("/\\") == std::string::npos && id != "." &&
           id != "..";
  }

  static void send_json(httplib::Response& res, const nlohmann::ordered_json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                         const std::optional<nlohmann::ordered_json>& extra = std::nullopt) {
    nlohmann::ordered_json j;
    j["error"] = code;
    j["message"] = message;
    if (extra) j["item"] = *extra;
    send_json(res, j, status);
  }

  bool authorized(const httplib::Request& req) const {
    if (!config_.token) return true;
    return req.get_header_value(kTokenHeader) == *config_.token;
  }

  template <class F>
  auto guarded(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) {
        send_error(res, 401, "Unauthorized", std::string("missing or wrong ") + kTokenHeader);
        return;
      }
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), to_string(e.code()), e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "InvalidArgument", std::string("bad JSON: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  void routes(httplib::Server& s) {
    s.Get("/api/health", guarded([this](const auto&, auto& res) {
            send_json(res, {{"status", "ok"}, {"ontology_version", store_.version()}});
          }));
    s.Get("/api/queue", guarded([this](const auto&, auto& res) { send_json(res, queue_json()); }));
    s.Get(R"(/api/queue/([^/]+))", guarded([this](const auto& req, auto& res) {
            send_json(res, item_json(req.matches[1]));
          }));
    s.Post(R"(/api/queue/([^/]+)/decision)", guarded([this](const auto& req, auto& res) {
             const std::string id = req.matches[1];
             const auto body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
             const auto d = review::decision_from_json(body, id);
             try {
               send_json(res, decide(d).to_json());
             } catch (const Error& e) {
               if (e.code() != ErrorCode::kConflict) throw;
               // The client gets the item's resolved state so it can refresh.
               send_error(res, 409, to_string(e.code()), e.what(), item_json(id));
             }
           }));
    s.Get("/api/ontology", guarded([this](const auto&, auto& res) { send_json(res, ontology_json()); }));
    s.Get("/api/ontology/history", guarded([this](const auto&, auto& res) { send_json(res, history_json()); }));
    s.Post("/api/pipeline/enrich", guarded([this](const auto&, auto& res) { send_json(res, submit(RunKind::kEnrich), 202); }));
    s.Post("/api/pipeline/extract",
           guarded([this](const auto&, auto& res) { send_json(res, submit(RunKind::kExtract), 202); }));
    s.Get("/api/pipeline/runs", guarded([this](const auto&, auto& res) {
            res.set_content(runs_json().dump(), "application/json");
          }));
    s.Get(R"(/api/pipeline/runs/([^/]+))", guarded([this](const auto& req, auto& res) {
            res.set_content(run_json(req.matches[1]).dump(), "application/json");
          }));
    s.Get(R"(/api/documents/([^/]+)/annotations)", guarded([this](const auto& req, auto& res) {
            res.set_content(annotations(req.matches[1]), "application/json");
          }));
    if (config_.static_dir) s.set_mount_point("/", config_.static_dir->string());
  }

  // -------------------------------------------------------------------------
  // Pipeline runs: one worker, FIFO.

  std::string next_run_id() {
    if (run_counter_ == 0) {
      for (const auto& e : fs::directory_iterator(dir_ / "runs")) {
        const auto stem = e.path().stem().string();
        if (stem.rfind("run-", 0) == 0) {
          run_counter_ = std::max(run_counter_, std::strtol(stem.c_str() + 4, nullptr, 10));
        }
      }
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%04ld", ++run_counter_);
    return buf;
  }

  void write_run(const nlohmann::ordered_json& rec) {
    text::write_file_atomic(dir_ / "runs" / (rec["run_id"].get<std::string>() + ".json"), rec.dump(2) + "\n");
  }

  /// Runs left queued or running by a previous process are marked failed.
  void recover_runs() {
    for (const auto& e : fs::directory_iterator(dir_ / "runs")) {
      if (e.path().extension() != ".json") continue;
      auto rec = nlohmann::ordered_json::parse(text::read_file(e.path()));
      const auto st = rec.value("status", "");
      if (st == "queued" || st == "running") {
        rec["status"] = "failed";
        rec["error"] = "interrupted by service restart";
        write_run(rec);
      }
    }
  }

  void work() {
    for (;;) {
      PendingRun job;
      {
        std::unique_lock lock(runs_mu_);
        runs_cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
        if (stopping_) return;
        job = pending_.front();
        pending_.pop_front();
      }
      auto rec = nlohmann::ordered_json::parse(text::read_file(dir_ / "runs" / (job.run_id + ".json")));
      rec["status"] = "running";
      rec["started_at"] = text::utc_timestamp();
      rec["ontology_version_in"] = store_.version();
      {
        std::lock_guard lock(runs_mu_);
        write_run(rec);
      }
      try {
        rec["summary"] = job.kind == RunKind::kEnrich ? run_enrich(job.run_id, rec) : run_extract();
        rec["status"] = "succeeded";
      } catch (const std::exception& e) {
        rec["status"] = "failed";
        rec["error"] = e.what();
      }
      rec["finished_at"] = text::utc_timestamp();
      rec["ontology_version_out"] = store_.version();
      {
        std::lock_guard lock(runs_mu_);
        write_run(rec);
      }
      runs_cv_.notify_all();
    }
  }

  std::vector<corpus::Document> documents() const {
    if (!config_.corpus_manifest) throw Error(ErrorCode::kInvalidArgument, "config: corpus_manifest not set");
    return corpus::load_corpus(*config_.corpus_manifest);
  }

  const lexicon::Lexicon& lexicon() {
    if (!lexicon_) {
      if (!config_.lexicon_dir) throw Error(ErrorCode::kInvalidArgument, "config: lexicon_dir not set");
      lexicon_ = std::make_unique<lexicon::Lexicon>(lexicon::Lexicon::load(*config_.lexicon_dir));
    }
    return *lexicon_;
  }

  nlohmann::ordered_json run_enrich(const std::string& run_id, nlohmann::ordered_json& rec) {
    const auto docs = documents();
    const auto& lex = lexicon();
    const auto concepts = dke::extract_domain_knowledge(docs, lex);
    std::shared_ptr<kb::Transport> transport;
    if (config_.kb_fixture_dir) {
      transport = std::make_shared<kb::FixtureTransport>(*config_.kb_fixture_dir);
    } else {
      transport = std::make_shared<kb::HttpTransport>();
    }
    kb::KbClient client(config_.kb, transport);
    oe::MatchOptions mo;
    mo.threshold = config_.threshold;
    mo.weighting = config_.weighting;

    // Matching reads a snapshot; the outcomes are applied against the state
    // current at commit time so decisions taken meanwhile are respected.
    const auto input = store_.current();
    const auto result = oe::enrich_ontology(input, concepts, oe::search_with(client), &lex, mo);

    std::unique_lock lock(state_mu_);
    std::vector<oe::EnrichmentOutcome> applied;
    for (const auto& o : result.outcomes) {
      const auto current = store_.current();
      const auto* cls = current.find(o.class_id);
      if (!cls || cls->review_status == ontology::ReviewStatus::kExpertConfirmed) continue;
      auto fresh = o;
      std::erase_if(fresh.candidates, [&](const auto& c) { return cls->is_disjoint(c.entity.entity_id); });
      if (fresh.decision == oe::Decision::kAuto && cls->is_disjoint(fresh.entity->entity_id)) continue;
      if (auto m = oe::mutation_for(*cls, fresh)) store_.commit(*m);
      applied.push_back(std::move(fresh));
    }
    queue_.merge_outcomes(applied, text::utc_timestamp(), run_id);
    queue_.save(dir_ / "queue.json");
    rec["ledger"] = oe::ledger_json(result, input, mo);
    nlohmann::ordered_json summary;
    summary["concepts"] = concepts.size();
    summary["histogram"] = rec["ledger"]["histogram"];
    summary["errors"] = result.errors.size();
    summary["queue_open"] = queue_.unresolved().size();
    return summary;
  }

  nlohmann::ordered_json run_extract() {
    const auto docs = documents();
    const auto onto = store_.current();
    std::optional<ie::UnitLexicon> units;
    ie::ExtractOptions opt;
    opt.baseline_text_search = config_.baseline_text_search;
    if (config_.units_file) {
      units = ie::UnitLexicon::load(*config_.units_file);
      opt.units = &*units;
    }
    std::vector<ie::ExtractedPair> all;
    nlohmann::ordered_json per_doc = nlohmann::ordered_json::object();
    for (const auto& d : docs) {
      const auto r = ie::extract_information(onto, d, opt);
      text::write_file_atomic(dir_ / "annotations" / (d.doc_id + ".json"), ie::dump_annotations(d, r.annotations));
      per_doc[d.doc_id] = r.pairs.size();
      all.insert(all.end(), r.pairs.begin(), r.pairs.end());
    }
    text::write_file_atomic(dir_ / "pairs.tsv", ie::pairs_tsv(all));
    nlohmann::ordered_json summary;
    summary["ontology_version"] = onto.version;
    summary["documents"] = docs.size();
    summary["pairs"] = all.size();
    summary["pairs_per_document"] = per_doc;
    return summary;
  }

  fs::path dir_;
  ServiceConfig config_;
  ontology::OntologyStore store_;
  review::ReviewQueue queue_;
  mutable std::shared_mutex state_mu_;

  mutable std::mutex runs_mu_;
  std::condition_variable runs_cv_;
  std::deque<PendingRun> pending_;
  bool stopping_ = false;
  long run_counter_ = 0;
  std::unique_ptr<lexicon::Lexicon> lexicon_;
  std::thread worker_;

  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
};

}  // namespace contron::service
