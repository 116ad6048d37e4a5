// contron: command-line driver for the ontology enrichment and extraction
// pipeline. Every subcommand reads and writes plain files; `serve` exposes a
// data directory over HTTP.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "contron/corpus.hpp"
#include "contron/dke.hpp"
#include "contron/eval.hpp"
#include "contron/ie.hpp"
#include "contron/kb.hpp"
#include "contron/lexicon.hpp"
#include "contron/oe.hpp"
#include "contron/ontology.hpp"
#include "contron/rdf_import.hpp"
#include "contron/review.hpp"
#include "contron/service.hpp"

namespace fs = std::filesystem;
using namespace contron;

namespace {

// Exit status for pipeline failures; CLI11 uses its own codes for usage errors.
constexpr int kFailure = 1;

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    text::write_file_atomic(path, content);
  }
}

std::vector<corpus::Document> documents(const std::string& manifest, const std::vector<std::string>& files,
                                        const std::string& converter) {
  corpus::IngestOptions io;
  if (!converter.empty()) io.converter = converter;
  if (!manifest.empty()) return corpus::load_corpus(manifest, io);
  std::vector<corpus::Document> docs;
  for (const auto& f : files) {
    auto d = corpus::ingest(f, std::nullopt, io);
    d.doc_id = fs::path(f).stem().string();
    docs.push_back(std::move(d));
  }
  return docs;
}

struct DkeArgs {
  std::string manifest, lexicon, out, converter;
  std::size_t top_k = 1000;
  double min_score = 0.0;
};

void run_dke(const DkeArgs& a) {
  const auto lex = lexicon::Lexicon::load(a.lexicon);
  dke::Options opt;
  opt.top_k = a.top_k;
  opt.min_score = a.min_score;
  const auto concepts = dke::extract_domain_knowledge(documents(a.manifest, {}, a.converter), lex, opt);
  write_output(a.out, dke::concepts_to_json(concepts).dump(2) + "\n");
  std::cerr << concepts.size() << " domain concepts\n";
}

struct EnrichArgs {
  std::string ontology, concepts, lexicon, out, ledger, queue, endpoint, cache_dir, kb_fixtures;
  double threshold = oe::kDefaultThreshold;
  std::string weighting = "tfidf";
  bool offline = false;
  std::size_t workers = 1;
};

void run_enrich(const EnrichArgs& a) {
  const auto input = ontology::load(a.ontology);
  const auto concepts = dke::read_concepts(a.concepts);
  std::optional<lexicon::Lexicon> lex;
  if (!a.lexicon.empty()) lex = lexicon::Lexicon::load(a.lexicon);

  kb::ClientOptions ko;
  if (!a.endpoint.empty()) ko.endpoint = a.endpoint;
  if (!a.cache_dir.empty()) ko.cache_dir = fs::path(a.cache_dir);
  ko.offline = a.offline;
  ko.apply_environment();
  std::shared_ptr<kb::Transport> transport;
  if (!a.kb_fixtures.empty()) {
    transport = std::make_shared<kb::FixtureTransport>(a.kb_fixtures);
    ko.requests_per_second = 0;
  } else {
    transport = std::make_shared<kb::HttpTransport>();
  }
  kb::KbClient client(ko, transport);

  oe::MatchOptions mo;
  mo.threshold = a.threshold;
  mo.weighting = a.weighting == "raw" ? oe::Weighting::kRawCount : oe::Weighting::kTfIdf;
  mo.workers = a.workers;
  const auto result = oe::enrich_ontology(input, concepts, oe::search_with(client), lex ? &*lex : nullptr, mo);

  const auto ledger = oe::ledger_json(result, input, mo);
  write_output(a.ledger, ledger.dump(2) + "\n");
  if (!a.out.empty()) ontology::save(result.ontology, a.out);
  if (!a.queue.empty()) {
    auto q = review::ReviewQueue::load(a.queue);
    const auto ts = text::utc_timestamp();
    q.merge_outcomes(result.outcomes, ts, "cli-" + ts);
    q.save(a.queue);
  }
  const auto& h = ledger["histogram"];
  std::cerr << "auto " << h["auto"] << ", review " << h["review"] << ", no_match " << h["no_match"] << ", errors "
            << result.errors.size() << "\n";
}

struct ExtractArgs {
  std::string ontology, manifest, out_dir, pairs, units, converter;
  std::vector<std::string> docs;
  bool baseline = false;
};

void run_extract(const ExtractArgs& a) {
  const auto o = ontology::load(a.ontology);
  std::optional<ie::UnitLexicon> units;
  ie::ExtractOptions opt;
  opt.baseline_text_search = a.baseline;
  if (!a.units.empty()) {
    units = ie::UnitLexicon::load(a.units);
    opt.units = &*units;
  }
  std::vector<ie::ExtractedPair> all;
  const auto docs = documents(a.manifest, a.docs, a.converter);
  for (const auto& d : docs) {
    const auto r = ie::extract_information(o, d, opt);
    all.insert(all.end(), r.pairs.begin(), r.pairs.end());
    const auto ann = ie::dump_annotations(d, r.annotations);
    if (!a.out_dir.empty()) {
      text::write_file_atomic(fs::path(a.out_dir) / (d.doc_id + ".annotations.json"), ann);
    } else if (a.pairs.empty() && docs.size() == 1) {
      std::cout << ann;
    }
  }
  if (!a.pairs.empty()) {
    write_output(a.pairs, ie::pairs_tsv(all));
  } else if (!a.out_dir.empty() || docs.size() > 1) {
    std::cout << ie::pairs_tsv(all);
  }
  std::cerr << all.size() << " pairs from " << docs.size() << " document(s)\n";
}

struct EvalArgs {
  std::string gold, pairs;
  double beta = 1.0;
};

nlohmann::ordered_json metric(const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nullptr; }

void run_eval(const EvalArgs& a) {
  const auto gold = eval::load_gold(a.gold);
  const auto rows = ie::parse_pairs_tsv(text::read_file(a.pairs), a.pairs);
  const auto counts = eval::score(eval::scorable(rows), gold);
  const auto m = eval::compute_metrics(counts, a.beta);
  nlohmann::ordered_json j;
  j["tp"] = counts.tp;
  j["fp"] = counts.fp;
  j["fn"] = counts.fn;
  j["precision"] = metric(m.precision);
  j["recall"] = metric(m.recall);
  j["beta"] = a.beta;
  j["f_measure"] = metric(m.f_measure);
  std::cout << j.dump(2) << "\n";
}

struct ServeArgs {
  std::string data_dir, host = "127.0.0.1", init_ontology, init_config;
  int port = 8080;
};

service::Service* g_service = nullptr;

void run_serve(const ServeArgs& a) {
  if (!a.init_ontology.empty() && !fs::exists(fs::path(a.data_dir) / "store" / "snapshot.json")) {
    std::optional<nlohmann::json> cfg;
    if (!a.init_config.empty()) cfg = nlohmann::json::parse(text::read_file(a.init_config));
    service::initialize(a.data_dir, ontology::load(a.init_ontology), cfg);
  }
  service::Service svc(a.data_dir);
  g_service = &svc;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cerr << "serving " << a.data_dir << " on http://" << a.host << ":" << a.port << "\n";
  svc.serve(a.host, a.port);
  g_service = nullptr;
}

struct InitArgs {
  std::string data_dir, ontology, config;
};

void run_init(const InitArgs& a) {
  std::optional<nlohmann::json> cfg;
  if (!a.config.empty()) cfg = nlohmann::json::parse(text::read_file(a.config));
  service::initialize(a.data_dir, ontology::load(a.ontology), cfg);
}

struct ImportArgs {
  std::string input, id, base_ns, out;
};

void run_import(const ImportArgs& a) {
  const auto r = ontology::import_turtle(text::read_file(a.input), a.id.empty() ? fs::path(a.input).stem().string() : a.id,
                                         a.base_ns);
  ontology::validate(r.ontology);
  write_output(a.out, ontology::dump(r.ontology));
  for (const auto& s : r.skipped) std::cerr << "skipped: " << s << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ontology enrichment and ontology-based information extraction"};
  app.require_subcommand(1);

  DkeArgs dk;
  auto* dke_cmd = app.add_subcommand("dke", "Extract disambiguated domain concepts from a corpus");
  dke_cmd->add_option("--corpus", dk.manifest, "Corpus manifest (doc_id, path, category TSV)")->required();
  dke_cmd->add_option("--lexicon", dk.lexicon, "WordNet-format dict directory")->required();
  dke_cmd->add_option("--top-k", dk.top_k, "Keep this many topics")->capture_default_str();
  dke_cmd->add_option("--min-score", dk.min_score, "Drop topics scoring below this")->capture_default_str();
  dke_cmd->add_option("--converter", dk.converter, "Command converting non-text inputs; {input} is the file");
  dke_cmd->add_option("--out", dk.out, "Concepts file (default stdout)");

  EnrichArgs en;
  auto* enrich_cmd = app.add_subcommand("enrich", "Match ontology classes to knowledge-base entities");
  enrich_cmd->add_option("--ontology", en.ontology, "Ontology JSON")->required();
  enrich_cmd->add_option("--concepts", en.concepts, "Concepts file from `dke`")->required();
  enrich_cmd->add_option("--threshold", en.threshold, "Similarity threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  enrich_cmd->add_option("--weighting", en.weighting, "tfidf or raw")
      ->check(CLI::IsMember({"tfidf", "raw"}))
      ->capture_default_str();
  enrich_cmd->add_flag("--offline", en.offline, "Answer from the cache only");
  enrich_cmd->add_option("--endpoint", en.endpoint, "Knowledge-base API endpoint");
  enrich_cmd->add_option("--cache-dir", en.cache_dir, "Response cache directory");
  enrich_cmd->add_option("--kb-fixtures", en.kb_fixtures, "Serve knowledge-base calls from fixture files");
  enrich_cmd->add_option("--lexicon", en.lexicon, "Dict directory for fallback terms on no_match");
  enrich_cmd->add_option("--workers", en.workers, "Parallel class matching")->capture_default_str();
  enrich_cmd->add_option("--ledger", en.ledger, "Outcome ledger (default stdout)");
  enrich_cmd->add_option("--out", en.out, "Enriched ontology");
  enrich_cmd->add_option("--queue", en.queue, "Review queue file to merge outcomes into");

  ExtractArgs ex;
  auto* extract_cmd = app.add_subcommand("extract", "Extract property/value pairs from data sheets");
  extract_cmd->add_option("--ontology", ex.ontology, "Ontology JSON")->required();
  auto* doc_opt = extract_cmd->add_option("--doc", ex.docs, "Data sheet (repeatable)");
  auto* corpus_opt = extract_cmd->add_option("--corpus", ex.manifest, "Corpus manifest");
  doc_opt->excludes(corpus_opt);
  extract_cmd->add_flag("--baseline-text-search", ex.baseline, "Search class names only");
  extract_cmd->add_option("--units", ex.units, "Unit table TSV (default: bundled)");
  extract_cmd->add_option("--converter", ex.converter, "Command converting non-text inputs; {input} is the file");
  extract_cmd->add_option("--out-dir", ex.out_dir, "Directory for <doc_id>.annotations.json");
  extract_cmd->add_option("--pairs", ex.pairs, "Pairs TSV");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score extracted pairs against a gold file");
  eval_cmd->add_option("--gold", ev.gold, "Gold TSV")->required();
  eval_cmd->add_option("--pairs", ev.pairs, "Pairs TSV")->required();
  eval_cmd->add_option("--beta", ev.beta, "Recall weight")->capture_default_str();

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a data directory over HTTP");
  serve_cmd->add_option("--data-dir", sv.data_dir, "Data directory")->required();
  serve_cmd->add_option("--port", sv.port, "TCP port")->capture_default_str();
  serve_cmd->add_option("--host", sv.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--init-ontology", sv.init_ontology, "Seed an empty data directory with this ontology");
  serve_cmd->add_option("--init-config", sv.init_config, "config.json to copy when seeding");

  InitArgs in;
  auto* init_cmd = app.add_subcommand("init", "Create a service data directory");
  init_cmd->add_option("--data-dir", in.data_dir, "Data directory")->required();
  init_cmd->add_option("--ontology", in.ontology, "Initial ontology")->required();
  init_cmd->add_option("--config", in.config, "config.json to copy in");

  ImportArgs im;
  auto* import_cmd = app.add_subcommand("import-rdf", "Convert a Turtle ontology to the JSON format");
  import_cmd->add_option("--in", im.input, "Turtle file")->required();
  import_cmd->add_option("--id", im.id, "Ontology id (default: file stem)");
  import_cmd->add_option("--base-namespace", im.base_ns, "Namespace of intrinsic classes");
  import_cmd->add_option("--out", im.out, "Ontology JSON (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*dke_cmd) run_dke(dk);
    if (*enrich_cmd) run_enrich(en);
    if (*extract_cmd) {
      if (ex.docs.empty() && ex.manifest.empty()) throw Error(ErrorCode::kInvalidArgument, "--doc or --corpus required");
      run_extract(ex);
    }
    if (*eval_cmd) run_eval(ev);
    if (*serve_cmd) run_serve(sv);
    if (*init_cmd) run_init(in);
    if (*import_cmd) run_import(im);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return 0;
}
