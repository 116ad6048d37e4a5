#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "contron/entity.hpp"
#include "contron/error.hpp"
#include "contron/text.hpp"

namespace contron::kb {

inline constexpr const char* kDefaultEndpoint = "https://www.wikidata.org/w/api.php";
inline constexpr std::size_t kDefaultLimit = 10;

using Params = std::vector<std::pair<std::string, std::string>>;

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// One GET against the knowledge-base API. Implementations throw
/// Error(kNetworkError) when the request could not be performed at all.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse get(const std::string& endpoint, const Params& params) = 0;
};

/// Total real network attempts made in this process.
inline std::atomic<std::size_t>& network_attempts() {
  static std::atomic<std::size_t> n{0};
  return n;
}

/// CONTRON_NETWORK_GUARD=1 forbids any outbound connection (tests).
inline bool network_guard_active() {
  const char* v = std::getenv("CONTRON_NETWORK_GUARD");
  return v && *v && std::string_view(v) != "0";
}

inline std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    }
  }
  return out;
}

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(20))
      : timeout_(timeout) {}

  HttpResponse get(const std::string& endpoint, const Params& params) override {
    if (network_guard_active()) {
      throw Error(ErrorCode::kNetworkError,
                  "network access disabled by CONTRON_NETWORK_GUARD (" + endpoint + ")");
    }
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "endpoint must be an absolute URL: " + endpoint);
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    const auto origin = endpoint.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
    char sep = path.find('?') == std::string::npos ? '?' : '&';
    for (const auto& [k, v] : params) {
      path += sep + url_encode(k) + "=" + url_encode(v);
      sep = '&';
    }
    ++network_attempts();
    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_follow_location(true);
    const httplib::Headers headers{{"User-Agent", "contron/1.0 (ontology enrichment toolkit)"},
                                   {"Accept", "application/json"}};
    auto res = cli.Get(path, headers);
    if (!res) {
      throw Error(ErrorCode::kNetworkError, origin + ": " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }

 private:
  std::chrono::seconds timeout_;
};

/// Serves recorded API responses from a directory:
///   search/<slug>.json     body of wbsearchentities for that name
///   entities/<id>.json     one entity object as found under "entities"
/// slug = lowercase name with every non-alphanumeric run replaced by '_'.
/// A missing search file is an empty result.
class FixtureTransport : public Transport {
 public:
  explicit FixtureTransport(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_)) {
      throw Error(ErrorCode::kIo, "no fixture directory " + dir_.string());
    }
  }

  static std::string slug(std::string_view name) {
    std::string out;
    bool gap = false;
    for (char c : text::to_lower(text::trim(name))) {
      if (std::isalnum(static_cast<unsigned char>(c))) {
        if (gap && !out.empty()) out += '_';
        out += c;
        gap = false;
      } else {
        gap = true;
      }
    }
    return out;
  }

  HttpResponse get(const std::string& endpoint, const Params& params) override {
    {
      const auto now = std::chrono::steady_clock::now();
      std::lock_guard lock(mu_);
      requests_.push_back({endpoint, params, now});
    }
    std::map<std::string, std::string> p(params.begin(), params.end());
    const auto action = p["action"];
    if (action == "wbsearchentities") {
      const auto path = dir_ / "search" / (slug(p["search"]) + ".json");
      nlohmann::json body = {{"search", nlohmann::json::array()}, {"success", 1}};
      if (std::filesystem::exists(path)) body = nlohmann::json::parse(text::read_file(path));
      const auto limit = p.count("limit") ? std::stoul(p["limit"]) : kDefaultLimit;
      if (body.contains("search") && body["search"].is_array() && body["search"].size() > limit) {
        auto& arr = body["search"];
        arr.erase(arr.begin() + static_cast<std::ptrdiff_t>(limit), arr.end());
      }
      return {200, body.dump()};
    }
    if (action == "wbgetentities") {
      nlohmann::json entities = nlohmann::json::object();
      for (const auto& id : text::split(p["ids"], '|')) {
        const auto path = dir_ / "entities" / (id + ".json");
        if (std::filesystem::exists(path)) {
          entities[id] = nlohmann::json::parse(text::read_file(path));
        } else {
          entities[id] = {{"id", id}, {"missing", ""}};
        }
      }
      return {200, nlohmann::json{{"entities", entities}, {"success", 1}}.dump()};
    }
    return {400, R"({"error":{"code":"badvalue","info":"unsupported action"}})"};
  }

  struct Request {
    std::string endpoint;
    Params params;
    std::chrono::steady_clock::time_point at;
  };
  std::vector<Request> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::vector<Request> requests_;
};

/// Token bucket with capacity one: consecutive acquisitions are at least
/// 1/rate seconds apart.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : interval_(per_second > 0 ? 1.0 / per_second : 0.0) {}

  void acquire() {
    std::unique_lock lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    if (next_ > now) {
      const auto wait = next_ - now;
      next_ += to_duration();
      lock.unlock();
      std::this_thread::sleep_for(wait);
      return;
    }
    next_ = now + to_duration();
  }

 private:
  std::chrono::steady_clock::duration to_duration() const {
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(interval_));
  }

  double interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

/// Per-query result files: <dir>/<fnv1a(endpoint, name, limit)>.json holding
/// the hydrated entities and the retrieval timestamp.
class CacheStore {
 public:
  explicit CacheStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  static std::string key(const std::string& endpoint, const std::string& name, std::size_t limit) {
    return text::hex64(text::fnv1a64(endpoint + '\n' + "search" + '\n' + name + '\n' +
                                     std::to_string(limit)));
  }

  std::filesystem::path path_for(const std::string& endpoint, const std::string& name,
                                 std::size_t limit) const {
    return dir_ / (key(endpoint, name, limit) + ".json");
  }

  std::optional<std::vector<KbEntity>> get(const std::string& endpoint, const std::string& name,
                                           std::size_t limit) const {
    const auto path = path_for(endpoint, name, limit);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
      const auto j = nlohmann::json::parse(text::read_file(path));
      // Guard against hash collisions and hand-edited files.
      if (j.at("endpoint") != endpoint || j.at("query").at("name") != name ||
          j.at("query").at("limit") != limit) {
        return std::nullopt;
      }
      std::vector<KbEntity> out;
      for (const auto& e : j.at("entities")) out.push_back(entity_from_json(e));
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kMalformedResponse, "cache file " + path.string() + ": " + e.what());
    }
  }

  void put(const std::string& endpoint, const std::string& name, std::size_t limit,
           const std::vector<KbEntity>& entities, const std::string& retrieved_at) const {
    nlohmann::ordered_json j;
    j["endpoint"] = endpoint;
    j["query"] = {{"action", "search"}, {"name", name}, {"limit", limit}};
    j["retrieved_at"] = retrieved_at;
    auto& arr = j["entities"] = nlohmann::ordered_json::array();
    for (const auto& e : entities) arr.push_back(to_json(e));
    text::write_file_atomic(path_for(endpoint, name, limit), j.dump(2) + "\n");
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct ClientOptions {
  std::string endpoint = kDefaultEndpoint;
  std::optional<std::filesystem::path> cache_dir;
  bool offline = false;
  double requests_per_second = 5.0;
  int max_attempts = 4;
  std::chrono::milliseconds backoff{250};  // doubled after every failed attempt
  std::string language = "en";

  /// CONTRON_KB_ENDPOINT, CONTRON_CACHE_DIR and CONTRON_OFFLINE override the
  /// corresponding fields when set and non-empty.
  ClientOptions& apply_environment() {
    if (const char* v = std::getenv("CONTRON_KB_ENDPOINT"); v && *v) endpoint = v;
    if (const char* v = std::getenv("CONTRON_CACHE_DIR"); v && *v) cache_dir = v;
    if (const char* v = std::getenv("CONTRON_OFFLINE"); v && *v) {
      offline = std::string_view(v) != "0" && std::string_view(v) != "false";
    }
    return *this;
  }
};

/// Knowledge-base entity search with a persistent cache.
class KbClient {
 public:
  KbClient(ClientOptions options, std::shared_ptr<Transport> transport)
      : options_(std::move(options)),
        transport_(std::move(transport)),
        limiter_(options_.requests_per_second) {}

  const ClientOptions& options() const { return options_; }

  /// Entities whose label or alias matches `name`, hydrated with
  /// description, aliases and instance-of / subclass-of categories.
  std::vector<KbEntity> search_entities(const std::string& name, std::size_t limit = kDefaultLimit) {
    if (text::trim(name).empty()) throw Error(ErrorCode::kInvalidArgument, "empty search name");
    if (limit < 1) throw Error(ErrorCode::kInvalidArgument, "limit must be >= 1");
    std::optional<CacheStore> cache;
    if (options_.cache_dir) cache.emplace(*options_.cache_dir);
    if (cache) {
      if (auto hit = cache->get(options_.endpoint, name, limit)) return *hit;
    }
    if (options_.offline) {
      throw Error(ErrorCode::kCacheMiss, "'" + name + "' (limit " + std::to_string(limit) +
                                             ") not cached for " + options_.endpoint);
    }
    auto entities = fetch(name, limit);
    if (cache) cache->put(options_.endpoint, name, limit, entities, text::utc_timestamp());
    return entities;
  }

  std::size_t requests_made() const { return requests_.load(); }

 private:
  nlohmann::json call(const Params& params) {
    auto delay = options_.backoff;
    std::string last_error;
    bool rate_limited = false;
    for (int attempt = 1; attempt <= std::max(1, options_.max_attempts); ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
      limiter_.acquire();
      ++requests_;
      HttpResponse res;
      try {
        res = transport_->get(options_.endpoint, params);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNetworkError) throw;
        // A guard refusal will never succeed; do not spin on it.
        if (network_guard_active()) throw;
        last_error = e.what();
        rate_limited = false;
        continue;
      }
      if (res.status == 429) {
        rate_limited = true;
        last_error = "HTTP 429";
        continue;
      }
      if (res.status >= 500) {
        rate_limited = false;
        last_error = "HTTP " + std::to_string(res.status);
        continue;
      }
      if (res.status != 200) {
        throw Error(ErrorCode::kNetworkError, "HTTP " + std::to_string(res.status) + " from " +
                                                  options_.endpoint);
      }
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kMalformedResponse, e.what());
      }
      if (!body.is_object()) throw Error(ErrorCode::kMalformedResponse, "expected an object");
      if (body.contains("error")) {
        throw Error(ErrorCode::kMalformedResponse, "API error: " + body["error"].dump());
      }
      return body;
    }
    if (rate_limited) throw Error(ErrorCode::kRateLimited, options_.endpoint + ": " + last_error);
    throw Error(ErrorCode::kNetworkError, options_.endpoint + ": " + last_error);
  }

  static std::string lang_value(const nlohmann::json& obj, const char* field, const std::string& lang) {
    if (!obj.contains(field) || !obj[field].is_object()) return {};
    const auto& m = obj[field];
    if (!m.contains(lang)) return {};
    const auto& v = m[lang];
    return v.is_object() && v.contains("value") && v["value"].is_string() ? v["value"].get<std::string>()
                                                                           : std::string();
  }

  std::map<std::string, nlohmann::json> get_entities(const std::vector<std::string>& ids,
                                                     const std::string& props) {
    std::map<std::string, nlohmann::json> out;
    for (std::size_t i = 0; i < ids.size(); i += 50) {
      std::vector<std::string> batch(ids.begin() + static_cast<std::ptrdiff_t>(i),
                                     ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), i + 50)));
      const auto body = call({{"action", "wbgetentities"},
                              {"ids", text::join(batch, "|")},
                              {"props", props},
                              {"languages", options_.language},
                              {"format", "json"}});
      if (!body.contains("entities") || !body["entities"].is_object()) {
        throw Error(ErrorCode::kMalformedResponse, "wbgetentities without 'entities'");
      }
      for (const auto& [id, e] : body["entities"].items()) {
        if (!e.is_object()) throw Error(ErrorCode::kMalformedResponse, "entity " + id);
        if (e.contains("missing")) continue;
        out[id] = e;
      }
    }
    return out;
  }

  static std::vector<std::string> claim_targets(const nlohmann::json& e, const char* property) {
    std::vector<std::string> out;
    if (!e.contains("claims") || !e["claims"].contains(property)) return out;
    for (const auto& claim : e["claims"][property]) {
      const auto* v = &claim;
      for (const char* k : {"mainsnak", "datavalue", "value"}) {
        if (!v->is_object() || !v->contains(k)) {
          v = nullptr;
          break;
        }
        v = &(*v)[k];
      }
      if (v && v->is_object() && v->contains("id") && (*v)["id"].is_string()) {
        out.push_back((*v)["id"].get<std::string>());
      }
    }
    return out;
  }

  std::vector<KbEntity> fetch(const std::string& name, std::size_t limit) {
    const auto found = call({{"action", "wbsearchentities"},
                             {"search", name},
                             {"language", options_.language},
                             {"uselang", options_.language},
                             {"type", "item"},
                             {"limit", std::to_string(limit)},
                             {"format", "json"}});
    if (!found.contains("search") || !found["search"].is_array()) {
      throw Error(ErrorCode::kMalformedResponse, "wbsearchentities without 'search'");
    }
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& hit : found["search"]) {
      if (!hit.is_object() || !hit.contains("id") || !hit["id"].is_string()) {
        throw Error(ErrorCode::kMalformedResponse, "search hit without id");
      }
      const auto id = hit["id"].get<std::string>();
      if (seen.insert(id).second && ids.size() < limit) ids.push_back(id);
    }
    if (ids.empty()) return {};

    const auto raw = get_entities(ids, "labels|descriptions|aliases|claims");
    std::vector<std::string> category_ids;
    std::set<std::string> seen_cat;
    std::vector<KbEntity> out;
    for (const auto& id : ids) {
      const auto it = raw.find(id);
      if (it == raw.end()) continue;
      const auto& e = it->second;
      KbEntity ent;
      ent.entity_id = id;
      ent.label = lang_value(e, "labels", options_.language);
      if (auto d = lang_value(e, "descriptions", options_.language); !d.empty()) ent.description = d;
      if (e.contains("aliases") && e["aliases"].is_object() && e["aliases"].contains(options_.language)) {
        for (const auto& a : e["aliases"][options_.language]) {
          if (!a.is_object() || !a.contains("value")) continue;
          auto v = a["value"].get<std::string>();
          if (std::find(ent.aliases.begin(), ent.aliases.end(), v) == ent.aliases.end()) {
            ent.aliases.push_back(std::move(v));
          }
        }
      }
      for (const char* prop : {"P31", "P279"}) {
        for (auto& c : claim_targets(e, prop)) {
          if (std::find(ent.category_ids.begin(), ent.category_ids.end(), c) == ent.category_ids.end()) {
            ent.category_ids.push_back(c);
          }
          if (seen_cat.insert(c).second) category_ids.push_back(c);
        }
      }
      out.push_back(std::move(ent));
    }
    if (!category_ids.empty()) {
      const auto cats = get_entities(category_ids, "labels");
      for (auto& ent : out) {
        for (const auto& c : ent.category_ids) {
          const auto it = cats.find(c);
          if (it == cats.end()) continue;
          auto label = lang_value(it->second, "labels", options_.language);
          if (!label.empty() && std::find(ent.category_labels.begin(), ent.category_labels.end(),
                                          label) == ent.category_labels.end()) {
            ent.category_labels.push_back(std::move(label));
          }
        }
      }
    }
    return out;
  }

  ClientOptions options_;
  std::shared_ptr<Transport> transport_;
  RateLimiter limiter_;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace contron::kb
