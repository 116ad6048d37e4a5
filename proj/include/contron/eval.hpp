#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "contron/error.hpp"
#include "contron/ie.hpp"
#include "contron/text.hpp"

namespace contron::eval {

struct EvalCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  friend bool operator==(const EvalCounts&, const EvalCounts&) = default;
};

/// F-beta from precision and recall. Throws UndefinedMetric when P + β²R is 0.
inline double f_measure(double precision, double recall, double beta = 1.0) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kInvalidArgument, "beta must be positive");
  }
  const double b2 = beta * beta;
  const double denom = precision + b2 * recall;
  if (denom == 0.0) throw Error(ErrorCode::kUndefinedMetric, "F-measure undefined when P and R are both 0");
  return (b2 + 1.0) * precision * recall / denom;
}

struct Metrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f_measure;
  double beta = 1.0;

  double require_precision() const {
    if (!precision) throw Error(ErrorCode::kUndefinedMetric, "precision undefined (tp + fp = 0)");
    return *precision;
  }
  double require_recall() const {
    if (!recall) throw Error(ErrorCode::kUndefinedMetric, "recall undefined (tp + fn = 0)");
    return *recall;
  }
  double require_f() const {
    if (!f_measure) throw Error(ErrorCode::kUndefinedMetric, "F-measure undefined");
    return *f_measure;
  }
};

/// Undefined ratios stay empty rather than becoming 0.
inline Metrics compute_metrics(const EvalCounts& c, double beta = 1.0) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kInvalidArgument, "beta must be positive");
  }
  Metrics m;
  m.beta = beta;
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision && m.recall && (*m.precision + beta * beta * *m.recall) > 0.0) {
    m.f_measure = f_measure(*m.precision, *m.recall, beta);
  }
  return m;
}

/// Trim, lowercase, collapse whitespace, drop trailing . , ; : ! ?
inline std::string normalize_value(std::string_view v) {
  auto s = text::collapse_whitespace(text::to_lower(v));
  while (!s.empty() && std::string_view(".,;:!?").find(s.back()) != std::string_view::npos) {
    s.pop_back();
    while (!s.empty() && s.back() == ' ') s.pop_back();
  }
  return s;
}

struct GoldEntry {
  std::string doc_id;
  std::string class_id;
  std::string value;

  friend auto operator<=>(const GoldEntry&, const GoldEntry&) = default;
};

/// Tab-separated doc_id, class_id, value. Blank lines and lines starting
/// with '#' are skipped; a (doc, class) may have several accepted values.
inline std::vector<GoldEntry> parse_gold(std::string_view raw, const std::string& origin = "gold") {
  std::vector<GoldEntry> out;
  std::istringstream in{std::string(raw)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    const auto f = text::split(line, '\t');
    if (f.size() != 3) {
      throw Error(ErrorCode::kMalformedGold,
                  origin + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields, got " +
                      std::to_string(f.size()));
    }
    for (std::size_t i = 0; i < 3; ++i) {
      if (text::trim(f[i]).empty()) {
        throw Error(ErrorCode::kMalformedGold, origin + ":" + std::to_string(lineno) + ": empty field");
      }
    }
    out.push_back({std::string(text::trim(f[0])), std::string(text::trim(f[1])), f[2]});
  }
  return out;
}

inline std::vector<GoldEntry> load_gold(const std::filesystem::path& path) {
  return parse_gold(text::read_file(path), path.string());
}

/// A scored item: (doc, class, raw value). Pairs still awaiting the expert
/// carry no value and are not scored.
struct Scored {
  std::string doc_id;
  std::string class_id;
  std::string value;
};

inline std::vector<Scored> scorable(const std::vector<ie::ExtractedPair>& pairs) {
  std::vector<Scored> out;
  for (const auto& p : pairs) {
    if (p.method == ie::Method::kManualPending) continue;
    out.push_back({p.hit.doc_id, p.hit.class_id, p.value_text});
  }
  return out;
}

inline std::vector<Scored> scorable(const std::vector<ie::PairRow>& rows) {
  std::vector<Scored> out;
  for (const auto& r : rows) {
    if (r.method == ie::Method::kManualPending) continue;
    out.push_back({r.doc_id, r.class_id, r.value});
  }
  return out;
}

/// Set comparison on (doc, class, normalized value).
inline EvalCounts score(const std::vector<Scored>& extracted, const std::vector<GoldEntry>& gold) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::set<Key> g, x;
  for (const auto& e : gold) g.emplace(e.doc_id, e.class_id, normalize_value(e.value));
  for (const auto& e : extracted) x.emplace(e.doc_id, e.class_id, normalize_value(e.value));
  EvalCounts c;
  for (const auto& k : x) (g.count(k) ? c.tp : c.fp) += 1;
  for (const auto& k : g) c.fn += x.count(k) ? 0 : 1;
  return c;
}

inline EvalCounts score_pairs(const std::vector<ie::ExtractedPair>& pairs, const std::vector<GoldEntry>& gold) {
  return score(scorable(pairs), gold);
}

}  // namespace contron::eval
