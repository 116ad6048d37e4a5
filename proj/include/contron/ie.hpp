#pragma once

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "contron/corpus.hpp"
#include "contron/error.hpp"
#include "contron/ontology.hpp"
#include "contron/text.hpp"

#ifndef CONTRON_DATA_DIR
#define CONTRON_DATA_DIR "data"
#endif

namespace contron::ie {

inline constexpr std::size_t kDefaultWindowAfter = 10;
inline constexpr std::size_t kDefaultWindowBefore = 5;

// ---------------------------------------------------------------------------
// Unit lexicon

struct UnitEntry {
  std::string surface;
  std::string canonical;
  std::string dimension;
  bool case_insensitive = false;
};

class UnitLexicon {
 public:
  /// TSV rows: surface, canonical, dimension, kind (symbol|word), prefixable.
  static UnitLexicon parse(std::string_view tsv, const std::string& origin = "units") {
    static const std::vector<std::pair<std::string, std::string>> kPrefixes = {
        {"T", "T"}, {"G", "G"}, {"M", "M"}, {"k", "k"}, {"h", "h"}, {"c", "c"},
        {"m", "m"}, {"u", "µ"}, {"µ", "µ"}, {"n", "n"}, {"p", "p"}};
    UnitLexicon lex;
    std::vector<UnitEntry> prefixed;
    std::istringstream in{std::string(tsv)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (text::trim(line).empty() || line.front() == '#') continue;
      const auto f = text::split(line, '\t');
      if (f.size() != 5 || f[0].empty() || f[1].empty() || f[2].empty() ||
          (f[3] != "symbol" && f[3] != "word") || (f[4] != "yes" && f[4] != "no")) {
        throw Error(ErrorCode::kSchemaViolation, origin + ":" + std::to_string(lineno) + ": bad unit row");
      }
      const bool ci = f[3] == "word" || f[0].starts_with("°") || f[0].starts_with("℃");
      lex.add({f[0], f[1], f[2], ci});
      if (f[4] == "yes") {
        for (const auto& [p, canon] : kPrefixes) prefixed.push_back({p + f[0], canon + f[1], f[2], false});
      }
    }
    // Explicit rows win over generated prefixed forms.
    for (auto& e : prefixed) {
      if (!lex.has(e.surface)) lex.add(std::move(e));
    }
    std::stable_sort(lex.entries_.begin(), lex.entries_.end(),
                     [](const auto& a, const auto& b) { return a.surface.size() > b.surface.size(); });
    return lex;
  }

  static UnitLexicon load(const std::filesystem::path& path) {
    return parse(text::read_file(path), path.string());
  }

  /// data/units.tsv; CONTRON_DATA_DIR in the environment overrides the
  /// compiled-in location.
  static const UnitLexicon& bundled() {
    static const UnitLexicon lex = [] {
      const char* env = std::getenv("CONTRON_DATA_DIR");
      const std::filesystem::path dir = env && *env ? env : CONTRON_DATA_DIR;
      return load(dir / "units.tsv");
    }();
    return lex;
  }

  /// Longest unit starting exactly at `pos` and ending at a word boundary.
  const UnitEntry* match(std::string_view s, std::size_t pos, std::size_t* len = nullptr) const {
    for (const auto& e : entries_) {
      const auto n = e.surface.size();
      if (pos + n > s.size()) continue;
      const auto cand = s.substr(pos, n);
      if (!(e.case_insensitive ? text::iequals(cand, e.surface) : cand == e.surface)) continue;
      const char last = e.surface.back();
      if (pos + n < s.size() && text::is_word_byte(last) && static_cast<unsigned char>(last) < 0x80 &&
          (text::is_word_byte(s[pos + n]) && static_cast<unsigned char>(s[pos + n]) < 0x80)) {
        continue;
      }
      if (len) *len = n;
      return &e;
    }
    return nullptr;
  }

  bool has(std::string_view surface) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.surface == surface; });
  }
  std::size_t size() const { return entries_.size(); }

 private:
  void add(UnitEntry e) { entries_.push_back(std::move(e)); }
  std::vector<UnitEntry> entries_;  // longest surface first
};

// ---------------------------------------------------------------------------
// Domain types

struct KeywordHit {
  std::string doc_id;
  std::string class_id;
  std::string keyword;
  std::size_t start = 0;  // byte offsets, half-open
  std::size_t end = 0;

  friend bool operator==(const KeywordHit&, const KeywordHit&) = default;
};

struct NumericValue {
  double magnitude = 0.0;
  std::string unit;  // as written in the text
  std::string canonical_unit;
  std::string dimension;

  friend bool operator==(const NumericValue&, const NumericValue&) = default;
};

enum class Method { kNumericWindow, kSentencePattern, kListPattern, kManualPending };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kNumericWindow: return "numeric_window";
    case Method::kSentencePattern: return "sentence_pattern";
    case Method::kListPattern: return "list_pattern";
    case Method::kManualPending: return "manual_pending";
  }
  return "manual_pending";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (auto m : {Method::kNumericWindow, Method::kSentencePattern, Method::kListPattern,
                 Method::kManualPending}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

struct ExtractedPair {
  KeywordHit hit;
  std::string value_text;
  std::size_t value_start = 0;  // meaningful when value_text is nonempty
  std::size_t value_end = 0;
  std::optional<NumericValue> numeric;
  Method method = Method::kManualPending;
  std::string note;

  /// keyword ∪ value
  std::pair<std::size_t, std::size_t> span() const {
    if (value_text.empty()) return {hit.start, hit.end};
    return {std::min(hit.start, value_start), std::max(hit.end, value_end)};
  }

  friend bool operator==(const ExtractedPair&, const ExtractedPair&) = default;
};

struct Annotation {
  std::string doc_id;
  std::string class_id;
  std::string class_name;
  std::string keyword;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string text;  // whitespace-collapsed span text
  std::string value_text;
  Method method = Method::kManualPending;
  std::optional<NumericValue> numeric;
  std::string reason;
  std::string note;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

inline std::string reason_for(std::string_view span_text, std::string_view class_name) {
  return "The highlighted text (" + std::string(span_text) + ") is corresponding to the " +
         std::string(class_name) + " property";
}

// ---------------------------------------------------------------------------
// Keyword search

struct ClassKeywords {
  std::string class_id;
  std::vector<std::string> keywords;
};

namespace detail {

inline bool ascii_alnum(char c) {
  return static_cast<unsigned char>(c) < 0x80 && text::is_word_byte(c);
}

inline bool is_hspace(char c) { return c == ' ' || c == '\t'; }

inline std::size_t skip_hspace(std::string_view s, std::size_t p) {
  while (p < s.size() && is_hspace(s[p])) ++p;
  return p;
}

/// Length of the match of `words` at `pos` in the lowercased text, or 0.
/// Consecutive keyword words may be separated by any run of spaces/tabs.
inline std::size_t match_words(std::string_view lower, std::size_t pos,
                               const std::vector<std::string>& words) {
  std::size_t p = pos;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w > 0) {
      const auto q = skip_hspace(lower, p);
      if (q == p) return 0;
      p = q;
    }
    if (lower.compare(p, words[w].size(), words[w]) != 0) return 0;
    p += words[w].size();
  }
  return p - pos;
}

inline std::vector<std::pair<std::size_t, std::size_t>> find_keyword(std::string_view lower,
                                                                     std::string_view keyword) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto words = text::split_whitespace(text::to_lower(keyword));
  if (words.empty()) return out;
  const auto& first = words.front();
  const bool check_before = text::is_word_byte(first.front());
  const bool check_after = text::is_word_byte(words.back().back());
  for (auto pos = lower.find(first); pos != std::string_view::npos; pos = lower.find(first, pos + 1)) {
    if (check_before && pos > 0 && text::is_word_byte(lower[pos - 1])) continue;
    const auto len = match_words(lower, pos, words);
    if (len == 0) continue;
    const auto end = pos + len;
    if (check_after && end < lower.size() && text::is_word_byte(lower[end])) continue;
    out.emplace_back(pos, end);
  }
  return out;
}

inline std::pair<std::size_t, std::size_t> line_bounds(std::string_view s, std::size_t pos) {
  const auto nl = pos == 0 ? std::string_view::npos : s.rfind('\n', pos - 1);
  const std::size_t start = nl == std::string_view::npos ? 0 : nl + 1;
  const auto e = s.find('\n', pos);
  return {start, e == std::string_view::npos ? s.size() : e};
}

struct NumberSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  double value = 0.0;
};

inline bool at(std::string_view s, std::size_t p, std::string_view lit) {
  return s.substr(std::min(p, s.size())).starts_with(lit);
}

/// Decimal with optional sign, ",ddd" thousands groups, fraction and
/// exponent ("e-3", "×10^-3").
inline std::optional<NumberSpan> parse_number(std::string_view s, std::size_t pos) {
  std::size_t p = pos;
  std::string norm;
  if (p < s.size() && (s[p] == '+' || s[p] == '-')) {
    if (s[p] == '-') norm.push_back('-');
    ++p;
  } else if (at(s, p, "−")) {
    norm.push_back('-');
    p += std::string_view("−").size();
  }
  auto digits = [&] {
    std::size_t n = 0;
    while (p < s.size() && text::is_digit(s[p])) {
      norm.push_back(s[p++]);
      ++n;
    }
    return n;
  };
  const auto int_digits = digits();
  if (int_digits >= 1 && int_digits <= 3) {
    while (p + 3 < s.size() + 0 && s[p] == ',' && text::is_digit(s[p + 1]) && text::is_digit(s[p + 2]) &&
           text::is_digit(s[p + 3]) && (p + 4 >= s.size() || !text::is_digit(s[p + 4]))) {
      norm.append(s.substr(p + 1, 3));
      p += 4;
    }
  }
  std::size_t frac_digits = 0;
  if (p + 1 < s.size() && s[p] == '.' && text::is_digit(s[p + 1])) {
    norm.push_back('.');
    ++p;
    frac_digits = digits();
  }
  if (int_digits == 0 && frac_digits == 0) return std::nullopt;
  if (int_digits == 0) norm.insert(norm.size() - frac_digits - 1, "0");

  // Exponent, only consumed when digits follow.
  auto exponent = [&](std::size_t q) -> bool {
    std::string e = "e";
    if (q < s.size() && (s[q] == '+' || s[q] == '-')) {
      if (s[q] == '-') e.push_back('-');
      ++q;
    } else if (at(s, q, "−")) {
      e.push_back('-');
      q += std::string_view("−").size();
    }
    if (q >= s.size() || !text::is_digit(s[q])) return false;
    while (q < s.size() && text::is_digit(s[q])) e.push_back(s[q++]);
    norm += e;
    p = q;
    return true;
  };
  if (p < s.size() && (s[p] == 'e' || s[p] == 'E')) {
    exponent(p + 1);
  } else {
    for (std::string_view lead : {"×10^", "x10^", "·10^", "*10^"}) {
      if (at(s, p, lead) && exponent(p + lead.size())) break;
    }
  }
  double v = 0.0;
  const auto r = std::from_chars(norm.data(), norm.data() + norm.size(), v);
  if (r.ec != std::errc() || r.ptr != norm.data() + norm.size()) return std::nullopt;
  return NumberSpan{pos, p, v};
}

inline constexpr std::string_view kValuePrefixes[] = {"<=", ">=", "+/-", "<", ">", "~", "±", "≈", "≤", "≥"};
inline constexpr std::string_view kRangeSeparators[] = {"...", "…", "+/-", "±", "–", "—", "-",
                                                        "×", "x", "to"};

struct ValueParse {
  std::size_t start = 0;
  std::size_t end = 0;
  double magnitude = 0.0;
  const UnitEntry* unit = nullptr;
  std::string unit_text;
};

/// [prefix] number [unit] (separator number [unit])*, confined to `s`.
inline std::optional<ValueParse> parse_value(std::string_view s, std::size_t pos, const UnitLexicon& units) {
  std::size_t p = pos;
  for (auto pre : kValuePrefixes) {
    if (at(s, p, pre)) {
      p = skip_hspace(s, p + pre.size());
      break;
    }
  }
  const auto first = parse_number(s, p);
  if (!first) return std::nullopt;
  ValueParse v{pos, first->end, first->value, nullptr, {}};
  auto take_unit = [&](std::size_t q) {
    const auto u = skip_hspace(s, q);
    if (u - q > 2) return false;
    std::size_t len = 0;
    const auto* e = units.match(s, u, &len);
    if (!e) return false;
    if (!v.unit) {
      v.unit = e;
      v.unit_text = std::string(s.substr(u, len));
    }
    v.end = u + len;
    return true;
  };
  take_unit(v.end);
  for (;;) {
    const auto q = skip_hspace(s, v.end);
    bool extended = false;
    for (auto sep : kRangeSeparators) {
      if (!at(s, q, sep)) continue;
      // Word-like separators need surrounding space ("5 to 10", "68 x 68").
      const bool wordy = sep == "to" || sep == "x";
      if (wordy && (q == v.end || !at(s, q + sep.size(), " "))) continue;
      const auto n = skip_hspace(s, q + sep.size());
      const auto next = parse_number(s, n);
      if (!next) continue;
      v.end = next->end;
      take_unit(v.end);
      extended = true;
      break;
    }
    if (!extended) break;
  }
  return v;
}

/// Offset of a token's numeric start after stripping leading brackets and
/// punctuation, or npos.
inline std::size_t numeric_start(std::string_view s, std::size_t tok_start, std::size_t tok_end) {
  std::size_t p = tok_start;
  while (p < tok_end && (s[p] == '(' || s[p] == '[' || s[p] == ':' || s[p] == '=' || s[p] == '"')) ++p;
  if (p >= tok_end) return std::string_view::npos;
  std::size_t q = p;
  for (auto pre : kValuePrefixes) {
    if (at(s, q, pre)) {
      q += pre.size();
      break;
    }
  }
  if (q == tok_end) return p;  // standalone prefix; the number is in the next token
  if (q < tok_end && (s[q] == '+' || s[q] == '-')) ++q;
  else if (at(s, q, "−")) q += std::string_view("−").size();
  if (q < tok_end && text::is_digit(s[q])) return p;
  if (q + 1 < tok_end && s[q] == '.' && text::is_digit(s[q + 1])) return p;
  return std::string_view::npos;
}

inline std::vector<std::pair<std::size_t, std::size_t>> tokens_in(std::string_view s, std::size_t from,
                                                                  std::size_t to) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t p = from;
  while (p < to) {
    while (p < to && text::is_space(s[p])) ++p;
    const auto b = p;
    while (p < to && !text::is_space(s[p])) ++p;
    if (p > b) out.emplace_back(b, p);
  }
  return out;
}

}  // namespace detail

/// Keyword hits for every class; overlapping hits of one class keep the
/// longest keyword unless `dedupe` is off. Sorted by start, then class order,
/// then end.
inline std::vector<KeywordHit> find_hits(const corpus::Document& doc, const std::vector<ClassKeywords>& classes,
                                         bool dedupe = true) {
  const auto lower = text::to_lower(doc.text);
  struct Ranked {
    KeywordHit hit;
    std::size_t class_index;
  };
  std::vector<Ranked> all;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    std::vector<KeywordHit> found;
    for (const auto& kw : classes[ci].keywords) {
      const auto norm = text::collapse_whitespace(text::to_lower(kw));
      for (auto [b, e] : detail::find_keyword(lower, norm)) {
        found.push_back({doc.doc_id, classes[ci].class_id, norm, b, e});
      }
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
      const auto la = a.end - a.start, lb = b.end - b.start;
      if (la != lb) return la > lb;
      if (a.start != b.start) return a.start < b.start;
      return a.keyword < b.keyword;
    });
    std::vector<KeywordHit> kept;
    for (auto& h : found) {
      const bool overlaps = dedupe && std::any_of(kept.begin(), kept.end(),
                                        [&](const auto& k) { return h.start < k.end && k.start < h.end; });
      if (!overlaps) kept.push_back(std::move(h));
    }
    for (auto& h : kept) all.push_back({std::move(h), ci});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.hit.start != b.hit.start) return a.hit.start < b.hit.start;
    if (a.class_index != b.class_index) return a.class_index < b.class_index;
    return a.hit.end < b.hit.end;
  });
  std::vector<KeywordHit> out;
  out.reserve(all.size());
  for (auto& r : all) out.push_back(std::move(r.hit));
  return out;
}

inline std::vector<ClassKeywords> keywords_by_class(const ontology::Ontology& o, bool baseline = false) {
  std::vector<ClassKeywords> out;
  for (const auto& c : o.classes) {
    ClassKeywords k{c.class_id, {}};
    if (baseline) {
      auto name = text::collapse_whitespace(text::to_lower(text::replace_all(c.name, '_', ' ')));
      if (!name.empty()) k.keywords.push_back(std::move(name));
    } else {
      k.keywords = ontology::keywords_of(c);
    }
    out.push_back(std::move(k));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coarse tagging

enum class Tag { kNumeral, kUnit, kCapitalized, kOther };

inline std::string_view to_string(Tag t) {
  switch (t) {
    case Tag::kNumeral: return "numeral";
    case Tag::kUnit: return "unit";
    case Tag::kCapitalized: return "capitalized";
    case Tag::kOther: return "other";
  }
  return "other";
}

struct TaggedToken {
  std::size_t start = 0;
  std::size_t end = 0;
  Tag tag = Tag::kOther;
};

/// Whitespace tokens of text[from, to) tagged numeral / unit / capitalized /
/// other. Trailing punctuation is ignored when testing for a unit.
inline std::vector<TaggedToken> tag_tokens(std::string_view s, std::size_t from, std::size_t to,
                                           const UnitLexicon& units) {
  std::vector<TaggedToken> out;
  for (auto [b, e] : detail::tokens_in(s, from, to)) {
    const auto tok = s.substr(b, e - b);
    Tag tag = Tag::kOther;
    auto core = tok;
    while (!core.empty() && std::string_view(".,;:!?)]").find(core.back()) != std::string_view::npos) {
      core.remove_suffix(1);
    }
    std::size_t len = 0;
    if (std::any_of(tok.begin(), tok.end(), text::is_digit)) {
      tag = Tag::kNumeral;
    } else if (!core.empty() && units.match(core, 0, &len) && len == core.size()) {
      tag = Tag::kUnit;
    } else if (text::is_upper(tok.front())) {
      tag = Tag::kCapitalized;
    }
    out.push_back({b, e, tag});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Value extraction

struct ExtractOptions {
  bool baseline_text_search = false;
  std::size_t window_after = kDefaultWindowAfter;
  std::size_t window_before = kDefaultWindowBefore;
  const UnitLexicon* units = nullptr;  // null: bundled table

  const UnitLexicon& unit_table() const { return units ? *units : UnitLexicon::bundled(); }
};

namespace detail {

inline ExtractedPair numeric_pair(const KeywordHit& hit, std::string_view s, const ValueParse& v) {
  ExtractedPair p;
  p.hit = hit;
  p.value_text = std::string(s.substr(v.start, v.end - v.start));
  p.value_start = v.start;
  p.value_end = v.end;
  NumericValue n;
  n.magnitude = v.magnitude;
  if (v.unit) {
    n.unit = v.unit_text;
    n.canonical_unit = v.unit->canonical;
    n.dimension = v.unit->dimension;
  }
  p.numeric = std::move(n);
  p.method = Method::kNumericWindow;
  return p;
}

/// First sentence boundary at or after `from` within [from, limit): ". " plus
/// a capital, or "." at the end of a line. Returns the offset of the '.'.
inline std::size_t sentence_boundary(std::string_view s, std::size_t from, std::size_t limit) {
  for (auto p = s.find('.', from); p != std::string_view::npos && p < limit; p = s.find('.', p + 1)) {
    const auto q = p + 1;
    if (q >= s.size() || s[q] == '\n' || s[q] == '\r') return p;
    if (s[q] == ' ') {
      auto r = q;
      while (r < s.size() && s[r] == ' ') ++r;
      if (r < s.size() && text::is_upper(s[r])) return p;
      if (r >= s.size() || s[r] == '\n') return p;
    }
  }
  return std::string_view::npos;
}

inline bool line_starts_capitalized(std::string_view s, std::size_t line_start, std::size_t line_end) {
  auto p = skip_hspace(s, line_start);
  return p < line_end && text::is_upper(s[p]);
}

inline std::size_t paragraph_end(std::string_view s, std::size_t from) {
  const auto e = s.find("\n\n", from);
  return e == std::string_view::npos ? s.size() : e;
}

}  // namespace detail

/// Sentence or list pattern around the hit. A fragment with a numeral is
/// promoted to a value; otherwise the pair waits for the expert.
inline ExtractedPair pattern_fallback(const corpus::Document& doc, const KeywordHit& hit,
                                      const UnitLexicon& units = UnitLexicon::bundled()) {
  const std::string_view s = doc.text;
  ExtractedPair p;
  p.hit = hit;
  const auto [ls, le] = detail::line_bounds(s, hit.start);

  std::size_t frag_start = 0, frag_end = 0;
  auto dot = detail::sentence_boundary(s, hit.end, le);
  if (dot != std::string_view::npos) {
    p.method = Method::kSentencePattern;
    frag_start = hit.start;
    frag_end = dot + 1;
  } else {
    const bool has_next = le < s.size();
    std::size_t ns = le + 1, ne = le + 1;
    if (has_next) std::tie(ns, ne) = detail::line_bounds(s, le + 1);
    if (has_next && detail::line_starts_capitalized(s, ls, le) && detail::line_starts_capitalized(s, ns, ne)) {
      p.method = Method::kListPattern;
      frag_start = detail::skip_hspace(s, ls);
      frag_end = le;
      while (frag_end > frag_start && text::is_space(s[frag_end - 1])) --frag_end;
    } else {
      dot = detail::sentence_boundary(s, hit.end, detail::paragraph_end(s, hit.end));
      if (dot != std::string_view::npos) {
        p.method = Method::kSentencePattern;
        frag_start = hit.start;
        frag_end = dot + 1;
      }
    }
  }
  if (frag_end <= frag_start) {
    p.method = Method::kManualPending;
    p.note = "empty window";
    return p;
  }
  p.value_text = std::string(s.substr(frag_start, frag_end - frag_start));
  p.value_start = frag_start;
  p.value_end = frag_end;
  const auto tags = tag_tokens(s, frag_start, frag_end, units);
  const bool numeral = std::any_of(tags.begin(), tags.end(), [](const auto& t) { return t.tag == Tag::kNumeral; });
  if (!numeral) {
    p.note = std::string(to_string(p.method)) + " without numeral";
    p.method = Method::kManualPending;
  }
  return p;
}

/// Nearest numeric value after the keyword (up to window_after tokens), then
/// before it (up to window_before tokens), on the keyword's line.
inline ExtractedPair extract_value(const corpus::Document& doc, const KeywordHit& hit,
                                   const ExtractOptions& options = {}) {
  const std::string_view s = doc.text;
  const auto& units = options.unit_table();
  const auto [ls, le] = detail::line_bounds(s, hit.start);
  const auto line_end = std::max(le, hit.end);

  const auto after = detail::tokens_in(s, hit.end, line_end);
  for (std::size_t i = 0; i < after.size() && i < options.window_after; ++i) {
    const auto start = detail::numeric_start(s, after[i].first, after[i].second);
    if (start == std::string_view::npos) continue;
    const auto bounded = s.substr(0, line_end);
    if (auto v = detail::parse_value(bounded, start, units)) return detail::numeric_pair(hit, s, *v);
  }
  const auto before = detail::tokens_in(s, ls, hit.start);
  const auto n_before = std::min(before.size(), options.window_before);
  for (std::size_t i = 0; i < n_before; ++i) {
    const auto& tok = before[before.size() - 1 - i];
    const auto start = detail::numeric_start(s, tok.first, tok.second);
    if (start == std::string_view::npos) continue;
    const auto bounded = s.substr(0, hit.start);
    if (auto v = detail::parse_value(bounded, start, units)) return detail::numeric_pair(hit, s, *v);
  }
  return pattern_fallback(doc, hit, units);
}

inline std::string span_text(const corpus::Document& doc, const ExtractedPair& p) {
  const auto [b, e] = p.span();
  return text::collapse_whitespace(std::string_view(doc.text).substr(b, e - b));
}

inline Annotation annotate(const corpus::Document& doc, const ExtractedPair& p, std::string_view class_name) {
  Annotation a;
  a.doc_id = doc.doc_id;
  a.class_id = p.hit.class_id;
  a.class_name = std::string(class_name);
  a.keyword = p.hit.keyword;
  std::tie(a.start, a.end) = p.span();
  a.text = span_text(doc, p);
  a.value_text = p.value_text;
  a.method = p.method;
  a.numeric = p.numeric;
  a.reason = reason_for(a.text, class_name);
  a.note = p.note;
  return a;
}

struct ExtractionResult {
  std::vector<ExtractedPair> pairs;
  std::vector<Annotation> annotations;
};

inline ExtractionResult extract_information(const ontology::Ontology& o, const corpus::Document& doc,
                                            const ExtractOptions& options = {}) {
  ExtractionResult r;
  const auto hits = find_hits(doc, keywords_by_class(o, options.baseline_text_search));
  for (const auto& hit : hits) {
    const auto* cls = o.find(hit.class_id);
    auto pair = extract_value(doc, hit, options);
    r.annotations.push_back(annotate(doc, pair, cls ? cls->name : hit.class_id));
    r.pairs.push_back(std::move(pair));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Files

inline constexpr const char* kAnnotationFormat = "contron-annotations";

/// Number of UTF-16 code units in s[0, byte_offset), for browser clients.
inline std::size_t utf16_offset(std::string_view s, std::size_t byte_offset) {
  std::size_t units = 0;
  for (std::size_t i = 0; i < byte_offset && i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if ((c & 0xC0) == 0x80) continue;
    units += c >= 0xF0 ? 2 : 1;
  }
  return units;
}

inline nlohmann::ordered_json numeric_json(const std::optional<NumericValue>& n) {
  if (!n) return nullptr;
  return {{"magnitude", n->magnitude},
          {"unit", n->unit},
          {"canonical_unit", n->canonical_unit},
          {"dimension", n->dimension}};
}

inline nlohmann::ordered_json annotations_json(const corpus::Document& doc,
                                               const std::vector<Annotation>& annotations) {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& a : annotations) {
    list.push_back({{"class_id", a.class_id},
                    {"class_name", a.class_name},
                    {"keyword", a.keyword},
                    {"method", to_string(a.method)},
                    {"start", a.start},
                    {"end", a.end},
                    {"utf16_start", utf16_offset(doc.text, a.start)},
                    {"utf16_end", utf16_offset(doc.text, a.end)},
                    {"text", a.text},
                    {"value", a.value_text},
                    {"numeric", numeric_json(a.numeric)},
                    {"reason", a.reason},
                    {"note", a.note}});
  }
  return {{"format", kAnnotationFormat},
          {"version", 1},
          {"doc_id", doc.doc_id},
          {"text_hash", text::hex64(text::fnv1a64(doc.text))},
          {"text", doc.text},
          {"annotations", std::move(list)}};
}

inline std::string dump_annotations(const corpus::Document& doc, const std::vector<Annotation>& annotations) {
  return annotations_json(doc, annotations).dump(2) + "\n";
}

inline constexpr const char* kPairsHeader = "class_id\tkeyword\tvalue\tunit\tdoc_id\tspan_start\tspan_end\tmethod";

namespace detail {
inline std::string tsv_field(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(c == '\t' || c == '\n' || c == '\r' ? ' ' : c);
  return out;
}
}  // namespace detail

/// Pairs export, one row per pair. Tabs and newlines inside values become
/// spaces.
inline std::string pairs_tsv(const std::vector<ExtractedPair>& pairs) {
  std::string out = std::string(kPairsHeader) + "\n";
  for (const auto& p : pairs) {
    const auto [b, e] = p.span();
    out += detail::tsv_field(p.hit.class_id) + '\t' + detail::tsv_field(p.hit.keyword) + '\t' +
           detail::tsv_field(p.value_text) + '\t' + detail::tsv_field(p.numeric ? p.numeric->unit : "") + '\t' +
           detail::tsv_field(p.hit.doc_id) + '\t' + std::to_string(b) + '\t' + std::to_string(e) + '\t' +
           std::string(to_string(p.method)) + "\n";
  }
  return out;
}

struct PairRow {
  std::string class_id;
  std::string keyword;
  std::string value;
  std::string unit;
  std::string doc_id;
  std::size_t span_start = 0;
  std::size_t span_end = 0;
  Method method = Method::kManualPending;
};

inline std::vector<PairRow> parse_pairs_tsv(std::string_view raw, const std::string& origin = "pairs") {
  std::vector<PairRow> rows;
  std::istringstream in{std::string(raw)};
  std::string line;
  int lineno = 0;
  auto bad = [&](const std::string& why) {
    return Error(ErrorCode::kSchemaViolation, origin + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kPairsHeader) throw bad("unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = text::split(line, '\t');
    if (f.size() != 8) throw bad("expected 8 fields");
    PairRow r{f[0], f[1], f[2], f[3], f[4]};
    auto num = [&](const std::string& s) {
      std::size_t v = 0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw bad("bad offset '" + s + "'");
      return v;
    };
    r.span_start = num(f[5]);
    r.span_end = num(f[6]);
    const auto m = parse_method(f[7]);
    if (!m) throw bad("unknown method '" + f[7] + "'");
    r.method = *m;
    rows.push_back(std::move(r));
  }
  if (lineno == 0) throw Error(ErrorCode::kSchemaViolation, origin + ": empty pairs file");
  return rows;
}

}  // namespace contron::ie
