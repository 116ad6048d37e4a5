#pragma once

#include <concepts>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <sys/wait.h>

#include "contron/error.hpp"
#include "contron/text.hpp"

namespace contron::corpus {

/// Separator joining the words of a multiword lemma ("magnetic_field").
inline constexpr char kNgramSeparator = '_';
inline constexpr int kDefaultMaxArity = 3;

struct Document {
  std::string doc_id;
  std::filesystem::path source_path;
  std::string text;
  std::optional<std::string> category;
};

struct Term {
  std::string surface;  // space-joined lowercase words
  std::string lemma;    // separator-joined lowercase words
  int arity = 1;

  static Term from_lemma(std::string lemma) {
    Term t;
    t.surface = text::replace_all(lemma, kNgramSeparator, ' ');
    t.arity = 1;
    for (char c : lemma) t.arity += (c == kNgramSeparator);
    t.lemma = std::move(lemma);
    return t;
  }

  friend auto operator<=>(const Term& a, const Term& b) {
    return a.lemma <=> b.lemma;
  }
  friend bool operator==(const Term& a, const Term& b) {
    return a.lemma == b.lemma;
  }
};

inline int arity_of(std::string_view lemma) {
  int n = 1;
  for (char c : lemma) n += (c == kNgramSeparator);
  return n;
}

struct BagOfWords {
  std::string doc_id;
  std::map<std::string, std::size_t> counts;  // lemma -> occurrences
  std::size_t token_count = 0;                // whitespace tokens in the text

  std::size_t count(std::string_view lemma) const {
    const auto it = counts.find(std::string(lemma));
    return it == counts.end() ? 0 : it->second;
  }
  std::size_t unigram_total() const {
    std::size_t n = 0;
    for (const auto& [lemma, c] : counts) {
      if (arity_of(lemma) == 1) n += c;
    }
    return n;
  }
};

struct TermStats {
  std::size_t document_frequency = 0;
  std::size_t total_frequency = 0;
};

struct CorpusStats {
  std::size_t document_count = 0;
  std::map<std::string, TermStats> terms;  // lexicographic by lemma

  std::size_t df(std::string_view lemma) const {
    const auto it = terms.find(std::string(lemma));
    return it == terms.end() ? 0 : it->second.document_frequency;
  }
};

struct IngestOptions {
  /// Command line with an `{input}` placeholder; its stdout is the text.
  std::optional<std::string> converter;
};

namespace detail {

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    if (c < 0x80) len = 1;
    else if ((c >> 5) == 0x6) len = 2;
    else if ((c >> 4) == 0xE) len = 3;
    else if ((c >> 3) == 0x1E) len = 4;
    else return false;
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    }
    i += len;
  }
  return true;
}

inline std::string normalize_line_endings(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

inline std::string run_converter(const std::string& templ,
                                 const std::filesystem::path& input) {
  std::string cmd = templ;
  const std::string placeholder = "{input}";
  const auto quoted = shell_quote(input.string());
  for (auto pos = cmd.find(placeholder); pos != std::string::npos;
       pos = cmd.find(placeholder, pos + quoted.size())) {
    cmd.replace(pos, placeholder.size(), quoted);
  }
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    throw Error(ErrorCode::kConverterFailure, "cannot start: " + cmd);
  }
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::kConverterFailure,
                "converter exited with failure for " + input.string());
  }
  return out;
}

struct Chunk {
  std::string word;       // lowercased, punctuation-stripped
  bool joined_to_prev;    // only whitespace separates it from the previous one
};

inline std::vector<Chunk> chunks_of(std::string_view body) {
  std::vector<Chunk> out;
  bool prev_trailing_break = true;
  for (const auto& raw : text::split_whitespace(body)) {
    std::size_t b = 0, e = raw.size();
    while (b < e && !text::is_word_byte(raw[b])) ++b;
    while (e > b && !text::is_word_byte(raw[e - 1])) --e;
    if (b == e) {
      prev_trailing_break = true;
      continue;
    }
    std::string word =
        text::replace_all(text::to_lower(std::string_view(raw).substr(b, e - b)),
                          kNgramSeparator, '-');
    out.push_back({std::move(word), !prev_trailing_break && b == 0});
    prev_trailing_break = e != raw.size();
  }
  return out;
}

inline std::size_t codepoints(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) n += (static_cast<unsigned char>(c) >> 6) != 0x2;
  return n;
}

}  // namespace detail

/// Reads one data sheet. PDF inputs go through the configured converter.
inline Document ingest(const std::filesystem::path& path,
                       std::optional<std::string> category = std::nullopt,
                       const IngestOptions& options = {}) {
  std::string raw;
  const auto ext = text::to_lower(path.extension().string());
  if (ext == ".pdf") {
    if (!options.converter) {
      throw Error(ErrorCode::kConverterFailure,
                  "no converter configured for " + path.string());
    }
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::kIo, "cannot read " + path.string());
    }
    raw = detail::run_converter(*options.converter, path);
  } else {
    raw = text::read_file(path);
  }
  if (!detail::valid_utf8(raw)) {
    throw Error(ErrorCode::kIo, path.string() + " is not valid UTF-8");
  }
  Document doc;
  doc.doc_id = path.stem().string();
  doc.source_path = path;
  doc.text = detail::normalize_line_endings(raw);
  doc.category = std::move(category);
  if (text::trim(doc.text).empty()) {
    throw Error(ErrorCode::kEmptyDocument, path.string());
  }
  return doc;
}

template <class T>
concept MultiwordTest = std::predicate<const T&, std::string_view>;

inline constexpr auto kNoMultiwords = [](std::string_view) { return false; };

/// Bag of lowercased unigrams plus lexicon-recognized n-grams.
///
/// Unigrams drop stop words, tokens without any letter and tokens shorter
/// than two characters. N-grams (2..max_arity) never span punctuation and are
/// counted only when `is_multiword` accepts the separator-joined form; their
/// constituent unigrams are counted as well.
template <MultiwordTest Test>
BagOfWords tokenize(const Document& doc, int max_arity, const Test& is_multiword,
                    const std::unordered_set<std::string>& stop_words =
                        text::default_stop_words()) {
  if (max_arity < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_arity must be >= 1");
  }
  BagOfWords bag;
  bag.doc_id = doc.doc_id;
  bag.token_count = text::count_whitespace_tokens(doc.text);

  const auto chunks = detail::chunks_of(doc.text);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& w = chunks[i].word;
    bool has_letter = false;
    for (char c : w) has_letter = has_letter || text::is_ascii_alpha(c);
    if (has_letter && detail::codepoints(w) >= 2 && !stop_words.contains(w)) {
      ++bag.counts[w];
    }
    std::string joined = w;
    for (int n = 2; n <= max_arity && i + n - 1 < chunks.size(); ++n) {
      const auto& next = chunks[i + static_cast<std::size_t>(n) - 1];
      if (!next.joined_to_prev) break;
      joined.push_back(kNgramSeparator);
      joined += next.word;
      if (is_multiword(std::string_view(joined))) ++bag.counts[joined];
    }
  }
  return bag;
}

inline BagOfWords tokenize(const Document& doc, int max_arity = kDefaultMaxArity) {
  return tokenize(doc, max_arity, kNoMultiwords);
}

/// Document and total frequencies; independent of the order of `bags`.
inline CorpusStats corpus_stats(const std::vector<BagOfWords>& bags) {
  if (bags.empty()) throw Error(ErrorCode::kEmptyCorpus, "no documents");
  CorpusStats stats;
  stats.document_count = bags.size();
  for (const auto& bag : bags) {
    for (const auto& [lemma, count] : bag.counts) {
      auto& t = stats.terms[lemma];
      ++t.document_frequency;
      t.total_frequency += count;
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Corpus manifest: one record per line, tab separated
//   doc_id <TAB> path [<TAB> category]
// Blank lines and lines starting with '#' are ignored. Relative paths are
// resolved against the manifest's directory.

struct ManifestEntry {
  std::string doc_id;
  std::filesystem::path path;
  std::optional<std::string> category;
};

inline std::vector<ManifestEntry> read_manifest(
    const std::filesystem::path& manifest) {
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::istringstream in(text::read_file(manifest));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto fields = text::split(t, '\t');
    if (fields.size() < 2 || fields.size() > 3 ||
        text::trim(fields[0]).empty() || text::trim(fields[1]).empty()) {
      throw Error(ErrorCode::kSchemaViolation,
                  manifest.string() + ":" + std::to_string(lineno) +
                      ": expected doc_id<TAB>path[<TAB>category]");
    }
    ManifestEntry e;
    e.doc_id = std::string(text::trim(fields[0]));
    e.path = std::string(text::trim(fields[1]));
    if (e.path.is_relative()) e.path = manifest.parent_path() / e.path;
    if (fields.size() == 3 && !text::trim(fields[2]).empty()) {
      e.category = std::string(text::trim(fields[2]));
    }
    if (!seen.insert(e.doc_id).second) {
      throw Error(ErrorCode::kSchemaViolation,
                  manifest.string() + ":" + std::to_string(lineno) +
                      ": duplicate doc_id " + e.doc_id);
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<Document> load_corpus(const std::filesystem::path& manifest,
                                         const IngestOptions& options = {}) {
  std::vector<Document> docs;
  for (const auto& e : read_manifest(manifest)) {
    auto doc = ingest(e.path, e.category, options);
    doc.doc_id = e.doc_id;
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace contron::corpus
