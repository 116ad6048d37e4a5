#pragma once

// Minimal Turtle / N-Triples reader for ontology class declarations.
//
// Understood: @prefix / PREFIX, @base, IRIs, prefixed names, `a`, string
// literals (with @lang or ^^datatype), predicate lists (`;`) and object lists
// (`,`). Blank nodes and collections are parsed and skipped. Of the triples,
// only rdf:type owl:Class / rdfs:Class, rdfs:label, skos:prefLabel,
// skos:altLabel, rdfs:comment, skos:definition, rdfs:subClassOf (to a named
// class) and owl:imports are used; everything else is reported as skipped.

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "contron/error.hpp"
#include "contron/ontology.hpp"
#include "contron/text.hpp"

namespace contron::ontology {

struct RdfImportResult {
  Ontology ontology;
  std::vector<std::string> skipped;  // one line per skipped predicate kind or construct
};

namespace rdf {

inline constexpr const char* kRdf = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
inline constexpr const char* kRdfs = "http://www.w3.org/2000/01/rdf-schema#";
inline constexpr const char* kOwl = "http://www.w3.org/2002/07/owl#";
inline constexpr const char* kSkos = "http://www.w3.org/2004/02/skos/core#";

struct Term {
  enum Kind { kIri, kLiteral, kBlank } kind = kIri;
  std::string value;
  std::string lang;
};

struct Triple {
  Term s, p, o;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {
    prefixes_["rdf"] = kRdf;
    prefixes_["rdfs"] = kRdfs;
    prefixes_["owl"] = kOwl;
    prefixes_["skos"] = kSkos;
  }

  std::vector<Triple> parse() {
    std::vector<Triple> out;
    for (;;) {
      skip_ws();
      if (eof()) break;
      if (peek() == '@' || starts_with_ci("prefix") || starts_with_ci("base")) {
        directive();
        continue;
      }
      statement(out);
    }
    return out;
  }

  std::size_t skipped_blank_nodes = 0;
  std::size_t skipped_collections = 0;

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos_ && i < src_.size(); ++i) line += src_[i] == '\n';
    throw Error(ErrorCode::kSchemaViolation, "rdf line " + std::to_string(line) + ": " + what);
  }

  bool eof() const { return pos_ >= src_.size(); }
  char peek() const { return eof() ? '\0' : src_[pos_]; }

  bool starts_with_ci(std::string_view kw) const {
    if (src_.size() - pos_ < kw.size() + 1) return false;
    for (std::size_t i = 0; i < kw.size(); ++i) {
      if (text::lower(src_[pos_ + i]) != kw[i]) return false;
    }
    return text::is_space(src_[pos_ + kw.size()]);
  }

  void skip_ws() {
    while (!eof()) {
      if (text::is_space(peek())) {
        ++pos_;
      } else if (peek() == '#') {
        while (!eof() && peek() != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void directive() {
    const bool at = peek() == '@';
    if (at) ++pos_;
    std::string word;
    while (!eof() && std::isalpha(static_cast<unsigned char>(peek()))) word += text::lower(src_[pos_++]);
    skip_ws();
    if (word == "prefix") {
      std::string name;
      while (!eof() && peek() != ':') name += src_[pos_++];
      ++pos_;
      skip_ws();
      prefixes_[std::string(text::trim(name))] = iri_ref();
    } else if (word == "base") {
      base_ = iri_ref();
    } else {
      fail("unknown directive @" + word);
    }
    skip_ws();
    if (at || peek() == '.') expect('.');
  }

  std::string iri_ref() {
    if (peek() != '<') fail("expected IRI");
    ++pos_;
    std::string out;
    while (!eof() && peek() != '>') out += src_[pos_++];
    if (eof()) fail("unterminated IRI");
    ++pos_;
    if (!base_.empty() && out.find(':') == std::string::npos) out = base_ + out;
    return out;
  }

  Term term() {
    skip_ws();
    const char c = peek();
    if (c == '<') return {Term::kIri, iri_ref(), {}};
    if (c == '"' || c == '\'') return literal();
    if (c == '[') {
      skip_nested('[', ']');
      ++skipped_blank_nodes;
      return {Term::kBlank, "[]", {}};
    }
    if (c == '(') {
      skip_nested('(', ')');
      ++skipped_collections;
      return {Term::kBlank, "()", {}};
    }
    if (c == '_' && pos_ + 1 < src_.size() && src_[pos_ + 1] == ':') {
      std::string id;
      while (!eof() && !text::is_space(peek()) && peek() != ';' && peek() != ',' &&
             !(peek() == '.' && (pos_ + 1 >= src_.size() || text::is_space(src_[pos_ + 1])))) {
        id += src_[pos_++];
      }
      return {Term::kBlank, id, {}};
    }
    std::string tok;
    while (!eof() && !text::is_space(peek()) && peek() != ';' && peek() != ',' &&
           peek() != '[' && peek() != ']' && peek() != '(' && peek() != ')') {
      if (peek() == '.' && (pos_ + 1 >= src_.size() || text::is_space(src_[pos_ + 1]) ||
                            src_[pos_ + 1] == '#')) {
        break;
      }
      tok += src_[pos_++];
    }
    if (tok.empty()) fail("expected a term");
    if (tok == "a") return {Term::kIri, std::string(kRdf) + "type", {}};
    if (tok == "true" || tok == "false" ||
        std::isdigit(static_cast<unsigned char>(tok[0])) || tok[0] == '-' || tok[0] == '+') {
      return {Term::kLiteral, tok, {}};
    }
    const auto colon = tok.find(':');
    if (colon == std::string::npos) fail("unexpected token '" + tok + "'");
    const auto it = prefixes_.find(tok.substr(0, colon));
    if (it == prefixes_.end()) fail("undeclared prefix in '" + tok + "'");
    return {Term::kIri, it->second + tok.substr(colon + 1), {}};
  }

  Term literal() {
    const char q = peek();
    const bool triple = src_.substr(pos_, 3) == std::string(3, q);
    pos_ += triple ? 3 : 1;
    std::string out;
    for (;;) {
      if (eof()) fail("unterminated literal");
      if (triple ? src_.substr(pos_, 3) == std::string(3, q) : peek() == q) {
        pos_ += triple ? 3 : 1;
        break;
      }
      char c = src_[pos_++];
      if (c == '\\' && !eof()) {
        const char e = src_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case 'r': c = '\r'; break;
          default: c = e; break;
        }
      }
      out += c;
    }
    Term t{Term::kLiteral, std::move(out), {}};
    if (peek() == '@') {
      ++pos_;
      while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '-')) {
        t.lang += text::lower(src_[pos_++]);
      }
    } else if (src_.substr(pos_, 2) == "^^") {
      pos_ += 2;
      term();  // datatype is irrelevant here
    }
    return t;
  }

  void skip_nested(char open, char close) {
    int level = 0;
    do {
      if (eof()) fail(std::string("unbalanced '") + open + "'");
      const char c = src_[pos_];
      if (c == '"' || c == '\'') {
        literal();
        continue;
      }
      if (c == open) ++level;
      if (c == close) --level;
      ++pos_;
    } while (level > 0);
  }

  void statement(std::vector<Triple>& out) {
    const Term s = term();
    for (;;) {
      const Term p = term();
      for (;;) {
        out.push_back({s, p, term()});
        skip_ws();
        if (peek() != ',') break;
        ++pos_;
      }
      skip_ws();
      if (peek() != ';') break;
      while (peek() == ';') {
        ++pos_;
        skip_ws();
      }
      if (peek() == '.') break;
    }
    expect('.');
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::string base_;
  std::map<std::string, std::string> prefixes_;
};

inline std::string local_name(const std::string& iri) {
  const auto cut = iri.find_last_of("#/");
  return cut == std::string::npos ? iri : iri.substr(cut + 1);
}

inline std::string namespace_of(const std::string& iri) {
  const auto cut = iri.find_last_of("#/");
  return cut == std::string::npos ? std::string() : iri.substr(0, cut + 1);
}

/// "HardwareInterface" -> "Hardware Interface".
inline std::string humanize(const std::string& id) {
  std::string out;
  for (std::size_t i = 0; i < id.size(); ++i) {
    const char c = id[i];
    if (c == '_' || c == '-') {
      out += ' ';
      continue;
    }
    if (i > 0 && text::is_upper(c) && !text::is_upper(id[i - 1]) && id[i - 1] != '_' &&
        id[i - 1] != '-') {
      out += ' ';
    }
    out += c;
  }
  return text::collapse_whitespace(out);
}

}  // namespace rdf

/// Builds an ontology from a Turtle document. Classes whose IRI lives in
/// `base_namespace` are intrinsic; others are kept as imported classes with a
/// "<prefix>:" style id derived from their namespace's last path segment.
/// When `base_namespace` is empty the namespace of the first declared class
/// is used.
inline RdfImportResult import_turtle(std::string_view turtle, const std::string& ontology_id,
                                     std::string base_namespace = {}) {
  using rdf::Term;
  rdf::Parser parser(turtle);
  const auto triples = parser.parse();
  const std::string type = std::string(rdf::kRdf) + "type";
  const std::set<std::string> class_types{std::string(rdf::kOwl) + "Class",
                                          std::string(rdf::kRdfs) + "Class"};

  std::vector<std::string> order;
  std::set<std::string> is_class;
  for (const auto& t : triples) {
    if (t.s.kind == Term::kIri && t.p.value == type && class_types.contains(t.o.value) &&
        is_class.insert(t.s.value).second) {
      order.push_back(t.s.value);
    }
  }
  if (base_namespace.empty() && !order.empty()) base_namespace = rdf::namespace_of(order.front());

  std::map<std::string, std::string> import_alias;  // namespace -> import id
  auto id_of = [&](const std::string& iri) {
    const auto ns = rdf::namespace_of(iri);
    if (ns == base_namespace) return rdf::local_name(iri);
    auto it = import_alias.find(ns);
    if (it == import_alias.end()) {
      auto trimmed = ns;
      while (!trimmed.empty() && (trimmed.back() == '#' || trimmed.back() == '/')) {
        trimmed.pop_back();
      }
      auto alias = rdf::local_name(trimmed);
      if (alias.empty()) alias = "ext";
      it = import_alias.emplace(ns, alias).first;
    }
    return it->second + ":" + rdf::local_name(iri);
  };

  RdfImportResult result;
  auto& o = result.ontology;
  o.ontology_id = ontology_id;
  std::map<std::string, std::size_t> index;
  for (const auto& iri : order) {
    OntologyClass c;
    c.class_id = id_of(iri);
    c.intrinsic = rdf::namespace_of(iri) == base_namespace;
    index[iri] = o.classes.size();
    o.classes.push_back(std::move(c));
  }

  std::map<std::string, std::size_t> skipped;
  std::map<std::size_t, std::string> preferred_name;
  auto english = [](const Term& t) { return t.lang.empty() || t.lang == "en" || t.lang.rfind("en-", 0) == 0; };
  for (const auto& t : triples) {
    const auto& p = t.p.value;
    if (p == std::string(rdf::kOwl) + "imports") {
      if (t.o.kind == Term::kIri) {
        auto trimmed = t.o.value;
        while (!trimmed.empty() && (trimmed.back() == '#' || trimmed.back() == '/')) trimmed.pop_back();
        const auto id = rdf::local_name(trimmed);
        if (std::find(o.imports.begin(), o.imports.end(), id) == o.imports.end()) o.imports.push_back(id);
      }
      continue;
    }
    const auto it = index.find(t.s.value);
    if (it == index.end()) {
      if (!(p == type && t.o.value == std::string(rdf::kOwl) + "Ontology")) ++skipped[rdf::local_name(p)];
      continue;
    }
    auto& c = o.classes[it->second];
    if (p == type) {
      if (!class_types.contains(t.o.value)) ++skipped["type " + rdf::local_name(t.o.value)];
    } else if (p == std::string(rdf::kRdfs) + "label" || p == std::string(rdf::kSkos) + "prefLabel") {
      if (t.o.kind != Term::kLiteral || !english(t.o)) {
        ++skipped["non-English label"];
        continue;
      }
      if (!preferred_name.contains(it->second)) preferred_name[it->second] = t.o.value;
      if (!detail::contains_ci(c.labels, t.o.value)) c.labels.push_back(t.o.value);
    } else if (p == std::string(rdf::kSkos) + "altLabel") {
      if (t.o.kind == Term::kLiteral && english(t.o) && !detail::contains_ci(c.alt_labels, t.o.value)) {
        c.alt_labels.push_back(t.o.value);
      }
    } else if (p == std::string(rdf::kRdfs) + "comment" || p == std::string(rdf::kSkos) + "definition") {
      if (t.o.kind == Term::kLiteral && english(t.o) && !c.description) c.description = t.o.value;
    } else if (p == std::string(rdf::kRdfs) + "subClassOf") {
      if (t.o.kind != Term::kIri) {
        ++skipped["subClassOf restriction"];
      } else if (!c.parent) {
        c.parent = id_of(t.o.value);
        const auto ns = rdf::namespace_of(t.o.value);
        if (ns != base_namespace && !index.contains(t.o.value)) {
          const auto alias = import_alias.at(ns);
          if (std::find(o.imports.begin(), o.imports.end(), alias) == o.imports.end()) {
            o.imports.push_back(alias);
          }
        }
      }
    } else {
      ++skipped[rdf::local_name(p)];
    }
  }
  for (std::size_t i = 0; i < o.classes.size(); ++i) {
    auto& c = o.classes[i];
    const auto named = preferred_name.find(i);
    c.name = named != preferred_name.end() ? named->second
                                           : rdf::humanize(rdf::local_name(order[i]));
    // The name itself is not repeated among the labels.
    c.labels.erase(std::remove_if(c.labels.begin(), c.labels.end(),
                                  [&](const auto& l) { return l == c.name; }),
                   c.labels.end());
  }
  for (const auto& [what, n] : skipped) result.skipped.push_back(what + " x" + std::to_string(n));
  if (parser.skipped_blank_nodes) {
    result.skipped.push_back("blank node x" + std::to_string(parser.skipped_blank_nodes));
  }
  if (parser.skipped_collections) {
    result.skipped.push_back("collection x" + std::to_string(parser.skipped_collections));
  }
  validate(o);
  return result;
}

}  // namespace contron::ontology
