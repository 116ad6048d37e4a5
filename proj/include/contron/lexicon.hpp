#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "contron/error.hpp"
#include "contron/text.hpp"

namespace contron::lexicon {

enum class Pos : char {
  kNoun = 'n',
  kVerb = 'v',
  kAdjective = 'a',
  kSatellite = 's',
  kAdverb = 'r',
};

inline std::optional<Pos> parse_pos(char c) {
  switch (c) {
    case 'n': return Pos::kNoun;
    case 'v': return Pos::kVerb;
    case 'a': return Pos::kAdjective;
    case 's': return Pos::kSatellite;
    case 'r': return Pos::kAdverb;
    default: return std::nullopt;
  }
}

/// Canonical "lemma.pos.nn" key, e.g. "outer_space.n.01".
class SynsetId {
 public:
  SynsetId() = default;

  static SynsetId parse(std::string_view s) {
    SynsetId id;
    if (!id.assign(s)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "malformed synset id '" + std::string(s) + "'");
    }
    return id;
  }

  static std::optional<SynsetId> try_parse(std::string_view s) {
    SynsetId id;
    if (!id.assign(s)) return std::nullopt;
    return id;
  }

  static SynsetId make(std::string_view lemma, Pos pos, int sense) {
    char buf[16];
    std::snprintf(buf, sizeof buf, ".%c.%02d", static_cast<char>(pos), sense);
    return parse(std::string(lemma) + buf);
  }

  const std::string& str() const { return value_; }
  std::string_view lemma() const {
    return std::string_view(value_).substr(0, lemma_len_);
  }
  Pos pos() const { return pos_; }
  int sense() const { return sense_; }
  bool empty() const { return value_.empty(); }

  friend bool operator==(const SynsetId& a, const SynsetId& b) {
    return a.value_ == b.value_;
  }
  friend auto operator<=>(const SynsetId& a, const SynsetId& b) {
    return a.value_ <=> b.value_;
  }

 private:
  bool assign(std::string_view s) {
    const auto last = s.rfind('.');
    if (last == std::string_view::npos || last == 0) return false;
    const auto mid = s.rfind('.', last - 1);
    if (mid == std::string_view::npos || mid == 0 || last - mid != 2) {
      return false;
    }
    const auto pos = parse_pos(s[mid + 1]);
    if (!pos) return false;
    const auto num = s.substr(last + 1);
    int sense = 0;
    const auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), sense);
    if (ec != std::errc() || p != num.data() + num.size() || sense < 1) {
      return false;
    }
    value_ = std::string(s);
    lemma_len_ = mid;
    pos_ = *pos;
    sense_ = sense;
    return true;
  }

  std::string value_;
  std::size_t lemma_len_ = 0;
  Pos pos_ = Pos::kNoun;
  int sense_ = 0;
};

struct Synset {
  SynsetId id;
  std::string gloss;
  std::vector<std::string> lemmas;     // member words, lowercase
  std::vector<SynsetId> hypernyms;     // includes instance hypernyms
  int depth = 1;                       // root = 1, min over root paths

  Pos pos() const { return id.pos(); }
};

class Lexicon {
 public:
  /// lemma -> synsets in sense order; when empty it is derived from member
  /// order of `synsets`.
  using SenseIndex = std::vector<std::pair<std::string, std::vector<SynsetId>>>;

  static Lexicon build(std::vector<Synset> synsets, const SenseIndex& senses = {});

  /// Reads a WordNet-style `dict/` directory (index.<pos> + data.<pos>).
  static Lexicon load(const std::filesystem::path& dir);

  std::size_t size() const { return synsets_.size(); }
  const std::vector<Synset>& all() const { return synsets_; }

  const Synset* find(const SynsetId& id) const {
    const auto it = by_id_.find(id.str());
    return it == by_id_.end() ? nullptr : &synsets_[it->second];
  }
  const Synset& at(const SynsetId& id) const {
    const auto* s = find(id);
    if (!s) throw Error(ErrorCode::kInvalidArgument, "unknown synset " + id.str());
    return *s;
  }

  /// Synsets of a normalized lemma (lowercase, '_'-joined), in database
  /// order: nouns, verbs, adjectives (incl. satellites), adverbs.
  std::vector<const Synset*> synsets_of(std::string_view lemma,
                                        std::optional<Pos> pos = std::nullopt) const {
    std::vector<const Synset*> out;
    const auto it = by_lemma_.find(std::string(lemma));
    if (it == by_lemma_.end()) return out;
    for (auto idx : it->second) {
      const auto& s = synsets_[idx];
      if (pos) {
        const bool adj_family = (*pos == Pos::kAdjective || *pos == Pos::kSatellite) &&
                                (s.pos() == Pos::kAdjective || s.pos() == Pos::kSatellite);
        if (s.pos() != *pos && !adj_family) continue;
      }
      out.push_back(&s);
    }
    return out;
  }

  bool contains(std::string_view lemma) const {
    return by_lemma_.contains(std::string(lemma));
  }

  /// True when `joined` is a '_'-joined multiword entry of the database.
  bool is_multiword(std::string_view joined) const {
    return joined.find('_') != std::string_view::npos && contains(joined);
  }

  /// Deepest common ancestor (ties: smallest id), or nullptr when the two
  /// synsets live in disconnected taxonomies.
  const Synset* lowest_common_subsumer(const Synset& a, const Synset& b) const {
    const auto anc_a = ancestors(index_of(a));
    const auto anc_b = ancestors(index_of(b));
    const Synset* best = nullptr;
    for (auto idx : anc_a) {
      if (!anc_b.contains(idx)) continue;
      const auto& c = synsets_[idx];
      if (!best || c.depth > best->depth ||
          (c.depth == best->depth && c.id < best->id)) {
        best = &c;
      }
    }
    return best;
  }

  /// Wu-Palmer: 2*depth(lcs) / (depth(a) + depth(b)); 0 when disconnected.
  double wup_similarity(const Synset& a, const Synset& b) const {
    const auto* lcs = lowest_common_subsumer(a, b);
    if (!lcs) return 0.0;
    return 2.0 * lcs->depth / static_cast<double>(a.depth + b.depth);
  }

  /// Member lemmas of every sense of `lemma` plus the lemmas of their direct
  /// hypernyms, first-seen order, without `lemma` itself.
  std::vector<std::string> synonyms_and_related(std::string_view lemma) const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen{std::string(lemma)};
    auto add = [&](const std::string& w) {
      if (seen.insert(w).second) out.push_back(w);
    };
    const auto senses = synsets_of(lemma);
    for (const auto* s : senses) {
      for (const auto& w : s->lemmas) add(w);
    }
    for (const auto* s : senses) {
      for (const auto& h : s->hypernyms) {
        if (const auto* hs = find(h)) {
          for (const auto& w : hs->lemmas) add(w);
        }
      }
    }
    return out;
  }

  const std::vector<std::size_t>& hypernym_indices(std::size_t idx) const {
    return hypernym_idx_[idx];
  }
  std::size_t index_of(const Synset& s) const {
    return static_cast<std::size_t>(&s - synsets_.data());
  }

 private:
  std::unordered_set<std::size_t> ancestors(std::size_t start) const {
    std::unordered_set<std::size_t> seen{start};
    std::vector<std::size_t> stack{start};
    while (!stack.empty()) {
      const auto cur = stack.back();
      stack.pop_back();
      for (auto h : hypernym_idx_[cur]) {
        if (seen.insert(h).second) stack.push_back(h);
      }
    }
    return seen;
  }

  void compute_depths();

  std::vector<Synset> synsets_;
  std::vector<std::vector<std::size_t>> hypernym_idx_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_lemma_;
};

inline void Lexicon::compute_depths() {
  // Iterative DFS so deep taxonomies never exhaust the call stack. A node on
  // the current path (cycle) is treated as a root for the back edge.
  constexpr int kUnknown = 0, kVisiting = -1;
  std::vector<int> depth(synsets_.size(), kUnknown);
  for (std::size_t root = 0; root < synsets_.size(); ++root) {
    if (depth[root] != kUnknown) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    depth[root] = kVisiting;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& hyps = hypernym_idx_[node];
      if (next < hyps.size()) {
        const auto h = hyps[next++];
        if (depth[h] == kUnknown) {
          depth[h] = kVisiting;
          stack.emplace_back(h, 0);
        }
        continue;
      }
      int best = 0;
      for (auto h : hyps) {
        if (depth[h] > 0 && (best == 0 || depth[h] < best)) best = depth[h];
      }
      depth[node] = best + 1;
      stack.pop_back();
    }
  }
  for (std::size_t i = 0; i < synsets_.size(); ++i) synsets_[i].depth = depth[i];
}

inline Lexicon Lexicon::build(std::vector<Synset> synsets, const SenseIndex& senses) {
  Lexicon lex;
  lex.synsets_ = std::move(synsets);
  for (std::size_t i = 0; i < lex.synsets_.size(); ++i) {
    if (!lex.by_id_.emplace(lex.synsets_[i].id.str(), i).second) {
      throw Error(ErrorCode::kCorruptDatabase,
                  "duplicate synset id " + lex.synsets_[i].id.str());
    }
  }
  lex.hypernym_idx_.resize(lex.synsets_.size());
  for (std::size_t i = 0; i < lex.synsets_.size(); ++i) {
    for (const auto& h : lex.synsets_[i].hypernyms) {
      const auto it = lex.by_id_.find(h.str());
      if (it == lex.by_id_.end()) {
        throw Error(ErrorCode::kCorruptDatabase,
                    lex.synsets_[i].id.str() + " points to unknown " + h.str());
      }
      lex.hypernym_idx_[i].push_back(it->second);
    }
  }
  auto pos_rank = [](Pos p) {
    switch (p) {
      case Pos::kNoun: return 0;
      case Pos::kVerb: return 1;
      case Pos::kAdjective:
      case Pos::kSatellite: return 2;
      case Pos::kAdverb: return 3;
    }
    return 4;
  };
  if (senses.empty()) {
    for (std::size_t i = 0; i < lex.synsets_.size(); ++i) {
      for (const auto& w : lex.synsets_[i].lemmas) lex.by_lemma_[w].push_back(i);
    }
  } else {
    for (const auto& [lemma, ids] : senses) {
      auto& list = lex.by_lemma_[lemma];
      for (const auto& id : ids) {
        const auto it = lex.by_id_.find(id.str());
        if (it == lex.by_id_.end()) {
          throw Error(ErrorCode::kCorruptDatabase,
                      "index entry '" + lemma + "' points to unknown " + id.str());
        }
        list.push_back(it->second);
      }
    }
  }
  for (auto& [lemma, list] : lex.by_lemma_) {
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return pos_rank(lex.synsets_[a].pos()) < pos_rank(lex.synsets_[b].pos());
    });
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  lex.compute_depths();
  return lex;
}

namespace detail {

struct RawSynset {
  char pos;  // file-level pos: n, v, a, s, r
  std::string gloss;
  std::vector<std::string> words;
  std::vector<std::pair<char, long>> hypernyms;  // (pos, offset)
};

inline char file_pos(char p) { return p == 's' ? 'a' : p; }

inline std::string strip_adjective_marker(std::string w) {
  if (!w.empty() && w.back() == ')') {
    const auto open = w.rfind('(');
    if (open != std::string::npos) w.erase(open);
  }
  return text::to_lower(w);
}

inline long parse_offset(const std::string& s, const std::string& where) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::kCorruptDatabase, where + ": bad offset '" + s + "'");
  }
  return v;
}

inline std::size_t parse_count(const std::string& s, int base, const std::string& where) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::kCorruptDatabase, where + ": bad count '" + s + "'");
  }
  return v;
}

inline void parse_data_file(const std::filesystem::path& path,
                            std::map<std::pair<char, long>, RawSynset>& out) {
  std::istringstream in(text::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == ' ') continue;  // license header
    const std::string where = path.filename().string() + ":" + std::to_string(lineno);
    const auto bar = line.find(" | ");
    const auto head = text::split_whitespace(line.substr(0, bar));
    if (head.size() < 6) throw Error(ErrorCode::kCorruptDatabase, where);
    RawSynset rs;
    const long offset = parse_offset(head[0], where);
    rs.pos = head[2].empty() ? '?' : head[2][0];
    if (!parse_pos(rs.pos)) throw Error(ErrorCode::kCorruptDatabase, where + ": pos");
    std::size_t i = 3;
    const auto w_cnt = parse_count(head[i++], 16, where);
    for (std::size_t k = 0; k < w_cnt; ++k) {
      if (i + 1 >= head.size()) throw Error(ErrorCode::kCorruptDatabase, where + ": words");
      rs.words.push_back(strip_adjective_marker(head[i]));
      i += 2;
    }
    if (i >= head.size()) throw Error(ErrorCode::kCorruptDatabase, where + ": p_cnt");
    const auto p_cnt = parse_count(head[i++], 10, where);
    for (std::size_t k = 0; k < p_cnt; ++k) {
      if (i + 3 >= head.size()) throw Error(ErrorCode::kCorruptDatabase, where + ": pointers");
      const auto& sym = head[i];
      if (sym == "@" || sym == "@i") {
        rs.hypernyms.emplace_back(head[i + 2][0], parse_offset(head[i + 1], where));
      }
      i += 4;
    }
    if (bar != std::string::npos) {
      rs.gloss = std::string(text::trim(std::string_view(line).substr(bar + 3)));
    }
    out[{file_pos(rs.pos), offset}] = std::move(rs);
  }
}

}  // namespace detail

inline Lexicon Lexicon::load(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  static constexpr std::pair<const char*, char> kFiles[] = {
      {"noun", 'n'}, {"verb", 'v'}, {"adj", 'a'}, {"adv", 'r'}};
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::kMissingDatabase, dir.string() + " is not a directory");
  }
  std::map<std::pair<char, long>, detail::RawSynset> raw;
  // index lines in file order: lemma, file pos, offsets
  std::vector<std::tuple<std::string, char, std::vector<long>>> index;
  bool any = false;
  for (const auto& [suffix, pos] : kFiles) {
    const auto data = dir / (std::string("data.") + suffix);
    const auto idx = dir / (std::string("index.") + suffix);
    const bool has_data = fs::exists(data), has_idx = fs::exists(idx);
    if (!has_data && !has_idx) continue;
    if (has_data != has_idx) {
      throw Error(ErrorCode::kMissingDatabase,
                  "incomplete pair for '" + std::string(suffix) + "' in " + dir.string());
    }
    any = true;
    detail::parse_data_file(data, raw);
    std::istringstream in(text::read_file(idx));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == ' ') continue;
      const std::string where = idx.filename().string() + ":" + std::to_string(lineno);
      const auto f = text::split_whitespace(line);
      if (f.size() < 4) throw Error(ErrorCode::kCorruptDatabase, where);
      const auto synset_cnt = detail::parse_count(f[2], 10, where);
      const auto p_cnt = detail::parse_count(f[3], 10, where);
      const std::size_t first = 4 + p_cnt + 2;
      if (f.size() < first + synset_cnt) throw Error(ErrorCode::kCorruptDatabase, where);
      std::vector<long> offsets;
      for (std::size_t k = 0; k < synset_cnt; ++k) {
        offsets.push_back(detail::parse_offset(f[first + k], where));
      }
      index.emplace_back(text::to_lower(f[0]), pos, std::move(offsets));
    }
  }
  if (!any) {
    throw Error(ErrorCode::kMissingDatabase, "no index/data files in " + dir.string());
  }

  // Canonical names: first member lemma + pos + rank of this synset among
  // that lemma's senses.
  std::map<std::pair<std::string, char>, const std::vector<long>*> index_lookup;
  for (const auto& [lemma, pos, offsets] : index) index_lookup[{lemma, pos}] = &offsets;

  std::map<std::pair<char, long>, SynsetId> ids;
  std::unordered_set<std::string> used;
  for (const auto& [key, rs] : raw) {
    if (rs.words.empty()) continue;
    const auto& lemma = rs.words.front();
    int sense = 0;
    if (const auto it = index_lookup.find({lemma, key.first}); it != index_lookup.end()) {
      const auto& offs = *it->second;
      const auto pos_it = std::find(offs.begin(), offs.end(), key.second);
      if (pos_it != offs.end()) sense = static_cast<int>(pos_it - offs.begin()) + 1;
    }
    if (sense == 0) {
      // lemma missing from the index: next free sense number
      sense = 1;
      while (used.contains(SynsetId::make(lemma, *parse_pos(rs.pos), sense).str())) ++sense;
    }
    auto id = SynsetId::make(lemma, *parse_pos(rs.pos), sense);
    used.insert(id.str());
    ids.emplace(key, std::move(id));
  }

  std::vector<Synset> synsets;
  synsets.reserve(raw.size());
  for (const auto& [key, rs] : raw) {
    if (rs.words.empty()) continue;
    Synset s;
    s.id = ids.at(key);
    s.gloss = rs.gloss;
    s.lemmas = rs.words;
    for (const auto& [hpos, hoff] : rs.hypernyms) {
      const auto it = ids.find({detail::file_pos(hpos), hoff});
      if (it == ids.end()) {
        throw Error(ErrorCode::kCorruptDatabase,
                    s.id.str() + ": dangling hypernym offset " + std::to_string(hoff));
      }
      s.hypernyms.push_back(it->second);
    }
    synsets.push_back(std::move(s));
  }

  SenseIndex senses;
  senses.reserve(index.size());
  for (const auto& [lemma, pos, offsets] : index) {
    std::vector<SynsetId> list;
    for (long off : offsets) {
      const auto it = ids.find({pos, off});
      if (it == ids.end()) {
        throw Error(ErrorCode::kCorruptDatabase,
                    "index entry '" + lemma + "' points to missing offset " +
                        std::to_string(off));
      }
      list.push_back(it->second);
    }
    // the same lemma may appear in several index files; merge them
    if (!senses.empty() && senses.back().first == lemma) {
      senses.back().second.insert(senses.back().second.end(), list.begin(), list.end());
    } else {
      senses.emplace_back(lemma, std::move(list));
    }
  }
  return build(std::move(synsets), senses);
}

}  // namespace contron::lexicon
