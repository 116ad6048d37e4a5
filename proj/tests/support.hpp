#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "contron/lexicon.hpp"

namespace testing_support {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(CONTRON_FIXTURE_DIR) / rel;
}

/// Fresh scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("contron-test-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// Wu-Palmer computed the slow way: enumerate every hypernym path to a root,
/// take depth as the shortest path (in nodes), collect every ancestor on any
/// path, and pick the deepest shared one.
class BruteForceWup {
 public:
  explicit BruteForceWup(const contron::lexicon::Lexicon& lex) : lex_(lex) {}

  std::vector<std::vector<std::string>> root_paths(const std::string& id) const {
    const auto& s = lex_.at(contron::lexicon::SynsetId::parse(id));
    if (s.hypernyms.empty()) return {{id}};
    std::vector<std::vector<std::string>> out;
    for (const auto& h : s.hypernyms) {
      for (auto p : root_paths(h.str())) {
        p.insert(p.begin(), id);
        out.push_back(std::move(p));
      }
    }
    return out;
  }

  int depth(const std::string& id) const {
    std::size_t best = SIZE_MAX;
    for (const auto& p : root_paths(id)) best = std::min(best, p.size());
    return static_cast<int>(best);
  }

  double operator()(const std::string& a, const std::string& b) const {
    std::set<std::string> anc_a, anc_b;
    for (const auto& p : root_paths(a)) anc_a.insert(p.begin(), p.end());
    for (const auto& p : root_paths(b)) anc_b.insert(p.begin(), p.end());
    int best = 0;
    for (const auto& x : anc_a) {
      if (anc_b.count(x)) best = std::max(best, depth(x));
    }
    if (best == 0) return 0.0;
    return 2.0 * best / static_cast<double>(depth(a) + depth(b));
  }

 private:
  const contron::lexicon::Lexicon& lex_;
};

}  // namespace testing_support
