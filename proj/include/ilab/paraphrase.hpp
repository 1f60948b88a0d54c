#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ilab/error.hpp"
#include "ilab/matrix.hpp"

namespace ilab {

// Text in, up to n paraphrases out. Implementations must be deterministic
// for a given (text, n, seed) and safe to call from several threads.
class ParaphraseProvider {
 public:
  virtual ~ParaphraseProvider() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  virtual std::vector<std::string> paraphrase(const std::string& text, std::size_t n, std::uint64_t seed) const = 0;
};

class EchoProvider final : public ParaphraseProvider {
 public:
  [[nodiscard]] std::string name() const override { return "echo"; }
  std::vector<std::string> paraphrase(const std::string& text, std::size_t n, std::uint64_t) const override {
    return std::vector<std::string>(n, text);
  }
};

// Word-level substitution from a lexicon. Each lexicon line reads
//   word: alt1, alt2, ...
// Matching is on the lower-cased token; '#' starts a comment.
class SynonymTableProvider final : public ParaphraseProvider {
 public:
  explicit SynonymTableProvider(std::map<std::string, std::vector<std::string>> table) : table_(std::move(table)) {}

  static SynonymTableProvider from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open lexicon " + path);
    std::map<std::string, std::vector<std::string>> table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (trim(line).empty()) continue;
      const auto colon = line.find(':');
      if (colon == std::string::npos)
        throw Error(Errc::parse_error, path + ":" + std::to_string(line_no) + ": expected 'word: alternatives'");
      std::string key = lower(trim(line.substr(0, colon)));
      std::vector<std::string> alts;
      std::stringstream ss(line.substr(colon + 1));
      std::string alt;
      while (std::getline(ss, alt, ','))
        if (auto t = trim(alt); !t.empty()) alts.push_back(t);
      if (key.empty() || alts.empty())
        throw Error(Errc::parse_error, path + ":" + std::to_string(line_no) + ": empty entry");
      table[key] = std::move(alts);
    }
    return SynonymTableProvider(std::move(table));
  }

  [[nodiscard]] std::string name() const override { return "synonym-table"; }

  std::vector<std::string> paraphrase(const std::string& text, std::size_t n, std::uint64_t seed) const override {
    std::vector<std::string> words;
    std::stringstream ss(text);
    std::string w;
    while (ss >> w) words.push_back(w);
    std::vector<std::string> out;
    for (std::size_t variant = 0; variant < n; ++variant) {
      std::string para;
      for (std::size_t pos = 0; pos < words.size(); ++pos) {
        if (pos) para += ' ';
        auto it = table_.find(lower(words[pos]));
        if (it == table_.end()) {
          para += words[pos];
          continue;
        }
        const auto& alts = it->second;
        para += alts[static_cast<std::size_t>((seed + variant + pos) % alts.size())];
      }
      out.push_back(std::move(para));
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  static std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }

  std::map<std::string, std::vector<std::string>> table_;
};

// What a label checker sees: the paraphrase plus where it came from.
struct Candidate {
  std::int64_t source_id = 0;
  std::string source_label;
  std::string text;
  std::span<const double> embedding;  // embedding the new record will carry
};

// Predicts the intent of a candidate paraphrase; nullopt means "no opinion",
// which counts as a mismatch.
class LabelChecker {
 public:
  virtual ~LabelChecker() = default;
  virtual std::optional<std::string> predict(const Candidate& c) const = 0;
};

class PermissiveChecker final : public LabelChecker {
 public:
  std::optional<std::string> predict(const Candidate& c) const override { return c.source_label; }
};

class RejectAllChecker final : public LabelChecker {
 public:
  std::optional<std::string> predict(const Candidate&) const override { return std::nullopt; }
};

// Nearest labeled neighbour in embedding space, leaving the source record out.
class NearestNeighborChecker final : public LabelChecker {
 public:
  NearestNeighborChecker(Matrix x, std::vector<std::int64_t> ids, std::vector<std::string> labels)
      : x_(std::move(x)), ids_(std::move(ids)), labels_(std::move(labels)) {
    if (x_.rows() != ids_.size() || ids_.size() != labels_.size())
      throw Error(Errc::invalid_argument, "nearest-neighbour checker: misaligned inputs");
  }

  std::optional<std::string> predict(const Candidate& c) const override {
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x_.rows(); ++i) {
      if (ids_[i] == c.source_id) continue;
      const double d = squared_distance(x_.row(i), c.embedding);
      if (d < best_d || (d == best_d && best && ids_[i] < ids_[*best])) {
        best_d = d;
        best = i;
      }
    }
    if (!best) return std::nullopt;
    return labels_[*best];
  }

 private:
  Matrix x_;
  std::vector<std::int64_t> ids_;
  std::vector<std::string> labels_;
};

}  // namespace ilab
