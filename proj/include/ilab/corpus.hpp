#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/emb_file.hpp"
#include "ilab/error.hpp"
#include "ilab/matrix.hpp"
#include "ilab/rng.hpp"

namespace ilab {

using RecordId = std::int64_t;

enum class Split { train, valid, test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct UtteranceRecord {
  RecordId id = 0;
  std::string text;
  std::optional<std::string> gold_label;
  Split split = Split::train;
  // Set on records produced by paraphrasing; points at the record they came from.
  std::optional<RecordId> source_id;

  friend bool operator==(const UtteranceRecord&, const UtteranceRecord&) = default;
};

struct EmbeddingMatrix {
  Matrix data;
  std::uint32_t checksum = 0;

  [[nodiscard]] std::size_t rows() const { return data.rows(); }
  [[nodiscard]] std::size_t dim() const { return data.cols(); }

  static EmbeddingMatrix from(Matrix m) {
    EmbeddingMatrix e;
    e.checksum = matrix_checksum(m);
    e.data = std::move(m);
    return e;
  }
};

struct CorpusConfig {
  double labeled_ratio = 0.1;
  double known_class_ratio = 0.75;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(labeled_ratio > 0.0 && labeled_ratio <= 1.0))
      throw Error(Errc::invalid_argument, "labeled_ratio must be in (0, 1]");
    if (!(known_class_ratio > 0.0 && known_class_ratio <= 1.0))
      throw Error(Errc::invalid_argument, "known_class_ratio must be in (0, 1]");
  }
};

struct ClassMask {
  std::set<std::string> known_classes;
  std::set<std::string> unseen_classes;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const ClassMask&, const ClassMask&) = default;
};

// A loaded corpus: records in file order, with row i of `emb` belonging to
// the record whose id is i.
struct Corpus {
  std::vector<UtteranceRecord> records;
  EmbeddingMatrix emb;

  [[nodiscard]] std::size_t size() const { return records.size(); }
  [[nodiscard]] bool has_gold() const {
    return std::any_of(records.begin(), records.end(),
                       [](const auto& r) { return r.gold_label.has_value(); });
  }
};

// ---------------------------------------------------------------------------
// JSON-lines codec

inline std::string record_to_json(const UtteranceRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["text"] = r.text;
  if (r.gold_label) j["label"] = *r.gold_label;
  j["split"] = split_name(r.split);
  if (r.source_id) j["source_id"] = *r.source_id;
  return j.dump();
}

inline UtteranceRecord record_from_json(const std::string& line, std::size_t line_no) {
  auto fail = [&](const std::string& why) {
    return Error(Errc::parse_error,
                 "malformed record line " + std::to_string(line_no) + ": " + why);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(e.what());
  }
  if (!j.is_object()) throw fail("not a JSON object");
  UtteranceRecord r;
  if (!j.contains("id") || !j["id"].is_number_integer()) throw fail("missing integer id");
  r.id = j["id"].get<RecordId>();
  if (!j.contains("text") || !j["text"].is_string()) throw fail("missing text");
  r.text = j["text"].get<std::string>();
  if (r.text.empty()) throw fail("empty text");
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_string()) throw fail("label must be a string");
    r.gold_label = j["label"].get<std::string>();
  }
  if (!j.contains("split") || !j["split"].is_string()) throw fail("missing split");
  auto split = parse_split(j["split"].get<std::string>());
  if (!split) throw fail("unknown split '" + j["split"].get<std::string>() + "'");
  r.split = *split;
  if (j.contains("source_id") && !j["source_id"].is_null()) {
    if (!j["source_id"].is_number_integer()) throw fail("source_id must be an integer");
    r.source_id = j["source_id"].get<RecordId>();
  }
  return r;
}

inline std::vector<UtteranceRecord> parse_records(std::istream& in) {
  std::vector<UtteranceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(record_from_json(line, line_no));
  }
  return out;
}

inline std::vector<UtteranceRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open corpus " + path);
  return parse_records(in);
}

inline std::string records_to_jsonl(const std::vector<UtteranceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r);
    out += '\n';
  }
  return out;
}

inline void write_corpus(const std::string& path, const std::vector<UtteranceRecord>& records) {
  write_file_bytes(path, records_to_jsonl(records));
}

// ---------------------------------------------------------------------------
// Loading and validation

inline void validate_records(const std::vector<UtteranceRecord>& records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].id != static_cast<RecordId>(i))
      throw Error(Errc::parse_error, "malformed record line " + std::to_string(i + 1) +
                                         ": id " + std::to_string(records[i].id) +
                                         " out of sequence (expected " + std::to_string(i) + ")");
  }
}

inline Corpus make_corpus(std::vector<UtteranceRecord> records, Matrix emb) {
  validate_records(records);
  if (records.size() != emb.rows())
    throw Error(Errc::row_count_mismatch,
                "row-count mismatch: corpus has " + std::to_string(records.size()) +
                    " records, embeddings have " + std::to_string(emb.rows()) + " rows");
  if (emb.cols() < 2) throw Error(Errc::invalid_argument, "embedding dim must be >= 2");
  if (!emb.all_finite()) throw Error(Errc::non_finite, "non-finite embedding value");
  return Corpus{std::move(records), EmbeddingMatrix::from(std::move(emb))};
}

inline Corpus load_corpus(const std::string& path, const std::string& embedding_path) {
  auto records = read_records(path);
  auto emb = read_emb1(embedding_path);
  return make_corpus(std::move(records), std::move(emb));
}

inline std::map<Split, std::size_t> split_counts(const std::vector<UtteranceRecord>& records) {
  std::map<Split, std::size_t> counts{{Split::train, 0}, {Split::valid, 0}, {Split::test, 0}};
  for (const auto& r : records) ++counts[r.split];
  return counts;
}

// Sorted distinct gold labels over the given records.
inline std::vector<std::string> class_names(const std::vector<UtteranceRecord>& records) {
  std::set<std::string> s;
  for (const auto& r : records)
    if (r.gold_label) s.insert(*r.gold_label);
  return {s.begin(), s.end()};
}

inline std::vector<std::string> train_class_names(const Corpus& corpus) {
  std::set<std::string> s;
  for (const auto& r : corpus.records)
    if (r.split == Split::train && r.gold_label) s.insert(*r.gold_label);
  return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Class masking and the labeled pool

inline ClassMask mask_classes(const Corpus& corpus, double known_class_ratio, std::uint64_t rng_seed) {
  if (!(known_class_ratio > 0.0 && known_class_ratio <= 1.0))
    throw Error(Errc::invalid_argument, "known_class_ratio must be in (0, 1]");
  auto classes = train_class_names(corpus);
  if (classes.empty())
    throw Error(Errc::invalid_argument, "corpus has no gold labels on the train split");
  const std::size_t k = round_half_up(known_class_ratio * static_cast<double>(classes.size()));
  if (k == 0)
    throw Error(Errc::invalid_argument, "known_class_ratio selects 0 known classes");
  Rng rng(rng_seed);
  rng.shuffle(classes);
  ClassMask mask;
  mask.rng_seed = rng_seed;
  mask.known_classes.insert(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(k));
  mask.unseen_classes.insert(classes.begin() + static_cast<std::ptrdiff_t>(k), classes.end());
  return mask;
}

inline std::vector<UtteranceRecord> labeled_pool(const Corpus& corpus, const ClassMask& mask) {
  std::vector<UtteranceRecord> pool;
  for (const auto& r : corpus.records) {
    if (r.split == Split::train && r.gold_label && mask.known_classes.count(*r.gold_label))
      pool.push_back(r);
  }
  if (pool.empty()) throw Error(Errc::empty_pool, "empty labeled pool");
  return pool;
}

inline nlohmann::ordered_json mask_to_json(const ClassMask& mask) {
  nlohmann::ordered_json j;
  j["rng_seed"] = mask.rng_seed;
  j["known_classes"] = std::vector<std::string>(mask.known_classes.begin(), mask.known_classes.end());
  j["unseen_classes"] = std::vector<std::string>(mask.unseen_classes.begin(), mask.unseen_classes.end());
  return j;
}

}  // namespace ilab
