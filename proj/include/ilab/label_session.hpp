#pragma once

// A persistent labeling session: a base labeling (gold seeds, or an imported
// export) plus an append-only action log. The current labels are always the
// base with the log's effective actions replayed over it; undo pops the last
// effective action and replays. Overlapping actions: last one wins.
//
// On disk (one directory per session):
//   session.json   id and sizes
//   initial.jsonl  records with base labels, in export format
//   coords.emb     EMB1, rows x 2
//   clusters.json  optional cluster hint per row
//   actions.jsonl  one action per line, appended before a mutation returns
//   snapshot.json  periodic state dump; recovery = snapshot + tail replay

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/corpus.hpp"
#include "ilab/emb_file.hpp"
#include "ilab/error.hpp"
#include "ilab/polygon.hpp"

namespace ilab {

enum class Provenance { gold, bulk, single };

inline std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::gold: return "gold";
    case Provenance::bulk: return "bulk";
    case Provenance::single: return "single";
  }
  return "gold";
}

inline Provenance parse_provenance(std::string_view s) {
  if (s == "gold") return Provenance::gold;
  if (s == "bulk") return Provenance::bulk;
  if (s == "single") return Provenance::single;
  throw Error(Errc::parse_error, "unknown provenance '" + std::string(s) + "'");
}

struct LabelAssignment {
  std::string label;
  Provenance provenance = Provenance::gold;
  friend bool operator==(const LabelAssignment&, const LabelAssignment&) = default;
};

using AssignmentMap = std::map<RecordId, LabelAssignment>;

enum class ActionKind { bulk_polygon, single, undo, relabel };

inline std::string_view action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::bulk_polygon: return "bulk_polygon";
    case ActionKind::single: return "single";
    case ActionKind::undo: return "undo";
    case ActionKind::relabel: return "relabel";
  }
  return "single";
}

inline ActionKind parse_action_kind(std::string_view s) {
  if (s == "bulk_polygon") return ActionKind::bulk_polygon;
  if (s == "single") return ActionKind::single;
  if (s == "undo") return ActionKind::undo;
  if (s == "relabel") return ActionKind::relabel;
  throw Error(Errc::parse_error, "unknown action kind '" + std::string(s) + "'");
}

struct LabelAction {
  std::uint64_t seq = 0;
  ActionKind kind = ActionKind::single;
  Polygon polygon;                    // bulk_polygon
  std::string label;                  // bulk_polygon, single, relabel (target)
  std::string from_label;             // relabel
  std::vector<RecordId> affected_ids;  // as applied
  std::optional<std::uint64_t> reverts;  // undo
  std::int64_t timestamp_ms = 0;
};

inline nlohmann::ordered_json action_to_json(const LabelAction& a) {
  nlohmann::ordered_json j;
  j["seq"] = a.seq;
  j["kind"] = std::string(action_kind_name(a.kind));
  if (a.kind == ActionKind::bulk_polygon) {
    auto poly = nlohmann::ordered_json::array();
    for (const auto& [x, y] : a.polygon) poly.push_back({x, y});
    j["polygon"] = poly;
  }
  if (a.kind == ActionKind::relabel) j["from"] = a.from_label;
  if (a.kind != ActionKind::undo) j["label"] = a.label;
  if (a.reverts) j["reverts"] = *a.reverts;
  j["affected_ids"] = a.affected_ids;
  j["timestamp"] = a.timestamp_ms;
  return j;
}

inline LabelAction action_from_json(const nlohmann::json& j) {
  LabelAction a;
  try {
    a.seq = j.at("seq").get<std::uint64_t>();
    a.kind = parse_action_kind(j.at("kind").get<std::string>());
    if (j.contains("polygon"))
      for (const auto& v : j.at("polygon")) a.polygon.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    if (j.contains("from")) a.from_label = j.at("from").get<std::string>();
    if (j.contains("label")) a.label = j.at("label").get<std::string>();
    if (j.contains("reverts")) a.reverts = j.at("reverts").get<std::uint64_t>();
    a.affected_ids = j.at("affected_ids").get<std::vector<RecordId>>();
    a.timestamp_ms = j.value("timestamp", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("bad action: ") + e.what());
  }
  return a;
}

struct LabelSummary {
  std::size_t gold = 0, bulk = 0, single = 0, unlabeled = 0;
  [[nodiscard]] std::size_t total() const { return gold + bulk + single + unlabeled; }
  friend bool operator==(const LabelSummary&, const LabelSummary&) = default;
};

inline nlohmann::ordered_json summary_to_json(const LabelSummary& s) {
  return {{"gold", s.gold}, {"bulk", s.bulk}, {"single", s.single}, {"unlabeled", s.unlabeled}};
}

// Export format: the corpus record line with the current label and a
// provenance column; unlabeled rows carry neither.
inline std::string labeled_line(const UtteranceRecord& r, const LabelAssignment* a) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["text"] = r.text;
  if (a) j["label"] = a->label;
  j["split"] = std::string(split_name(r.split));
  if (r.source_id) j["source_id"] = *r.source_id;
  if (a) j["provenance"] = std::string(provenance_name(a->provenance));
  return j.dump();
}

struct LabeledCorpus {
  std::vector<UtteranceRecord> records;  // gold_label cleared
  AssignmentMap base;
};

inline LabeledCorpus parse_labeled(std::istream& in) {
  LabeledCorpus out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto rec = record_from_json(line, line_no);
    nlohmann::json j = nlohmann::json::parse(line);
    if (rec.gold_label) {
      const auto prov = j.contains("provenance") ? parse_provenance(j.at("provenance").get<std::string>())
                                                 : Provenance::gold;
      out.base[rec.id] = {*rec.gold_label, prov};
    } else if (j.contains("provenance")) {
      throw Error(Errc::parse_error, "line " + std::to_string(line_no) + ": provenance without label");
    }
    rec.gold_label.reset();
    out.records.push_back(std::move(rec));
  }
  validate_records(out.records);
  return out;
}

inline LabeledCorpus import_labeled(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  return parse_labeled(in);
}

// Every labeled record becomes gold, or only `gold_ids` when given.
inline AssignmentMap gold_base(const std::vector<UtteranceRecord>& records,
                               const std::optional<std::vector<RecordId>>& gold_ids = std::nullopt) {
  AssignmentMap base;
  if (gold_ids) {
    for (auto id : *gold_ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= records.size() || !records[static_cast<std::size_t>(id)].gold_label)
        throw Error(Errc::invalid_argument, "gold id " + std::to_string(id) + " has no label");
      base[id] = {*records[static_cast<std::size_t>(id)].gold_label, Provenance::gold};
    }
  } else {
    for (const auto& r : records)
      if (r.gold_label) base[r.id] = {*r.gold_label, Provenance::gold};
  }
  return base;
}

struct SessionOptions {
  std::size_t snapshot_every = 50;
#ifdef NDEBUG
  bool verify_replay = false;
#else
  bool verify_replay = true;
#endif
};

class LabelSession {
 public:
  // In-memory session; pass a directory to persist it.
  LabelSession(std::string id, std::vector<UtteranceRecord> records, Matrix coords, AssignmentMap base,
               std::vector<std::int64_t> clusters = {}, std::optional<std::filesystem::path> dir = std::nullopt,
               SessionOptions opts = {})
      : id_(std::move(id)),
        records_(std::move(records)),
        coords_(std::move(coords)),
        clusters_(std::move(clusters)),
        base_(std::move(base)),
        dir_(std::move(dir)),
        opts_(opts) {
    if (id_.empty()) throw Error(Errc::invalid_argument, "session id must be non-empty");
    for (auto& r : records_) r.gold_label.reset();
    validate_records(records_);
    if (coords_.rows() != records_.size() || coords_.cols() != 2)
      throw Error(Errc::row_count_mismatch, "coords row mismatch: " + std::to_string(coords_.rows()) + " coords, " +
                                                std::to_string(records_.size()) + " records");
    if (!coords_.all_finite()) throw Error(Errc::non_finite, "coords contain non-finite values");
    if (!clusters_.empty() && clusters_.size() != records_.size())
      throw Error(Errc::row_count_mismatch, "cluster hints row mismatch");
    for (const auto& [id, a] : base_) {
      check_id(id);
      if (a.label.empty()) throw Error(Errc::invalid_argument, "empty base label for id " + std::to_string(id));
    }
    current_ = base_;
    if (dir_) persist_initial();
  }

  // Reopens a persisted session, recovering from snapshot + tail replay.
  static LabelSession open(const std::filesystem::path& dir, SessionOptions opts = {}) {
    if (!std::filesystem::exists(dir / "session.json"))
      throw Error(Errc::not_found, "no session at " + dir.string());
    nlohmann::json meta = nlohmann::json::parse(read_file_bytes((dir / "session.json").string()));
    auto initial = import_labeled((dir / "initial.jsonl").string());
    Matrix coords = read_emb1((dir / "coords.emb").string());
    std::vector<std::int64_t> clusters;
    if (std::filesystem::exists(dir / "clusters.json"))
      clusters = nlohmann::json::parse(read_file_bytes((dir / "clusters.json").string())).get<std::vector<std::int64_t>>();
    LabelSession s(meta.at("id").get<std::string>(), std::move(initial.records), std::move(coords),
                   std::move(initial.base), std::move(clusters), std::nullopt, opts);
    s.dir_ = dir;
    s.recover();
    return s;
  }

  [[nodiscard]] const std::string& id() const { return id_; }
  [[nodiscard]] const std::vector<UtteranceRecord>& records() const { return records_; }
  [[nodiscard]] const Matrix& coords() const { return coords_; }
  [[nodiscard]] const std::vector<std::int64_t>& clusters() const { return clusters_; }
  [[nodiscard]] const AssignmentMap& assignments() const { return current_; }
  [[nodiscard]] const AssignmentMap& base() const { return base_; }
  [[nodiscard]] const std::vector<LabelAction>& log() const { return log_; }
  [[nodiscard]] std::size_t effective_depth() const { return stack_.size(); }
  [[nodiscard]] const std::optional<std::filesystem::path>& dir() const { return dir_; }

  std::size_t apply_bulk(const Polygon& polygon, const std::string& label) {
    if (label.empty()) throw Error(Errc::invalid_argument, "label must be non-empty");
    LabelAction a;
    a.kind = ActionKind::bulk_polygon;
    a.polygon = validate_polygon(polygon);
    a.label = label;
    return commit(std::move(a));
  }

  std::size_t apply_single(RecordId id, const std::string& label) {
    if (label.empty()) throw Error(Errc::invalid_argument, "label must be non-empty");
    check_id(id);
    if (is_gold(id)) throw Error(Errc::invalid_argument, "record " + std::to_string(id) + " has a gold label");
    LabelAction a;
    a.kind = ActionKind::single;
    a.label = label;
    a.affected_ids = {id};
    return commit(std::move(a));
  }

  // Renames a label on every non-gold record currently carrying it.
  std::size_t relabel(const std::string& from, const std::string& to) {
    if (from.empty() || to.empty()) throw Error(Errc::invalid_argument, "label must be non-empty");
    LabelAction a;
    a.kind = ActionKind::relabel;
    a.from_label = from;
    a.label = to;
    return commit(std::move(a));
  }

  LabelAction undo() {
    if (stack_.empty()) throw Error(Errc::empty_log, "empty log");
    const std::size_t idx = stack_.back();
    LabelAction reverted = log_[idx];
    LabelAction u;
    u.kind = ActionKind::undo;
    u.seq = next_seq();
    u.reverts = reverted.seq;
    u.affected_ids = reverted.affected_ids;
    u.timestamp_ms = now_ms();
    append(u);
    stack_.pop_back();
    current_ = replay_stack();
    after_mutation();
    return reverted;
  }

  // Full replay of the log over the base.
  [[nodiscard]] AssignmentMap replay() const {
    AssignmentMap s = base_;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < log_.size(); ++i) {
      if (log_[i].kind == ActionKind::undo) {
        if (stack.empty()) throw Error(Errc::parse_error, "undo past the start of the log");
        stack.pop_back();
      } else {
        stack.push_back(i);
      }
    }
    for (auto i : stack) apply_to(s, log_[i]);
    return s;
  }

  [[nodiscard]] LabelSummary summary() const {
    LabelSummary s;
    for (const auto& r : records_) {
      auto it = current_.find(r.id);
      if (it == current_.end()) ++s.unlabeled;
      else if (it->second.provenance == Provenance::gold) ++s.gold;
      else if (it->second.provenance == Provenance::bulk) ++s.bulk;
      else ++s.single;
    }
    return s;
  }

  [[nodiscard]] std::string export_jsonl() const {
    std::string out;
    for (const auto& r : records_) {
      auto it = current_.find(r.id);
      out += labeled_line(r, it == current_.end() ? nullptr : &it->second);
      out += '\n';
    }
    return out;
  }

  LabelSummary export_labeled(const std::string& path) const {
    write_file_bytes(path, export_jsonl());
    return summary();
  }

  void write_snapshot() const {
    if (!dir_) return;
    nlohmann::ordered_json j;
    j["seq"] = log_.empty() ? 0 : log_.back().seq;
    j["log_size"] = log_.size();
    auto stack = nlohmann::ordered_json::array();
    for (auto i : stack_) stack.push_back(log_[i].seq);
    j["stack"] = stack;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& [id, a] : current_) rows.push_back({id, a.label, std::string(provenance_name(a.provenance))});
    j["assignments"] = rows;
    const auto tmp = *dir_ / "snapshot.json.tmp";
    write_file_bytes(tmp.string(), j.dump() + "\n");
    std::filesystem::rename(tmp, *dir_ / "snapshot.json");
  }

 private:
  [[nodiscard]] bool is_gold(RecordId id) const {
    auto it = base_.find(id);
    return it != base_.end() && it->second.provenance == Provenance::gold;
  }

  void check_id(RecordId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= records_.size())
      throw Error(Errc::not_found, "unknown record id " + std::to_string(id));
  }

  // Applies one non-undo action to `s`; returns the ids it touched.
  std::vector<RecordId> apply_to(AssignmentMap& s, const LabelAction& a) const {
    std::vector<RecordId> ids;
    switch (a.kind) {
      case ActionKind::bulk_polygon:
        for (auto id : points_in_polygon(coords_, a.polygon))
          if (!is_gold(id)) ids.push_back(id);
        for (auto id : ids) s[id] = {a.label, Provenance::bulk};
        break;
      case ActionKind::single:
        for (auto id : a.affected_ids)
          if (!is_gold(id)) {
            ids.push_back(id);
            s[id] = {a.label, Provenance::single};
          }
        break;
      case ActionKind::relabel:
        for (auto& [id, asg] : s)
          if (asg.label == a.from_label && asg.provenance != Provenance::gold) {
            asg.label = a.label;
            ids.push_back(id);
          }
        break;
      case ActionKind::undo:
        break;
    }
    return ids;
  }

  std::size_t commit(LabelAction a) {
    AssignmentMap next = current_;
    a.affected_ids = apply_to(next, a);
    if (a.affected_ids.empty()) return 0;  // empty selection: no-op
    a.seq = next_seq();
    a.timestamp_ms = now_ms();
    append(a);
    current_ = std::move(next);
    stack_.push_back(log_.size() - 1);
    after_mutation();
    return log_.back().affected_ids.size();
  }

  [[nodiscard]] AssignmentMap replay_stack() const {
    AssignmentMap s = base_;
    for (auto i : stack_) apply_to(s, log_[i]);
    return s;
  }

  void append(const LabelAction& a) {
    if (dir_) {
      std::ofstream out(*dir_ / "actions.jsonl", std::ios::app | std::ios::binary);
      out << action_to_json(a).dump() << '\n';
      out.flush();
      if (!out) throw Error(Errc::io_error, "cannot append to action log in " + dir_->string());
    }
    log_.push_back(a);
  }

  void after_mutation() {
    if (opts_.verify_replay && replay() != current_)
      throw std::logic_error("label session: replay diverged from incremental state");
    if (dir_ && opts_.snapshot_every > 0 && log_.size() % opts_.snapshot_every == 0) write_snapshot();
  }

  std::uint64_t next_seq() const { return log_.empty() ? 1 : log_.back().seq + 1; }

  static std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  void persist_initial() {
    std::filesystem::create_directories(*dir_);
    if (std::filesystem::exists(*dir_ / "session.json"))
      throw Error(Errc::invalid_argument, "session directory already holds a session: " + dir_->string());
    std::string initial;
    for (const auto& r : records_) {
      auto it = base_.find(r.id);
      initial += labeled_line(r, it == base_.end() ? nullptr : &it->second) + "\n";
    }
    write_file_bytes((*dir_ / "initial.jsonl").string(), initial);
    write_emb1((*dir_ / "coords.emb").string(), coords_);
    if (!clusters_.empty()) write_file_bytes((*dir_ / "clusters.json").string(), nlohmann::json(clusters_).dump());
    write_file_bytes((*dir_ / "actions.jsonl").string(), "");
    nlohmann::ordered_json meta{{"id", id_}, {"rows", records_.size()}};
    write_file_bytes((*dir_ / "session.json").string(), meta.dump() + "\n");
  }

  void recover() {
    // A crash can leave a partial last line; everything before it is durable.
    const std::string text = read_file_bytes((*dir_ / "actions.jsonl").string());
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      if (nl == std::string::npos) break;
      if (nl > pos) log_.push_back(action_from_json(nlohmann::json::parse(text.substr(pos, nl - pos))));
      pos = nl + 1;
    }
    if (pos < text.size()) {
      // Drop the torn tail so later appends start on a clean line.
      write_file_bytes((*dir_ / "actions.jsonl").string(), text.substr(0, pos));
    }

    std::size_t start = 0;
    const auto snap_path = *dir_ / "snapshot.json";
    if (std::filesystem::exists(snap_path)) {
      auto j = nlohmann::json::parse(read_file_bytes(snap_path.string()));
      const auto size = j.at("log_size").get<std::size_t>();
      if (size <= log_.size()) {
        std::map<std::uint64_t, std::size_t> index;
        for (std::size_t i = 0; i < log_.size(); ++i) index[log_[i].seq] = i;
        for (const auto& seq : j.at("stack")) stack_.push_back(index.at(seq.get<std::uint64_t>()));
        current_.clear();
        for (const auto& row : j.at("assignments"))
          current_[row.at(0).get<RecordId>()] = {row.at(1).get<std::string>(),
                                                 parse_provenance(row.at(2).get<std::string>())};
        start = size;
      }
    }
    for (std::size_t i = start; i < log_.size(); ++i) {
      if (log_[i].kind == ActionKind::undo) {
        if (stack_.empty()) throw Error(Errc::parse_error, "action log: undo past the start");
        stack_.pop_back();
        current_ = replay_stack();
      } else {
        apply_to(current_, log_[i]);
        stack_.push_back(i);
      }
    }
    if (replay() != current_) throw Error(Errc::parse_error, "session recovery: snapshot disagrees with action log");
  }

  std::string id_;
  std::vector<UtteranceRecord> records_;
  Matrix coords_;
  std::vector<std::int64_t> clusters_;
  AssignmentMap base_;
  AssignmentMap current_;
  std::vector<LabelAction> log_;
  std::vector<std::size_t> stack_;  // indices into log_ of effective actions
  std::optional<std::filesystem::path> dir_;
  SessionOptions opts_;
};

}  // namespace ilab
