#pragma once

// Deep aligned clustering over fixed input embeddings: pretrain a projection
// head on seed labels, then alternate k-means on the head's features,
// centroid alignment against the previous epoch, and retraining on the
// aligned pseudo-labels.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/assignment.hpp"
#include "ilab/corpus.hpp"
#include "ilab/emb_file.hpp"
#include "ilab/kmeans.hpp"
#include "ilab/projection_head.hpp"
#include "ilab/seed_select.hpp"

namespace ilab {

struct ClusterState {
  std::size_t epoch = 0;
  std::vector<std::size_t> assignments;
  Matrix centroids;
  // alignment[c] = previous-epoch id of this epoch's raw k-means cluster c.
  std::vector<std::size_t> alignment;
  // Fraction of rows whose aligned id changed from the previous epoch.
  double change_fraction = 1.0;
};

struct DacParams {
  std::size_t hidden_dim = 64;
  std::size_t feature_dim = 64;
  TrainParams pretrain{0.05, 32, 50, 0};
  // Self-supervised rounds; each trains one pass on pseudo-labels.
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  double delta_stop = 0.005;
  // nullopt: estimate K once from the pretrained features using k_prime.
  std::optional<std::size_t> k;
  std::size_t k_prime = 0;
  std::uint64_t rng_seed = 0;
  KMeansOptions kmeans{100, 1e-4};
  std::string checkpoint_dir;  // empty: no checkpoints
};

// Extra labeled rows (e.g. paraphrase oversampling) appended to the seeds.
struct LabeledSamples {
  Matrix x;
  std::vector<std::string> labels;
};

struct PretrainSet {
  Matrix x;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
};

inline PretrainSet build_pretrain_set(const SeedPlan& plan, const Corpus& corpus,
                                      const LabeledSamples* extra = nullptr) {
  std::vector<std::size_t> rows;
  std::vector<std::string> names;
  for (auto id : plan.selected_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= corpus.size())
      throw Error(Errc::invalid_argument, "seed id " + std::to_string(id) + " not in corpus");
    const auto& r = corpus.records[static_cast<std::size_t>(id)];
    if (!r.gold_label) throw Error(Errc::invalid_argument, "seed record " + std::to_string(id) + " has no label");
    rows.push_back(static_cast<std::size_t>(id));
    names.push_back(*r.gold_label);
  }
  PretrainSet set;
  const std::size_t extra_rows = extra ? extra->x.rows() : 0;
  if (extra && extra->x.rows() != extra->labels.size())
    throw Error(Errc::invalid_argument, "extra samples: label count mismatch");
  if (extra && extra_rows > 0 && extra->x.cols() != corpus.emb.dim())
    throw Error(Errc::invalid_argument, "extra samples: embedding dim mismatch");
  set.x = Matrix(rows.size() + extra_rows, corpus.emb.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = corpus.emb.data.row(rows[i]);
    std::copy(src.begin(), src.end(), set.x.row(i).begin());
  }
  for (std::size_t i = 0; i < extra_rows; ++i) {
    auto src = extra->x.row(i);
    std::copy(src.begin(), src.end(), set.x.row(rows.size() + i).begin());
    names.push_back(extra->labels[i]);
  }
  std::map<std::string, std::size_t> index;
  for (const auto& n : names) index.emplace(n, 0);
  for (auto& [name, idx] : index) {
    idx = set.class_names.size();
    set.class_names.push_back(name);
  }
  for (const auto& n : names) set.labels.push_back(index.at(n));
  if (set.labels.empty()) throw Error(Errc::invalid_argument, "pretrain: no labeled rows");
  return set;
}

// Fits the head's classifier to the seed labels. The head's class count must
// match the number of distinct seed classes.
inline TrainReport pretrain(ProjectionHead& head, const PretrainSet& set, const TrainParams& tp) {
  if (head.class_count() != set.class_names.size())
    throw Error(Errc::invalid_argument, "pretrain: head has " + std::to_string(head.class_count()) +
                                            " classes, seeds have " + std::to_string(set.class_names.size()));
  return train_classifier(head, set.x, set.labels, tp);
}

inline TrainReport pretrain(ProjectionHead& head, const SeedPlan& plan, const Corpus& corpus, const TrainParams& tp) {
  return pretrain(head, build_pretrain_set(plan, corpus), tp);
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double change_fraction = 1.0;
  double inertia = 0.0;
};

struct DacResult {
  ProjectionHead head;
  ClusterState final_state;
  Matrix features;
  std::size_t k = 0;
  std::vector<std::string> known_classes;
  std::vector<EpochLog> log;
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line, then the feature matrix as EMB1.

struct CheckpointHeader {
  std::size_t epoch = 0;
  std::size_t k = 0;
  std::uint64_t rng_seed = 0;
  double loss = 0.0;
};

inline void write_checkpoint(const std::string& path, const CheckpointHeader& h, const Matrix& features) {
  nlohmann::ordered_json j;
  j["epoch"] = h.epoch;
  j["K"] = h.k;
  j["rng_seed"] = h.rng_seed;
  j["loss"] = h.loss;
  write_file_bytes(path, j.dump() + "\n" + encode_emb1(features));
}

inline std::pair<CheckpointHeader, Matrix> read_checkpoint(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw Error(Errc::parse_error, path + ": missing checkpoint header");
  CheckpointHeader h;
  try {
    auto j = nlohmann::json::parse(bytes.substr(0, nl));
    h.epoch = j.at("epoch").get<std::size_t>();
    h.k = j.at("K").get<std::size_t>();
    h.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    h.loss = j.at("loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, path + ": bad checkpoint header: " + e.what());
  }
  return {h, decode_emb1(std::string_view(bytes).substr(nl + 1), path)};
}

// ---------------------------------------------------------------------------

inline double assignment_change(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
  return a.empty() ? 0.0 : static_cast<double>(diff) / static_cast<double>(a.size());
}

// Relabels raw k-means output through an alignment permutation.
inline ClusterState apply_alignment(const KMeansResult& km, const std::vector<std::size_t>& perm, std::size_t epoch) {
  ClusterState s;
  s.epoch = epoch;
  s.alignment = perm;
  s.assignments.resize(km.assignments.size());
  for (std::size_t i = 0; i < km.assignments.size(); ++i) s.assignments[i] = perm[km.assignments[i]];
  s.centroids = Matrix(km.centroids.rows(), km.centroids.cols());
  for (std::size_t c = 0; c < perm.size(); ++c) {
    auto src = km.centroids.row(c);
    std::copy(src.begin(), src.end(), s.centroids.row(perm[c]).begin());
  }
  return s;
}

inline DacResult run_dac(const Corpus& corpus, const SeedPlan& plan, const DacParams& params,
                         const LabeledSamples* extra = nullptr) {
  if (!params.k && params.k_prime == 0)
    throw Error(Errc::invalid_argument, "run_dac: k_prime required when K is estimated");
  if (!(params.delta_stop >= 0.0)) throw Error(Errc::invalid_argument, "run_dac: delta_stop must be >= 0");

  const auto set = build_pretrain_set(plan, corpus, extra);
  Rng init_rng(derive_seed(params.rng_seed, 10));
  DacResult res;
  res.known_classes = set.class_names;
  res.head = ProjectionHead::create(corpus.emb.dim(), params.hidden_dim, params.feature_dim,
                                    set.class_names.size(), init_rng);
  TrainParams tp = params.pretrain;
  tp.rng_seed = derive_seed(params.rng_seed, 11);
  const auto report = pretrain(res.head, set, tp);

  const Matrix& x = corpus.emb.data;
  res.features = res.head.features(x);
  const std::size_t k = params.k ? *params.k : estimate_k(res.features, params.k_prime, derive_seed(params.rng_seed, 12), params.kmeans);
  if (k == 0) throw Error(Errc::degenerate, "run_dac: estimated K is 0");
  if (k > x.rows()) throw Error(Errc::invalid_argument, "run_dac: K exceeds corpus size");
  res.k = k;

  auto checkpoint = [&](const ClusterState& s, double loss) {
    if (params.checkpoint_dir.empty()) return;
    std::filesystem::create_directories(params.checkpoint_dir);
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", s.epoch);
    write_checkpoint((std::filesystem::path(params.checkpoint_dir) / name).string(),
                     CheckpointHeader{s.epoch, k, params.rng_seed, loss}, res.features);
  };

  auto km = kmeans(res.features, k, derive_seed(params.rng_seed, 100), params.kmeans);
  std::vector<std::size_t> identity(k);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  ClusterState state = apply_alignment(km, identity, 0);
  res.log.push_back({0, report.final_loss(), 1.0, km.inertia});
  checkpoint(state, report.final_loss());

  if (params.epochs > 0) res.head.reset_classifier(k, init_rng);
  for (std::size_t epoch = 1; epoch <= params.epochs; ++epoch) {
    TrainParams round{params.learning_rate, params.batch_size, 1, derive_seed(params.rng_seed, 1000 + epoch)};
    const auto rep = train_classifier(res.head, x, state.assignments, round);
    res.features = res.head.features(x);
    km = kmeans(res.features, k, derive_seed(params.rng_seed, 100 + epoch), params.kmeans);
    const auto perm = align_centroids(state.centroids, km.centroids);
    ClusterState next = apply_alignment(km, perm, epoch);
    next.change_fraction = assignment_change(next.assignments, state.assignments);
    state = std::move(next);
    res.log.push_back({epoch, rep.final_loss(), state.change_fraction, km.inertia});
    checkpoint(state, rep.final_loss());
    if (state.change_fraction < params.delta_stop) break;
  }
  res.final_state = std::move(state);
  return res;
}

}  // namespace ilab
