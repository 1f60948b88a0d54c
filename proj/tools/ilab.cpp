// ilab: command-line driver for the intent-labeling pipeline.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <thread>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ilab/balance.hpp"
#include "ilab/config.hpp"
#include "ilab/dac.hpp"
#include "ilab/experiment.hpp"
#include "ilab/label_session.hpp"
#include "ilab/metrics.hpp"
#include "ilab/project2d.hpp"
#include "ilab/service.hpp"

namespace fs = std::filesystem;
using namespace ilab;

namespace {

std::string dashed(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return key;
}

// Experiment keys exposed as --flags. Values given on the command line
// override the --config file.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
    for (const auto& key : keys) app->add_option("--" + dashed(key), values[key], "Config key '" + key + "'");
  }

  ExperimentConfig build() const {
    FlatConfig f = config_path.empty() ? FlatConfig::parse_string("", "command line") : FlatConfig::load(config_path);
    apply_env_overrides(f, ExperimentConfig::path_keys());
    for (const auto& [key, v] : values) {
      if (v.empty()) continue;
      std::vector<std::string> items;
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) items.push_back(item);
      // Flags name paths relative to the working directory.
      if (std::find(ExperimentConfig::path_keys().begin(), ExperimentConfig::path_keys().end(), key) !=
          ExperimentConfig::path_keys().end())
        items = {fs::absolute(v).lexically_normal().string()};
      f.set(key, items);
    }
    return ExperimentConfig::from_flat(f, config_path.empty() ? fs::path() : fs::path(config_path).parent_path());
  }
};

const std::vector<std::string> kDataKeys = {"corpus", "embeddings", "alt_embeddings"};
const std::vector<std::string> kSelectKeys = {"strategies", "labeled_ratio", "known_class_ratio", "k_prime"};
const std::vector<std::string> kBalanceKeys = {"balance",           "borderline_m",        "aug_factor",
                                               "balance_passes",    "paraphrase_provider", "lexicon",
                                               "paraphrase_url",    "paraphrase_timeout",  "paraphrase_retries",
                                               "paraphrase_parallel", "checker"};
const std::vector<std::string> kDacKeys = {"k",          "k_prime",       "hidden_dim",        "feature_dim",
                                           "epochs",     "learning_rate", "batch_size",        "pretrain_epochs",
                                           "pretrain_learning_rate", "delta_stop"};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts)
    for (const auto& k : p)
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  return out;
}

Matrix read_embedding_any(const std::string& path) {
  const auto ext = fs::path(path).extension().string();
  if (ext != ".csv" && ext != ".tsv") return read_emb1(path);
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path);
  std::vector<double> data;
  std::size_t rows = 0, dim = 0;
  std::string line;
  const char sep = ext == ".csv" ? ',' : '\t';
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, sep)) {
      try {
        data.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(Errc::parse_error, path + ": row " + std::to_string(rows) + ": bad number '" + cell + "'");
      }
      ++cols;
    }
    if (rows == 0) dim = cols;
    if (cols != dim) throw Error(Errc::parse_error, path + ": row " + std::to_string(rows) + " has " +
                                                        std::to_string(cols) + " values, expected " + std::to_string(dim));
    ++rows;
  }
  Matrix m(rows, dim, std::move(data));
  for (std::size_t r = 0; r < rows; ++r)
    for (double v : m.row(r))
      if (!std::isfinite(v)) throw Error(Errc::non_finite, path + ": non-finite value at row " + std::to_string(r));
  return m;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_file_bytes(path.string(), j.dump(2) + "\n"); }

SeedPlan read_plan(const std::string& path) { return seed_plan_from_json(nlohmann::json::parse(read_file_bytes(path))); }

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& corpus, const std::string& emb, const std::string& alt, const std::string& out) {
  auto c = make_corpus(read_records(corpus), read_embedding_any(emb));
  fs::create_directories(out);
  write_corpus((fs::path(out) / "corpus.jsonl").string(), c.records);
  write_emb1((fs::path(out) / "embeddings.emb").string(), c.emb.data);
  nlohmann::ordered_json m;
  m["rows"] = c.size();
  m["dim"] = c.emb.dim();
  m["checksum"] = c.emb.checksum;
  for (const auto& [split, n] : split_counts(c.records)) m["splits"][std::string(split_name(split))] = n;
  m["classes"] = class_names(c.records);
  if (!alt.empty()) {
    auto a = read_embedding_any(alt);
    if (a.rows() != c.size()) throw Error(Errc::row_count_mismatch, alt + ": row-count mismatch with corpus");
    write_emb1((fs::path(out) / "alt_embeddings.emb").string(), a);
    m["alt_checksum"] = matrix_checksum(a);
  }
  write_json(fs::path(out) / "manifest.json", m);
  std::cout << m.dump(2) << "\n";
  return 0;
}

int cmd_select(const ConfigFlags& flags, std::uint64_t seed, const std::string& out) {
  const auto cfg = flags.build();
  const auto data = load_experiment_data(cfg);
  if (cfg.strategies.size() != 1) throw Error(Errc::config, "select-seeds takes exactly one strategy");
  const auto mask = mask_classes(data.corpus, cfg.known_class_ratio, seed);
  const auto pool = labeled_pool(data.corpus, mask);
  const auto plan = select_for(cfg, data, mask, pool, cfg.strategies.front(), derive_seed(seed, 30));
  fs::create_directories(out);
  write_json(fs::path(out) / "mask.json", mask_to_json(mask));
  write_json(fs::path(out) / "seed_plan.json", seed_plan_to_json(plan));
  std::cout << "selected " << plan.selected_ids.size() << " of " << pool.size() << " pool records ("
            << strategy_display_name(plan.strategy) << ")\n";
  return 0;
}

int cmd_balance(const ConfigFlags& flags, const std::string& plan_path, std::uint64_t seed, const std::string& out) {
  const auto cfg = flags.build();
  const auto data = load_experiment_data(cfg);
  if (cfg.balance.size() != 1) throw Error(Errc::config, "balance takes exactly one mode");
  const auto plan = read_plan(plan_path);
  const auto gen = balance_seeds(cfg, data, plan, cfg.balance.front(), seed);
  fs::create_directories(out);
  write_file_bytes((fs::path(out) / "balance.jsonl").string(), records_to_jsonl(gen.records));
  std::string audit;
  for (const auto& c : gen.candidates) {
    nlohmann::ordered_json j;
    j["source_id"] = c.source_id;
    j["text"] = c.text;
    j["provider"] = c.provider;
    j["accepted"] = c.accepted;
    if (c.reject_reason) j["reject_reason"] = std::string(reject_reason_name(*c.reject_reason));
    audit += j.dump() + "\n";
  }
  write_file_bytes((fs::path(out) / "candidates.jsonl").string(), audit);
  std::cout << "generated " << gen.records.size() << " records from " << gen.candidates.size() << " candidates ("
            << balance_display_name(cfg.balance.front()) << ")\n";
  return 0;
}

int cmd_cluster(const ConfigFlags& flags, const std::string& plan_path, const std::string& generated,
                std::uint64_t seed, const std::string& checkpoints, const std::string& out) {
  const auto cfg = flags.build();
  const auto data = load_experiment_data(cfg);
  const auto plan = read_plan(plan_path);
  LabeledSamples extra;
  if (!generated.empty()) {
    const auto recs = read_records(generated);
    std::vector<std::size_t> rows;
    for (const auto& r : recs) {
      if (!r.gold_label || !r.source_id || *r.source_id < 0 || static_cast<std::size_t>(*r.source_id) >= data.corpus.size())
        throw Error(Errc::invalid_argument, generated + ": record " + std::to_string(r.id) + " needs a label and a corpus source_id");
      rows.push_back(static_cast<std::size_t>(*r.source_id));
      extra.labels.push_back(*r.gold_label);
    }
    extra.x = data.corpus.emb.data.select_rows(rows);
  }
  DacParams p = cfg.dac;
  p.rng_seed = derive_seed(seed, 40);
  p.k = cfg.k;
  p.k_prime = cfg.k_prime.value_or(2 * data.train_classes);
  p.checkpoint_dir = checkpoints;
  const auto res = run_dac(data.corpus, plan, p, extra.labels.empty() ? nullptr : &extra);
  fs::create_directories(out);
  write_emb1((fs::path(out) / "features.emb").string(), res.features);
  write_file_bytes((fs::path(out) / "assignments.json").string(), nlohmann::json(res.final_state.assignments).dump() + "\n");
  nlohmann::ordered_json state;
  state["k"] = res.k;
  state["epoch"] = res.final_state.epoch;
  state["change_fraction"] = res.final_state.change_fraction;
  state["alignment"] = res.final_state.alignment;
  state["known_classes"] = res.known_classes;
  auto log = nlohmann::ordered_json::array();
  for (const auto& e : res.log)
    log.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"change_fraction", e.change_fraction}, {"inertia", e.inertia}});
  state["log"] = log;
  write_json(fs::path(out) / "cluster_state.json", state);
  std::cout << "K = " << res.k << ", stopped after epoch " << res.final_state.epoch << "\n";
  return 0;
}

int cmd_project(const std::string& features, const std::string& external, std::size_t rows, const std::string& out) {
  ProjectionCoords p;
  if (!external.empty()) {
    std::size_t expected = rows;
    if (!features.empty()) expected = read_emb1(features).rows();
    if (expected == 0) throw Error(Errc::invalid_argument, "--external needs --rows or --features to check the row count");
    p = load_external_coords(external, expected);
    if (!features.empty() && p.source_checksum == 0) p.source_checksum = matrix_checksum(read_emb1(features));
  } else {
    if (features.empty()) throw Error(Errc::invalid_argument, "project needs --features or --external");
    p = pca2d(read_emb1(features));
  }
  write_coords(out, p);
  std::cout << "wrote " << p.coords.rows() << " " << projection_method_name(p.method) << " coordinates to " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& corpus, const std::string& assignments, const std::string& split_name_) {
  const auto records = read_records(corpus);
  const auto pred_all = nlohmann::json::parse(read_file_bytes(assignments)).get<std::vector<std::size_t>>();
  if (pred_all.size() != records.size())
    throw Error(Errc::row_count_mismatch, assignments + ": row-count mismatch with corpus");
  const auto split = parse_split(split_name_);
  if (split_name_ != "all" && !split) throw Error(Errc::invalid_argument, "unknown split '" + split_name_ + "'");
  std::vector<std::string> truth;
  std::vector<std::size_t> pred;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].gold_label || (split && records[i].split != *split)) continue;
    truth.push_back(*records[i].gold_label);
    pred.push_back(pred_all[i]);
  }
  if (truth.size() < 2) throw Error(Errc::invalid_argument, "fewer than 2 gold-labeled rows to evaluate");
  nlohmann::ordered_json j;
  j["rows"] = truth.size();
  j["nmi"] = fixed2(100.0 * nmi(truth, pred));
  j["ari"] = fixed2(100.0 * ari(truth, pred));
  j["acc"] = fixed2(100.0 * aligned_acc(truth, pred));
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_run_experiment(const ConfigFlags& flags) {
  const auto cfg = flags.build();
  const auto out = run_experiment(cfg);
  std::cout << out.table;
  std::cout << "results: " << (fs::path(cfg.output_dir) / "results.csv").string() << "\n";
  return 0;
}

// Serve config keys; environment may override the paths and the port.
struct ServeOptions {
  std::string config_path;
  std::string corpus, coords, features, clusters, gold = "all", session_dir, session_id = "default", host = "127.0.0.1";
  int port = 0;
  bool port_given = false;

  static const std::vector<std::string>& path_keys() {
    static const std::vector<std::string> k = {"corpus", "coords", "features", "clusters", "session_dir"};
    return k;
  }

  void resolve() {
    FlatConfig f = config_path.empty() ? FlatConfig::parse_string("", "command line") : FlatConfig::load(config_path);
    auto keys = path_keys();
    keys.push_back("port");
    apply_env_overrides(f, keys);
    const fs::path base = config_path.empty() ? fs::path() : fs::path(config_path).parent_path();
    ConfigErrors errors;
    const std::vector<std::string> known = {"corpus", "coords", "features", "clusters", "session_dir",
                                            "session_id", "gold", "host", "port"};
    for (const auto& [k, v] : f.values())
      if (std::find(known.begin(), known.end(), k) == known.end()) errors.add(f.where(k) + "unknown key");
    auto take = [&](const std::string& key, std::string& field, bool is_path) {
      if (!field.empty()) return;  // command line wins
      try {
        if (auto s = f.str(key)) {
          fs::path p(*s);
          field = is_path && p.is_relative() && !base.empty() ? (base / p).lexically_normal().string() : *s;
        }
      } catch (const Error& e) {
        errors.add(e.what());
      }
    };
    take("corpus", corpus, true);
    take("coords", coords, true);
    take("features", features, true);
    take("clusters", clusters, true);
    take("session_dir", session_dir, true);
    if (session_id == "default") take("session_id", session_id, false);
    if (session_id.empty()) session_id = "default";
    if (gold == "all") {
      std::string g;
      take("gold", g, false);
      if (!g.empty()) gold = g;
    }
    if (host == "127.0.0.1") {
      std::string h;
      take("host", h, false);
      if (!h.empty()) host = h;
    }
    if (!port_given) {
      try {
        if (auto p = f.integer("port")) port = static_cast<int>(*p);
      } catch (const Error& e) {
        errors.add(e.what());
      }
    }
    if (port < 0 || port > 65535) errors.add("port: out of range");
    if (session_dir.empty()) errors.add("session_dir: required");
    const bool existing = !session_dir.empty() && fs::exists(fs::path(session_dir) / "session.json");
    if (!existing) {
      if (corpus.empty()) errors.add("corpus: required for a new session");
      if (coords.empty() && features.empty()) errors.add("coords or features: one is required for a new session");
    }
    for (const auto& p : {corpus, coords, features, clusters})
      if (!p.empty() && !fs::exists(p)) errors.add("file not found: " + p);
    errors.throw_if_any(config_path.empty() ? "serve" : config_path);
  }
};

LabelSession open_or_create(const ServeOptions& o) {
  const fs::path dir(o.session_dir);
  if (fs::exists(dir / "session.json")) return LabelSession::open(dir);
  auto records = read_records(o.corpus);
  Matrix coords;
  if (!o.coords.empty()) coords = load_external_coords(o.coords, records.size()).coords;
  else {
    const auto f = read_emb1(o.features);
    if (f.rows() != records.size())
      throw Error(Errc::row_count_mismatch, o.features + ": row mismatch with corpus");
    coords = pca2d(f).coords;
  }
  std::vector<std::int64_t> clusters;
  if (!o.clusters.empty()) {
    clusters = nlohmann::json::parse(read_file_bytes(o.clusters)).get<std::vector<std::int64_t>>();
    if (clusters.size() != records.size()) throw Error(Errc::row_count_mismatch, o.clusters + ": row mismatch with corpus");
  }
  std::optional<std::vector<RecordId>> gold_ids;
  if (o.gold == "none") gold_ids = std::vector<RecordId>{};
  else if (o.gold != "all") gold_ids = read_plan(o.gold).selected_ids;
  auto base = gold_base(records, gold_ids);
  return LabelSession(o.session_id, std::move(records), std::move(coords), std::move(base), std::move(clusters), dir);
}

std::atomic<bool> g_stop{false};

int cmd_serve(ServeOptions o, bool dry_run) {
  o.resolve();
  auto session = open_or_create(o);
  const auto id = session.id();
  const auto stats = session.summary();
  if (dry_run) {
    std::cout << summary_to_json(stats).dump() << "\n";
    return 0;
  }
  LabelService svc;
  svc.add_session(std::move(session));
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  const int port = svc.start(o.host, o.port);
  std::cout << "serving session '" << id << "' at http://" << o.host << ":" << port << "/session/" << id << "/stats"
            << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  svc.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ilab: semi-supervised intent discovery and bulk labeling"};
  app.require_subcommand(1);

  std::string corpus, emb, alt, out;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and its embeddings and write them in canonical form");
  ingest->add_option("--corpus", corpus, "Corpus JSON-lines file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--embeddings", emb, "Embeddings: EMB1 binary, .csv or .tsv")->required()->check(CLI::ExistingFile);
  ingest->add_option("--alt-embeddings", alt, "Alternate embeddings for the cse strategy")->check(CLI::ExistingFile);
  ingest->add_option("--out", out, "Output directory")->required();

  std::uint64_t seed = 0;
  ConfigFlags select_flags;
  auto* select = app.add_subcommand("select-seeds", "Mask classes and choose the seed set");
  select_flags.attach(select, concat({kDataKeys, kSelectKeys}));
  select->add_option("--seed", seed, "Run seed")->capture_default_str();
  select->add_option("--out", out, "Output directory (mask.json, seed_plan.json)")->required();

  ConfigFlags balance_flags;
  std::string plan_path;
  auto* balance = app.add_subcommand("balance", "Paraphrase-based oversampling or augmentation of a seed set");
  balance_flags.attach(balance, concat({kDataKeys, kBalanceKeys}));
  balance->add_option("--plan", plan_path, "seed_plan.json from select-seeds")->required()->check(CLI::ExistingFile);
  balance->add_option("--seed", seed, "Run seed")->capture_default_str();
  balance->add_option("--out", out, "Output directory (balance.jsonl, candidates.jsonl)")->required();

  ConfigFlags cluster_flags;
  std::string generated, checkpoints;
  auto* cluster = app.add_subcommand("cluster", "Pretrain on the seeds and run the aligned clustering loop");
  cluster_flags.attach(cluster, concat({kDataKeys, kDacKeys}));
  cluster->add_option("--plan", plan_path, "seed_plan.json from select-seeds")->required()->check(CLI::ExistingFile);
  cluster->add_option("--generated", generated, "balance.jsonl with extra labeled rows")->check(CLI::ExistingFile);
  cluster->add_option("--checkpoint-dir", checkpoints, "Write one checkpoint per epoch here");
  cluster->add_option("--seed", seed, "Run seed")->capture_default_str();
  cluster->add_option("--out", out, "Output directory (features.emb, assignments.json, cluster_state.json)")->required();

  std::string features, external;
  std::size_t rows = 0;
  auto* project = app.add_subcommand("project", "2D coordinates for the labeling UI (PCA or external)");
  project->add_option("--features", features, "Feature matrix (EMB1)")->check(CLI::ExistingFile);
  project->add_option("--external", external, "Externally computed coordinates (EMB1, dim 2)")->check(CLI::ExistingFile);
  project->add_option("--rows", rows, "Expected row count for --external");
  project->add_option("--out", out, "Output coordinates file (EMB1, dim 2)")->required();

  std::string assignments, eval_split = "all";
  auto* evaluate = app.add_subcommand("evaluate", "NMI, ARI and aligned accuracy of cluster assignments");
  evaluate->add_option("--corpus", corpus, "Corpus JSON-lines file with gold labels")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--assignments", assignments, "assignments.json from cluster")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--eval-split", eval_split, "all, train, valid or test")->capture_default_str();

  ConfigFlags exp_flags;
  auto* experiment = app.add_subcommand("run-experiment", "Every strategy x balance mode x run, aggregated into a table");
  exp_flags.attach(experiment, ExperimentConfig::keys());

  ServeOptions serve_opts;
  bool dry_run = false;
  auto* serve = app.add_subcommand("serve", "Start the labeling service for one session");
  serve->add_option("--config", serve_opts.config_path, "Flat key = value session config")->check(CLI::ExistingFile);
  serve->add_option("--corpus", serve_opts.corpus, "Corpus JSON-lines file");
  serve->add_option("--coords", serve_opts.coords, "2D coordinates (EMB1, dim 2)");
  serve->add_option("--features", serve_opts.features, "Features to project with PCA when no coords are given");
  serve->add_option("--clusters", serve_opts.clusters, "assignments.json used as cluster hints");
  serve->add_option("--gold", serve_opts.gold, "Gold labels: all, none, or a seed_plan.json")->capture_default_str();
  serve->add_option("--session-dir", serve_opts.session_dir, "Session directory (reopened if it exists)");
  serve->add_option("--session-id", serve_opts.session_id, "Session id")->capture_default_str();
  serve->add_option("--host", serve_opts.host, "Bind address")->capture_default_str();
  auto* port_opt = serve->add_option("--port", serve_opts.port, "Port (0 picks a free one)");
  serve->add_flag("--check", dry_run, "Load or recover the session, print its stats and exit");

  CLI11_PARSE(app, argc, argv);
  serve_opts.port_given = port_opt->count() > 0;

  try {
    if (*ingest) return cmd_ingest(corpus, emb, alt, out);
    if (*select) return cmd_select(select_flags, seed, out);
    if (*balance) return cmd_balance(balance_flags, plan_path, seed, out);
    if (*cluster) return cmd_cluster(cluster_flags, plan_path, generated, seed, checkpoints, out);
    if (*project) return cmd_project(features, external, rows, out);
    if (*evaluate) return cmd_evaluate(corpus, assignments, eval_split);
    if (*experiment) return cmd_run_experiment(exp_flags);
    if (*serve) return cmd_serve(serve_opts, dry_run);
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return e.code() == Errc::config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
