#pragma once

// End-to-end experiment runner: for every (balance mode, strategy, run) it
// masks classes, selects seeds, balances the seed set, runs DAC and scores
// the result. Run r uses seed base_seed + r. Results are aggregated into a
// CSV and an aligned text table; each run's artifacts go under
// <output_dir>/runs/<hash of the run's inputs>/.

#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ilab/balance.hpp"
#include "ilab/config.hpp"
#include "ilab/corpus.hpp"
#include "ilab/dac.hpp"
#include "ilab/metrics.hpp"
#include "ilab/paraphrase.hpp"
#include "ilab/paraphrase_client.hpp"
#include "ilab/seed_select.hpp"

namespace ilab {

enum class BalanceMode { none, paraphrasing, paramote, aug };

inline std::string_view balance_key(BalanceMode m) {
  switch (m) {
    case BalanceMode::none: return "none";
    case BalanceMode::paraphrasing: return "paraphrasing";
    case BalanceMode::paramote: return "paramote";
    case BalanceMode::aug: return "aug";
  }
  return "none";
}

inline std::string_view balance_display_name(BalanceMode m) {
  switch (m) {
    case BalanceMode::none: return "None";
    case BalanceMode::paraphrasing: return "Paraphrasing";
    case BalanceMode::paramote: return "ParaMote";
    case BalanceMode::aug: return "Aug";
  }
  return "None";
}

inline std::optional<BalanceMode> parse_balance_mode(std::string_view s) {
  for (auto m : {BalanceMode::none, BalanceMode::paraphrasing, BalanceMode::paramote, BalanceMode::aug})
    if (s == balance_key(m) || s == balance_display_name(m)) return m;
  return std::nullopt;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

struct ExperimentConfig {
  std::string dataset = "dataset";
  std::string embedding = "embedding";
  std::string corpus_path;
  std::string embeddings_path;
  std::string alt_embeddings_path;  // required by the cse strategy
  std::vector<Strategy> strategies{Strategy::random};
  std::vector<BalanceMode> balance{BalanceMode::none};
  double labeled_ratio = 0.2;
  double known_class_ratio = 0.75;
  std::size_t runs = 10;
  std::uint64_t base_seed = 0;
  std::optional<std::size_t> k;        // unset: estimate from k_prime
  std::optional<std::size_t> k_prime;  // unset: twice the number of train classes
  DacParams dac;
  std::size_t borderline_m = 5;
  std::size_t aug_factor = 3;
  std::size_t balance_passes = 5;
  std::string provider = "echo";  // echo | synonyms | http
  std::string lexicon_path;
  std::string paraphrase_url;
  double paraphrase_timeout = 30.0;
  std::size_t paraphrase_retries = 2;
  std::size_t paraphrase_parallel = 1;
  std::string checker = "nn";  // nn | permissive
  std::string eval_split = "all";
  std::string output_dir = "results";
  std::size_t jobs = 1;

  // Keys a config file may contain.
  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k = {
        "dataset", "embedding", "corpus", "embeddings", "alt_embeddings", "strategies", "balance",
        "labeled_ratio", "known_class_ratio", "runs", "base_seed", "k", "k_prime", "hidden_dim", "feature_dim",
        "epochs", "learning_rate", "batch_size", "pretrain_epochs", "pretrain_learning_rate", "delta_stop",
        "borderline_m", "aug_factor", "balance_passes", "paraphrase_provider", "lexicon", "paraphrase_url",
        "paraphrase_timeout", "paraphrase_retries", "paraphrase_parallel", "checker", "eval_split", "output_dir",
        "jobs"};
    return k;
  }

  // Path-valued keys; the only ones the environment may override.
  static const std::vector<std::string>& path_keys() {
    static const std::vector<std::string> k = {"corpus", "embeddings", "alt_embeddings", "lexicon", "output_dir"};
    return k;
  }

  // Relative paths resolve against `base_dir` (the config file's directory).
  static ExperimentConfig from_flat(const FlatConfig& f, const std::filesystem::path& base_dir = {}) {
    ExperimentConfig c;
    ConfigErrors errors;
    auto guard = [&](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        errors.add(e.what());
      }
    };
    for (const auto& [key, v] : f.values())
      if (std::find(keys().begin(), keys().end(), key) == keys().end()) errors.add(f.where(key) + "unknown key");

    auto path = [&](const std::string& key, std::string& out, bool required) {
      guard([&] {
        auto s = f.str(key);
        if (!s) {
          if (required) errors.add(key + ": required");
          return;
        }
        std::filesystem::path p(*s);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        out = p.lexically_normal().string();
      });
    };
    path("corpus", c.corpus_path, true);
    path("embeddings", c.embeddings_path, true);
    path("alt_embeddings", c.alt_embeddings_path, false);
    path("lexicon", c.lexicon_path, false);
    path("output_dir", c.output_dir, false);
    if (!f.has("output_dir") && !base_dir.empty()) c.output_dir = (base_dir / "results").lexically_normal().string();
    for (const auto& [key, p] : {std::pair<std::string, std::string>{"corpus", c.corpus_path},
                                 {"embeddings", c.embeddings_path},
                                 {"alt_embeddings", c.alt_embeddings_path},
                                 {"lexicon", c.lexicon_path}})
      if (!p.empty() && !std::filesystem::exists(p)) errors.add(key + ": file not found: " + p);

    guard([&] {
      if (auto s = f.str("dataset")) c.dataset = *s;
    });
    guard([&] {
      if (auto s = f.str("embedding")) c.embedding = *s;
    });
    guard([&] {
      if (auto l = f.list("strategies")) {
        c.strategies.clear();
        for (const auto& s : *l) {
          if (auto st = parse_strategy(s)) c.strategies.push_back(*st);
          else errors.add("strategies: unknown strategy '" + s + "'");
        }
      }
    });
    guard([&] {
      if (auto l = f.list("balance")) {
        c.balance.clear();
        for (const auto& s : *l) {
          if (auto b = parse_balance_mode(s)) c.balance.push_back(*b);
          else errors.add("balance: unknown mode '" + s + "'");
        }
      }
    });
    auto fraction = [&](const char* key, double& out) {
      guard([&] {
        if (auto v = f.number(key)) {
          if (!(*v > 0.0 && *v <= 1.0)) errors.add(f.where(key) + "must be in (0, 1]");
          out = *v;
        }
      });
    };
    fraction("labeled_ratio", c.labeled_ratio);
    fraction("known_class_ratio", c.known_class_ratio);
    auto count = [&](const char* key, std::size_t& out, std::size_t min) {
      guard([&] {
        if (auto v = f.integer(key)) {
          if (*v < min) errors.add(f.where(key) + "must be >= " + std::to_string(min));
          out = static_cast<std::size_t>(*v);
        }
      });
    };
    auto positive = [&](const char* key, double& out) {
      guard([&] {
        if (auto v = f.number(key)) {
          if (!(*v > 0.0)) errors.add(f.where(key) + "must be > 0");
          out = *v;
        }
      });
    };
    count("runs", c.runs, 1);
    guard([&] {
      if (auto v = f.integer("base_seed")) c.base_seed = *v;
    });
    guard([&] {
      if (auto v = f.integer("k")) {
        if (*v < 1) errors.add(f.where("k") + "must be >= 1");
        c.k = static_cast<std::size_t>(*v);
      }
    });
    guard([&] {
      if (auto v = f.integer("k_prime")) {
        if (*v < 2) errors.add(f.where("k_prime") + "must be >= 2");
        c.k_prime = static_cast<std::size_t>(*v);
      }
    });
    count("hidden_dim", c.dac.hidden_dim, 1);
    count("feature_dim", c.dac.feature_dim, 2);
    count("epochs", c.dac.epochs, 0);
    positive("learning_rate", c.dac.learning_rate);
    count("batch_size", c.dac.batch_size, 1);
    count("pretrain_epochs", c.dac.pretrain.epochs, 0);
    positive("pretrain_learning_rate", c.dac.pretrain.learning_rate);
    c.dac.pretrain.batch_size = c.dac.batch_size;
    guard([&] {
      if (auto v = f.number("delta_stop")) {
        if (!(*v >= 0.0 && *v <= 1.0)) errors.add(f.where("delta_stop") + "must be in [0, 1]");
        c.dac.delta_stop = *v;
      }
    });
    count("borderline_m", c.borderline_m, 1);
    count("aug_factor", c.aug_factor, 1);
    count("balance_passes", c.balance_passes, 1);
    guard([&] {
      if (auto s = f.str("paraphrase_provider")) c.provider = *s;
    });
    if (c.provider != "echo" && c.provider != "synonyms" && c.provider != "http")
      errors.add("paraphrase_provider: must be echo, synonyms or http");
    if (c.provider == "synonyms" && c.lexicon_path.empty()) errors.add("lexicon: required by the synonyms provider");
    guard([&] {
      if (auto s = f.str("paraphrase_url")) c.paraphrase_url = *s;
    });
    if (c.provider == "http" && c.paraphrase_url.empty()) errors.add("paraphrase_url: required by the http provider");
    positive("paraphrase_timeout", c.paraphrase_timeout);
    count("paraphrase_retries", c.paraphrase_retries, 0);
    count("paraphrase_parallel", c.paraphrase_parallel, 1);
    guard([&] {
      if (auto s = f.str("checker")) c.checker = *s;
    });
    if (c.checker != "nn" && c.checker != "permissive") errors.add("checker: must be nn or permissive");
    guard([&] {
      if (auto s = f.str("eval_split")) c.eval_split = *s;
    });
    if (c.eval_split != "all" && !parse_split(c.eval_split)) errors.add("eval_split: must be all, train, valid or test");
    count("jobs", c.jobs, 1);

    const bool needs_alt = std::find(c.strategies.begin(), c.strategies.end(),
                                     Strategy::cluster_based_sentence_emb) != c.strategies.end();
    if (needs_alt && c.alt_embeddings_path.empty()) errors.add("alt_embeddings: required by the cse strategy");
    if (c.strategies.empty()) errors.add("strategies: empty");
    if (c.balance.empty()) errors.add("balance: empty");

    errors.throw_if_any(f.source());
    return c;
  }

  static ExperimentConfig load(const std::string& path) {
    auto f = FlatConfig::load(path);
    apply_env_overrides(f, path_keys());
    return from_flat(f, std::filesystem::path(path).parent_path());
  }

  // Everything that affects results; output location and parallelism excluded.
  [[nodiscard]] nlohmann::ordered_json fingerprint() const {
    nlohmann::ordered_json j;
    j["labeled_ratio"] = labeled_ratio;
    j["known_class_ratio"] = known_class_ratio;
    j["k"] = k ? nlohmann::ordered_json(*k) : nlohmann::ordered_json();
    j["k_prime"] = k_prime ? nlohmann::ordered_json(*k_prime) : nlohmann::ordered_json();
    j["hidden_dim"] = dac.hidden_dim;
    j["feature_dim"] = dac.feature_dim;
    j["epochs"] = dac.epochs;
    j["learning_rate"] = dac.learning_rate;
    j["batch_size"] = dac.batch_size;
    j["pretrain_epochs"] = dac.pretrain.epochs;
    j["pretrain_learning_rate"] = dac.pretrain.learning_rate;
    j["delta_stop"] = dac.delta_stop;
    j["borderline_m"] = borderline_m;
    j["aug_factor"] = aug_factor;
    j["balance_passes"] = balance_passes;
    j["paraphrase_provider"] = provider;
    j["paraphrase_url"] = paraphrase_url;
    j["checker"] = checker;
    j["eval_split"] = eval_split;
    return j;
  }
};

struct RunSpec {
  BalanceMode balance = BalanceMode::none;
  Strategy strategy = Strategy::random;
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
};

struct RunResult {
  RunSpec spec;
  bool degenerate = false;
  std::string note;  // why a degenerate run produced no numbers
  double nmi = 0, ari = 0, acc = 0;  // percent
  std::size_t k = 0;
  std::size_t epochs = 0;
  std::size_t seeds = 0;
  std::size_t generated = 0;
  std::string artifact_dir;
};

struct ResultRow {
  BalanceMode balance;
  Strategy strategy;
  std::vector<RunResult> runs;
  std::optional<RunAggregate> nmi, ari, acc;  // nullopt: degenerate
};

struct ExperimentData {
  Corpus corpus;
  std::optional<EmbeddingMatrix> alt;
  std::unique_ptr<ParaphraseProvider> provider;
  std::size_t train_classes = 0;
  std::string tag;  // corpus identity for artifact hashing
};

inline std::unique_ptr<ParaphraseProvider> make_provider(const ExperimentConfig& c) {
  if (c.provider == "synonyms") return std::make_unique<SynonymTableProvider>(SynonymTableProvider::from_file(c.lexicon_path));
  if (c.provider == "http")
    return std::make_unique<HttpParaphraseProvider>(HttpProviderOptions{c.paraphrase_url, c.paraphrase_timeout, c.paraphrase_retries});
  return std::make_unique<EchoProvider>();
}

inline ExperimentData load_experiment_data(const ExperimentConfig& c) {
  ExperimentData d;
  d.corpus = load_corpus(c.corpus_path, c.embeddings_path);
  if (!c.alt_embeddings_path.empty()) {
    d.alt = EmbeddingMatrix::from(read_emb1(c.alt_embeddings_path));
    if (d.alt->rows() != d.corpus.size())
      throw Error(Errc::row_count_mismatch, c.alt_embeddings_path + ": row-count mismatch with corpus");
  }
  d.provider = make_provider(c);
  d.train_classes = train_class_names(d.corpus).size();
  d.tag = std::to_string(d.corpus.emb.checksum) + ":" + std::to_string(fnv1a64(records_to_jsonl(d.corpus.records))) +
          ":" + (d.alt ? std::to_string(d.alt->checksum) : std::string("-"));
  return d;
}

inline std::vector<RunSpec> plan_runs(const ExperimentConfig& c) {
  std::vector<RunSpec> specs;
  for (auto b : c.balance)
    for (auto s : c.strategies)
      for (std::size_t r = 0; r < c.runs; ++r) specs.push_back({b, s, r, c.base_seed + r});
  return specs;
}

inline std::string run_hash(const ExperimentConfig& c, const ExperimentData& d, const RunSpec& s) {
  nlohmann::ordered_json j;
  j["data"] = d.tag;
  j["config"] = c.fingerprint();
  j["balance"] = std::string(balance_key(s.balance));
  j["strategy"] = std::string(strategy_key(s.strategy));
  j["seed"] = s.seed;
  return hex64(fnv1a64(j.dump()));
}

inline SeedPlan select_for(const ExperimentConfig& c, const ExperimentData& d, const ClassMask& mask,
                           const std::vector<UtteranceRecord>& pool, Strategy s, std::uint64_t seed) {
  const std::size_t n = seed_count(c.labeled_ratio, pool.size());
  switch (s) {
    case Strategy::random: return select_random(pool, n, seed);
    case Strategy::cluster_based: return select_cluster_based(pool, d.corpus.emb, n, seed);
    case Strategy::known_cluster_based:
      return select_known_cluster_based(pool, d.corpus.emb, c.labeled_ratio, mask, seed);
    case Strategy::cluster_based_sentence_emb:
      if (!d.alt) throw Error(Errc::config, "cse strategy needs alt_embeddings");
      return select_cluster_based_sentence_emb(pool, *d.alt, n, seed);
    case Strategy::predicted_cluster_sampling: {
      const std::size_t kp = c.k_prime.value_or(2 * d.train_classes);
      return select_predicted_cluster_sampling(pool, d.corpus.emb, n, std::min(kp, pool.size()), seed);
    }
  }
  throw Error(Errc::invalid_argument, "unknown strategy");
}

inline GeneratedSamples balance_seeds(const ExperimentConfig& c, const ExperimentData& d, const SeedPlan& plan,
                                      BalanceMode mode, std::uint64_t seed) {
  const auto t = LabeledSet::from_ids(d.corpus, plan.selected_ids);
  GeneratedSamples none;
  none.x = Matrix(0, t.x.cols());
  if (mode == BalanceMode::none) return none;

  std::unique_ptr<LabelChecker> checker;
  if (c.checker == "permissive") {
    checker = std::make_unique<PermissiveChecker>();
  } else {
    std::vector<std::int64_t> ids;
    std::vector<std::string> labels;
    for (const auto& r : t.records) {
      ids.push_back(r.id);
      labels.push_back(*r.gold_label);
    }
    checker = std::make_unique<NearestNeighborChecker>(t.x, ids, labels);
  }
  RecordId next_id = static_cast<RecordId>(d.corpus.size());
  const ProviderCallOptions call{derive_seed(seed, 20), c.paraphrase_parallel};
  if (mode == BalanceMode::aug) return augment(t, c.aug_factor, *d.provider, *checker, next_id, call);

  BalanceOptions opts;
  opts.m = c.borderline_m;
  opts.mode = mode == BalanceMode::paramote ? OversampleMode::paramote : OversampleMode::paraphrasing;
  opts.max_passes = c.balance_passes;
  opts.call = call;
  // Classes too small for an m-neighbourhood are left alone.
  if (t.size() <= opts.m) return none;
  return balance_minorities(t, *d.provider, checker.get(), next_id, opts);
}

inline RunResult run_one(const ExperimentConfig& c, const ExperimentData& d, const RunSpec& spec) {
  RunResult out;
  out.spec = spec;
  const std::filesystem::path dir = std::filesystem::path(c.output_dir) / "runs" / run_hash(c, d, spec);
  std::filesystem::create_directories(dir);
  out.artifact_dir = dir.string();

  nlohmann::ordered_json meta;
  meta["dataset"] = c.dataset;
  meta["embedding"] = c.embedding;
  meta["balance"] = std::string(balance_key(spec.balance));
  meta["strategy"] = std::string(strategy_key(spec.strategy));
  meta["run"] = spec.run_index;
  meta["seed"] = spec.seed;
  meta["config"] = c.fingerprint();
  write_file_bytes((dir / "run.json").string(), meta.dump(2) + "\n");

  const auto mask = mask_classes(d.corpus, c.known_class_ratio, spec.seed);
  write_file_bytes((dir / "mask.json").string(), mask_to_json(mask).dump() + "\n");
  const auto pool = labeled_pool(d.corpus, mask);

  SeedPlan plan;
  try {
    plan = select_for(c, d, mask, pool, spec.strategy, derive_seed(spec.seed, 30));
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate) throw;
    out.degenerate = true;
    out.note = e.what();
    write_file_bytes((dir / "metrics.json").string(),
                     nlohmann::ordered_json{{"degenerate", true}, {"reason", out.note}}.dump() + "\n");
    return out;
  }
  out.seeds = plan.selected_ids.size();
  write_file_bytes((dir / "seed_plan.json").string(), seed_plan_to_json(plan).dump() + "\n");

  const auto generated = balance_seeds(c, d, plan, spec.balance, spec.seed);
  out.generated = generated.records.size();
  write_file_bytes((dir / "balance.jsonl").string(), records_to_jsonl(generated.records));
  LabeledSamples extra{generated.x, {}};
  for (const auto& r : generated.records) extra.labels.push_back(*r.gold_label);

  DacParams p = c.dac;
  p.rng_seed = derive_seed(spec.seed, 40);
  p.k = c.k;
  p.k_prime = c.k_prime.value_or(2 * d.train_classes);
  const auto res = run_dac(d.corpus, plan, p, extra.labels.empty() ? nullptr : &extra);
  out.k = res.k;
  out.epochs = res.final_state.epoch;

  std::vector<std::string> truth;
  std::vector<std::size_t> pred;
  const auto split = parse_split(c.eval_split);
  for (std::size_t i = 0; i < d.corpus.size(); ++i) {
    const auto& r = d.corpus.records[i];
    if (!r.gold_label || (split && r.split != *split)) continue;
    truth.push_back(*r.gold_label);
    pred.push_back(res.final_state.assignments[i]);
  }
  if (truth.size() < 2) throw Error(Errc::invalid_argument, "evaluation split has fewer than 2 gold-labeled rows");
  out.nmi = 100.0 * nmi(truth, pred);
  out.ari = 100.0 * ari(truth, pred);
  out.acc = 100.0 * aligned_acc(truth, pred);

  write_file_bytes((dir / "assignments.json").string(), nlohmann::json(res.final_state.assignments).dump() + "\n");
  nlohmann::ordered_json m;
  m["nmi"] = out.nmi;
  m["ari"] = out.ari;
  m["acc"] = out.acc;
  m["k"] = out.k;
  m["epochs"] = out.epochs;
  m["seeds"] = out.seeds;
  m["generated"] = out.generated;
  write_file_bytes((dir / "metrics.json").string(), m.dump(2) + "\n");
  return out;
}

// Runs every spec on up to `jobs` threads. Results keep spec order.
inline std::vector<RunResult> run_all(const ExperimentConfig& c, const ExperimentData& d,
                                      const std::vector<RunSpec>& specs, std::size_t jobs) {
  std::vector<RunResult> results(specs.size());
  std::vector<std::exception_ptr> errors(specs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        results[i] = run_one(c, d, specs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, specs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

inline std::vector<ResultRow> aggregate_rows(const ExperimentConfig& c, const std::vector<RunResult>& results) {
  std::vector<ResultRow> rows;
  for (auto b : c.balance)
    for (auto s : c.strategies) {
      ResultRow row{b, s, {}, {}, {}, {}};
      bool degenerate = false;
      std::vector<double> n, a, acc;
      for (const auto& r : results)
        if (r.spec.balance == b && r.spec.strategy == s) {
          row.runs.push_back(r);
          degenerate |= r.degenerate;
          n.push_back(r.nmi);
          a.push_back(r.ari);
          acc.push_back(r.acc);
        }
      if (!degenerate && !row.runs.empty()) {
        row.nmi = aggregate("NMI", n);
        row.ari = aggregate("ARI", a);
        row.acc = aggregate("ACC", acc);
      }
      rows.push_back(std::move(row));
    }
  return rows;
}

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  // "-0.00" and "0.00" are the same number; print one form.
  return std::string(buf) == "-0.00" ? "0.00" : buf;
}

inline std::string format_cell(const std::optional<RunAggregate>& a) {
  if (!a) return "-";
  return fixed2(a->mean) + "\xC2\xB1" + fixed2(a->stddev);
}

inline std::string results_csv(const ExperimentConfig& c, const std::vector<ResultRow>& rows) {
  std::string out = "dataset,embedding,balance,strategy,runs,seeds,nmi_mean,nmi_std,ari_mean,ari_std,acc_mean,acc_std\n";
  for (const auto& r : rows) {
    std::string seeds;
    for (const auto& run : r.runs) seeds += (seeds.empty() ? "" : ";") + std::to_string(run.spec.seed);
    out += c.dataset + "," + c.embedding + "," + std::string(balance_display_name(r.balance)) + "," +
           std::string(strategy_display_name(r.strategy)) + "," + std::to_string(r.runs.size()) + "," + seeds;
    for (const auto* a : {&r.nmi, &r.ari, &r.acc}) {
      if (*a) out += "," + fixed2((*a)->mean) + "," + fixed2((*a)->stddev);
      else out += ",-,-";
    }
    out += "\n";
  }
  return out;
}

inline std::string runs_csv(const std::vector<RunResult>& results) {
  std::string out = "balance,strategy,run,seed,nmi,ari,acc,k,epochs,seeds,generated\n";
  for (const auto& r : results) {
    out += std::string(balance_key(r.spec.balance)) + "," + std::string(strategy_key(r.spec.strategy)) + "," +
           std::to_string(r.spec.run_index) + "," + std::to_string(r.spec.seed) + ",";
    if (r.degenerate) out += "-,-,-,-,-,-,-\n";
    else
      out += fixed2(r.nmi) + "," + fixed2(r.ari) + "," + fixed2(r.acc) + "," + std::to_string(r.k) + "," +
             std::to_string(r.epochs) + "," + std::to_string(r.seeds) + "," + std::to_string(r.generated) + "\n";
  }
  return out;
}

namespace detail {
// Display width in code points (the table holds UTF-8 "±").
inline std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
  return w;
}
}  // namespace detail

inline std::string results_table(const ExperimentConfig& c, const std::vector<ResultRow>& rows) {
  std::vector<std::vector<std::string>> cells = {{"Dataset", "Embedding", "Balance", "Strategy", "NMI", "ARI", "ACC"}};
  for (const auto& r : rows)
    cells.push_back({c.dataset, c.embedding, std::string(balance_display_name(r.balance)),
                     std::string(strategy_display_name(r.strategy)), format_cell(r.nmi), format_cell(r.ari),
                     format_cell(r.acc)});
  std::vector<std::size_t> width(7, 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], detail::display_width(row[i]));
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      const auto pad = std::string(width[i] - detail::display_width(cells[r][i]), ' ');
      line += i < 4 ? cells[r][i] + pad : pad + cells[r][i];
      if (i + 1 < cells[r].size()) line += "  ";
    }
    out += line + "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

struct ExperimentOutput {
  std::vector<RunResult> runs;
  std::vector<ResultRow> rows;
  std::string csv, table, runs_csv;
};

inline ExperimentOutput run_experiment(const ExperimentConfig& c) {
  const auto data = load_experiment_data(c);
  std::filesystem::create_directories(c.output_dir);
  ExperimentOutput out;
  out.runs = run_all(c, data, plan_runs(c), c.jobs);
  out.rows = aggregate_rows(c, out.runs);
  out.csv = results_csv(c, out.rows);
  out.table = results_table(c, out.rows);
  out.runs_csv = runs_csv(out.runs);
  const std::filesystem::path dir(c.output_dir);
  write_file_bytes((dir / "results.csv").string(), out.csv);
  write_file_bytes((dir / "results.txt").string(), out.table);
  write_file_bytes((dir / "runs.csv").string(), out.runs_csv);
  return out;
}

}  // namespace ilab
