#include <gtest/gtest.h>

#include <cstdlib>

#include "experiment_fixture.hpp"
#include "ilab/config.hpp"
#include "ilab/experiment.hpp"

using namespace ilab;

TEST(FlatConfig, ParsesScalarsListsAndComments) {
  const auto c = FlatConfig::parse_string(
      "# header\n"
      "a = 1\n"
      "  b=two   # trailing\n"
      "c = \"quoted # not a comment, nor a separator\"\n"
      "d = x, \"y z\",w\n"
      "e = \"esc \\\" \\\\ done\"\n"
      "\n");
  EXPECT_EQ(c.integer("a"), 1u);
  EXPECT_EQ(c.str("b"), "two");
  EXPECT_EQ(c.str("c"), "quoted # not a comment, nor a separator");
  EXPECT_EQ(c.list("d"), (std::vector<std::string>{"x", "y z", "w"}));
  EXPECT_EQ(c.str("e"), "esc \" \\ done");
  EXPECT_FALSE(c.has("zzz"));
  EXPECT_THROW(c.str("d"), Error);
  EXPECT_THROW((void)c.number("b"), Error);
}

TEST(FlatConfig, ReportsAllSyntaxErrorsAtOnce) {
  try {
    FlatConfig::parse_string("a = 1\nno equals\nb = \"open\na = 2\nc =\n", "x.conf");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("4 errors"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos);
    EXPECT_NE(msg.find("unterminated"), std::string::npos);
    EXPECT_NE(msg.find("duplicate key 'a'"), std::string::npos);
    EXPECT_NE(msg.find("missing value"), std::string::npos);
  }
}

TEST(ExperimentConfig, ValidationErrorsAreAggregated) {
  const auto f = FlatConfig::parse_string(
      "corpus = /nonexistent/c.jsonl\n"
      "labeled_ratio = 1.5\n"
      "runs = 0\n"
      "strategies = random, bogus, cse\n"
      "balance = sideways\n"
      "colour = blue\n",
      "bad.conf");
  try {
    ExperimentConfig::from_flat(f);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    for (const char* needle : {"embeddings: required", "file not found", "labeled_ratio", "runs", "bogus",
                               "sideways", "colour", "alt_embeddings: required"})
      EXPECT_NE(msg.find(needle), std::string::npos) << needle << "\n" << msg;
  }
}

TEST(ExperimentConfig, MissingEmbeddingIsOneAggregatedError) {
  fixture::TempDir dir("cfg_missing");
  const auto path = fixture::write_blob_experiment(dir.path(), 1, "", 20);
  std::filesystem::remove(dir.path() / "emb.emb");
  try {
    ExperimentConfig::load(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
    EXPECT_NE(std::string(e.what()).find("1 error"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("emb.emb"), std::string::npos);
  }
}

TEST(ExperimentConfig, EnvironmentOverridesPathsOnly) {
  fixture::TempDir dir("cfg_env");
  const auto path = fixture::write_blob_experiment(dir.path(), 1, "", 20);
  ::setenv("ILAB_OUTPUT_DIR", (dir.path() / "elsewhere").c_str(), 1);
  ::setenv("ILAB_RUNS", "7", 1);
  const auto c = ExperimentConfig::load(path);
  ::unsetenv("ILAB_OUTPUT_DIR");
  ::unsetenv("ILAB_RUNS");
  EXPECT_EQ(c.output_dir, (dir.path() / "elsewhere").string());
  EXPECT_EQ(c.runs, 1u);
  EXPECT_EQ(c.corpus_path, (dir.path() / "corpus.jsonl").string());
}

TEST(Experiment, FixtureTableHasOneRowPerStrategyAndIsStable) {
  fixture::TempDir dir("exp");
  const auto path = fixture::write_blob_experiment(dir.path(), 3, "strategies = random, cb, cse, pcs\n");
  auto cfg = ExperimentConfig::load(path);
  const auto a = run_experiment(cfg);
  ASSERT_EQ(a.rows.size(), 4u);
  for (const auto& row : a.rows) {
    ASSERT_TRUE(row.acc);
    EXPECT_EQ(row.runs.size(), 3u);
    EXPECT_EQ(row.runs[0].spec.seed, 0u);
    EXPECT_EQ(row.runs[2].spec.seed, 2u);
  }
  const std::string header = a.table.substr(0, a.table.find('\n'));
  EXPECT_NE(header.find("Strategy"), std::string::npos);
  EXPECT_NE(a.table.find("RandomSampling"), std::string::npos);
  EXPECT_NE(a.table.find("PredictedClusterSampling"), std::string::npos);
  EXPECT_EQ(read_file_bytes(cfg.output_dir + "/results.txt"), a.table);

  cfg.jobs = 3;
  const auto b = run_experiment(cfg);
  EXPECT_EQ(a.table, b.table);
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(a.runs_csv, b.runs_csv);
}

TEST(Experiment, SingleRunHasZeroStd) {
  fixture::TempDir dir("exp1");
  const auto path = fixture::write_blob_experiment(dir.path(), 1, "", 60);
  const auto out = run_experiment(ExperimentConfig::load(path));
  ASSERT_EQ(out.rows.size(), 1u);
  for (const auto* agg : {&out.rows[0].nmi, &out.rows[0].ari, &out.rows[0].acc}) {
    ASSERT_TRUE(*agg);
    EXPECT_EQ((*agg)->stddev, 0.0);
  }
  EXPECT_NE(out.table.find("\xC2\xB1" "0.00"), std::string::npos);
}

TEST(Experiment, DegenerateKnownClusterPlanPrintsDash) {
  fixture::TempDir dir("exp_kcb");
  // 0.01 x ~ 30-point clusters rounds to 0 everywhere.
  const auto path = fixture::write_blob_experiment(dir.path(), 2, "strategies = kcb\nlabeled_ratio = 0.01\n", 30);
  const auto out = run_experiment(ExperimentConfig::load(path));
  ASSERT_EQ(out.rows.size(), 1u);
  EXPECT_FALSE(out.rows[0].acc);
  EXPECT_NE(out.table.find("KnownClusterBased"), std::string::npos);
  const auto last = out.table.substr(out.table.rfind("KnownClusterBased"));
  EXPECT_NE(last.find("  -  "), std::string::npos) << out.table;
}

TEST(Experiment, BalanceModesRunAndRecordGeneratedRows) {
  fixture::TempDir dir("exp_bal");
  const auto path = fixture::write_blob_experiment(dir.path(), 1,
                                                   "balance = none, paraphrasing, paramote, aug\nborderline_m = 3\n", 60);
  const auto out = run_experiment(ExperimentConfig::load(path));
  ASSERT_EQ(out.rows.size(), 4u);
  EXPECT_EQ(out.rows[0].runs[0].generated, 0u);
  // Aug triples the seed set nominally: 2 per seed with a permissive-enough checker.
  EXPECT_GT(out.rows[3].runs[0].generated, 0u);
  EXPECT_LE(out.rows[3].runs[0].generated, 2 * out.rows[3].runs[0].seeds);
  EXPECT_LE(out.rows[2].runs[0].generated, out.rows[1].runs[0].generated);
  for (const auto& row : out.rows) EXPECT_TRUE(std::filesystem::exists(row.runs[0].artifact_dir + "/metrics.json"));
}

TEST(Experiment, ArtifactDirectoriesAreContentAddressed) {
  fixture::TempDir dir("exp_hash");
  const auto path = fixture::write_blob_experiment(dir.path(), 2, "", 30);
  auto cfg = ExperimentConfig::load(path);
  const auto a = run_experiment(cfg);
  EXPECT_NE(a.runs[0].artifact_dir, a.runs[1].artifact_dir);
  cfg.output_dir = (dir.path() / "other").string();
  const auto b = run_experiment(cfg);
  EXPECT_EQ(std::filesystem::path(a.runs[0].artifact_dir).filename(), std::filesystem::path(b.runs[0].artifact_dir).filename());
  cfg.labeled_ratio = 0.3;
  const auto c = run_experiment(cfg);
  EXPECT_NE(std::filesystem::path(a.runs[0].artifact_dir).filename(), std::filesystem::path(c.runs[0].artifact_dir).filename());
}

TEST(Experiment, TableFormatting) {
  ExperimentConfig c;
  c.dataset = "BANKING";
  c.embedding = "Sentence";
  ResultRow row{BalanceMode::none, Strategy::random, {}, aggregate("NMI", {71.2661}), aggregate("ARI", {68, 70, 72}),
                std::nullopt};
  row.nmi->stddev = 2.2751;
  const auto t = results_table(c, {row});
  EXPECT_NE(t.find("71.27\xC2\xB1" "2.28"), std::string::npos) << t;
  EXPECT_NE(t.find("70.00\xC2\xB1" "1.63"), std::string::npos) << t;
  const auto lines = std::count(t.begin(), t.end(), '\n');
  EXPECT_EQ(lines, 3);
}
