#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

#include "balance_fixture.hpp"
#include "fixtures.hpp"
#include "ilab/balance.hpp"
#include "ilab/paraphrase_client.hpp"

using namespace ilab;
using fixture::random_labeled;
using fixture::twelve_points;

namespace {

// Brute force: full sort of all other points by (distance, id).
std::map<RecordId, std::size_t> brute_force_foreign(const LabeledSet& t, const std::string& minority, std::size_t m) {
  std::map<RecordId, std::size_t> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (*t.records[i].gold_label != minority) continue;
    std::vector<std::pair<double, RecordId>> all;
    std::map<RecordId, std::string> lab;
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (j == i) continue;
      double d = 0;
      for (std::size_t c = 0; c < t.x.cols(); ++c) d += (t.x(i, c) - t.x(j, c)) * (t.x(i, c) - t.x(j, c));
      all.emplace_back(d, t.records[j].id);
      lab[t.records[j].id] = *t.records[j].gold_label;
    }
    std::sort(all.begin(), all.end());
    std::size_t f = 0;
    for (std::size_t k = 0; k < m; ++k) f += lab[all[k].second] != minority;
    out[t.records[i].id] = f;
  }
  return out;
}

class EveryTenthRejects final : public LabelChecker {
 public:
  std::optional<std::string> predict(const Candidate& c) const override {
    if (++calls_ % 10 == 0) return std::nullopt;
    return c.source_label;
  }

 private:
  mutable std::atomic<std::size_t> calls_{0};
};

class ThrowingProvider final : public ParaphraseProvider {
 public:
  [[nodiscard]] std::string name() const override { return "throws"; }
  std::vector<std::string> paraphrase(const std::string&, std::size_t, std::uint64_t) const override {
    throw std::runtime_error("backend down");
  }
};

class EmptyProvider final : public ParaphraseProvider {
 public:
  [[nodiscard]] std::string name() const override { return "empty"; }
  std::vector<std::string> paraphrase(const std::string&, std::size_t, std::uint64_t) const override { return {}; }
};

}  // namespace

TEST(Categorize, Thresholds) {
  EXPECT_EQ(categorize(5, 5), Category::noise);
  EXPECT_EQ(categorize(5, 4), Category::danger);
  EXPECT_EQ(categorize(5, 3), Category::danger);
  EXPECT_EQ(categorize(5, 2), Category::safe);
  EXPECT_EQ(categorize(4, 2), Category::danger);
  EXPECT_EQ(categorize(4, 1), Category::safe);
  EXPECT_EQ(categorize(1, 0), Category::safe);
  EXPECT_EQ(categorize(1, 1), Category::noise);
  EXPECT_EQ(categorize(5, 0), Category::safe);
}

TEST(ClassifyBorderline, TwelvePointFixture) {
  const auto t = twelve_points();
  const auto v = classify_borderline(t, "A", 3);
  const std::vector<NeighborhoodVerdict> expected = {
      {0, 3, 1, Category::safe},  {1, 3, 1, Category::safe},   {2, 3, 2, Category::danger},
      {5, 3, 3, Category::noise}, {8, 3, 2, Category::danger}, {10, 3, 2, Category::danger}};
  EXPECT_EQ(v, expected);
  const auto bf = brute_force_foreign(t, "A", 3);
  for (const auto& x : v) EXPECT_EQ(x.m_prime, bf.at(x.instance_id));
  const auto ds = danger_set(v);
  EXPECT_EQ(ds.members, (std::vector<RecordId>{2, 8, 10}));
  EXPECT_EQ(ds.d_num, 3u);
  EXPECT_EQ(ds.p_num, 6u);
}

TEST(ClassifyBorderline, MatchesBruteForceOnRandomSets) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto t = random_labeled(s, 40, 3);
    for (std::size_t m : {1, 3, 5, 10}) {
      const auto v = classify_borderline(t, "c0", m);
      const auto bf = brute_force_foreign(t, "c0", m);
      ASSERT_EQ(v.size(), bf.size());
      for (const auto& x : v) {
        EXPECT_EQ(x.m_prime, bf.at(x.instance_id));
        EXPECT_EQ(x.category, categorize(m, x.m_prime));
      }
    }
  }
}

TEST(ClassifyBorderline, RejectsBadM) {
  const auto t = twelve_points();
  EXPECT_THROW(classify_borderline(t, "A", 12), Error);
  EXPECT_THROW(classify_borderline(t, "A", 0), Error);
  EXPECT_THROW(classify_borderline(t, "Z", 3), Error);
}

TEST(Oversample, EchoProviderYieldsOnePerDangerMember) {
  const auto t = twelve_points();
  EchoProvider echo;
  RecordId next = 12;
  const auto g = oversample_paraphrase(t, "A", 3, echo, OversampleMode::paraphrasing, nullptr, next);
  ASSERT_EQ(g.records.size(), 3u);
  EXPECT_EQ(next, 15);
  const std::vector<RecordId> sources = {2, 8, 10};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = g.records[i];
    EXPECT_EQ(r.id, static_cast<RecordId>(12 + i));
    EXPECT_EQ(r.gold_label, "A");
    EXPECT_EQ(r.split, Split::train);
    EXPECT_EQ(r.source_id, sources[i]);
    EXPECT_EQ(r.text, t.records[static_cast<std::size_t>(sources[i])].text);
    EXPECT_EQ(g.x(i, 0), t.x(static_cast<std::size_t>(sources[i]), 0));
  }
}

TEST(Oversample, ParaMoteWithRejectAllYieldsNothing) {
  const auto t = twelve_points();
  EchoProvider echo;
  RejectAllChecker no;
  RecordId next = 12;
  const auto g = oversample_paraphrase(t, "A", 3, echo, OversampleMode::paramote, &no, next);
  EXPECT_TRUE(g.records.empty());
  EXPECT_EQ(next, 12);
  ASSERT_EQ(g.candidates.size(), 3u);
  for (const auto& c : g.candidates) EXPECT_EQ(c.reject_reason, RejectReason::label_mismatch);
}

TEST(Oversample, ParaMoteRequiresChecker) {
  const auto t = twelve_points();
  EchoProvider echo;
  RecordId next = 12;
  EXPECT_THROW(oversample_paraphrase(t, "A", 3, echo, OversampleMode::paramote, nullptr, next), Error);
}

TEST(Oversample, NearestNeighbourCheckerHandOracle) {
  // Leaving the source out: source 2 -> nearest is id 1 (A, kept);
  // source 8 -> id 9 (B, rejected); source 10 -> id 9 (B, rejected).
  const auto t = twelve_points();
  std::vector<std::int64_t> ids;
  std::vector<std::string> labels;
  for (const auto& r : t.records) {
    ids.push_back(r.id);
    labels.push_back(*r.gold_label);
  }
  NearestNeighborChecker nn(t.x, ids, labels);
  EchoProvider echo;
  RecordId next = 100;
  const auto g = oversample_paraphrase(t, "A", 3, echo, OversampleMode::paramote, &nn, next);
  ASSERT_EQ(g.records.size(), 1u);
  EXPECT_EQ(g.records[0].source_id, 2);
  EXPECT_EQ(g.records[0].id, 100);
}

TEST(Oversample, EmptyProviderOutputIsRejected) {
  const auto t = twelve_points();
  EmptyProvider empty;
  RecordId next = 12;
  const auto g = oversample_paraphrase(t, "A", 3, empty, OversampleMode::paraphrasing, nullptr, next);
  EXPECT_TRUE(g.records.empty());
  for (const auto& c : g.candidates) EXPECT_EQ(c.reject_reason, RejectReason::provider_empty);
}

TEST(Oversample, ProviderErrorNamesSource) {
  const auto t = twelve_points();
  ThrowingProvider bad;
  RecordId next = 12;
  try {
    oversample_paraphrase(t, "A", 3, bad, OversampleMode::paraphrasing, nullptr, next);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::provider);
    EXPECT_NE(std::string(e.what()).find("source_id 2"), std::string::npos);
  }
}

TEST(Oversample, ParaMoteIsSubsetOfParaphrasing) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto t = random_labeled(1000 + s, 60, 3);
    std::vector<std::int64_t> ids;
    std::vector<std::string> labels;
    for (const auto& r : t.records) {
      ids.push_back(r.id);
      labels.push_back(*r.gold_label);
    }
    NearestNeighborChecker nn(t.x, ids, labels);
    SynonymTableProvider syn({{"utt", {"utterance", "phrase", "line"}}});
    RecordId n1 = 60, n2 = 60;
    const auto para = oversample_paraphrase(t, "c1", 5, syn, OversampleMode::paraphrasing, nullptr, n1, {s, 1});
    const auto mote = oversample_paraphrase(t, "c1", 5, syn, OversampleMode::paramote, &nn, n2, {s, 1});
    std::set<std::pair<RecordId, std::string>> a, b;
    for (const auto& r : para.records) a.emplace(*r.source_id, r.text);
    for (const auto& r : mote.records) b.emplace(*r.source_id, r.text);
    EXPECT_TRUE(std::includes(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST(Oversample, ParallelCallsKeepOrder) {
  const auto t = random_labeled(7, 80, 2);
  SynonymTableProvider syn({{"utt", {"a", "b", "c", "d"}}});
  RecordId n1 = 80, n2 = 80;
  const auto serial = oversample_paraphrase(t, "c0", 5, syn, OversampleMode::paraphrasing, nullptr, n1, {3, 1});
  const auto par = oversample_paraphrase(t, "c0", 5, syn, OversampleMode::paraphrasing, nullptr, n2, {3, 4});
  ASSERT_EQ(serial.records.size(), par.records.size());
  for (std::size_t i = 0; i < serial.records.size(); ++i) {
    EXPECT_EQ(serial.records[i].id, par.records[i].id);
    EXPECT_EQ(serial.records[i].text, par.records[i].text);
    EXPECT_EQ(serial.records[i].source_id, par.records[i].source_id);
  }
}

TEST(Augment, FactorOneIsEmpty) {
  const auto t = random_labeled(1, 20, 2);
  EchoProvider echo;
  PermissiveChecker ok;
  RecordId next = 20;
  EXPECT_TRUE(augment(t, 1, echo, ok, next).records.empty());
  EXPECT_EQ(next, 20);
  EXPECT_THROW(augment(t, 0, echo, ok, next), Error);
}

TEST(Augment, FactorThreeGivesTwoPerRecord) {
  const auto t = random_labeled(2, 25, 3);
  EchoProvider echo;
  PermissiveChecker ok;
  RecordId next = 25;
  const auto g = augment(t, 3, echo, ok, next);
  ASSERT_EQ(g.records.size(), 50u);
  std::map<RecordId, std::size_t> per_source;
  for (const auto& r : g.records) ++per_source[*r.source_id];
  for (const auto& [src, n] : per_source) EXPECT_EQ(n, 2u);
  EXPECT_EQ(g.x.rows(), 50u);
}

TEST(Augment, CheckerFiltersEveryTenth) {
  const auto t = random_labeled(3, 100, 4);
  EchoProvider echo;
  EveryTenthRejects checker;
  RecordId next = 100;
  const auto g = augment(t, 3, echo, checker, next);
  EXPECT_EQ(g.records.size(), 180u);
  EXPECT_EQ(g.candidates.size(), 200u);
}

TEST(Augment, IdsNeverCollide) {
  const auto t = random_labeled(4, 50, 2);
  EchoProvider echo;
  PermissiveChecker ok;
  RecordId next = 50;
  auto g1 = augment(t, 2, echo, ok, next);
  auto g2 = oversample_paraphrase(t, "c0", 3, echo, OversampleMode::paraphrasing, nullptr, next);
  std::set<RecordId> ids;
  for (const auto& r : t.records) ids.insert(r.id);
  for (const auto& r : g1.records) EXPECT_TRUE(ids.insert(r.id).second);
  for (const auto& r : g2.records) EXPECT_TRUE(ids.insert(r.id).second);
}

TEST(Balance, MinoritiesGrowTowardsMedianAndNeverPastIt) {
  // Class sizes 40, 30, 10, 6: median 20, so c2 and c3 are minorities.
  Rng rng(5);
  LabeledSet t;
  const std::vector<std::size_t> sizes = {40, 30, 10, 6};
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  t.x = Matrix(total, 2);
  std::size_t r = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c)
    for (std::size_t i = 0; i < sizes[c]; ++i, ++r) {
      t.x(r, 0) = rng.normal() * 2.0;
      t.x(r, 1) = rng.normal() * 2.0;
      t.records.push_back({static_cast<RecordId>(r), "u", "c" + std::to_string(c), Split::train, {}});
    }
  EchoProvider echo;
  RecordId next = static_cast<RecordId>(total);
  BalanceReport rep;
  const auto g = balance_minorities(t, echo, nullptr, next, BalanceOptions{}, &rep);
  EXPECT_DOUBLE_EQ(rep.median, 20.0);
  EXPECT_EQ(rep.minority_classes, (std::vector<std::string>{"c3", "c2"}));
  EXPECT_LE(rep.passes, 5u);
  std::map<std::string, std::size_t> added;
  for (const auto& rec : g.records) ++added[*rec.gold_label];
  EXPECT_EQ(added.count("c0") + added.count("c1"), 0u);
  EXPECT_LE(10 + added["c2"], 20u);
  EXPECT_LE(6 + added["c3"], 20u);
  EXPECT_GT(added["c2"] + added["c3"], 0u);
  EXPECT_EQ(next, static_cast<RecordId>(total + g.records.size()));
  for (std::size_t i = 0; i < g.records.size(); ++i) EXPECT_EQ(g.records[i].id, static_cast<RecordId>(total + i));
}

TEST(Balance, Deterministic) {
  const auto t = random_labeled(11, 90, 5);
  SynonymTableProvider syn({{"utt", {"x", "y"}}});
  RecordId a = 90, b = 90;
  BalanceOptions o;
  o.call.rng_seed = 9;
  const auto g1 = balance_minorities(t, syn, nullptr, a, o);
  o.call.max_parallel = 3;
  const auto g2 = balance_minorities(t, syn, nullptr, b, o);
  EXPECT_EQ(g1.records.size(), g2.records.size());
  EXPECT_EQ(records_to_jsonl(g1.records), records_to_jsonl(g2.records));
}

TEST(SynonymProvider, SubstitutesFromLexicon) {
  fixture::TempDir dir("lex");
  {
    std::ofstream f(dir.file("lex.txt"));
    f << "# comment\nbook: reserve, schedule\n\nflight: plane ticket  # trailing\n";
  }
  const auto p = SynonymTableProvider::from_file(dir.file("lex.txt"));
  const auto out = p.paraphrase("Book a flight", 2, 0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], "reserve a plane ticket");
  EXPECT_EQ(out[1], "schedule a plane ticket");
  EXPECT_EQ(p.paraphrase("Book a flight", 2, 0), out);
  {
    std::ofstream f(dir.file("bad.txt"));
    f << "no colon here\n";
  }
  EXPECT_THROW(SynonymTableProvider::from_file(dir.file("bad.txt")), Error);
  EXPECT_THROW(SynonymTableProvider::from_file(dir.file("missing.txt")), Error);
}

TEST(HttpProvider, TalksToLocalServer) {
  httplib::Server srv;
  std::atomic<int> hits{0};
  srv.Post("/paraphrase", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    auto j = nlohmann::json::parse(req.body);
    if (j["text"] == "bad") {
      res.status = 422;
      res.set_content(R"({"error":"refused"})", "application/json");
      return;
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j["n"].get<std::size_t>(); ++i)
      out.push_back(j["text"].get<std::string>() + " #" + std::to_string(j["seed"].get<std::uint64_t>() + i));
    res.set_content(nlohmann::json{{"paraphrases", out}}.dump(), "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  HttpParaphraseProvider p({"http://127.0.0.1:" + std::to_string(port), 5.0, 2});
  EXPECT_EQ(p.paraphrase("hello", 2, 10), (std::vector<std::string>{"hello #10", "hello #11"}));
  hits = 0;
  try {
    p.paraphrase("bad", 1, 0);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::provider);
    EXPECT_NE(std::string(e.what()).find("422"), std::string::npos);
  }
  EXPECT_EQ(hits.load(), 1);  // 4xx is not retried

  const auto t = twelve_points();
  RecordId next = 12;
  const auto g = oversample_paraphrase(t, "A", 3, p, OversampleMode::paraphrasing, nullptr, next, {0, 3});
  EXPECT_EQ(g.records.size(), 3u);
  srv.stop();
  th.join();

  HttpParaphraseProvider down({"http://127.0.0.1:" + std::to_string(port), 0.5, 1});
  EXPECT_THROW(down.paraphrase("hello", 1, 0), Error);
}
