#include <gtest/gtest.h>
#include <httplib.h>

#include <json.hpp>

#include "fixtures.hpp"
#include "ilab/label_session.hpp"
#include "ilab/service.hpp"

using namespace ilab;

namespace {

SessionOptions checked() {
  SessionOptions o;
  o.verify_replay = true;
  o.snapshot_every = 4;
  return o;
}

// 30 points: a 10-point cluster near (0,0), one near (10,0), one near (0,10).
// Records 0, 1, 2 (in the first cluster) carry gold labels.
struct Fixture {
  std::vector<UtteranceRecord> records;
  Matrix coords;
  std::vector<std::int64_t> clusters;
};

Fixture three_clusters() {
  Fixture f;
  Rng rng(3);
  f.coords = Matrix(30, 2);
  const double cx[3] = {0, 10, 0}, cy[3] = {0, 0, 10};
  for (std::size_t i = 0; i < 30; ++i) {
    const std::size_t c = i / 10;
    f.coords(i, 0) = cx[c] + rng.uniform() - 0.5;
    f.coords(i, 1) = cy[c] + rng.uniform() - 0.5;
    UtteranceRecord r{static_cast<RecordId>(i), "text " + std::to_string(i), std::nullopt, Split::train, std::nullopt};
    if (i < 3) r.gold_label = "gold_a";
    f.records.push_back(r);
    f.clusters.push_back(static_cast<std::int64_t>(c));
  }
  return f;
}

Polygon box(double cx, double cy, double h) {
  return {{cx - h, cy - h}, {cx + h, cy - h}, {cx + h, cy + h}, {cx - h, cy + h}};
}

LabelSession make(const Fixture& f, std::optional<std::filesystem::path> dir = std::nullopt) {
  return LabelSession("s1", f.records, f.coords, gold_base(f.records), f.clusters, dir, checked());
}

}  // namespace

TEST(LabelSession, BulkLabelsCluster) {
  const auto f = three_clusters();
  auto s = make(f);
  EXPECT_EQ(s.apply_bulk(box(10, 0, 1), "b"), 10u);
  for (RecordId id = 10; id < 20; ++id) EXPECT_EQ(s.assignments().at(id), (LabelAssignment{"b", Provenance::bulk}));
  EXPECT_EQ(s.apply_bulk(box(10, 0, 1), "b"), 10u);
  EXPECT_EQ(s.summary(), (LabelSummary{3, 10, 0, 17}));
}

TEST(LabelSession, GoldIsPreserved) {
  const auto f = three_clusters();
  auto s = make(f);
  EXPECT_EQ(s.apply_bulk(box(0, 0, 1), "x"), 7u);
  for (RecordId id = 0; id < 3; ++id) EXPECT_EQ(s.assignments().at(id), (LabelAssignment{"gold_a", Provenance::gold}));
  EXPECT_THROW(s.apply_single(1, "y"), Error);
  EXPECT_EQ(s.relabel("gold_a", "z"), 0u);
  EXPECT_EQ(s.assignments().at(0).label, "gold_a");
}

TEST(LabelSession, EmptySelectionIsNoOp) {
  const auto f = three_clusters();
  auto s = make(f);
  EXPECT_EQ(s.apply_bulk(box(50, 50, 1), "x"), 0u);
  EXPECT_TRUE(s.log().empty());
  EXPECT_THROW(s.apply_bulk(box(0, 0, 1), ""), Error);
  EXPECT_THROW(s.apply_bulk({{0, 0}, {1, 1}, {2, 2}}, "x"), Error);
}

TEST(LabelSession, UndoSemantics) {
  const auto f = three_clusters();
  auto s = make(f);
  try {
    s.undo();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_log);
    EXPECT_STREQ(e.what(), "empty log");
  }
  s.apply_bulk(box(10, 0, 1), "b");
  const auto reverted = s.undo();
  EXPECT_EQ(reverted.kind, ActionKind::bulk_polygon);
  EXPECT_EQ(s.summary(), (LabelSummary{3, 0, 0, 27}));
  EXPECT_THROW(s.undo(), Error);
}

TEST(LabelSession, UndoOverlapRevertsToEarlierLabel) {
  const auto f = three_clusters();
  auto s = make(f);
  // First covers clusters 0 and 1; second covers cluster 1 only.
  s.apply_bulk({{-2, -2}, {12, -2}, {12, 2}, {-2, 2}}, "first");
  s.apply_bulk(box(10, 0, 1), "second");
  EXPECT_EQ(s.assignments().at(15).label, "second");
  s.undo();
  for (RecordId id = 10; id < 20; ++id) EXPECT_EQ(s.assignments().at(id).label, "first");
  for (RecordId id = 3; id < 10; ++id) EXPECT_EQ(s.assignments().at(id).label, "first");
}

TEST(LabelSession, SingleAndRelabel) {
  const auto f = three_clusters();
  auto s = make(f);
  s.apply_bulk(box(0, 10, 1), "c");
  EXPECT_EQ(s.apply_single(25, "d"), 1u);
  EXPECT_EQ(s.assignments().at(25), (LabelAssignment{"d", Provenance::single}));
  EXPECT_EQ(s.relabel("c", "merged"), 9u);
  EXPECT_EQ(s.assignments().at(20).label, "merged");
  EXPECT_EQ(s.assignments().at(20).provenance, Provenance::bulk);
  EXPECT_THROW(s.apply_single(99, "x"), Error);
  s.undo();  // relabel
  EXPECT_EQ(s.assignments().at(20).label, "c");
}

TEST(LabelSession, ReplayMatchesAfterRandomActions) {
  const auto f = three_clusters();
  auto s = make(f);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto r = rng.below(10);
    if (r < 5) {
      s.apply_bulk(fixture::random_star_polygon(rng, 3 + rng.below(5)), "l" + std::to_string(rng.below(4)));
    } else if (r < 8) {
      const auto id = static_cast<RecordId>(3 + rng.below(27));
      s.apply_single(id, "l" + std::to_string(rng.below(4)));
    } else if (s.effective_depth() > 0) {
      s.undo();
    }
    ASSERT_EQ(s.replay(), s.assignments());
  }
}

TEST(LabelSession, ExportSummaryAndRoundTrip) {
  fixture::TempDir dir("export");
  const auto f = three_clusters();
  auto s = make(f);
  auto sum = s.export_labeled(dir.file("a.jsonl"));
  EXPECT_EQ(sum.bulk + sum.single, 0u);
  EXPECT_EQ(sum.total(), 30u);
  s.apply_bulk(box(0, 0, 1), "a");
  s.apply_bulk(box(10, 0, 1), "b");
  s.apply_bulk(box(0, 10, 1), "c");
  s.apply_single(4, "a2");
  sum = s.export_labeled(dir.file("b.jsonl"));
  EXPECT_EQ(sum, (LabelSummary{3, 26, 1, 0}));

  const auto imported = import_labeled(dir.file("b.jsonl"));
  LabelSession again("s2", imported.records, f.coords, imported.base, {}, std::nullopt, checked());
  again.export_labeled(dir.file("c.jsonl"));
  EXPECT_EQ(read_file_bytes(dir.file("b.jsonl")), read_file_bytes(dir.file("c.jsonl")));
  EXPECT_EQ(again.summary(), sum);
  // Imported bulk labels are still editable; gold ones are not.
  EXPECT_EQ(again.apply_single(4, "x"), 1u);
  EXPECT_THROW(again.apply_single(0, "x"), Error);

  const auto line = read_file_bytes(dir.file("b.jsonl")).substr(0, read_file_bytes(dir.file("b.jsonl")).find('\n'));
  EXPECT_EQ(line, R"({"id":0,"text":"text 0","label":"gold_a","split":"train","provenance":"gold"})");
}

TEST(LabelSession, RejectsCoordsMismatch) {
  const auto f = three_clusters();
  EXPECT_THROW(LabelSession("s", f.records, Matrix(29, 2), {}, {}), Error);
  EXPECT_THROW(LabelSession("s", f.records, f.coords, {}, std::vector<std::int64_t>(3, 0)), Error);
}

TEST(LabelSession, PersistsAndRecovers) {
  fixture::TempDir dir("persist");
  const auto f = three_clusters();
  const auto path = dir.path() / "sess";
  AssignmentMap expected, before_single;
  LabelSummary stats;
  {
    auto s = make(f, path);
    Rng rng(9);
    for (int i = 0; i < 23; ++i) {
      if (i % 5 == 4) s.undo();
      else s.apply_bulk(fixture::random_star_polygon(rng, 5), "l" + std::to_string(i % 3));
    }
    before_single = s.assignments();
    s.apply_single(7, "solo");
    expected = s.assignments();
    stats = s.summary();
    EXPECT_TRUE(std::filesystem::exists(path / "snapshot.json"));
  }
  auto back = LabelSession::open(path, checked());
  EXPECT_EQ(back.assignments(), expected);
  EXPECT_EQ(back.summary(), stats);
  EXPECT_EQ(back.clusters(), f.clusters);
  // Undo continues to work across a restart.
  EXPECT_EQ(back.undo().kind, ActionKind::single);
  EXPECT_EQ(back.assignments(), before_single);
}

TEST(LabelSession, RecoversFromTornLogTail) {
  fixture::TempDir dir("torn");
  const auto f = three_clusters();
  const auto path = dir.path() / "sess";
  AssignmentMap expected;
  {
    auto s = make(f, path);
    s.apply_bulk(box(10, 0, 1), "b");
    expected = s.assignments();
  }
  {
    std::ofstream out(path / "actions.jsonl", std::ios::app);
    out << R"({"seq":2,"kind":"single","lab)";
  }
  auto back = LabelSession::open(path, checked());
  EXPECT_EQ(back.assignments(), expected);
  back.apply_single(25, "z");
  auto again = LabelSession::open(path, checked());
  EXPECT_EQ(again.assignments(), back.assignments());
}

TEST(LabelSession, SnapshotWithoutLogIsIgnoredSafely) {
  fixture::TempDir dir("snap");
  const auto f = three_clusters();
  const auto path = dir.path() / "sess";
  {
    auto s = make(f, path);
    for (int i = 0; i < 4; ++i) s.apply_bulk(box(10, 0, 1), "b" + std::to_string(i));
  }
  // Snapshot was written at 4 actions; tail replay from it gives the same state.
  auto back = LabelSession::open(path, checked());
  EXPECT_EQ(back.assignments().at(12).label, "b3");
  EXPECT_EQ(back.log().size(), 4u);
  EXPECT_THROW(LabelSession::open(dir.path() / "missing"), Error);
}

// ---------------------------------------------------------------------------

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto f = three_clusters();
    svc.add_session(LabelSession("demo", f.records, f.coords, gold_base(f.records), f.clusters, std::nullopt, checked()));
    port = svc.start();
  }
  void TearDown() override { svc.stop(); }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }

  LabelService svc;
  int port = 0;
};

TEST_F(ServiceTest, PointsStatsBulkUndoExport) {
  auto cli = client();
  auto pts = cli.Get("/session/demo/points");
  ASSERT_TRUE(pts);
  ASSERT_EQ(pts->status, 200);
  auto j = nlohmann::json::parse(pts->body);
  ASSERT_EQ(j.size(), 30u);
  EXPECT_EQ(j[0]["label"], "gold_a");
  EXPECT_EQ(j[0]["cluster"], 0);
  EXPECT_FALSE(j[5].contains("label"));
  EXPECT_EQ(j[15]["cluster"], 1);

  nlohmann::json body{{"polygon", {{9, -1}, {11, -1}, {11, 1}, {9, 1}}}, {"label", "b"}};
  auto bulk = cli.Post("/session/demo/bulk", body.dump(), "application/json");
  ASSERT_TRUE(bulk);
  EXPECT_EQ(bulk->status, 200);
  EXPECT_EQ(nlohmann::json::parse(bulk->body)["affected"], 10);

  auto stats = nlohmann::json::parse(cli.Get("/session/demo/stats")->body);
  EXPECT_EQ(stats["bulk"], 10);
  EXPECT_EQ(stats["gold"], 3);
  EXPECT_EQ(stats["unlabeled"], 17);
  EXPECT_EQ(stats["total"], 30);

  auto exp = cli.Get("/session/demo/export");
  ASSERT_TRUE(exp);
  EXPECT_EQ(exp->status, 200);
  EXPECT_EQ(exp->body, svc.with_session("demo", [](LabelSession& s) { return s.export_jsonl(); }));
  EXPECT_EQ(nlohmann::json::parse(exp->get_header_value("X-Label-Summary"))["bulk"], 10);

  auto undo = cli.Post("/session/demo/undo", "", "application/json");
  ASSERT_TRUE(undo);
  EXPECT_EQ(undo->status, 200);
  EXPECT_EQ(nlohmann::json::parse(undo->body)["reverted"]["kind"], "bulk_polygon");
  stats = nlohmann::json::parse(cli.Get("/session/demo/stats")->body);
  EXPECT_EQ(stats["bulk"], 0);

  auto again = cli.Post("/session/demo/undo", "", "application/json");
  EXPECT_EQ(again->status, 409);
  auto err = nlohmann::json::parse(again->body);
  EXPECT_EQ(err["code"], "empty_log");
  EXPECT_EQ(err["message"], "empty log");
}

TEST_F(ServiceTest, SingleAndRelabelRoutes) {
  auto cli = client();
  auto r = cli.Post("/session/demo/single", R"({"id": 12, "label": "q"})", "application/json");
  EXPECT_EQ(r->status, 200);
  r = cli.Post("/session/demo/relabel", R"({"from": "q", "to": "r"})", "application/json");
  EXPECT_EQ(nlohmann::json::parse(r->body)["affected"], 1);
  EXPECT_EQ(svc.with_session("demo", [](LabelSession& s) { return s.assignments().at(12).label; }), "r");
  r = cli.Post("/session/demo/single", R"({"id": 0, "label": "q"})", "application/json");
  EXPECT_EQ(r->status, 400);
}

TEST_F(ServiceTest, Errors) {
  auto cli = client();
  auto r = cli.Get("/session/nope/stats");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(nlohmann::json::parse(r->body)["code"], "not_found");
  r = cli.Post("/session/demo/bulk", "{not json", "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(nlohmann::json::parse(r->body)["code"], "parse_error");
  r = cli.Post("/session/demo/bulk", R"({"polygon": [[0,0],[1,1],[2,2]], "label": "x"})", "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(nlohmann::json::parse(r->body)["code"], "degenerate");
  r = cli.Post("/session/demo/bulk", R"({"polygon": [[0,0],[1,0],[1,1]]})", "application/json");
  EXPECT_EQ(r->status, 400);
  r = cli.Get("/nothing/here");
  EXPECT_EQ(r->status, 404);
  EXPECT_TRUE(nlohmann::json::parse(r->body).contains("code"));
}

TEST_F(ServiceTest, EmptySelectionReturnsZero) {
  auto cli = client();
  auto r = cli.Post("/session/demo/bulk", R"({"polygon": [[50,50],[51,50],[51,51]], "label": "x"})", "application/json");
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(nlohmann::json::parse(r->body)["affected"], 0);
}

TEST_F(ServiceTest, ConcurrentBulkRequestsAreSerialized) {
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([this, t] {
      auto cli = client();
      for (int i = 0; i < 10; ++i) {
        nlohmann::json body{{"polygon", {{-1, -1}, {11, -1}, {11, 11}, {-1, 11}}}, {"label", "t" + std::to_string(t)}};
        cli.Post("/session/demo/bulk", body.dump(), "application/json");
      }
    });
  for (auto& th : threads) th.join();
  svc.with_session("demo", [](LabelSession& s) {
    EXPECT_EQ(s.log().size(), 80u);
    EXPECT_EQ(s.replay(), s.assignments());
    for (std::size_t i = 1; i < s.log().size(); ++i) EXPECT_EQ(s.log()[i].seq, s.log()[i - 1].seq + 1);
    return 0;
  });
}
