#include <gtest/gtest.h>

#include <cmath>

#include "lispr/experiment.hpp"

using namespace lispr;

namespace {

json small_run(const std::string &algorithm = "baseline-q") {
  json j{{"env", "multiroom"},   {"variant", "target"}, {"algorithm", algorithm}, {"alpha", 0.25},
         {"lambda", 0.6},        {"max_steps", 3000},   {"eval_every", 1000},     {"eval_episodes", 4},
         {"repeats", 2},         {"seed", 5}};
  if (algorithm != "baseline-q") {
    j["threshold"] = {{"kind", "constant"}, {"value", 0.5}};
    j["source"] = {{"kind", "optimal"}};
  }
  return j;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("lispr_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST(Config, RejectsUnknownKeys) {
  auto j = small_run();
  j["learning_rate"] = 0.1;
  EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST(Config, RejectsOutOfRangeValues) {
  auto j = small_run();
  j["gamma"] = 1.0;
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = small_run();
  j["alpha"] = 1.5;
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = small_run();
  j["seed"] = -1;
  EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST(Config, RejectsInconsistentThresholdAndProxy) {
  auto j = small_run();
  j["threshold"] = {{"kind", "recovery-value"}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = small_run("lispr-student");
  j["proxy"] = "diff";
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = small_run("lispr-recovery");
  j["source"] = {{"kind", "file"}};
  EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  const auto c = parse_run_config(small_run("lispr-recovery"));
  EXPECT_EQ(to_json(parse_run_config(to_json(c))), to_json(c));
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
  auto c = parse_run_config(small_run());
  c.layout = "../data/a.txt";
  c.source_layout = "/abs/b.txt";
  resolve_paths(c, "/tmp/cfg");
  EXPECT_EQ(c.layout, "/tmp/data/a.txt");
  EXPECT_EQ(c.source_layout, "/abs/b.txt");
  EXPECT_TRUE(c.source.path.empty());
}

TEST(Config, ShippedConfigsLoad) {
  const fs::path dir = fs::path(LISPR_DATA_DIR) / ".." / "configs";
  std::size_t loaded = 0;
  for (const auto &entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    const auto j = json::parse(read_text_file(entry.path()));
    if (j.contains("grid")) {
      EXPECT_NO_THROW(expand_sweep(j)) << entry.path();
      continue;
    }
    const auto c = load_run_config(entry.path());
    for (const auto &p : {c.layout, c.source_layout})
      if (!p.empty()) EXPECT_TRUE(fs::exists(p)) << entry.path() << " -> " << p;
    ++loaded;
  }
  EXPECT_GE(loaded, 7u);
}

TEST(Hash, MatchesGitBlobIds) {
  EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Curves, AggregateUsesSampleStandardError) {
  const std::vector<std::vector<CurvePoint>> runs{{{0, 0.0, 0.0}, {10, 1.0, 1.0}}, {{0, 1.0, 1.0}, {10, 1.0, 1.0}}};
  const auto rows = aggregate_curves(runs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].mean_return, 0.5);
  EXPECT_NEAR(rows[0].ci95_hi - rows[0].mean_return, 1.96 * 0.5, 1e-12);
  EXPECT_EQ(rows[1].ci95_lo, 1.0);
  EXPECT_EQ(rows[1].ci95_hi, 1.0);
}

TEST(Curves, CsvRoundTrip) {
  const std::vector<CurveRow> rows{{0, 0.125, 0.0, 0.25, 0.5}, {1000, 1.0 / 3.0, 0.2, 0.4, 1.0}};
  const auto back = parse_curve_csv(curve_csv(rows));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].step, 1000u);
  EXPECT_EQ(back[1].mean_return, 1.0 / 3.0);
  EXPECT_EQ(curve_csv(back), curve_csv(rows));
  EXPECT_THROW(parse_curve_csv("step,value\n"), std::runtime_error);
}

TEST(Curves, TrapezoidAuc) {
  const std::vector<CurveRow> rows{{0, 0.0}, {10, 1.0}, {30, 1.0}};
  EXPECT_DOUBLE_EQ(curve_auc(rows), 5.0 + 20.0);
  EXPECT_EQ(first_step_reaching(rows, 0.9), std::optional<std::size_t>(10));
  EXPECT_FALSE(first_step_reaching(rows, 1.1));
}

TEST(Curves, CompareIdenticalCurves) {
  const std::vector<CurveRow> rows{{0, 0.0}, {10, 0.5}, {20, 1.0}};
  const auto s = compare_curves(rows, rows);
  EXPECT_EQ(s.auc_ratio, 1.0);
  for (double d : s.difference) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(s.first_a, s.first_b);
  EXPECT_THROW(compare_curves(rows, {{0, 0.0}}), std::invalid_argument);
}

TEST(Sweep, EmptyGridIsAnError) {
  EXPECT_THROW(expand_sweep(json{{"base", small_run()}, {"grid", json::object()}}), ConfigError);
  EXPECT_THROW(expand_sweep(json{{"base", small_run()}, {"grid", {{"alpha", json::array()}}}}), ConfigError);
}

TEST(Sweep, CartesianProductWithDottedKeys) {
  const json sweep{{"base", small_run("lispr-recovery")},
                   {"grid", {{"alpha", {0.1, 0.2}}, {"threshold.value", {0.3, 0.6, 0.9}}}}};
  const auto points = expand_sweep(sweep);
  ASSERT_EQ(points.size(), 6u);
  std::set<std::pair<double, double>> seen;
  for (const auto &[cfg, params] : points) {
    EXPECT_EQ(cfg.at("threshold").at("kind"), "constant");
    seen.insert({cfg.at("alpha").get<double>(), cfg.at("threshold").at("value").get<double>()});
    EXPECT_EQ(params.size(), 2u);
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(Run, ZeroStepsGivesSingleRow) {
  auto j = small_run();
  j["max_steps"] = 0;
  const auto out = run_experiment(parse_run_config(j));
  ASSERT_EQ(out.curve.size(), 1u);
  EXPECT_EQ(out.curve[0].step, 0u);
}

TEST(Run, CurveIsByteIdenticalAcrossRuns) {
  const auto c = parse_run_config(small_run("lispr-recovery"));
  const auto a = run_experiment(c), b = run_experiment(c);
  EXPECT_EQ(curve_csv(a.curve), curve_csv(b.curve));
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.repeat_seeds, b.repeat_seeds);
  EXPECT_NE(a.repeat_seeds[0], a.repeat_seeds[1]);
}

TEST(Run, WrittenArtifactsReadBack) {
  TempDir tmp;
  const auto out = run_experiment(parse_run_config(small_run("lispr-recovery")));
  write_run(out, tmp.path);
  for (const char *f : {"curve.csv", "q_learner.csv", "g_table.csv", "v_behavior.csv", "mu_policy.csv", "meta.json"})
    EXPECT_TRUE(fs::exists(tmp.path / f)) << f;
  EXPECT_EQ(read_text_file(tmp.path / "curve.csv"), curve_csv(out.curve));
  EXPECT_EQ(read_action_table<QTable>(tmp.path / "q_learner.csv"), out.q);
  EXPECT_EQ(read_action_table<GTable>(tmp.path / "g_table.csv"), out.g);
  const auto meta = json::parse(read_text_file(tmp.path / "meta.json"));
  EXPECT_EQ(meta.at("fixture_hashes").at("layout"), git_blob_sha1(out.layout_text));
}

TEST(Heatmap, ExportMatchesInMemoryTables) {
  TempDir tmp;
  const auto out = run_experiment(parse_run_config(small_run("lispr-recovery")));
  write_run(out, tmp.path);
  const auto from_disk = export_heatmap(tmp.path, HeatmapTable::G, 0.9);
  const auto env = make_environment(out.config.env, out.config.variant, out.config.layout, out.config.gamma);
  const auto direct = heatmap_from_tables(env.world.meta, out.config, &*out.mu, out.g, out.q, out.v, HeatmapTable::G, 0.9);
  ASSERT_EQ(from_disk.values.height, direct.values.height);
  for (int r = 0; r < direct.values.height; ++r)
    for (int c = 0; c < direct.values.width; ++c) {
      const double a = from_disk.values.at(r, c), b = direct.values.at(r, c);
      if (std::isnan(b)) EXPECT_TRUE(std::isnan(a));
      else EXPECT_EQ(a, b);
    }
  EXPECT_TRUE(fs::exists(tmp.path / "heatmap_g.csv"));
  EXPECT_TRUE(fs::exists(tmp.path / "membership.csv"));
}

TEST(Heatmap, MissingArtifactsAreReported) {
  TempDir tmp;
  EXPECT_THROW(export_heatmap(tmp.path, HeatmapTable::V), std::runtime_error);
}
