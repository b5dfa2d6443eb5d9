#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"

using namespace sma;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("sma_runner_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small ml100k-format file: 30 users x 40 items, about 40% observed.
fs::path write_dataset(const fs::path& dir) {
  std::mt19937_64 rng(2);
  const auto path = dir / "u.data";
  std::ofstream out(path);
  for (int u = 1; u <= 30; ++u)
    for (int i = 1; i <= 40; ++i)
      if (rng() % 5 < 2) out << u << '\t' << i << '\t' << 1 + (u * i + rng() % 2) % 5 << '\t' << 880000000 + u << '\n';
  return path;
}

KeyValues base_kv(const fs::path& data) {
  return parse_config_text("[data]\npath = " + data.string() +
                           "\n[experiment]\nseeds = 1, 2, 3\n[train]\nrank = 3\nlr = 0.01\nmax_epochs = 8\n");
}

}  // namespace

TEST(Config, GrammarAndDefaults) {
  const auto kv = parse_config_text(
      "# comment\n[data]\npath = /x/u.data\n\n[experiment]\ntrainer = sma_rating\nmaster_seed = 5\nruns = 3\n"
      "[train]\nmu1 = 0.02\n[sma_rating]\nK = 2\n");
  EXPECT_EQ(kv.at("data.path"), "/x/u.data");
  const auto cfg = ExperimentConfig::from(kv);
  EXPECT_EQ(cfg.trainer, Trainer::kSmaRating);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{derive_seed(5, 0), derive_seed(5, 1), derive_seed(5, 2)}));
  EXPECT_EQ(cfg.train.mu2, 0.02);
  EXPECT_EQ(cfg.train.rank, 20u);
  EXPECT_EQ(cfg.train.max_epochs, 250);
  ASSERT_TRUE(cfg.train.clamp.has_value());
  EXPECT_EQ(cfg.sma_rating_config().resolved_lambdas().size(), 3u);
}

TEST(Config, TopnDefaults) {
  const auto cfg = ExperimentConfig::from(parse_config_text("[data]\npath=a\n[experiment]\ntask=topn\nseeds=1\n"));
  EXPECT_EQ(cfg.trainer, Trainer::kSmaTopnBoundary);
  EXPECT_EQ(cfg.train.rank, 100u);
  EXPECT_EQ(cfg.train.mu1, 0.001);
  EXPECT_EQ(cfg.train.max_epochs, 2000);
  EXPECT_FALSE(cfg.train.clamp.has_value());
  EXPECT_EQ(cfg.topn_config().mode, TopnMode::kBoundary);
}

TEST(Config, ErrorsNameTheField) {
  auto expect_field = [](const std::string& text, const std::string& field) {
    try {
      ExperimentConfig::from(parse_config_text(text));
      ADD_FAILURE() << "accepted: " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  const std::string ok = "[data]\npath=a\n[experiment]\nseeds=1\n";
  expect_field(ok + "[train]\nrnak = 3\n", "train.rnak");
  expect_field(ok + "[train]\nrank = three\n", "train.rank");
  expect_field(ok + "[train]\nlr = -1\n", "lr");
  expect_field(ok + "[sma_rating]\nobjective = cubic\n", "sma_rating.objective");
  expect_field("[data]\npath=a\n", "experiment.seeds");
  expect_field("[experiment]\nseeds=1\n", "data.path");
  expect_field(ok + "[experiment]\ntrainer = wma\n", "experiment.trainer");
  expect_field(ok + "[data]\nsplit_ratio = 1.5\n", "data.split_ratio");
  EXPECT_THROW(parse_config_text("[data\n"), ConfigError);
  EXPECT_THROW(parse_config_text("novalue\n"), ConfigError);
}

TEST(Config, OverridesReplaceFileValues) {
  const auto kv = parse_config_text("[data]\npath=a\n[experiment]\nseeds=1\n[train]\nrank=5\n");
  EXPECT_EQ(with_overrides(kv, {{"train.rank", "7"}}).train.rank, 7u);
}

TEST(ReportIo, JsonRoundTrip) {
  RunReport r;
  r.trainer = "sma_rating";
  r.seed = 18446744073709551615ull;
  r.config = {{"z.key", "1"}, {"a.key", "two"}};
  r.epochs.push_back({1, 1.0 / 3.0, std::nullopt, {}});
  r.epochs.push_back({2, 0.1 + 0.2, 0.9876543210123456, {{"subset_size", 17.0}}});
  r.converged = true;
  r.convergence_epoch = 2;
  r.final_metrics = {{"test_rmse", 0.91234567890123}, {"train_rmse", 5e-324}};
  r.status = "ok";
  r.diagnostic = "line\nwith \"quotes\"";
  r.wall_seconds = 1.5;
  const auto back = parse_report(emit_report(r));
  EXPECT_TRUE(back.same_results(r));
  EXPECT_EQ(back.wall_seconds, r.wall_seconds);
  EXPECT_EQ(back.config, r.config);  // order preserved
  EXPECT_THROW(parse_report("{"), DataError);
  EXPECT_THROW(parse_report("{}"), DataError);
}

TEST(ReportIo, EpochCsv) {
  RunReport r;
  r.epochs.push_back({1, 0.5, 0.25, {{"subset_size", 3.0}}});
  r.epochs.push_back({2, 0.125, std::nullopt, {}});
  std::ostringstream out;
  write_epoch_csv(r, out);
  EXPECT_EQ(out.str(), "epoch,train,test,subset_size\n1,0.5,0.25,3\n2,0.125,,\n");
}

TEST(Experiment, ReportsAggregateAndPersist) {
  const auto dir = scratch("experiment");
  auto kv = base_kv(write_dataset(dir));
  kv["experiment.out_dir"] = (dir / "out").string();
  kv["experiment.trainer"] = "sma_rating";
  const auto cfg = ExperimentConfig::from(kv);
  const auto res = run_experiment(cfg);
  ASSERT_EQ(res.reports.size(), 3u);
  for (const auto& r : res.reports) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_TRUE(r.final_metrics.count("test_rmse"));
    EXPECT_TRUE(r.final_metrics.count("baseline_rmse"));
    EXPECT_EQ(r.config, cfg.echo());
  }

  // Aggregate recomputed from the persisted reports.
  std::vector<RunReport> loaded;
  for (const auto& r : res.reports) loaded.push_back(load_report(dir / "out" / (report_stem(r) + ".json")));
  const auto again = aggregate(loaded);
  for (const auto& [k, s] : res.summary.metrics) {
    EXPECT_DOUBLE_EQ(again.metrics.at(k).mean, s.mean) << k;
    EXPECT_DOUBLE_EQ(again.metrics.at(k).std, s.std) << k;
  }
  double mean = 0.0;
  for (const auto& r : loaded) mean += r.final_metrics.at("test_rmse") / 3.0;
  EXPECT_NEAR(res.summary.metrics.at("test_rmse").mean, mean, 1e-15);
  EXPECT_TRUE(fs::exists(dir / "out" / "aggregate.json"));

  // The gap equals the last epoch row of the persisted CSV trace.
  const auto& r0 = res.reports[0];
  EXPECT_NEAR(generalization_gap(r0), std::abs(*r0.epochs.back().test - r0.epochs.back().train), 1e-15);
  fs::remove_all(dir);
}

TEST(Experiment, RerunIsBitwiseIdentical) {
  const auto dir = scratch("determinism");
  auto kv = base_kv(write_dataset(dir));
  for (const char* trainer : {"rsvd", "sma_rating"}) {
    kv["experiment.trainer"] = trainer;
    const auto cfg = ExperimentConfig::from(kv);
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    for (std::size_t k = 0; k < a.reports.size(); ++k) {
      EXPECT_TRUE(a.reports[k].same_results(b.reports[k]));
      auto ja = to_json(a.reports[k]), jb = to_json(b.reports[k]);
      ja.erase("wall_seconds");
      jb.erase("wall_seconds");
      EXPECT_EQ(ja.dump(), jb.dump());
    }
  }
  fs::remove_all(dir);
}

TEST(Experiment, TopnRunReportsRankingMetrics) {
  const auto dir = scratch("topn");
  auto kv = base_kv(write_dataset(dir));
  kv["experiment.task"] = "topn";
  kv["experiment.trainer"] = "sma_topn_boundary";
  kv["experiment.seeds"] = "4";
  kv["train.lr"] = "0.05";
  kv["train.max_epochs"] = "5";
  const auto res = run_experiment(ExperimentConfig::from(kv));
  const auto& m = res.reports.at(0).final_metrics;
  for (const char* key : {"precision_at_1", "precision_at_5", "precision_at_10", "precision_at_20", "ndcg_at_1",
                          "ndcg_at_5", "ndcg_at_10", "ndcg_at_20", "train_precision_at_10", "gap_precision_at_10"})
    EXPECT_TRUE(m.count(key)) << key;
  EXPECT_TRUE(res.reports[0].epochs[0].extra.count("subset_size"));
  fs::remove_all(dir);
}

TEST(Experiment, DivergenceIsCapturedPerRun) {
  const auto dir = scratch("diverge");
  auto kv = base_kv(write_dataset(dir));
  kv["train.lr"] = "1e6";
  kv["train.clamp"] = "none";
  kv["train.init_scale"] = "1";
  const auto res = run_experiment(ExperimentConfig::from(kv));
  ASSERT_EQ(res.reports.size(), 3u);
  for (const auto& r : res.reports) {
    EXPECT_EQ(r.status, "diverged");
    EXPECT_FALSE(r.diagnostic.empty());
  }
  EXPECT_EQ(res.summary.diverged, 3u);
  fs::remove_all(dir);
}

TEST(Sweep, OneAggregatePerValue) {
  const auto dir = scratch("sweep");
  auto kv = base_kv(write_dataset(dir));
  kv["experiment.trainer"] = "sma_rating";
  kv["experiment.seeds"] = "1,2";
  kv["sweep.param"] = "sma_rating.K";
  kv["sweep.values"] = "1,2,3";
  kv["experiment.out_dir"] = (dir / "out").string();
  const auto cfg = ExperimentConfig::from(kv);
  const auto data = load_dataset(cfg);
  const auto points = run_sweep(cfg, data);
  ASSERT_EQ(points.size(), 3u);
  EXPECT_EQ(points[2].config.K, 3u);
  EXPECT_EQ(points[0].result.summary.metrics.at("test_rmse").count, 2u);
  EXPECT_TRUE(fs::exists(dir / "out" / "sweep.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "sma_rating.K=2" / "aggregate.json"));
  EXPECT_THROW(run_sweep(cfg, data, "sma_rating.K", {"x"}), ConfigError);
  fs::remove_all(dir);
}

TEST(Sweep, SparsityFullFractionMatchesExperiment) {
  const auto dir = scratch("sparsity");
  const auto kv = base_kv(write_dataset(dir));
  const auto cfg = ExperimentConfig::from(kv);
  const auto data = load_dataset(cfg);
  const auto plain = run_experiment(cfg, data);
  const auto points = run_sparsity_sweep(cfg, data, {0.5, 1.0});
  ASSERT_EQ(points.size(), 2u);
  for (std::size_t k = 0; k < plain.reports.size(); ++k) {
    EXPECT_EQ(points[1].result.reports[k].epochs, plain.reports[k].epochs);
    EXPECT_EQ(points[1].result.reports[k].final_metrics, plain.reports[k].final_metrics);
  }
  const auto split = prepare_split(data, points[0].config, 1);
  const auto full = split_train_test(data, cfg.split_ratio, 1);
  EXPECT_LE(std::abs(static_cast<long>(split.train.size()) - static_cast<long>(full.train.size() / 2)), 1);
  EXPECT_EQ(split.test.entries, full.test.entries);
  EXPECT_THROW(run_sparsity_sweep(cfg, data, {0.0}), ConfigError);
  fs::remove_all(dir);
}

TEST(Stability, RunnerPersistsCsvAndSweeps) {
  const auto dir = scratch("stability");
  auto kv = base_kv(write_dataset(dir));
  kv["experiment.out_dir"] = (dir / "out").string();
  const auto cfg = ExperimentConfig::from(kv);
  const auto data = load_dataset(cfg);
  const auto est = run_stability(cfg, data, 1e9, 4);
  EXPECT_EQ(est.probability, 1.0);
  EXPECT_TRUE(fs::exists(dir / "out" / "stability_r3.csv"));

  // Same split and seed twice: equal gaps.
  const auto trainer = stability_trainer(cfg);
  const auto split = split_train_test(data, 0.9, 77);
  EXPECT_EQ(trainer(split, 77), trainer(split, 77));

  const auto points = run_stability_sweep(cfg, data, {2, 4}, std::nullopt, 3);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].estimate.probability, 1.0);
  EXPECT_EQ(points[1].estimate.epsilon, points[0].estimate.epsilon);
  EXPECT_TRUE(fs::exists(dir / "out" / "stability_sweep.csv"));
  fs::remove_all(dir);
}
