#pragma once

// End-to-end pipelines: split -> (subsample) -> train -> evaluate -> report,
// repeated over seeds, sweep points and stability runs.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sma/config.hpp"
#include "sma/error.hpp"
#include "sma/ingest.hpp"
#include "sma/metrics.hpp"
#include "sma/model_core.hpp"
#include "sma/rating_sma.hpp"
#include "sma/report.hpp"
#include "sma/report_io.hpp"
#include "sma/topn_sma.hpp"

namespace sma {

inline constexpr std::size_t kReportCutoffs[] = {1, 5, 10, 20};

inline SparseRatingMatrix load_dataset(const ExperimentConfig& cfg) {
  if (!std::filesystem::exists(cfg.data_path)) throw DataError("dataset not found: " + cfg.data_path.string());
  return load_movielens(cfg.data_path, cfg.format);
}

/// Split for one seed, with the training side subsampled when train_fraction < 1.
inline SplitPair prepare_split(const SparseRatingMatrix& data, const ExperimentConfig& cfg, std::uint64_t seed) {
  auto split = split_train_test(data, cfg.split_ratio, seed);
  if (cfg.train_fraction < 1.0) split.train = subsample(split.train, cfg.train_fraction, seed);
  return split;
}

/// Rating metrics on the final model.
inline void add_rating_metrics(RunReport& rep, const FactorModel& model, const SplitPair& split) {
  const double tr = rmse(model, split.train.entries);
  const double te = rmse(model, split.test.entries);
  rep.final_metrics["train_rmse"] = tr;
  rep.final_metrics["test_rmse"] = te;
  rep.final_metrics["gap_rmse"] = std::abs(te - tr);
}

/// Top-N metrics on the final model. Training items are excluded from the
/// test ranking; the train-side precision ranks every item against the
/// training positives.
inline void add_topn_metrics(RunReport& rep, const FactorModel& model, const SparseRatingMatrix& train,
                             const SparseRatingMatrix& test) {
  const auto scores = score_grid(model);
  const auto train_items = items_by_user(train);
  const auto res = evaluate_topn(scores, model.m, model.n, train_items, items_by_user(test), kReportCutoffs, false);
  for (const auto& r : res) {
    rep.final_metrics["precision_at_" + std::to_string(r.N)] = r.precision_at;
    rep.final_metrics["ndcg_at_" + std::to_string(r.N)] = r.ndcg_at;
  }
  rep.final_metrics["users_short_at_10"] = static_cast<double>(res[2].users_short);
  const std::size_t ten[] = {10};
  const auto tr = evaluate_topn(scores, model.m, model.n, {}, train_items, ten, false)[0];
  rep.final_metrics["train_precision_at_10"] = tr.precision_at;
  rep.final_metrics["gap_precision_at_10"] = std::abs(tr.precision_at - res[2].precision_at);
}

struct TrainedRun {
  RunReport report;
  std::optional<FactorModel> model;  // absent when the run diverged
};

/// One seeded run on an already prepared split. Divergence is recorded in the
/// report rather than thrown.
inline TrainedRun run_on_split(const ExperimentConfig& cfg, const SplitPair& split, std::uint64_t seed) {
  TrainedRun out;
  auto& rep = out.report;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (cfg.is_rating()) {
      TrainConfig base = cfg.train;
      base.seed = seed;
      if (cfg.trainer == Trainer::kSmaRating) {
        auto sc = cfg.sma_rating_config();
        sc.base = base;
        sc.baseline = train_rsvd(split.train, base).first;
        auto res = train_sma_rating(split.train, sc, &split.test);
        rep = std::move(res.report);
        rep.final_metrics["baseline_rmse"] = res.plan.baseline_rmse;
        rep.final_metrics["omega_prime_size"] = static_cast<double>(res.plan.omega_prime.size());
        rep.final_metrics["subset_count"] = static_cast<double>(res.plan.K());
        add_rating_metrics(rep, res.model, split);
        out.model = std::move(res.model);
      } else {
        auto [model, r] = train_rsvd(split.train, base, &split.test);
        rep = std::move(r);
        add_rating_metrics(rep, model, split);
        out.model = std::move(model);
      }
    } else {
      auto tc = cfg.topn_config();
      tc.base.seed = seed;
      const auto train = binarize(split.train);
      const auto test = binarize(split.test);
      auto [model, r] = train_sma_topn(train, tc, &test);
      rep = std::move(r);
      add_topn_metrics(rep, model, train, test);
      out.model = std::move(model);
    }
  } catch (const DivergenceError& e) {
    rep = RunReport{};
    rep.status = "diverged";
    rep.diagnostic = e.what();
    rep.convergence_epoch = e.epoch();
    out.model.reset();
  }
  rep.trainer = to_string(cfg.trainer);
  rep.seed = seed;
  rep.config = cfg.echo();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline TrainedRun run_single(const ExperimentConfig& cfg, const SparseRatingMatrix& data, std::uint64_t seed) {
  return run_on_split(cfg, prepare_split(data, cfg, seed), seed);
}

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t count = 0;
};

/// Per-metric mean and std over the runs that finished.
struct Aggregate {
  std::map<std::string, MetricSummary> metrics;
  std::size_t runs = 0;
  std::size_t diverged = 0;
};

inline Aggregate aggregate(const std::vector<RunReport>& reports) {
  Aggregate agg;
  agg.runs = reports.size();
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : reports) {
    if (r.status != "ok") {
      ++agg.diverged;
      continue;
    }
    for (const auto& [k, v] : r.final_metrics) values[k].push_back(v);
  }
  for (const auto& [k, vs] : values) {
    MetricSummary s;
    s.count = vs.size();
    for (double v : vs) s.mean += v;
    s.mean /= static_cast<double>(s.count);
    if (s.count > 1) {
      double ss = 0.0;
      for (double v : vs) ss += (v - s.mean) * (v - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
    }
    agg.metrics[k] = s;
  }
  return agg;
}

inline Json to_json(const Aggregate& agg) {
  Json j;
  j["runs"] = agg.runs;
  j["diverged"] = agg.diverged;
  Json m = Json::object();
  for (const auto& [k, s] : agg.metrics) m[k] = Json{{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
  j["metrics"] = std::move(m);
  return j;
}

struct ExperimentResult {
  std::vector<RunReport> reports;
  Aggregate summary;
};

inline std::string report_stem(const RunReport& r) { return "run_" + r.trainer + "_seed" + std::to_string(r.seed); }

/// Writes every report, its epoch CSV and aggregate.json into `dir`.
inline void save_experiment(const ExperimentResult& res, const std::filesystem::path& dir) {
  for (const auto& r : res.reports) save_report(r, dir, report_stem(r));
  write_text(dir / "aggregate.json", to_json(res.summary).dump(2) + "\n");
}

/// Runs every seed in order. With `model_dir`, final models are saved there.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const SparseRatingMatrix& data,
                                       const std::optional<std::filesystem::path>& model_dir = std::nullopt) {
  ExperimentResult res;
  for (auto seed : cfg.seeds) {
    auto run = run_single(cfg, data, seed);
    if (model_dir && run.model) save_model(*run.model, *model_dir / (report_stem(run.report) + ".model"));
    res.reports.push_back(std::move(run.report));
  }
  res.summary = aggregate(res.reports);
  if (cfg.out_dir) save_experiment(res, *cfg.out_dir);
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, load_dataset(cfg)); }

struct SweepPoint {
  std::string value;
  ExperimentConfig config;
  ExperimentResult result;
};

/// Plot-ready table: one row per sweep value and metric.
inline void write_sweep_csv(const std::string& param, const std::vector<SweepPoint>& points, std::ostream& out) {
  out << "param,value,metric,mean,std,count\n";
  for (const auto& p : points)
    for (const auto& [k, s] : p.result.summary.metrics)
      out << param << ',' << p.value << ',' << k << ',' << format_double(s.mean) << ',' << format_double(s.std) << ','
          << s.count << '\n';
}

/// One experiment per value of `param`; each point gets its own subdirectory
/// of out_dir and the sweep writes sweep.csv.
inline std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const SparseRatingMatrix& data,
                                         const std::string& param, const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("sweep.values: empty");
  std::vector<SweepPoint> points;
  for (const auto& v : values) {
    KeyValues kv = cfg.source;
    kv.erase("sweep.param");
    kv.erase("sweep.values");
    kv.erase("experiment.out_dir");
    auto point_cfg = with_overrides(kv, {{param, v}});
    if (cfg.out_dir) point_cfg.out_dir = *cfg.out_dir / (param + "=" + v);
    auto res = run_experiment(point_cfg, data);
    points.push_back({v, std::move(point_cfg), std::move(res)});
  }
  if (cfg.out_dir) {
    std::ostringstream csv;
    write_sweep_csv(param, points, csv);
    write_text(*cfg.out_dir / "sweep.csv", csv.str());
  }
  return points;
}

inline std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const SparseRatingMatrix& data) {
  if (!cfg.sweep_param) throw ConfigError("sweep.param: missing");
  return run_sweep(cfg, data, *cfg.sweep_param, cfg.sweep_values);
}

/// Training-set size sweep; the test side of each split is untouched.
inline std::vector<SweepPoint> run_sparsity_sweep(const ExperimentConfig& cfg, const SparseRatingMatrix& data,
                                                  const std::vector<double>& fractions) {
  std::vector<std::string> values;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("experiment.train_fraction: " + format_double(f) + " not in (0, 1]");
    values.push_back(format_double(f));
  }
  return run_sweep(cfg, data, "experiment.train_fraction", values);
}

/// (train RMSE, test RMSE) trainer for stability runs, from a rating config.
inline StabilityTrainer stability_trainer(const ExperimentConfig& cfg) {
  if (!cfg.is_rating()) throw ConfigError("experiment.task: stability runs need the rating task");
  return [cfg](const SplitPair& split, std::uint64_t seed) {
    auto run = run_on_split(cfg, split, seed);
    if (run.report.status != "ok") throw DivergenceError(run.report.diagnostic, run.report.convergence_epoch);
    return std::pair{run.report.final_metrics.at("train_rmse"), run.report.final_metrics.at("test_rmse")};
  };
}

/// Stability estimate; epsilon defaults to the covering value of its own gaps.
/// Writes stability_r<rank>.csv into out_dir when set.
inline StabilityEstimate run_stability(const ExperimentConfig& cfg, const SparseRatingMatrix& data,
                                       std::optional<double> epsilon, std::size_t n_runs) {
  auto runs = stability_runs(data, stability_trainer(cfg), n_runs, cfg.stability_seed, cfg.split_ratio);
  std::vector<double> gaps;
  for (const auto& r : runs) gaps.push_back(r.gap);
  const double eps = epsilon ? *epsilon : covering_epsilon(gaps);
  auto est = summarize_stability(std::move(runs), eps);
  if (cfg.out_dir) {
    std::ostringstream csv;
    write_stability_csv(est, csv);
    write_text(*cfg.out_dir / ("stability_r" + std::to_string(cfg.train.rank) + ".csv"), csv.str());
  }
  return est;
}

struct StabilityPoint {
  std::size_t rank = 0;
  StabilityEstimate estimate;
};

/// Rank sweep sharing one epsilon; when none is given, it is calibrated to
/// cover every gap at the first rank.
inline std::vector<StabilityPoint> run_stability_sweep(const ExperimentConfig& cfg, const SparseRatingMatrix& data,
                                                       const std::vector<std::size_t>& ranks,
                                                       std::optional<double> epsilon, std::size_t n_runs) {
  if (ranks.empty()) throw ConfigError("stability.ranks: empty");
  std::vector<StabilityPoint> points;
  for (auto rank : ranks) {
    auto c = cfg;
    c.train.rank = rank;
    c.validate();
    auto est = run_stability(c, data, epsilon, n_runs);
    if (!epsilon) epsilon = est.epsilon;
    points.push_back({rank, std::move(est)});
  }
  if (cfg.out_dir) {
    std::ostringstream csv;
    csv << "rank,epsilon,successes,n_runs,probability,failed_runs\n";
    for (const auto& p : points)
      csv << p.rank << ',' << format_double(p.estimate.epsilon) << ',' << p.estimate.successes << ','
          << p.estimate.n_runs << ',' << format_double(p.estimate.probability) << ',' << p.estimate.failed_runs << '\n';
    write_text(*cfg.out_dir / "stability_sweep.csv", csv.str());
  }
  return points;
}

}  // namespace sma
