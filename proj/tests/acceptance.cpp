// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any requested criterion fails.
//
//   sma_acceptance [criterion numbers...]      (default: all 13)
//
// Criteria 7-13 train on MovieLens 100K (path fixed at configure time via
// SMA_ML100K; run tools/fetch_ml100k.py to obtain it).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sma/sma.hpp"

using namespace sma;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, x);
  return buf;
}

std::string sci(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

double rel_err(double a, double b, double floor = 1e-300) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

FactorModel random_model(std::size_t m, std::size_t n, std::size_t r, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  FactorModel model;
  model.m = m;
  model.n = n;
  model.r = r;
  model.U.resize(m * r);
  model.V.resize(n * r);
  for (double& x : model.U) x = d(rng);
  for (double& x : model.V) x = d(rng);
  return model;
}

SparseRatingMatrix random_ratings(std::size_t m, std::size_t n, double density, std::mt19937_64& rng) {
  SparseRatingMatrix mat;
  mat.m = m;
  mat.n = n;
  for (std::uint32_t i = 0; i < m; ++i)
    for (std::uint32_t j = 0; j < n; ++j)
      if (std::uniform_real_distribution<double>(0, 1)(rng) < density)
        mat.entries.push_back({i, j, static_cast<double>(1 + rng() % 5)});
  if (mat.entries.empty()) mat.entries.push_back({0, 0, 3.0});
  mat.timestamps.assign(mat.size(), 0);
  return mat;
}

double naive_dot(const FactorModel& model, std::size_t i, std::size_t j) {
  double p = model.offset;
  for (std::size_t f = 0; f < model.r; ++f) p += model.U[i * model.r + f] * model.V[j * model.r + f];
  return p;
}

// ---------------------------------------------------------------- 1
Outcome metric_oracles() {
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng() % 10, n = 1 + rng() % 10, r = 1 + rng() % 4, N = 1 + rng() % 5;
    auto model = random_model(m, n, r, rng, 1.2);
    if (trial % 2) model.clamp = Clamp{1.0, 5.0};
    const auto mat = random_ratings(m, n, 0.5, rng);

    // RMSE
    double s = 0.0;
    for (const auto& e : mat.entries) {
      double p = naive_dot(model, e.user, e.item);
      if (model.clamp) p = std::min(model.clamp->hi, std::max(model.clamp->lo, p));
      s += (e.value - p) * (e.value - p);
    }
    worst = std::max(worst, rel_err(rmse(model, mat.entries), std::sqrt(s / mat.size())));

    // Weighted surrogate loss over the grid
    std::set<std::pair<std::uint32_t, std::uint32_t>> pos;
    for (const auto& e : mat.entries) pos.insert({e.user, e.item});
    const WeightScheme w{1.0 + trial % 3, 0.01 + 0.01 * (trial % 5)};
    model.clamp.reset();
    const auto bin = binarize(mat);
    for (auto kind : {LossKind::kMse, LossKind::kLog, LossKind::kExp}) {
      double total = 0.0;
      for (std::uint32_t i = 0; i < m; ++i)
        for (std::uint32_t j = 0; j < n; ++j) {
          const bool is_pos = pos.count({i, j}) > 0;
          const double y = is_pos ? 1.0 : -1.0, p = naive_dot(model, i, j);
          const double l = kind == LossKind::kMse ? (p - y) * (p - y)
                           : kind == LossKind::kLog ? std::log(1.0 + std::exp(-p * y))
                                                    : std::exp(-p * y);
          total += (is_pos ? w.w_pos : w.w_neg) * l;
        }
      worst = std::max(worst, rel_err(weighted_loss(model, grid_cells(bin), w, kind), total / (m * n)));
    }

    // Precision@N and NDCG@N: random relevant/excluded sets, coarse scores for ties
    std::vector<double> scores(m * n);
    for (auto& x : scores) x = static_cast<double>(rng() % 4);
    std::vector<std::vector<std::uint32_t>> excl(m), rel(m);
    for (std::uint32_t u = 0; u < m; ++u)
      for (std::uint32_t j = 0; j < n; ++j) {
        const auto d = rng() % 4;
        if (d == 0) excl[u].push_back(j);
        if (d == 1) rel[u].push_back(j);
      }
    const std::size_t cut[] = {N};
    const auto res = evaluate_topn(scores, m, n, excl, rel, cut)[0];
    double p_sum = 0.0, g_sum = 0.0;
    std::size_t users = 0;
    for (std::uint32_t u = 0; u < m; ++u) {
      if (rel[u].empty()) continue;
      std::vector<std::uint32_t> cand;
      for (std::uint32_t j = 0; j < n; ++j)
        if (std::find(excl[u].begin(), excl[u].end(), j) == excl[u].end()) cand.push_back(j);
      if (cand.empty()) continue;
      std::stable_sort(cand.begin(), cand.end(),
                       [&](auto a, auto b) { return scores[u * n + a] > scores[u * n + b]; });
      double hits = 0.0, dcg = 0.0, idcg = 0.0;
      for (std::size_t k = 0; k < std::min(N, cand.size()); ++k)
        if (std::find(rel[u].begin(), rel[u].end(), cand[k]) != rel[u].end()) {
          hits += 1.0;
          dcg += 1.0 / std::log2(k + 2.0);
        }
      for (std::size_t k = 0; k < std::min(N, rel[u].size()); ++k) idcg += 1.0 / std::log2(k + 2.0);
      p_sum += hits / N;
      g_sum += dcg / idcg;
      ++users;
    }
    if (users == 0) continue;
    worst = std::max(worst, rel_err(res.precision_at, p_sum / users, 1e-12));
    worst = std::max(worst, rel_err(res.ndcg_at, g_sum / users, 1e-12));
    ++instances;
  }
  return {instances >= 100 && worst <= 1e-12,
          std::to_string(instances) + " instances, worst relative error " + sci(worst) + " (limit 1e-12)"};
}

// ---------------------------------------------------------------- 2
Outcome gradient_checks() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> u(-2.0, 2.0), mu(0.0, 0.2);
  const double floor = 1e-3;  // relative error taken against max(|a|, |b|, 1e-3)
  double worst = 0.0;
  int points = 0;
  // Squared error + L2, every factor coordinate.
  for (int k = 0; k < 1000; ++k) {
    const std::size_t r = 1 + k % 5;
    auto model = random_model(2, 3, r, rng, 1.0);
    const Entry e{static_cast<std::uint32_t>(k % 2), static_cast<std::uint32_t>(k % 3), 1.0 + k % 5};
    const double mu1 = mu(rng), mu2 = mu(rng);
    const auto [gu, gv] = entry_gradient(model, e, mu1, mu2);
    const double h = 1e-6;
    for (int side = 0; side < 2; ++side) {
      auto& vec = side ? model.V : model.U;
      const std::size_t base = (side ? e.item : e.user) * r;
      for (std::size_t f = 0; f < r; ++f) {
        const double keep = vec[base + f];
        vec[base + f] = keep + h;
        const double up = entry_objective(model, e, mu1, mu2);
        vec[base + f] = keep - h;
        const double down = entry_objective(model, e, mu1, mu2);
        vec[base + f] = keep;
        worst = std::max(worst, rel_err((up - down) / (2 * h), (side ? gv : gu)[f], floor));
      }
    }
    ++points;
  }
  // Surrogate losses: derivative in the prediction.
  for (auto kind : {LossKind::kMse, LossKind::kLog, LossKind::kExp}) {
    for (int k = 0; k < 1000; ++k) {
      const double p = u(rng), y = k % 2 ? 1.0 : -1.0, h = 1e-6;
      const double fd = (surrogate(kind, p + h, y).value - surrogate(kind, p - h, y).value) / (2 * h);
      worst = std::max(worst, rel_err(fd, surrogate(kind, p, y).deriv, floor));
      ++points;
    }
  }
  return {worst <= 1e-5, std::to_string(points) + " points, worst relative error " + sci(worst) +
                             " (limit 1e-5)"};
}

// ---------------------------------------------------------------- 3
Outcome subset_invariants() {
  std::mt19937_64 rng(3003);
  int bad_plans = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t omega = 1 + rng() % 80, K = 1 + rng() % 5;
    std::vector<std::uint32_t> prime;
    for (std::uint32_t e = 0; e < omega; ++e)
      if (rng() % 3) prime.push_back(e);
    const auto plan = build_plan(omega, prime, K, std::vector<double>(K + 1, 1.0), rng());
    std::vector<std::uint32_t> all;
    bool ok = true;
    for (std::size_t k = 0; k < plan.K(); ++k) {
      all.insert(all.end(), plan.parts[k].begin(), plan.parts[k].end());
      std::vector<std::uint32_t> expect;
      for (std::uint32_t e = 0; e < omega; ++e)
        if (std::find(plan.parts[k].begin(), plan.parts[k].end(), e) == plan.parts[k].end()) expect.push_back(e);
      ok = ok && plan.hard_set(k) == expect;
    }
    std::sort(all.begin(), all.end());
    ok = ok && std::adjacent_find(all.begin(), all.end()) == all.end() && all == prime;
    bad_plans += ok ? 0 : 1;
  }

  // Inclusion rates: half the entries sit exactly on a constant baseline (easy),
  // half far away (hard).
  SparseRatingMatrix mat;
  mat.m = 400;
  mat.n = 100;
  for (std::uint32_t i = 0; i < mat.m; ++i)
    for (std::uint32_t j = 0; j < mat.n; ++j) mat.entries.push_back({i, j, (i + j) % 2 ? 5.0 : 3.0});
  mat.timestamps.assign(mat.size(), 0);
  FactorModel baseline = init_model(mat.m, mat.n, 1, 0, 0.0);
  baseline.offset = 3.0;
  double worst_sigma = 0.0;
  for (double p : {0.6, 0.8, 0.95}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto sel = select_easy_entries(mat, baseline, p, seed);
      double easy = 0.0, hard = 0.0;
      for (auto k : sel) (mat.entries[k].value == 3.0 ? easy : hard) += 1.0;
      const double n_side = mat.size() / 2.0;
      const double sd = std::sqrt(p * (1 - p) / n_side);
      worst_sigma = std::max({worst_sigma, std::abs(easy / n_side - p) / sd, std::abs(hard / n_side - (1 - p)) / sd});
    }
  }

  int boundary_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto model = random_model(1 + rng() % 8, 1 + rng() % 8, 1 + rng() % 3, rng, 0.6);
    const double gamma = (trial % 4) * 0.15;
    std::vector<std::uint32_t> oracle;
    for (std::uint32_t i = 0; i < model.m; ++i)
      for (std::uint32_t j = 0; j < model.n; ++j) {
        const double p = naive_dot(model, i, j);
        if (p >= -gamma && p <= gamma) oracle.push_back(static_cast<std::uint32_t>(i * model.n + j));
      }
    boundary_mismatch += select_boundary_set(model, gamma) == oracle ? 0 : 1;
  }
  const bool pass = bad_plans == 0 && worst_sigma <= 3.0 && boundary_mismatch == 0;
  return {pass, "200 plans, " + std::to_string(bad_plans) + " violating; inclusion rates worst " + fmt(worst_sigma, 2) +
                    " sigma (limit 3); boundary mismatches " + std::to_string(boundary_mismatch) + "/200"};
}

// ---------------------------------------------------------------- 4
Outcome reductions() {
  std::mt19937_64 rng(4004);
  int rating_ok = 0, topn_ok = 0, rating_total = 0, topn_total = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto train = random_ratings(40, 50, 0.2, rng);
    const auto test = random_ratings(40, 50, 0.05, rng);
    SmaRatingConfig cfg;
    cfg.base.rank = 5;
    cfg.base.lr = 0.01;
    cfg.base.max_epochs = 30;
    cfg.base.seed = seed;
    cfg.base.clamp = Clamp{};
    cfg.K = 3;
    cfg.lambdas = {0.7, 0.0, 0.0, 0.0};
    const auto rsvd = train_rsvd(train, cfg.base, &test);
    cfg.baseline = rsvd.first;
    const auto sma = train_sma_rating(train, cfg, &test);
    ++rating_total;
    rating_ok += (sma.model == rsvd.first && sma.report.epochs == rsvd.second.epochs) ? 1 : 0;

    const auto btrain = binarize(random_ratings(20, 25, 0.2, rng));
    const auto btest = binarize(random_ratings(20, 25, 0.05, rng));
    SmaTopnConfig tc;
    tc.base.rank = 6;
    tc.base.lr = 0.05;
    tc.base.max_epochs = 15;
    tc.base.init_scale = 0.1;
    tc.base.seed = seed;
    tc.mode = TopnMode::kWma;
    const auto wma = train_sma_topn(btrain, tc, &btest);
    for (auto mode : {TopnMode::kBoundary, TopnMode::kRandom}) {
      auto c = tc;
      c.mode = mode;
      c.lambda1 = 0.0;
      const auto res = train_sma_topn(btrain, c, &btest);
      bool same = res.first == wma.first && res.second.epochs.size() == wma.second.epochs.size();
      for (std::size_t k = 0; same && k < res.second.epochs.size(); ++k)
        same = res.second.epochs[k].train == wma.second.epochs[k].train &&
               res.second.epochs[k].test == wma.second.epochs[k].test;
      ++topn_total;
      topn_ok += same ? 1 : 0;
    }
  }
  return {rating_ok == rating_total && topn_ok == topn_total,
          "sma_rating(lambda_k>=1 = 0) == rsvd on " + std::to_string(rating_ok) + "/" + std::to_string(rating_total) +
              " seeds; top-N modes with lambda1 = 0 == wma on " + std::to_string(topn_ok) + "/" +
              std::to_string(topn_total)};
}

// ---------------------------------------------------------------- 5
Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "sma_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::mt19937_64 rng(5005);
    std::ofstream out(dir / "u.data");
    for (int u = 1; u <= 40; ++u)
      for (int i = 1; i <= 60; ++i)
        if (rng() % 4 == 0) out << u << '\t' << i << '\t' << 1 + rng() % 5 << '\t' << 0 << '\n';
  }
  const std::string common = "[data]\npath = " + (dir / "u.data").string() +
                             "\n[experiment]\nmaster_seed = 9\nruns = 3\n[train]\nrank = 4\nlr = 0.02\nmax_epochs = 12\n";
  const std::vector<std::string> variants = {
      "[experiment]\ntrainer = rsvd\n",
      "[experiment]\ntrainer = sma_rating\n[sma_rating]\nK = 2\n",
      "[experiment]\ntask = topn\ntrainer = sma_topn_boundary\n[train]\nrank = 8\nlr = 0.05\nmax_epochs = 6\n",
      "[experiment]\ntask = topn\ntrainer = sma_topn_random\n[train]\nrank = 8\nlr = 0.05\nmax_epochs = 6\n",
      "[experiment]\ntask = topn\ntrainer = wma\n[train]\nrank = 8\nlr = 0.05\nmax_epochs = 6\n",
  };
  int identical = 0, total = 0;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto cfg_path = dir / ("run" + std::to_string(v) + ".cfg");
    std::ofstream(cfg_path) << common << variants[v];
    std::vector<std::string> dumps[2];
    for (int rep = 0; rep < 2; ++rep) {
      const auto cfg = ExperimentConfig::from(read_config_file(cfg_path));
      for (const auto& r : run_experiment(cfg).reports) {
        auto j = to_json(r);
        j.erase("wall_seconds");
        dumps[rep].push_back(j.dump());
      }
    }
    ++total;
    identical += dumps[0] == dumps[1] ? 1 : 0;
  }
  fs::remove_all(dir);
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) +
                                  " configs reproduced every report byte for byte (wall time excluded)"};
}

// ---------------------------------------------------------------- 6
Outcome synthetic_recovery() {
  SparseRatingMatrix mat;
  mat.m = mat.n = 10;
  std::mt19937_64 rng(6006);
  std::uniform_real_distribution<double> d(0.5, 1.5);
  std::vector<double> a(10), b(10);
  for (auto& x : a) x = d(rng);
  for (auto& x : b) x = d(rng);
  for (std::uint32_t i = 0; i < 10; ++i)
    for (std::uint32_t j = 0; j < 10; ++j) mat.entries.push_back({i, j, a[i] * b[j]});
  mat.timestamps.assign(100, 0);
  TrainConfig cfg;
  cfg.rank = 1;
  cfg.lr = 0.05;
  cfg.mu1 = cfg.mu2 = 0.0;
  cfg.max_epochs = 500;
  cfg.conv_eps = 0.0;
  cfg.init_scale = 0.1;
  cfg.clamp.reset();
  cfg.seed = 6;
  const auto [model, rep] = train_rsvd(mat, cfg);
  const double err = rmse(model, mat.entries);
  return {err < 0.01 && rep.epochs.size() <= 500,
          "train RMSE " + sci(err) + " after " + std::to_string(rep.epochs.size()) + " epochs (limit 0.01)"};
}

// ---------------------------------------------------------------- MovieLens runs

struct Lab {
  std::optional<SparseRatingMatrix> data;
  std::map<std::string, RunReport> cache;

  const SparseRatingMatrix& dataset() {
    if (!data) {
      const fs::path path = SMA_ML100K;
      if (!fs::exists(path)) throw DataError("MovieLens 100K not found at " + path.string());
      data = load_movielens(path, DataFormat::kMl100k);
    }
    return *data;
  }

  const RunReport& run(const ExperimentConfig& cfg, std::uint64_t seed) {
    std::string key = std::to_string(seed);
    for (const auto& [k, v] : cfg.echo()) key += "|" + k + "=" + v;
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    auto rep = run_single(cfg, dataset(), seed).report;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "    run " << rep.trainer << " seed " << seed;
    for (const char* k : {"test_rmse", "gap_rmse", "precision_at_10", "ndcg_at_10", "gap_precision_at_10"})
      if (rep.final_metrics.count(k)) std::cout << ' ' << k << '=' << fmt(rep.final_metrics.at(k), 5);
    std::cout << " epochs=" << rep.convergence_epoch << " status=" << rep.status << " (" << fmt(secs, 1) << " s)"
              << std::endl;
    return cache.emplace(key, std::move(rep)).first->second;
  }
};

Lab& lab() {
  static Lab l;
  return l;
}

ExperimentConfig rating_config(Trainer trainer, std::size_t K = 3) {
  KeyValues kv = {{"data.path", SMA_ML100K},
                  {"experiment.seeds", "1"},
                  {"experiment.trainer", to_string(trainer)},
                  {"train.rank", "20"},
                  {"train.lr", "0.001"},
                  {"train.mu1", "0.06"},
                  {"train.max_epochs", "250"},
                  {"sma_rating.K", std::to_string(K)},
                  {"sma_rating.p", "0.8"}};
  return ExperimentConfig::from(kv);
}

// Top-N protocol: fixed 250-epoch budget at rank 100 (within r in [100, 200],
// T <= 2000), convergence test off.
ExperimentConfig topn_config(Trainer trainer, double gamma = 0.3) {
  KeyValues kv = {{"data.path", SMA_ML100K},
                  {"experiment.task", "topn"},
                  {"experiment.seeds", "1"},
                  {"experiment.trainer", to_string(trainer)},
                  {"train.rank", "100"},
                  {"train.lr", "0.001"},
                  {"train.mu1", "0.001"},
                  {"train.max_epochs", "250"},
                  {"train.conv_eps", "0"},
                  {"topn.loss", "exp"},
                  {"topn.w_pos", "1"},
                  {"topn.w_neg", "0.03"},
                  {"topn.gamma", format_double(gamma)},
                  {"topn.lambda0", "1"},
                  {"topn.lambda1", "1"}};
  return ExperimentConfig::from(kv);
}

double metric(const RunReport& r, const std::string& key) {
  if (r.status != "ok") return std::numeric_limits<double>::quiet_NaN();
  return r.final_metrics.at(key);
}

// ---------------------------------------------------------------- 7
Outcome rating_trend() {
  const auto rsvd = rating_config(Trainer::kRsvd), sma = rating_config(Trainer::kSmaRating);
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double a = metric(lab().run(sma, seed), "test_rmse"), b = metric(lab().run(rsvd, seed), "test_rmse");
    wins += a <= b ? 1 : 0;
    detail += " " + fmt(a) + "/" + fmt(b);
  }
  return {wins >= 4, "SMA <= RSVD test RMSE on " + std::to_string(wins) + "/5 splits (need 4); SMA/RSVD:" + detail};
}

// ---------------------------------------------------------------- 8
Outcome k_trend() {
  std::vector<double> means;
  std::string detail;
  for (std::size_t K = 1; K <= 3; ++K) {
    const auto cfg = rating_config(Trainer::kSmaRating, K);
    double s = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) s += metric(lab().run(cfg, seed), "test_rmse");
    means.push_back(s / 3.0);
    detail += " K=" + std::to_string(K) + ":" + fmt(means.back(), 5);
  }
  bool ok = true;
  for (std::size_t k = 1; k < means.size(); ++k) ok = ok && means[k] <= means[k - 1] + 0.002;
  return {ok, "mean test RMSE" + detail + " (each step may rise by at most 0.002)"};
}

// ---------------------------------------------------------------- 9
Outcome gap_trend() {
  const auto rsvd = rating_config(Trainer::kRsvd), sma = rating_config(Trainer::kSmaRating);
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double a = metric(lab().run(sma, seed), "gap_rmse"), b = metric(lab().run(rsvd, seed), "gap_rmse");
    wins += a < b ? 1 : 0;
    detail += " " + fmt(a) + "/" + fmt(b);
  }
  return {wins >= 4, "SMA gap < RSVD gap on " + std::to_string(wins) + "/5 splits (need 4); SMA/RSVD:" + detail};
}

// ---------------------------------------------------------------- 10
Outcome topn_accuracy() {
  const auto cfg = topn_config(Trainer::kSmaTopnBoundary);
  double p = 0.0, g = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto& r = lab().run(cfg, seed);
    p += metric(r, "precision_at_10") / 3.0;
    g += metric(r, "ndcg_at_10") / 3.0;
  }
  return {p >= 0.20 && g >= 0.23,
          "mean Precision@10 " + fmt(p) + " (need 0.20), NDCG@10 " + fmt(g) + " (need 0.23), r=100, T=250"};
}

// ---------------------------------------------------------------- 11
Outcome ablation() {
  const auto sma = topn_config(Trainer::kSmaTopnBoundary), wma = topn_config(Trainer::kWma),
             rnd = topn_config(Trainer::kSmaTopnRandom);
  int wins = 0;
  double gap_rnd = 0.0, gap_wma = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const double a = metric(lab().run(sma, seed), "precision_at_10");
    const double b = metric(lab().run(wma, seed), "precision_at_10");
    wins += a > b ? 1 : 0;
    detail += " " + fmt(a) + "/" + fmt(b);
    gap_rnd += metric(lab().run(rnd, seed), "gap_precision_at_10") / 3.0;
    gap_wma += metric(lab().run(wma, seed), "gap_precision_at_10") / 3.0;
  }
  return {wins >= 2 && gap_rnd < gap_wma,
          "sma_boundary > wma P@10 on " + std::to_string(wins) + "/3 seeds (need 2), boundary/wma:" + detail +
              "; mean P@10 train-test gap sma_random " + fmt(gap_rnd) + " vs wma " + fmt(gap_wma) + " (need smaller)"};
}

// ---------------------------------------------------------------- 12
Outcome gamma_sweep() {
  std::map<double, double> mean;
  std::string detail;
  for (double gamma : {0.1, 0.3, 0.9}) {
    const auto cfg = topn_config(Trainer::kSmaTopnBoundary, gamma);
    double s = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) s += metric(lab().run(cfg, seed), "precision_at_10") / 3.0;
    mean[gamma] = s;
    detail += " gamma=" + fmt(gamma, 1) + ":" + fmt(s);
  }
  const auto best = std::max_element(mean.begin(), mean.end(), [](auto a, auto b) { return a.second < b.second; });
  return {best->first == 0.3, "mean Precision@10" + detail + "; best at gamma=" + fmt(best->first, 1)};
}

// ---------------------------------------------------------------- 13
Outcome stability_trend() {
  auto cfg = rating_config(Trainer::kRsvd);
  cfg.stability_seed = 2017;
  const auto points = run_stability_sweep(cfg, lab().dataset(), {5, 10, 15, 20}, std::nullopt, 50);
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < points.size(); ++k) {
    detail += " r=" + std::to_string(points[k].rank) + ":" + fmt(points[k].estimate.probability, 2);
    if (k) ok = ok && points[k].estimate.probability <= points[k - 1].estimate.probability;
  }
  return {ok, "50 runs, epsilon " + fmt(points[0].estimate.epsilon, 6) + " covers every r=5 gap; probability" + detail +
                  " (must be non-increasing)"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "metric oracles", metric_oracles},
      {2, "gradient checks", gradient_checks},
      {3, "subset invariants", subset_invariants},
      {4, "reductions", reductions},
      {5, "determinism", determinism},
      {6, "synthetic recovery", synthetic_recovery},
      {7, "rating trend SMA vs RSVD", rating_trend},
      {8, "K trend", k_trend},
      {9, "generalization gap", gap_trend},
      {10, "top-N accuracy", topn_accuracy},
      {11, "top-N ablation", ablation},
      {12, "gamma sweep", gamma_sweep},
      {13, "stability vs rank", stability_trend},
  };
  std::set<int> wanted;
  for (int a = 1; a < argc; ++a) wanted.insert(std::atoi(argv[a]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    std::cout << "criterion " << c.id << " (" << c.name << ") running..." << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.check();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << c.id << ": " << (out.pass ? "PASS" : "FAIL") << "  " << c.name << ": "
              << out.detail << " [" << fmt(secs, 1) << " s]" << std::endl;
    failed += out.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
