#pragma once

// Evaluation: top-N ranking metrics, generalization gap and the Monte-Carlo
// stability estimate Pr[|test RMSE - train RMSE| < eps].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sma/error.hpp"
#include "sma/ingest.hpp"
#include "sma/model_core.hpp"
#include "sma/random.hpp"
#include "sma/report.hpp"

namespace sma {

/// Dense m x n score matrix (row-major) of unclamped predictions.
inline std::vector<double> score_grid(const FactorModel& model) {
  std::vector<double> scores(model.m * model.n);
  for (std::size_t i = 0; i < model.m; ++i) {
    const auto u = model.user(i);
    double* row = scores.data() + i * model.n;
    for (std::size_t j = 0; j < model.n; ++j) row[j] = model.offset + dot(u, model.item(j));
  }
  return scores;
}

/// Per-user item lists of a matrix, ascending item index.
inline std::vector<std::vector<std::uint32_t>> items_by_user(const SparseRatingMatrix& mat) {
  std::vector<std::vector<std::uint32_t>> out(mat.m);
  for (const auto& e : mat.entries) out[e.user].push_back(e.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

struct UserTopN {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> recommended;
  std::size_t hits = 0;
  double precision = 0.0;
  double ndcg = 0.0;
};

struct TopNResult {
  std::size_t N = 0;
  std::vector<UserTopN> per_user;
  double precision_at = 0.0;
  double ndcg_at = 0.0;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;  // no candidates left after exclusion
  std::size_t users_short = 0;    // fewer than N candidates
};

/// Ranks candidates by score descending, ties by ascending item index.
/// Returns the top `count` (or fewer if there are fewer candidates).
inline std::vector<std::uint32_t> top_items(std::span<const double> row,
                                            std::span<const std::uint32_t> excluded,
                                            std::size_t count) {
  std::vector<std::uint32_t> cand;
  cand.reserve(row.size());
  std::size_t x = 0;
  for (std::uint32_t j = 0; j < row.size(); ++j) {
    while (x < excluded.size() && excluded[x] < j) ++x;
    if (x < excluded.size() && excluded[x] == j) continue;
    cand.push_back(j);
  }
  const auto better = [&row](std::uint32_t a, std::uint32_t b) {
    return row[a] > row[b] || (row[a] == row[b] && a < b);
  };
  const std::size_t k = std::min(count, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), better);
  cand.resize(k);
  return cand;
}

inline double discount(std::size_t position) {  // 1-based
  return 1.0 / std::log2(static_cast<double>(position) + 1.0);
}

/// Precision@N and NDCG@N for every N in `cutoffs`, from one ranking per user.
/// `excluded[u]` and `relevant[u]` are ascending item lists (excluded may be
/// empty: rank all items). Users without relevant items are left out of the
/// means. Relevance is binary; precision divides by N.
inline std::vector<TopNResult> evaluate_topn(std::span<const double> scores, std::size_t m,
                                             std::size_t n,
                                             const std::vector<std::vector<std::uint32_t>>& excluded,
                                             const std::vector<std::vector<std::uint32_t>>& relevant,
                                             std::span<const std::size_t> cutoffs,
                                             bool keep_lists = true) {
  if (cutoffs.empty()) throw ConfigError("no cutoffs given");
  for (auto N : cutoffs)
    if (N < 1) throw ConfigError("N must be >= 1");
  if (scores.size() != m * n || relevant.size() != m || (!excluded.empty() && excluded.size() != m))
    throw std::invalid_argument("evaluate_topn: inconsistent dimensions");
  const std::size_t max_n = *std::max_element(cutoffs.begin(), cutoffs.end());
  static const std::vector<std::uint32_t> kNone;

  std::vector<TopNResult> results(cutoffs.size());
  for (std::size_t c = 0; c < cutoffs.size(); ++c) results[c].N = cutoffs[c];

  for (std::uint32_t u = 0; u < m; ++u) {
    const auto& rel = relevant[u];
    if (rel.empty()) continue;
    const auto ranked =
        top_items(scores.subspan(std::size_t{u} * n, n), excluded.empty() ? kNone : excluded[u], max_n);
    if (ranked.empty()) {
      for (auto& r : results) ++r.users_skipped;
      continue;
    }
    for (std::size_t c = 0; c < cutoffs.size(); ++c) {
      const std::size_t N = cutoffs[c];
      auto& res = results[c];
      UserTopN ut;
      ut.user = u;
      ut.recommended.assign(ranked.begin(),
                            ranked.begin() + static_cast<std::ptrdiff_t>(std::min(N, ranked.size())));
      double dcg = 0.0;
      for (std::size_t pos = 0; pos < ut.recommended.size(); ++pos) {
        if (std::binary_search(rel.begin(), rel.end(), ut.recommended[pos])) {
          ++ut.hits;
          dcg += discount(pos + 1);
        }
      }
      double idcg = 0.0;
      for (std::size_t pos = 1; pos <= std::min(N, rel.size()); ++pos) idcg += discount(pos);
      ut.precision = static_cast<double>(ut.hits) / static_cast<double>(N);
      ut.ndcg = dcg / idcg;
      if (ut.recommended.size() < N) ++res.users_short;
      res.precision_at += ut.precision;
      res.ndcg_at += ut.ndcg;
      ++res.users_evaluated;
      if (keep_lists) res.per_user.push_back(std::move(ut));
    }
  }
  for (auto& r : results) {
    if (r.users_evaluated == 0) continue;
    r.precision_at /= static_cast<double>(r.users_evaluated);
    r.ndcg_at /= static_cast<double>(r.users_evaluated);
  }
  return results;
}

/// Test items are relevant; each user's training items are excluded.
inline std::vector<TopNResult> evaluate_topn(const FactorModel& model, const SparseRatingMatrix& train,
                                             const SparseRatingMatrix& test,
                                             std::span<const std::size_t> cutoffs) {
  if (test.empty()) throw DataError("top-N evaluation needs a non-empty test set");
  const auto scores = score_grid(model);
  return evaluate_topn(scores, model.m, model.n, items_by_user(train), items_by_user(test), cutoffs);
}

/// Ranks every item outside the user's training set; test items are relevant.
inline TopNResult precision_at_n(const FactorModel& model, const SparseRatingMatrix& train,
                                 const SparseRatingMatrix& test, std::size_t N) {
  const std::size_t cut[] = {N};
  return std::move(evaluate_topn(model, train, test, cut)[0]);
}

/// Same ranking as precision_at_n; the result carries both metrics.
inline TopNResult ndcg_at_n(const FactorModel& model, const SparseRatingMatrix& train,
                            const SparseRatingMatrix& test, std::size_t N) {
  return precision_at_n(model, train, test, N);
}

/// |test - train| of the final metric pair stored under `train_key`/`test_key`.
inline double generalization_gap(const RunReport& report, const std::string& train_key = "train_rmse",
                                 const std::string& test_key = "test_rmse") {
  const auto tr = report.final_metrics.find(train_key);
  const auto te = report.final_metrics.find(test_key);
  if (tr == report.final_metrics.end()) throw DataError("report has no " + train_key);
  if (te == report.final_metrics.end()) throw DataError("report has no " + test_key);
  return std::abs(te->second - tr->second);
}

struct StabilityRun {
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  double train_rmse = 0.0;
  double test_rmse = 0.0;
  double gap = 0.0;  // +inf for a failed run
  bool failed = false;
};

struct StabilityEstimate {
  double epsilon = 0.0;
  std::size_t n_runs = 0;
  std::size_t successes = 0;
  double probability = 0.0;
  std::vector<double> per_run_gaps;
  std::vector<StabilityRun> runs;
  std::size_t failed_runs = 0;
};

/// Trains on a split and returns (train RMSE, test RMSE). Must be
/// deterministic in the seed it is given.
using StabilityTrainer =
    std::function<std::pair<double, double>(const SplitPair& split, std::uint64_t seed)>;

/// Runs n_runs trainings on fresh splits, split and trainer seeded with
/// derive_seed(seed, t). Diverged runs count as gap = +inf.
inline std::vector<StabilityRun> stability_runs(const SparseRatingMatrix& data,
                                                const StabilityTrainer& trainer, std::size_t n_runs,
                                                std::uint64_t seed, double ratio = 0.9) {
  if (n_runs < 2) throw ConfigError("stability estimate needs n_runs >= 2");
  std::vector<StabilityRun> runs;
  runs.reserve(n_runs);
  for (std::size_t t = 0; t < n_runs; ++t) {
    StabilityRun run;
    run.run_index = t;
    run.seed = derive_seed(seed, t);
    const auto split = split_train_test(data, ratio, run.seed);
    try {
      const auto [tr, te] = trainer(split, run.seed);
      run.train_rmse = tr;
      run.test_rmse = te;
      run.gap = std::abs(te - tr);
      if (!std::isfinite(run.gap)) throw DivergenceError("non-finite gap", 0);
    } catch (const DivergenceError&) {
      run.failed = true;
      run.gap = std::numeric_limits<double>::infinity();
    }
    runs.push_back(run);
  }
  return runs;
}

/// Fraction of runs whose gap is strictly below epsilon.
inline StabilityEstimate summarize_stability(std::vector<StabilityRun> runs, double epsilon) {
  StabilityEstimate est;
  est.epsilon = epsilon;
  est.n_runs = runs.size();
  for (const auto& r : runs) {
    est.per_run_gaps.push_back(r.gap);
    if (r.failed) ++est.failed_runs;
    if (r.gap < epsilon) ++est.successes;
  }
  est.probability = est.n_runs ? static_cast<double>(est.successes) / static_cast<double>(est.n_runs) : 0.0;
  est.runs = std::move(runs);
  return est;
}

inline StabilityEstimate stability_estimate(const SparseRatingMatrix& data,
                                            const StabilityTrainer& trainer, double epsilon,
                                            std::size_t n_runs, std::uint64_t seed) {
  return summarize_stability(stability_runs(data, trainer, n_runs, seed), epsilon);
}

/// Smallest epsilon whose strict test admits every finite gap.
inline double covering_epsilon(std::span<const double> gaps) {
  double hi = 0.0;
  for (double g : gaps)
    if (std::isfinite(g)) hi = std::max(hi, g);
  return std::nextafter(hi, std::numeric_limits<double>::infinity());
}

}  // namespace sma
