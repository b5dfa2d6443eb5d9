#pragma once

// Stability-weighted rating trainer. A baseline model marks entries whose
// residual is at most the baseline RMSE as "easy"; a Bernoulli draw keeps easy
// entries with probability p and hard ones with probability 1 - p. The kept set
// is dealt into K parts, each removal Omega - part giving a harder-to-predict
// subset whose MSE joins the training objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sma/error.hpp"
#include "sma/ingest.hpp"
#include "sma/model_core.hpp"
#include "sma/random.hpp"
#include "sma/report.hpp"

namespace sma {

/// Entry subsets referenced by index into the training entry list.
struct SubsetPlan {
  std::size_t omega_size = 0;                 // |Omega|
  std::vector<std::uint32_t> omega_prime;     // selected entries, ascending
  std::vector<std::vector<std::uint32_t>> parts;  // omega_1..omega_K, each ascending
  std::vector<double> lambdas;                // lambda_0..lambda_K (after dropping empty parts)
  std::vector<std::int32_t> part_of;          // entry -> part index, or -1 outside Omega'
  double baseline_rmse = 0.0;                 // D_Omega of the selection oracle
  std::uint64_t selection_seed = 0;
  std::vector<std::string> warnings;

  std::size_t K() const noexcept { return parts.size(); }

  /// |Omega_k| = |Omega| - |omega_k|, k in [0, K).
  std::size_t hard_set_size(std::size_t k) const { return omega_size - parts[k].size(); }

  /// Omega_k = Omega - omega_k, ascending entry indices.
  std::vector<std::uint32_t> hard_set(std::size_t k) const {
    std::vector<std::uint32_t> out;
    out.reserve(hard_set_size(k));
    for (std::uint32_t e = 0; e < omega_size; ++e)
      if (part_of[e] != static_cast<std::int32_t>(k)) out.push_back(e);
    return out;
  }

  double lambda_sum() const { return std::accumulate(lambdas.begin(), lambdas.end(), 0.0); }
};

struct SmaRatingConfig {
  TrainConfig base;
  std::size_t K = 3;
  double p = 0.8;
  std::vector<double> lambdas;  // empty: 1/(K+1) each
  std::optional<FactorModel> baseline;  // trained with train_rsvd(base) when absent
  bool root_form = false;  // per-epoch frozen 1/D normalizers instead of the squared form

  std::vector<double> resolved_lambdas() const {
    if (!lambdas.empty()) return lambdas;
    return std::vector<double>(K + 1, 1.0 / static_cast<double>(K + 1));
  }

  void validate() const {
    base.validate();
    if (K < 1) throw ConfigError("K must be >= 1");
    if (!(p > 0.5 && p <= 1.0)) throw ConfigError("p must lie in (0.5, 1]");
    const auto lam = resolved_lambdas();
    if (lam.size() != K + 1) throw ConfigError("lambdas must have K + 1 values");
    for (double l : lam)
      if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambdas must be finite and >= 0");
    if (!(lam[0] > 0.0)) throw ConfigError("lambda_0 must be > 0");
  }
};

/// Bernoulli selection of "easy" entries against a baseline model. rho is
/// drawn in (0, 1] so p = 1 keeps every easy entry and no hard one.
inline std::vector<std::uint32_t> select_easy_entries(const SparseRatingMatrix& train,
                                                      const FactorModel& baseline, double p,
                                                      std::uint64_t seed,
                                                      double* baseline_rmse = nullptr) {
  if (train.empty()) throw DataError("select_easy_entries: empty entry set");
  if (!(p > 0.5 && p <= 1.0)) throw ConfigError("p must lie in (0.5, 1]");
  const double d_omega = rmse(baseline, train.entries);
  if (baseline_rmse) *baseline_rmse = d_omega;
  Rng rng(derive_seed(seed, stream::kSelect));
  std::vector<std::uint32_t> selected;
  for (std::uint32_t k = 0; k < train.size(); ++k) {
    const auto& e = train.entries[k];
    const double residual = std::abs(e.value - predict(baseline, e.user, e.item));
    const double rho = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
    const bool easy = residual <= d_omega;
    if ((easy && rho <= p) || (!easy && rho <= 1.0 - p)) selected.push_back(k);
  }
  return selected;
}

/// Deals a shuffled Omega' into K parts (sizes differ by at most one). Empty
/// parts are dropped along with their lambdas, with a warning.
inline SubsetPlan build_plan(std::size_t omega_size, std::vector<std::uint32_t> omega_prime,
                             std::size_t K, std::vector<double> lambdas, std::uint64_t seed) {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (lambdas.size() != K + 1) throw ConfigError("lambdas must have K + 1 values");
  SubsetPlan plan;
  plan.omega_size = omega_size;
  plan.part_of.assign(omega_size, -1);
  std::sort(omega_prime.begin(), omega_prime.end());
  for (std::size_t t = 0; t < omega_prime.size(); ++t) {
    if (omega_prime[t] >= omega_size) throw DataError("Omega' entry outside Omega");
    if (t && omega_prime[t] == omega_prime[t - 1]) throw DataError("duplicate entry in Omega'");
  }
  std::vector<std::uint32_t> dealt = omega_prime;
  Rng rng(derive_seed(seed, stream::kPartition));
  shuffle(dealt, rng);
  std::vector<std::vector<std::uint32_t>> parts(K);
  for (std::size_t t = 0; t < dealt.size(); ++t) parts[t % K].push_back(dealt[t]);

  plan.lambdas.push_back(lambdas[0]);
  for (std::size_t k = 0; k < K; ++k) {
    if (parts[k].empty()) continue;
    std::sort(parts[k].begin(), parts[k].end());
    const auto idx = static_cast<std::int32_t>(plan.parts.size());
    for (auto e : parts[k]) plan.part_of[e] = idx;
    plan.parts.push_back(std::move(parts[k]));
    plan.lambdas.push_back(lambdas[k + 1]);
  }
  if (plan.parts.size() < K)
    plan.warnings.push_back("|Omega'| = " + std::to_string(omega_prime.size()) + " < K = " +
                            std::to_string(K) + "; dropped " + std::to_string(K - plan.parts.size()) +
                            " empty part(s)");
  for (std::size_t k = 0; k < plan.K(); ++k)
    if (plan.hard_set_size(k) == 0)
      plan.warnings.push_back("hard set " + std::to_string(k + 1) + " is empty; its term contributes 0");
  plan.omega_prime = std::move(omega_prime);
  return plan;
}

/// Aggregate objective weight of every entry:
///   c_e = lambda_0/|Omega| + sum_{k : e in Omega_k} lambda_k/|Omega_k|.
inline std::vector<double> entry_weights(const SubsetPlan& plan) {
  const double n = static_cast<double>(plan.omega_size);
  std::vector<double> own(plan.K(), 0.0);
  for (std::size_t k = 0; k < plan.K(); ++k) {
    const auto size = plan.hard_set_size(k);
    if (size == 0) continue;
    own[k] = plan.lambdas[k + 1] / static_cast<double>(size);
  }
  std::vector<double> c(plan.omega_size);
  for (std::size_t e = 0; e < plan.omega_size; ++e) {
    double w = plan.lambdas[0] / n;
    for (std::size_t k = 0; k < plan.K(); ++k)
      if (plan.part_of[e] != static_cast<std::int32_t>(k)) w += own[k];
    c[e] = w;
  }
  return c;
}

/// Per-entry SGD scale c_e * |Omega| / sum(lambda). Equals 1 for every entry
/// when lambda_1..lambda_K are all zero.
inline std::vector<double> entry_scales(const SubsetPlan& plan) {
  const double n = static_cast<double>(plan.omega_size);
  const double lsum = plan.lambda_sum();
  std::vector<double> s(plan.omega_size);
  for (std::size_t e = 0; e < plan.omega_size; ++e) {
    double w = plan.lambdas[0];
    for (std::size_t k = 0; k < plan.K(); ++k) {
      const auto size = plan.hard_set_size(k);
      if (size == 0 || plan.part_of[e] == static_cast<std::int32_t>(k)) continue;
      w += plan.lambdas[k + 1] * (n / static_cast<double>(size));
    }
    s[e] = w / lsum;
  }
  return s;
}

/// lambda_0 MSE_Omega + sum_k lambda_k MSE_{Omega_k} + mu1 |U|^2 + mu2 |V|^2
/// with unclamped predictions. Empty hard sets contribute 0.
inline double sma_objective(const FactorModel& model, const SparseRatingMatrix& train,
                            const SubsetPlan& plan, double mu1, double mu2) {
  if (plan.omega_size != train.size()) throw DataError("plan does not match training matrix");
  double total = 0.0;
  std::vector<double> part_sum(plan.K(), 0.0);
  for (std::size_t e = 0; e < train.size(); ++e) {
    const auto& en = train.entries[e];
    const double d = en.value - predict_raw(model, en.user, en.item);
    total += d * d;
    if (plan.part_of[e] >= 0) part_sum[static_cast<std::size_t>(plan.part_of[e])] += d * d;
  }
  double obj = plan.lambdas[0] * total / static_cast<double>(train.size());
  for (std::size_t k = 0; k < plan.K(); ++k) {
    const auto size = plan.hard_set_size(k);
    if (size == 0) continue;
    obj += plan.lambdas[k + 1] * (total - part_sum[k]) / static_cast<double>(size);
  }
  double nu = 0.0, nv = 0.0;
  for (double x : model.U) nu += x * x;
  for (double x : model.V) nv += x * x;
  return obj + mu1 * nu + mu2 * nv;
}

/// Audit listing of a plan.
inline void export_plan(const SubsetPlan& plan, std::ostream& out) {
  out << "omega_size " << plan.omega_size << '\n';
  out << "omega_prime_size " << plan.omega_prime.size() << '\n';
  out << "K " << plan.K() << '\n';
  out << "part_sizes";
  for (const auto& p : plan.parts) out << ' ' << p.size();
  out << '\n' << "lambdas";
  for (double l : plan.lambdas) out << ' ' << l;
  out << '\n' << "baseline_rmse " << plan.baseline_rmse << '\n';
  out << "selection_seed " << plan.selection_seed << '\n';
  for (const auto& w : plan.warnings) out << "warning " << w << '\n';
}

struct SmaRatingResult {
  FactorModel model;
  RunReport report;
  SubsetPlan plan;
};

/// Trains with the plan frozen before epoch 1. Selection and partitioning use
/// streams derived from base.seed; the SGD stream matches train_rsvd's.
inline SmaRatingResult train_sma_rating(const SparseRatingMatrix& train, const SmaRatingConfig& cfg,
                                        const SparseRatingMatrix* test = nullptr) {
  cfg.validate();
  if (train.empty()) throw DataError("empty training matrix");
  FactorModel baseline = cfg.baseline ? *cfg.baseline : train_rsvd(train, cfg.base).first;
  double d_omega = 0.0;
  auto omega_prime = select_easy_entries(train, baseline, cfg.p, cfg.base.seed, &d_omega);
  SubsetPlan plan =
      build_plan(train.size(), std::move(omega_prime), cfg.K, cfg.resolved_lambdas(), cfg.base.seed);
  plan.baseline_rmse = d_omega;
  plan.selection_seed = cfg.base.seed;

  if (!cfg.root_form) {
    const auto scales = entry_scales(plan);
    auto [model, report] = detail::sgd_observed(train, cfg.base, scales, test, "sma_rating");
    return {std::move(model), std::move(report), std::move(plan)};
  }

  // Root form: gradient of lambda_s * sqrt(MSE_s) is lambda_s / (2 D_s) times the
  // MSE gradient. D_s is frozen per epoch; scales are normalized by the lambda_0
  // term so the all-zero case still reduces to unit scale.
  auto refresh = [&plan, &train](const FactorModel& model, std::vector<double>& scale) {
    const double n = static_cast<double>(plan.omega_size);
    double total = 0.0;
    std::vector<double> part_sum(plan.K(), 0.0);
    for (std::size_t e = 0; e < train.size(); ++e) {
      const auto& en = train.entries[e];
      const double d = en.value - predict_raw(model, en.user, en.item);
      total += d * d;
      if (plan.part_of[e] >= 0) part_sum[static_cast<std::size_t>(plan.part_of[e])] += d * d;
    }
    const double tiny = 1e-12;
    const double d0 = std::max(std::sqrt(total / n), tiny);
    std::vector<double> coef(plan.K(), 0.0);
    for (std::size_t k = 0; k < plan.K(); ++k) {
      const auto size = plan.hard_set_size(k);
      if (size == 0) continue;
      const double dk = std::max(std::sqrt((total - part_sum[k]) / static_cast<double>(size)), tiny);
      coef[k] = plan.lambdas[k + 1] * (n / static_cast<double>(size)) * (d0 / dk);
    }
    const double lsum = plan.lambda_sum();
    for (std::size_t e = 0; e < plan.omega_size; ++e) {
      double w = plan.lambdas[0];
      for (std::size_t k = 0; k < plan.K(); ++k)
        if (plan.part_of[e] != static_cast<std::int32_t>(k)) w += coef[k];
      scale[e] = w / lsum;
    }
  };
  auto [model, report] =
      detail::sgd_observed(train, cfg.base, {}, test, "sma_rating", nullptr, refresh);
  return {std::move(model), std::move(report), std::move(plan)};
}

}  // namespace sma
