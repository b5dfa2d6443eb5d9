#pragma once

// Top-N trainer over the full binary grid: observed cells are +1, every other
// cell is -1. The loss is a weighted surrogate of the 0-1 error, optionally
// augmented each epoch by a second term over cells whose current prediction
// sits near the decision boundary (or over a random subset of the same size).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sma/error.hpp"
#include "sma/ingest.hpp"
#include "sma/metrics.hpp"
#include "sma/model_core.hpp"
#include "sma/random.hpp"
#include "sma/report.hpp"

namespace sma {

enum class LossKind { kMse, kLog, kExp };

inline LossKind parse_loss(std::string_view s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "log") return LossKind::kLog;
  if (s == "exp") return LossKind::kExp;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected mse, log or exp)");
}

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::kMse: return "mse";
    case LossKind::kLog: return "log";
    case LossKind::kExp: return "exp";
  }
  return "?";
}

/// Upper bound on the exponent -pred * r before exponentiation.
inline constexpr double kExpClamp = 30.0;

struct LossValue {
  double value = 0.0;
  double deriv = 0.0;  // d value / d pred
};

/// Surrogate loss of prediction `pred` for label r in {+1, -1}.
inline LossValue surrogate(LossKind kind, double pred, double r) {
  switch (kind) {
    case LossKind::kMse: {
      const double d = pred - r;
      return {d * d, 2.0 * d};
    }
    case LossKind::kLog: {
      const double z = -pred * r;
      // log(1 + e^z) and its logistic derivative, both without overflow.
      const double value = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      return {value, -r * sig};
    }
    case LossKind::kExp: {
      const double e = std::exp(std::min(-pred * r, kExpClamp));
      return {e, -r * e};
    }
  }
  return {};
}

struct WeightScheme {
  double w_pos = 1.0;
  double w_neg = 0.03;

  double operator()(double r) const { return r > 0.0 ? w_pos : w_neg; }
  void validate() const {
    if (!(w_pos > 0.0) || !(w_neg > 0.0)) throw ConfigError("w_pos and w_neg must be > 0");
  }
};

enum class TopnMode { kBoundary, kRandom, kWma };

inline TopnMode parse_topn_mode(std::string_view s) {
  if (s == "sma_boundary" || s == "sma_topn_boundary") return TopnMode::kBoundary;
  if (s == "sma_random" || s == "sma_topn_random") return TopnMode::kRandom;
  if (s == "wma") return TopnMode::kWma;
  throw ConfigError("unknown top-N mode '" + std::string(s) + "'");
}

inline const char* to_string(TopnMode m) {
  switch (m) {
    case TopnMode::kBoundary: return "sma_topn_boundary";
    case TopnMode::kRandom: return "sma_topn_random";
    case TopnMode::kWma: return "wma";
  }
  return "?";
}

inline TrainConfig topn_base_defaults() {
  TrainConfig c;
  c.rank = 100;
  c.mu1 = c.mu2 = 0.001;
  c.max_epochs = 2000;
  return c;
}

struct SmaTopnConfig {
  TrainConfig base = topn_base_defaults();
  LossKind loss = LossKind::kExp;
  WeightScheme weights;
  double gamma = 0.3;
  double lambda0 = 1.0;
  double lambda1 = 1.0;
  TopnMode mode = TopnMode::kBoundary;
  std::size_t report_n = 10;  // cutoff of the per-epoch precision columns

  void validate() const {
    base.validate();
    weights.validate();
    if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
    if (!(lambda0 > 0.0)) throw ConfigError("lambda0 must be > 0");
    if (!(lambda1 >= 0.0)) throw ConfigError("lambda1 must be >= 0");
    if (report_n < 1) throw ConfigError("report_n must be >= 1");
  }
};

/// One labelled cell of the grid.
struct Cell {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double r = -1.0;
};

/// (1/|cells|) sum W(r) L(pred, r).
inline double weighted_loss(const FactorModel& model, std::span<const Cell> cells,
                            const WeightScheme& weights, LossKind loss) {
  if (cells.empty()) throw DataError("weighted_loss of an empty cell set");
  double sum = 0.0;
  for (const auto& c : cells)
    sum += weights(c.r) * surrogate(loss, predict_raw(model, c.user, c.item), c.r).value;
  return sum / static_cast<double>(cells.size());
}

/// Row-major +1/-1 mask of the full grid from an observed (binary) matrix.
inline std::vector<std::uint8_t> positive_mask(const SparseRatingMatrix& mat) {
  std::vector<std::uint8_t> mask(mat.m * mat.n, 0);
  for (const auto& e : mat.entries) mask[std::size_t{e.user} * mat.n + e.item] = 1;
  return mask;
}

/// Every grid cell labelled, row-major.
inline std::vector<Cell> grid_cells(const SparseRatingMatrix& mat) {
  const auto mask = positive_mask(mat);
  std::vector<Cell> cells(mask.size());
  for (std::size_t c = 0; c < mask.size(); ++c)
    cells[c] = {static_cast<std::uint32_t>(c / mat.n), static_cast<std::uint32_t>(c % mat.n),
                mask[c] ? 1.0 : -1.0};
  return cells;
}

/// Weighted loss over the full grid from precomputed scores.
inline double grid_weighted_loss(std::span<const double> scores, std::span<const std::uint8_t> mask,
                                 const WeightScheme& weights, LossKind loss) {
  double sum = 0.0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    const double r = mask[c] ? 1.0 : -1.0;
    sum += weights(r) * surrogate(loss, scores[c], r).value;
  }
  return sum / static_cast<double>(scores.size());
}

/// Flat cell indices (i * n + j) with score in the closed interval [-gamma, gamma].
inline std::vector<std::uint32_t> boundary_cells(std::span<const double> scores, double gamma) {
  std::vector<std::uint32_t> out;
  for (std::size_t c = 0; c < scores.size(); ++c)
    if (scores[c] >= -gamma && scores[c] <= gamma) out.push_back(static_cast<std::uint32_t>(c));
  return out;
}

inline std::vector<std::uint32_t> select_boundary_set(const FactorModel& model, double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  return boundary_cells(score_grid(model), gamma);
}

namespace detail {

inline void check_binary(const SparseRatingMatrix& mat) {
  for (const auto& e : mat.entries)
    if (e.value != 1.0) throw DataError("top-N training expects binarized data (all values +1)");
}

}  // namespace detail

/// Trains over all m*n cells per epoch in seeded shuffled order. The per-cell
/// step scales the surrogate derivative by
///   W_ij * (lambda0 + [cell in Omega'] * lambda1 * |grid| / |Omega'|),
/// i.e. the grid-normalized gradient of lambda0 D_grid + lambda1 D_Omega'.
/// Omega' is chosen before every epoch from the model left by the previous one.
inline std::pair<FactorModel, RunReport> train_sma_topn(const SparseRatingMatrix& train,
                                                        const SmaTopnConfig& cfg,
                                                        const SparseRatingMatrix* test = nullptr) {
  cfg.validate();
  if (train.empty()) throw DataError("empty training matrix");
  detail::check_binary(train);
  const std::size_t m = train.m, n = train.n, grid = m * n, r = cfg.base.rank;
  if (grid > std::size_t{0xffffffff}) throw DataError("grid too large for 32-bit cell indices");

  FactorModel model =
      init_model(m, n, r, derive_seed(cfg.base.seed, stream::kInit), cfg.base.init_scale);
  model.seed = cfg.base.seed;

  RunReport report;
  report.trainer = to_string(cfg.mode);
  report.seed = cfg.base.seed;

  const auto mask = positive_mask(train);
  const auto train_lists = items_by_user(train);
  const auto test_lists = test ? items_by_user(*test) : std::vector<std::vector<std::uint32_t>>{};
  const std::size_t cut[] = {cfg.report_n};
  const std::string prec_key = "train_precision_at_" + std::to_string(cfg.report_n);

  Rng sgd_rng(derive_seed(cfg.base.seed, stream::kSgd));
  Rng subset_rng(derive_seed(cfg.base.seed, stream::kRandomSubset));
  std::vector<std::uint32_t> order(grid);
  for (std::uint32_t c = 0; c < grid; ++c) order[c] = c;
  std::vector<std::uint8_t> in_subset(grid, 0);

  // Omega' for the next epoch from the current scores.
  auto choose_subset = [&](std::span<const double> scores) -> std::size_t {
    std::fill(in_subset.begin(), in_subset.end(), 0);
    if (cfg.mode == TopnMode::kWma) return 0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < grid; ++c)
      if (scores[c] >= -cfg.gamma && scores[c] <= cfg.gamma) {
        if (cfg.mode == TopnMode::kBoundary) in_subset[c] = 1;
        ++count;
      }
    if (cfg.mode == TopnMode::kBoundary) return count;
    // Random subset with the boundary rule's current size as expected size.
    const double q = static_cast<double>(count) / static_cast<double>(grid);
    std::size_t picked = 0;
    for (std::size_t c = 0; c < grid; ++c)
      if (uniform01(subset_rng) < q) {
        in_subset[c] = 1;
        ++picked;
      }
    return picked;
  };

  std::vector<double> scores = score_grid(model);
  std::size_t subset_size = choose_subset(scores);
  std::optional<double> prev;
  bool left_plateau = false;  // convergence is only tested after the first real move
  const double lr = cfg.base.lr, mu1 = cfg.base.mu1, mu2 = cfg.base.mu2;

  for (int epoch = 1; epoch <= cfg.base.max_epochs; ++epoch) {
    const double extra =
        subset_size > 0 ? cfg.lambda1 * (static_cast<double>(grid) / static_cast<double>(subset_size)) : 0.0;
    shuffle(order, sgd_rng);
    for (const std::uint32_t c : order) {
      const std::size_t i = c / n, j = c % n;
      double* u = model.U.data() + i * r;
      double* v = model.V.data() + j * r;
      const double pred = dot(u, v, r);
      const double label = mask[c] ? 1.0 : -1.0;
      const double coef = cfg.lambda0 + (in_subset[c] ? extra : 0.0);
      const double g = cfg.weights(label) * coef * surrogate(cfg.loss, pred, label).deriv;
      for (std::size_t f = 0; f < r; ++f) {
        const double uf = u[f];
        const double vf = v[f];
        u[f] -= lr * (g * vf + mu1 * uf);
        v[f] -= lr * (g * uf + mu2 * vf);
      }
    }

    scores = score_grid(model);
    const double loss = grid_weighted_loss(scores, mask, cfg.weights, cfg.loss);
    if (!std::isfinite(loss) || !model.all_finite())
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                " (surrogate loss is not finite)",
                            epoch);
    EpochRow row{epoch, loss, std::nullopt, {}};
    row.extra["subset_size"] = static_cast<double>(subset_size);
    row.extra["subset_fraction"] = static_cast<double>(subset_size) / static_cast<double>(grid);
    row.extra[prec_key] = evaluate_topn(scores, m, n, {}, train_lists, cut, false)[0].precision_at;
    if (test && !test->empty())
      row.test = evaluate_topn(scores, m, n, train_lists, test_lists, cut, false)[0].precision_at;
    report.epochs.push_back(std::move(row));
    report.convergence_epoch = epoch;
    if (prev) {
      const double delta = std::abs(*prev - loss);
      if (delta >= cfg.base.conv_eps) left_plateau = true;
      if (left_plateau && epoch >= cfg.base.min_epochs && delta < cfg.base.conv_eps) {
        report.converged = true;
        break;
      }
    }
    prev = loss;
    if (epoch < cfg.base.max_epochs) subset_size = choose_subset(scores);
  }
  return {std::move(model), std::move(report)};
}

}  // namespace sma
