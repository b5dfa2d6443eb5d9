#pragma once

// Low-rank factor model R ~ U V^T, its SGD trainer on observed entries
// (regularized SVD) and plain-text persistence.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sma/error.hpp"
#include "sma/ingest.hpp"
#include "sma/random.hpp"
#include "sma/report.hpp"

namespace sma {

struct Clamp {
  double lo = 1.0;
  double hi = 5.0;
  friend bool operator==(const Clamp&, const Clamp&) = default;
};

/// Row-major factors: U is m x r, V is n x r.
struct FactorModel {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t r = 0;
  std::vector<double> U;
  std::vector<double> V;
  std::optional<Clamp> clamp;  // applied by predict(), never inside SGD
  double offset = 0.0;         // global mean when centering is enabled
  std::uint64_t seed = 0;

  std::span<double> user(std::size_t i) { return {U.data() + i * r, r}; }
  std::span<double> item(std::size_t j) { return {V.data() + j * r, r}; }
  std::span<const double> user(std::size_t i) const { return {U.data() + i * r, r}; }
  std::span<const double> item(std::size_t j) const { return {V.data() + j * r, r}; }

  bool all_finite() const {
    for (double x : U)
      if (!std::isfinite(x)) return false;
    for (double x : V)
      if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const FactorModel&, const FactorModel&) = default;
};

struct TrainConfig {
  std::size_t rank = 20;
  double lr = 0.001;
  double mu1 = 0.06;
  double mu2 = 0.06;
  int max_epochs = 250;
  double conv_eps = 1e-4;
  int min_epochs = 1;  // convergence is not tested before this epoch
  std::uint64_t seed = 0;
  double init_scale = 0.01;
  std::optional<Clamp> clamp;
  bool center = false;  // subtract the training mean before factorizing

  void validate() const {
    if (rank < 1) throw ConfigError("rank must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(mu1 >= 0.0) || !(mu2 >= 0.0)) throw ConfigError("mu1 and mu2 must be >= 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(conv_eps >= 0.0)) throw ConfigError("conv_eps must be >= 0");
    if (min_epochs < 1) throw ConfigError("min_epochs must be >= 1");
    if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
    if (clamp && !(clamp->lo <= clamp->hi)) throw ConfigError("clamp lo must be <= hi");
  }
};

namespace stream {
inline constexpr std::uint64_t kInit = 0x494e4954;
inline constexpr std::uint64_t kSgd = 0x534744;
}  // namespace stream

/// Entries i.i.d. uniform in [-scale, scale].
inline FactorModel init_model(std::size_t m, std::size_t n, std::size_t r, std::uint64_t seed,
                              double scale) {
  FactorModel model;
  model.m = m;
  model.n = n;
  model.r = r;
  model.seed = seed;
  model.U.resize(m * r);
  model.V.resize(n * r);
  Rng rng(seed);
  for (auto* mat : {&model.U, &model.V})
    for (double& x : *mat) x = scale * (2.0 * uniform01(rng) - 1.0);
  return model;
}

/// Inner product with four interleaved partial sums (vectorizes without
/// reassociation flags). Every prediction in the library goes through here.
inline double dot(const double* a, const double* b, std::size_t len) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= len; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < len; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return dot(a.data(), b.data(), a.size());
}

/// offset + U_i . V_j, without clamping.
inline double predict_raw(const FactorModel& model, std::size_t i, std::size_t j) {
  return model.offset + dot(model.user(i), model.item(j));
}

inline double predict(const FactorModel& model, std::size_t i, std::size_t j) {
  if (i >= model.m || j >= model.n) throw std::out_of_range("predict: index out of bounds");
  double p = predict_raw(model, i, j);
  if (model.clamp) p = std::clamp(p, model.clamp->lo, model.clamp->hi);
  return p;
}

inline double mse(const FactorModel& model, std::span<const Entry> entries) {
  if (entries.empty()) throw DataError("rmse of an empty entry set");
  double sum = 0.0;
  for (const auto& e : entries) {
    const double d = e.value - predict(model, e.user, e.item);
    sum += d * d;
  }
  return sum / static_cast<double>(entries.size());
}

inline double rmse(const FactorModel& model, std::span<const Entry> entries) {
  return std::sqrt(mse(model, entries));
}

/// Gradient of the per-entry objective
///   1/2 (R_ij - U_i.V_j)^2 + mu1/2 |U_i|^2 + mu2/2 |V_j|^2
/// with respect to U_i and V_j. The SGD step is U_i -= lr * grad_u.
inline std::pair<std::vector<double>, std::vector<double>> entry_gradient(const FactorModel& model,
                                                                          const Entry& e, double mu1,
                                                                          double mu2) {
  const auto u = model.user(e.user);
  const auto v = model.item(e.item);
  const double err = e.value - predict_raw(model, e.user, e.item);
  std::vector<double> gu(model.r), gv(model.r);
  for (std::size_t k = 0; k < model.r; ++k) {
    gu[k] = -err * v[k] + mu1 * u[k];
    gv[k] = -err * u[k] + mu2 * v[k];
  }
  return {std::move(gu), std::move(gv)};
}

inline double entry_objective(const FactorModel& model, const Entry& e, double mu1, double mu2) {
  const double err = e.value - predict_raw(model, e.user, e.item);
  double nu = 0.0, nv = 0.0;
  for (double x : model.user(e.user)) nu += x * x;
  for (double x : model.item(e.item)) nv += x * x;
  return 0.5 * err * err + 0.5 * mu1 * nu + 0.5 * mu2 * nv;
}

namespace detail {

/// Recomputes per-entry scales from the current model before each epoch.
using ScaleRefresh = std::function<void(const FactorModel&, std::vector<double>&)>;

inline double training_mean(const SparseRatingMatrix& train) {
  double s = 0.0;
  for (const auto& e : train.entries) s += e.value;
  return s / static_cast<double>(train.size());
}

/// SGD over observed entries where entry k's residual gradient is scaled by
/// `scale[k]` (empty span: every scale is 1). Shared by the regularized SVD
/// and the stability-weighted rating trainer so that unit scales reproduce the
/// former bit for bit.
inline std::pair<FactorModel, RunReport> sgd_observed(const SparseRatingMatrix& train,
                                                      const TrainConfig& cfg,
                                                      std::span<const double> scale,
                                                      const SparseRatingMatrix* test,
                                                      std::string trainer,
                                                      const FactorModel* initial = nullptr,
                                                      const ScaleRefresh& refresh = {}) {
  cfg.validate();
  if (train.empty()) throw DataError("empty training matrix");
  if (!scale.empty() && scale.size() != train.size())
    throw std::invalid_argument("scale vector does not match training entries");

  FactorModel model = initial ? *initial
                              : init_model(train.m, train.n, cfg.rank,
                                           derive_seed(cfg.seed, stream::kInit), cfg.init_scale);
  if (model.m != train.m || model.n != train.n || model.r != cfg.rank)
    throw std::invalid_argument("initial model does not match training dimensions");
  model.seed = cfg.seed;
  model.clamp = cfg.clamp;
  if (cfg.center) model.offset = training_mean(train);

  RunReport report;
  report.trainer = std::move(trainer);
  report.seed = cfg.seed;

  Rng rng(derive_seed(cfg.seed, stream::kSgd));
  std::vector<std::uint32_t> order(train.size());
  for (std::uint32_t k = 0; k < order.size(); ++k) order[k] = k;

  const std::size_t r = cfg.rank;
  const double lr = cfg.lr;
  std::vector<double> refreshed;
  if (refresh) {
    refreshed.assign(train.size(), 1.0);
    scale = refreshed;
  }
  std::optional<double> prev;
  bool left_plateau = false;  // convergence is only tested after the first real move
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (refresh) refresh(model, refreshed);
    shuffle(order, rng);
    for (const auto k : order) {
      const Entry& e = train.entries[k];
      double* u = model.U.data() + std::size_t{e.user} * r;
      double* v = model.V.data() + std::size_t{e.item} * r;
      const double pred = model.offset + dot(u, v, r);
      const double g = (e.value - pred) * (scale.empty() ? 1.0 : scale[k]);
      for (std::size_t f = 0; f < r; ++f) {
        const double uf = u[f];
        const double vf = v[f];
        u[f] += lr * (g * vf - cfg.mu1 * uf);
        v[f] += lr * (g * uf - cfg.mu2 * vf);
      }
    }
    const double train_rmse = rmse(model, train.entries);
    if (!std::isfinite(train_rmse) || !model.all_finite())
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                " (train RMSE is not finite)",
                            epoch);
    EpochRow row{epoch, train_rmse, std::nullopt, {}};
    if (test && !test->empty()) row.test = rmse(model, test->entries);
    report.epochs.push_back(std::move(row));
    report.convergence_epoch = epoch;
    if (prev) {
      const double delta = std::abs(*prev - train_rmse);
      if (delta >= cfg.conv_eps) left_plateau = true;
      if (left_plateau && epoch >= cfg.min_epochs && delta < cfg.conv_eps) {
        report.converged = true;
        break;
      }
    }
    prev = train_rmse;
  }
  return {std::move(model), std::move(report)};
}

}  // namespace detail

/// Regularized SVD: SGD on squared error over observed entries with L2
/// penalties. Throws DivergenceError if the train RMSE becomes non-finite.
/// `initial` replaces the seeded initialization when given.
inline std::pair<FactorModel, RunReport> train_rsvd(const SparseRatingMatrix& train,
                                                    const TrainConfig& cfg,
                                                    const SparseRatingMatrix* test = nullptr,
                                                    const FactorModel* initial = nullptr) {
  return detail::sgd_observed(train, cfg, {}, test, "rsvd", initial);
}

// Model file format, version 1 (text, one token group per line):
//   sma-factor-model 1
//   m n r
//   clamp none | clamp <lo> <hi>
//   offset <x>
//   seed <s>
//   m lines of r values (U, row-major), then n lines of r values (V)
// Reals are written with 17 significant digits so a save/load round trip is exact.
inline constexpr int kModelFormatVersion = 1;

inline void save_model(const FactorModel& model, std::ostream& out) {
  out << "sma-factor-model " << kModelFormatVersion << '\n';
  out << model.m << ' ' << model.n << ' ' << model.r << '\n';
  out << std::setprecision(17);
  if (model.clamp)
    out << "clamp " << model.clamp->lo << ' ' << model.clamp->hi << '\n';
  else
    out << "clamp none\n";
  out << "offset " << model.offset << '\n';
  out << "seed " << model.seed << '\n';
  auto rows = [&](const std::vector<double>& mat, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < model.r; ++k) out << (k ? " " : "") << mat[i * model.r + k];
      out << '\n';
    }
  };
  rows(model.U, model.m);
  rows(model.V, model.n);
}

inline FactorModel load_model(std::istream& in) {
  FactorModel model;
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "sma-factor-model") throw DataError("not a factor model file");
  if (version != kModelFormatVersion) throw DataError("unsupported model format version");
  if (!(in >> model.m >> model.n >> model.r)) throw DataError("bad model dimensions");
  std::string lo;
  if (!(in >> tag >> lo) || tag != "clamp") throw DataError("bad clamp line");
  if (lo != "none") {
    Clamp c;
    if (!detail::parse_number(lo, c.lo) || !(in >> c.hi)) throw DataError("bad clamp line");
    model.clamp = c;
  }
  if (!(in >> tag >> model.offset) || tag != "offset") throw DataError("bad offset line");
  if (!(in >> tag >> model.seed) || tag != "seed") throw DataError("bad seed line");
  model.U.resize(model.m * model.r);
  model.V.resize(model.n * model.r);
  for (double& x : model.U)
    if (!(in >> x)) throw DataError("truncated U block");
  for (double& x : model.V)
    if (!(in >> x)) throw DataError("truncated V block");
  return model;
}

inline void save_model(const FactorModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  save_model(model, out);
}

inline FactorModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return load_model(in);
}

}  // namespace sma
