#pragma once

#include <cstdint>
#include <random>
#include <tuple>
#include <vector>

#include "sma/sma.hpp"

namespace sma::testing {

inline SparseRatingMatrix make_matrix(std::size_t m, std::size_t n,
                                      const std::vector<std::tuple<std::uint32_t, std::uint32_t, double>>& es) {
  SparseRatingMatrix mat;
  mat.m = m;
  mat.n = n;
  for (const auto& [u, i, v] : es) mat.entries.push_back({u, i, v});
  mat.timestamps.assign(mat.entries.size(), 0);
  mat.validate();
  return mat;
}

/// Each cell of an m x n grid observed with probability `density`, value in [1, 5].
inline SparseRatingMatrix random_matrix(std::size_t m, std::size_t n, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> star(1, 5);
  SparseRatingMatrix mat;
  mat.m = m;
  mat.n = n;
  for (std::uint32_t i = 0; i < m; ++i)
    for (std::uint32_t j = 0; j < n; ++j)
      if (u01(rng) < density) mat.entries.push_back({i, j, static_cast<double>(star(rng))});
  if (mat.entries.empty()) mat.entries.push_back({0, 0, 3.0});
  mat.timestamps.assign(mat.entries.size(), 0);
  return mat;
}

inline FactorModel random_model(std::size_t m, std::size_t n, std::size_t r, std::mt19937_64& rng,
                                double scale = 1.0) {
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

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace sma::testing
