#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sma {

/// One row of the per-epoch training trace.
struct EpochRow {
  int epoch = 0;
  double train = 0.0;                  // train RMSE (rating) or weighted surrogate loss (top-N)
  std::optional<double> test;          // test RMSE (rating) or test Precision@10 (top-N)
  std::map<std::string, double> extra; // e.g. subset_size, subset_fraction, train_precision_at_10

  friend bool operator==(const EpochRow&, const EpochRow&) = default;
};

/// Outcome of one training run. Trainers fill the trace; the runner adds the
/// config echo, final metrics and timing.
struct RunReport {
  std::string trainer;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<EpochRow> epochs;
  bool converged = false;
  int convergence_epoch = 0;  // last epoch run
  std::map<std::string, double> final_metrics;
  std::string status = "ok";  // "ok" | "diverged"
  std::string diagnostic;
  double wall_seconds = 0.0;  // excluded from result comparisons

  /// Equality of everything except wall time.
  bool same_results(const RunReport& o) const {
    return trainer == o.trainer && seed == o.seed && config == o.config && epochs == o.epochs &&
           converged == o.converged && convergence_epoch == o.convergence_epoch &&
           final_metrics == o.final_metrics && status == o.status && diagnostic == o.diagnostic;
  }
};

}  // namespace sma
