#pragma once

// RunReport persistence: JSON (one document per run) and a per-epoch CSV.

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "sma/config.hpp"
#include "sma/error.hpp"
#include "sma/metrics.hpp"
#include "sma/report.hpp"

namespace sma {

using Json = nlohmann::ordered_json;

inline Json to_json(const EpochRow& row) {
  Json j;
  j["epoch"] = row.epoch;
  j["train"] = row.train;
  j["test"] = row.test ? Json(*row.test) : Json(nullptr);
  Json extra = Json::object();
  for (const auto& [k, v] : row.extra) extra[k] = v;
  j["extra"] = std::move(extra);
  return j;
}

inline Json to_json(const RunReport& r) {
  Json j;
  j["trainer"] = r.trainer;
  j["seed"] = r.seed;
  Json cfg = Json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["status"] = r.status;
  j["diagnostic"] = r.diagnostic;
  j["converged"] = r.converged;
  j["convergence_epoch"] = r.convergence_epoch;
  Json fm = Json::object();
  for (const auto& [k, v] : r.final_metrics) fm[k] = v;
  j["final_metrics"] = std::move(fm);
  j["wall_seconds"] = r.wall_seconds;
  Json rows = Json::array();
  for (const auto& row : r.epochs) rows.push_back(to_json(row));
  j["epochs"] = std::move(rows);
  return j;
}

inline RunReport report_from_json(const Json& j) {
  try {
    RunReport r;
    r.trainer = j.at("trainer").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    r.status = j.at("status").get<std::string>();
    r.diagnostic = j.at("diagnostic").get<std::string>();
    r.converged = j.at("converged").get<bool>();
    r.convergence_epoch = j.at("convergence_epoch").get<int>();
    for (const auto& [k, v] : j.at("final_metrics").items()) r.final_metrics[k] = v.get<double>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    for (const auto& row : j.at("epochs")) {
      EpochRow e;
      e.epoch = row.at("epoch").get<int>();
      e.train = row.at("train").get<double>();
      if (!row.at("test").is_null()) e.test = row.at("test").get<double>();
      for (const auto& [k, v] : row.at("extra").items()) e.extra[k] = v.get<double>();
      r.epochs.push_back(std::move(e));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

inline std::string emit_report(const RunReport& r) { return to_json(r).dump(2); }

inline RunReport parse_report(std::string_view text) {
  try {
    return report_from_json(Json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("report is not valid JSON: ") + e.what());
  }
}

/// CSV with columns epoch,train,test followed by the union of extra keys.
inline void write_epoch_csv(const RunReport& r, std::ostream& out) {
  std::set<std::string> keys;
  for (const auto& row : r.epochs)
    for (const auto& [k, v] : row.extra) keys.insert(k);
  out << "epoch,train,test";
  for (const auto& k : keys) out << ',' << k;
  out << '\n';
  for (const auto& row : r.epochs) {
    out << row.epoch << ',' << format_double(row.train) << ',';
    if (row.test) out << format_double(*row.test);
    for (const auto& k : keys) {
      out << ',';
      if (auto it = row.extra.find(k); it != row.extra.end()) out << format_double(it->second);
    }
    out << '\n';
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes <stem>.json and <stem>.epochs.csv into `dir`.
inline void save_report(const RunReport& r, const std::filesystem::path& dir, const std::string& stem) {
  write_text(dir / (stem + ".json"), emit_report(r) + "\n");
  std::ostringstream csv;
  write_epoch_csv(r, csv);
  write_text(dir / (stem + ".epochs.csv"), csv.str());
}

inline RunReport load_report(const std::filesystem::path& path) { return parse_report(read_text(path)); }

inline void write_stability_csv(const StabilityEstimate& est, std::ostream& out) {
  out << "run_index,seed,train_rmse,test_rmse,gap\n";
  for (const auto& r : est.runs)
    out << r.run_index << ',' << r.seed << ',' << format_double(r.train_rmse) << ','
        << format_double(r.test_rmse) << ',' << (r.failed ? std::string("inf") : format_double(r.gap)) << '\n';
}

}  // namespace sma
