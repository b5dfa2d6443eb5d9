#pragma once

// Experiment configuration.
//
// Grammar (one item per line, '#' starts a comment line):
//
//   [section]
//   key = value
//
// Every key is addressed as `section.key`. Lists are comma separated. Unknown
// keys are errors. Recognised keys and defaults:
//
//   data.path            rating file (required)
//   data.format          ml100k | ml1m | ml10m              (ml100k)
//   data.split_ratio     train share of each split          (0.9)
//   experiment.task      rating | topn                      (rating)
//   experiment.trainer   rsvd | sma_rating | wma | sma_topn_boundary | sma_topn_random
//                                                           (rsvd for rating, sma_topn_boundary for topn)
//   experiment.seeds     explicit per-run seeds, e.g. 1,2,3
//   experiment.master_seed, experiment.runs
//                        used when seeds is absent: seed_t = derive_seed(master_seed, t)
//   experiment.train_fraction  share of the training side kept (1.0)
//   experiment.out_dir   where reports are written (optional)
//   train.rank, train.lr, train.mu1, train.mu2 (defaults to mu1), train.max_epochs,
//   train.conv_eps, train.min_epochs, train.init_scale, train.center (true|false),
//   train.clamp          "lo,hi" or none   (1,5 for rating, none for topn)
//   sma_rating.K, sma_rating.p, sma_rating.lambdas (K+1 values; default equal),
//   sma_rating.objective squared | root
//   topn.loss            mse | log | exp                     (exp)
//   topn.w_pos, topn.w_neg, topn.gamma, topn.lambda0, topn.lambda1
//   sweep.param          any key above, e.g. sma_rating.K
//   sweep.values         list of values for sweep.param
//   stability.epsilon    number, or auto (cover every gap of the first rank)
//   stability.runs       runs per estimate                    (50)
//   stability.ranks      optional rank list for a rank sweep
//   stability.master_seed                                     (experiment master seed or 0)
//
// Task defaults: rating uses lr 0.001, mu 0.06,
// 250 epochs; topn uses lr 0.001, mu 0.001, 2000 epochs, rank 100; both use
// conv_eps 1e-4.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sma/error.hpp"
#include "sma/ingest.hpp"
#include "sma/model_core.hpp"
#include "sma/random.hpp"
#include "sma/rating_sma.hpp"
#include "sma/topn_sma.hpp"

namespace sma {

/// Ordered key -> value text, keys in `section.key` form.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_config_text(std::string_view text) {
  KeyValues kv;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = std::string(detail::trim(line.substr(0, eq)));
    const auto value = std::string(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    kv[section.empty() ? key : section + "." + key] = value;
  }
  return kv;
}

inline KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Shortest round-trip decimal form.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  for (auto part : split(s, ",")) {
    part = trim(part);
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.push_back(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    return it->second;
  }

  std::string str(const std::string& key, std::string fallback) {
    auto v = raw(key);
    return v ? *v : std::move(fallback);
  }

  double real(const std::string& key, double fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    double out = 0.0;
    if (!parse_number(*v, out)) throw ConfigError(key + ": expected a number, got '" + *v + "'");
    return out;
  }

  template <class Int>
  Int integer(const std::string& key, Int fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    Int out{};
    if (!parse_number(*v, out)) throw ConfigError(key + ": expected an integer, got '" + *v + "'");
    return out;
  }

  bool boolean(const std::string& key, bool fallback) {
    auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + *v + "'");
  }

  std::vector<double> reals(const std::string& key) {
    std::vector<double> out;
    auto v = raw(key);
    if (!v) return out;
    for (const auto& s : split_list(*v)) {
      double x = 0.0;
      if (!parse_number(s, x)) throw ConfigError(key + ": bad list element '" + s + "'");
      out.push_back(x);
    }
    return out;
  }

  std::vector<std::uint64_t> seeds(const std::string& key) {
    std::vector<std::uint64_t> out;
    auto v = raw(key);
    if (!v) return out;
    for (const auto& s : split_list(*v)) {
      std::uint64_t x = 0;
      if (!parse_number(s, x)) throw ConfigError(key + ": bad seed '" + s + "'");
      out.push_back(x);
    }
    return out;
  }

  /// Throws on any key in the input that was never looked up.
  void reject_unknown() const {
    for (const auto& [k, v] : kv_) {
      bool known = false;
      for (const auto& u : used_) known = known || u == k;
      if (!known) throw ConfigError("unknown config key '" + k + "'");
    }
  }

 private:
  const KeyValues& kv_;
  std::vector<std::string> used_;
};

}  // namespace detail

enum class Task { kRating, kTopn };

enum class Trainer { kRsvd, kSmaRating, kWma, kSmaTopnBoundary, kSmaTopnRandom };

inline Trainer parse_trainer(std::string_view s) {
  if (s == "rsvd") return Trainer::kRsvd;
  if (s == "sma_rating") return Trainer::kSmaRating;
  if (s == "wma") return Trainer::kWma;
  if (s == "sma_topn_boundary") return Trainer::kSmaTopnBoundary;
  if (s == "sma_topn_random") return Trainer::kSmaTopnRandom;
  throw ConfigError("experiment.trainer: unknown trainer '" + std::string(s) + "'");
}

inline const char* to_string(Trainer t) {
  switch (t) {
    case Trainer::kRsvd: return "rsvd";
    case Trainer::kSmaRating: return "sma_rating";
    case Trainer::kWma: return "wma";
    case Trainer::kSmaTopnBoundary: return "sma_topn_boundary";
    case Trainer::kSmaTopnRandom: return "sma_topn_random";
  }
  return "?";
}

struct ExperimentConfig {
  std::filesystem::path data_path;
  DataFormat format = DataFormat::kMl100k;
  double split_ratio = 0.9;
  Task task = Task::kRating;
  Trainer trainer = Trainer::kRsvd;
  std::vector<std::uint64_t> seeds;
  std::uint64_t master_seed = 0;
  double train_fraction = 1.0;
  std::optional<std::filesystem::path> out_dir;

  TrainConfig train;
  // sma_rating
  std::size_t K = 3;
  double p = 0.8;
  std::vector<double> lambdas;
  bool root_form = false;
  // topn
  LossKind loss = LossKind::kExp;
  WeightScheme weights;
  double gamma = 0.3;
  double lambda0 = 1.0;
  double lambda1 = 1.0;
  // sweep
  std::optional<std::string> sweep_param;
  std::vector<std::string> sweep_values;
  // stability
  std::optional<double> stability_epsilon;  // nullopt: calibrate
  std::size_t stability_runs = 50;
  std::vector<std::size_t> stability_ranks;
  std::uint64_t stability_seed = 0;

  KeyValues source;  // the key-values this config was built from

  bool is_rating() const { return task == Task::kRating; }

  static ExperimentConfig from(const KeyValues& kv) {
    detail::Reader rd(kv);
    ExperimentConfig c;
    c.source = kv;
    c.data_path = rd.str("data.path", "");
    c.format = parse_format(rd.str("data.format", "ml100k"));
    c.split_ratio = rd.real("data.split_ratio", 0.9);

    const auto task = rd.str("experiment.task", "rating");
    if (task == "rating")
      c.task = Task::kRating;
    else if (task == "topn")
      c.task = Task::kTopn;
    else
      throw ConfigError("experiment.task: expected rating or topn, got '" + task + "'");
    c.trainer = parse_trainer(rd.str("experiment.trainer", c.is_rating() ? "rsvd" : "sma_topn_boundary"));
    c.seeds = rd.seeds("experiment.seeds");
    c.master_seed = rd.integer<std::uint64_t>("experiment.master_seed", 0);
    const auto runs = rd.integer<std::size_t>("experiment.runs", 0);
    if (c.seeds.empty()) {
      if (runs == 0) throw ConfigError("experiment.seeds: no seeds (give seeds, or master_seed and runs)");
      for (std::size_t t = 0; t < runs; ++t) c.seeds.push_back(derive_seed(c.master_seed, t));
    }
    c.train_fraction = rd.real("experiment.train_fraction", 1.0);
    if (auto out = rd.raw("experiment.out_dir")) c.out_dir = *out;

    const bool rating = c.is_rating();
    auto& t = c.train;
    t.rank = rd.integer<std::size_t>("train.rank", rating ? 20 : 100);
    t.lr = rd.real("train.lr", 0.001);
    t.mu1 = rd.real("train.mu1", rating ? 0.06 : 0.001);
    t.mu2 = rd.real("train.mu2", t.mu1);
    t.max_epochs = rd.integer<int>("train.max_epochs", rating ? 250 : 2000);
    t.conv_eps = rd.real("train.conv_eps", 1e-4);
    t.min_epochs = rd.integer<int>("train.min_epochs", 1);
    t.init_scale = rd.real("train.init_scale", 0.01);
    t.center = rd.boolean("train.center", false);
    const auto clamp = rd.str("train.clamp", rating ? "1,5" : "none");
    if (clamp != "none") {
      const auto parts = detail::split_list(clamp);
      Clamp cl;
      if (parts.size() != 2 || !detail::parse_number(parts[0], cl.lo) || !detail::parse_number(parts[1], cl.hi))
        throw ConfigError("train.clamp: expected 'lo,hi' or none");
      t.clamp = cl;
    }

    c.K = rd.integer<std::size_t>("sma_rating.K", 3);
    c.p = rd.real("sma_rating.p", 0.8);
    c.lambdas = rd.reals("sma_rating.lambdas");
    const auto objective = rd.str("sma_rating.objective", "squared");
    if (objective != "squared" && objective != "root")
      throw ConfigError("sma_rating.objective: expected squared or root");
    c.root_form = objective == "root";

    c.loss = parse_loss(rd.str("topn.loss", "exp"));
    c.weights.w_pos = rd.real("topn.w_pos", 1.0);
    c.weights.w_neg = rd.real("topn.w_neg", 0.03);
    c.gamma = rd.real("topn.gamma", 0.3);
    c.lambda0 = rd.real("topn.lambda0", 1.0);
    c.lambda1 = rd.real("topn.lambda1", 1.0);

    if (auto sp = rd.raw("sweep.param")) c.sweep_param = *sp;
    if (auto sv = rd.raw("sweep.values")) c.sweep_values = detail::split_list(*sv);

    const auto eps = rd.str("stability.epsilon", "auto");
    if (eps != "auto") c.stability_epsilon = rd.real("stability.epsilon", 0.0);
    c.stability_runs = rd.integer<std::size_t>("stability.runs", 50);
    for (double r : rd.reals("stability.ranks")) c.stability_ranks.push_back(static_cast<std::size_t>(r));
    c.stability_seed = rd.integer<std::uint64_t>("stability.master_seed", c.master_seed);

    rd.reject_unknown();
    c.validate();
    return c;
  }

  void validate() const {
    if (data_path.empty()) throw ConfigError("data.path: missing");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("data.split_ratio: must lie in (0, 1)");
    if (seeds.empty()) throw ConfigError("experiment.seeds: empty");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0))
      throw ConfigError("experiment.train_fraction: must lie in (0, 1]");
    const bool rating_trainer = trainer == Trainer::kRsvd || trainer == Trainer::kSmaRating;
    if (rating_trainer != is_rating())
      throw ConfigError(std::string("experiment.trainer: '") + to_string(trainer) +
                        "' does not match experiment.task");
    try {
      if (is_rating()) {
        if (trainer == Trainer::kSmaRating)
          sma_rating_config().validate();
        else
          train.validate();
      } else {
        topn_config().validate();
      }
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(is_rating() ? "train/sma_rating: " : "train/topn: ") + e.what());
    }
    if (sweep_param && sweep_values.empty()) throw ConfigError("sweep.values: empty");
    if (stability_runs < 2) throw ConfigError("stability.runs: must be >= 2");
  }

  SmaRatingConfig sma_rating_config() const {
    SmaRatingConfig s;
    s.base = train;
    s.K = K;
    s.p = p;
    s.lambdas = lambdas;
    s.root_form = root_form;
    return s;
  }

  SmaTopnConfig topn_config() const {
    SmaTopnConfig s;
    s.base = train;
    s.loss = loss;
    s.weights = weights;
    s.gamma = gamma;
    s.lambda0 = lambda0;
    s.lambda1 = lambda1;
    s.mode = trainer == Trainer::kWma              ? TopnMode::kWma
             : trainer == Trainer::kSmaTopnRandom ? TopnMode::kRandom
                                                   : TopnMode::kBoundary;
    return s;
  }

  /// Fully resolved settings relevant to the chosen trainer, in a fixed order.
  std::vector<std::pair<std::string, std::string>> echo() const {
    std::vector<std::pair<std::string, std::string>> e;
    auto put = [&e](std::string k, std::string v) { e.emplace_back(std::move(k), std::move(v)); };
    put("data.path", data_path.string());
    put("data.format", to_string(format));
    put("data.split_ratio", format_double(split_ratio));
    put("experiment.task", is_rating() ? "rating" : "topn");
    put("experiment.trainer", to_string(trainer));
    put("experiment.train_fraction", format_double(train_fraction));
    put("train.rank", std::to_string(train.rank));
    put("train.lr", format_double(train.lr));
    put("train.mu1", format_double(train.mu1));
    put("train.mu2", format_double(train.mu2));
    put("train.max_epochs", std::to_string(train.max_epochs));
    put("train.conv_eps", format_double(train.conv_eps));
    put("train.min_epochs", std::to_string(train.min_epochs));
    put("train.init_scale", format_double(train.init_scale));
    put("train.center", train.center ? "true" : "false");
    put("train.clamp", train.clamp ? format_double(train.clamp->lo) + "," + format_double(train.clamp->hi) : "none");
    if (trainer == Trainer::kSmaRating) {
      put("sma_rating.K", std::to_string(K));
      put("sma_rating.p", format_double(p));
      std::string lam;
      for (double l : sma_rating_config().resolved_lambdas()) lam += (lam.empty() ? "" : ",") + format_double(l);
      put("sma_rating.lambdas", lam);
      put("sma_rating.objective", root_form ? "root" : "squared");
    }
    if (!is_rating()) {
      put("topn.loss", sma::to_string(loss));
      put("topn.w_pos", format_double(weights.w_pos));
      put("topn.w_neg", format_double(weights.w_neg));
      put("topn.gamma", format_double(gamma));
      put("topn.lambda0", format_double(lambda0));
      put("topn.lambda1", format_double(lambda1));
    }
    return e;
  }
};

/// Copy of `kv` with `overrides` applied, re-validated.
inline ExperimentConfig with_overrides(const KeyValues& kv, const KeyValues& overrides) {
  KeyValues merged = kv;
  for (const auto& [k, v] : overrides) merged[k] = v;
  return ExperimentConfig::from(merged);
}

}  // namespace sma
