// sma: command-line front end for splitting, training, evaluating and running
// experiment grids.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 config error, 3 data error,
// 4 a training run diverged.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sma/sma.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDiverged = 4 };

// Flags that mirror config keys. Each one overrides the file value.
struct Mirrored {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr Mirrored kMirrored[] = {
    {"--data", "data.path", "rating file"},
    {"--format", "data.format", "ml100k | ml1m | ml10m"},
    {"--ratio", "data.split_ratio", "train share of each split"},
    {"--task", "experiment.task", "rating | topn"},
    {"--trainer", "experiment.trainer", "rsvd | sma_rating | wma | sma_topn_boundary | sma_topn_random"},
    {"--seeds", "experiment.seeds", "comma separated run seeds"},
    {"--master-seed", "experiment.master_seed", "master seed for derived run seeds"},
    {"--runs", "experiment.runs", "number of derived run seeds"},
    {"--train-fraction", "experiment.train_fraction", "share of the training side kept"},
    {"--rank", "train.rank", "factor rank"},
    {"--lr", "train.lr", "learning rate"},
    {"--mu1", "train.mu1", "user factor L2 weight"},
    {"--mu2", "train.mu2", "item factor L2 weight"},
    {"--epochs", "train.max_epochs", "maximum epochs"},
    {"--conv-eps", "train.conv_eps", "convergence threshold"},
    {"--min-epochs", "train.min_epochs", "earliest epoch tested for convergence"},
    {"--clamp", "train.clamp", "lo,hi or none"},
    {"--K", "sma_rating.K", "number of hard subsets"},
    {"--p", "sma_rating.p", "easy-entry selection probability"},
    {"--lambdas", "sma_rating.lambdas", "K+1 mixture weights"},
    {"--objective", "sma_rating.objective", "squared | root"},
    {"--loss", "topn.loss", "mse | log | exp"},
    {"--w-pos", "topn.w_pos", "positive cell weight"},
    {"--w-neg", "topn.w_neg", "negative cell weight"},
    {"--gamma", "topn.gamma", "boundary margin"},
    {"--lambda0", "topn.lambda0", "full-grid weight"},
    {"--lambda1", "topn.lambda1", "boundary-subset weight"},
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> mirrored;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_mirrors = true) {
  cmd->add_option("-c,--config", o.config_path, "config file");
  cmd->add_option("--set", o.sets, "override, key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "single run seed (replaces the seed list)");
  cmd->add_option("-o,--out-dir", o.out_dir, "output directory");
  if (!with_mirrors) return;
  for (const auto& m : kMirrored) {
    auto* opt = cmd->add_option_function<std::string>(
        m.flag, [&o, key = std::string(m.key)](const std::string& v) { o.mirrored[key] = v; }, m.help);
    (void)opt;
  }
}

sma::ExperimentConfig build_config(const CommonOptions& o) {
  sma::KeyValues kv;
  if (!o.config_path.empty()) kv = sma::read_config_file(o.config_path);
  for (const auto& [k, v] : o.mirrored) kv[k] = v;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw sma::ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (o.seed) {
    kv["experiment.seeds"] = std::to_string(*o.seed);
    kv.erase("experiment.master_seed");
    kv.erase("experiment.runs");
  }
  if (!o.out_dir.empty()) kv["experiment.out_dir"] = o.out_dir;
  return sma::ExperimentConfig::from(kv);
}

void print_summary(const sma::Aggregate& agg) { std::cout << sma::to_json(agg).dump(2) << '\n'; }

int diverged_code(const std::vector<sma::RunReport>& reports) {
  for (const auto& r : reports)
    if (r.status != "ok") {
      std::cerr << "run seed " << r.seed << " diverged: " << r.diagnostic << '\n';
      return kDiverged;
    }
  return kOk;
}

fs::path require_out_dir(const CommonOptions& o) {
  if (o.out_dir.empty()) throw sma::ConfigError("--out-dir is required for this command");
  return o.out_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stable matrix approximation for rating prediction and top-N recommendation"};
  app.require_subcommand(1);

  // split
  std::string split_data, split_format = "ml100k";
  double split_ratio = 0.9;
  std::uint64_t split_seed = 0;
  std::string split_out;
  auto* split_cmd = app.add_subcommand("split", "write a seeded train/test split");
  split_cmd->add_option("--data", split_data, "rating file")->required();
  split_cmd->add_option("--format", split_format, "ml100k | ml1m | ml10m");
  split_cmd->add_option("--ratio", split_ratio, "train share");
  split_cmd->add_option("--seed", split_seed, "split seed")->required();
  split_cmd->add_option("-o,--out-dir", split_out, "output directory")->required();

  // train
  CommonOptions train_opts;
  std::string train_split_dir;
  auto* train_cmd = app.add_subcommand("train", "train one model and save it with its report");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--split-dir", train_split_dir, "use train.tsv/test.tsv written by `split`");

  // evaluate
  std::string eval_model, eval_split_dir, eval_task = "rating";
  auto* eval_cmd = app.add_subcommand("evaluate", "score a saved model on a saved split");
  eval_cmd->add_option("--model", eval_model, "model file")->required();
  eval_cmd->add_option("--split-dir", eval_split_dir, "directory with train.tsv and test.tsv")->required();
  eval_cmd->add_option("--task", eval_task, "rating | topn");

  // experiment
  CommonOptions exp_opts;
  auto* exp_cmd = app.add_subcommand("experiment", "run every seed of a config and aggregate");
  add_common(exp_cmd, exp_opts);

  // sweep
  CommonOptions sweep_opts;
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment per value of one parameter");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--param", sweep_param, "parameter key, e.g. sma_rating.K");
  sweep_cmd->add_option("--values", sweep_values, "values (comma or space separated)")->delimiter(',');

  // stability
  CommonOptions stab_opts;
  std::string stab_eps;
  std::optional<std::size_t> stab_runs;
  std::vector<std::size_t> stab_ranks;
  auto* stab_cmd = app.add_subcommand("stability", "estimate Pr[|test RMSE - train RMSE| < eps]");
  add_common(stab_cmd, stab_opts);
  stab_cmd->add_option("--epsilon", stab_eps, "number or auto");
  stab_cmd->add_option("--n-runs", stab_runs, "runs per estimate");
  stab_cmd->add_option("--ranks", stab_ranks, "rank sweep")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (split_cmd->parsed()) {
      const auto data = sma::load_movielens(split_data, sma::parse_format(split_format));
      const auto split = sma::split_train_test(data, split_ratio, split_seed);
      sma::write_split(split, split_out);
      std::cout << "train " << split.train.size() << " test " << split.test.size() << " -> " << split_out << '\n';
      return kOk;
    }

    if (train_cmd->parsed()) {
      if (!train_opts.seed) throw sma::ConfigError("--seed is required for train");
      if (!train_split_dir.empty() && !train_opts.mirrored.count("data.path"))
        train_opts.mirrored["data.path"] = train_split_dir + "/train.tsv";
      const auto cfg = build_config(train_opts);
      const auto out = require_out_dir(train_opts);
      sma::TrainedRun run;
      if (!train_split_dir.empty()) {
        auto split = sma::load_split(fs::path(train_split_dir) / "train.tsv", fs::path(train_split_dir) / "test.tsv");
        if (cfg.train_fraction < 1.0) split.train = sma::subsample(split.train, cfg.train_fraction, *train_opts.seed);
        run = sma::run_on_split(cfg, split, *train_opts.seed);
      } else {
        run = sma::run_single(cfg, sma::load_dataset(cfg), *train_opts.seed);
      }
      const auto stem = sma::report_stem(run.report);
      sma::save_report(run.report, out, stem);
      if (run.model) sma::save_model(*run.model, out / (stem + ".model"));
      std::cout << sma::to_json(run.report)["final_metrics"].dump(2) << '\n';
      return diverged_code({run.report});
    }

    if (eval_cmd->parsed()) {
      const auto model = sma::load_model(eval_model);
      const auto split =
          sma::load_split(fs::path(eval_split_dir) / "train.tsv", fs::path(eval_split_dir) / "test.tsv");
      if (model.m != split.train.m || model.n != split.train.n)
        throw sma::DataError("model is " + std::to_string(model.m) + "x" + std::to_string(model.n) + " but split is " +
                             std::to_string(split.train.m) + "x" + std::to_string(split.train.n));
      sma::RunReport rep;
      if (eval_task == "rating")
        sma::add_rating_metrics(rep, model, split);
      else if (eval_task == "topn")
        sma::add_topn_metrics(rep, model, sma::binarize(split.train), sma::binarize(split.test));
      else
        throw sma::ConfigError("--task: expected rating or topn");
      std::cout << sma::to_json(rep)["final_metrics"].dump(2) << '\n';
      return kOk;
    }

    if (exp_cmd->parsed()) {
      const auto cfg = build_config(exp_opts);
      const auto data = sma::load_dataset(cfg);
      const auto res = sma::run_experiment(cfg, data);
      print_summary(res.summary);
      return diverged_code(res.reports);
    }

    if (sweep_cmd->parsed()) {
      auto cfg = build_config(sweep_opts);
      if (!sweep_param.empty()) cfg.sweep_param = sweep_param;
      if (!sweep_values.empty()) cfg.sweep_values = sweep_values;
      if (!cfg.sweep_param) throw sma::ConfigError("sweep.param: missing (use --param or the [sweep] section)");
      if (cfg.sweep_values.empty()) throw sma::ConfigError("sweep.values: missing");
      const auto data = sma::load_dataset(cfg);
      const auto points = sma::run_sweep(cfg, data, *cfg.sweep_param, cfg.sweep_values);
      sma::write_sweep_csv(*cfg.sweep_param, points, std::cout);
      int rc = kOk;
      for (const auto& p : points)
        if (diverged_code(p.result.reports) != kOk) rc = kDiverged;
      return rc;
    }

    if (stab_cmd->parsed()) {
      auto cfg = build_config(stab_opts);
      if (!stab_eps.empty()) {
        if (stab_eps == "auto") {
          cfg.stability_epsilon.reset();
        } else {
          double e = 0.0;
          if (!sma::detail::parse_number(stab_eps, e)) throw sma::ConfigError("--epsilon: expected a number or auto");
          cfg.stability_epsilon = e;
        }
      }
      if (stab_runs) cfg.stability_runs = *stab_runs;
      if (!stab_ranks.empty()) cfg.stability_ranks = stab_ranks;
      cfg.validate();
      const auto data = sma::load_dataset(cfg);
      const auto ranks = cfg.stability_ranks.empty() ? std::vector<std::size_t>{cfg.train.rank} : cfg.stability_ranks;
      const auto points = sma::run_stability_sweep(cfg, data, ranks, cfg.stability_epsilon, cfg.stability_runs);
      std::cout << "rank,epsilon,successes,n_runs,probability,failed_runs\n";
      for (const auto& p : points)
        std::cout << p.rank << ',' << sma::format_double(p.estimate.epsilon) << ',' << p.estimate.successes << ','
                  << p.estimate.n_runs << ',' << sma::format_double(p.estimate.probability) << ','
                  << p.estimate.failed_runs << '\n';
      return kOk;
    }
  } catch (const sma::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const sma::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const sma::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
