#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bayesnf/cli.hpp"
#include "bayesnf/error.hpp"
#include "bayesnf/log.hpp"

namespace {

using namespace bayesnf;

struct Flags {
  std::string config;
  std::string data;
  std::vector<std::string> checkpoints;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string quantiles;
  std::optional<std::size_t> splits;
  std::optional<std::size_t> split_index;
  std::string mode = "empirical";
  std::size_t locations = 25;
  std::size_t times = 100;
  bool quiet = false;
};

std::vector<double> parse_quantiles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("--quantiles: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw InputError("--quantiles is empty");
  return out;
}

void emit(const Flags& f, const std::string& text) {
  if (f.out.empty()) {
    std::cout << text;
  } else {
    write_atomic(f.out, text);
  }
}

RunConfig config_from(const Flags& f) {
  if (f.config.empty()) throw InputError("--config is required");
  RunConfig c = load_config(f.config);
  if (!f.data.empty()) c.data.path = f.data;
  if (f.splits) c.splits.n_splits = *f.splits;
  return c;
}

int run_train(const Flags& f) {
  RunConfig c = config_from(f);
  if (f.seed) c.train.seed = *f.seed;
  if (!f.checkpoints.empty()) c.paths.checkpoint = f.checkpoints.front();
  TrainRequest req;
  req.split_index = f.split_index;
  const Checkpoint ck = cmd_train(c, req);
  std::cout << "trained " << ck.ensemble.size() << " " << to_string(ck.ensemble.method) << " members -> "
            << c.paths.checkpoint << " (values " << hex64(ck.values_hash) << ")\n";
  return 0;
}

int run_predict(const Flags& f) {
  if (f.checkpoints.size() != 1) throw InputError("predict needs exactly one --checkpoint");
  if (f.data.empty()) throw InputError("predict needs --data (query file)");
  std::optional<RunConfig> c;
  if (!f.config.empty()) c = load_config(f.config);
  std::vector<double> qs;
  if (!f.quantiles.empty()) {
    qs = parse_quantiles(f.quantiles);
  } else {
    qs = load_checkpoint(f.checkpoints.front()).config.prediction.quantiles;
  }
  emit(f, cmd_predict(f.checkpoints.front(), f.data, qs, c ? &*c : nullptr));
  return 0;
}

int run_evaluate(const Flags& f) {
  std::vector<std::filesystem::path> dirs(f.checkpoints.begin(), f.checkpoints.end());
  std::optional<RunConfig> c;
  if (!f.config.empty()) c = load_config(f.config);
  const auto res = cmd_evaluate(dirs, f.data, f.split_index, c ? &*c : nullptr);
  emit(f, res.to_csv());
  if (!f.quiet && !f.out.empty()) std::cout << res.mean.to_text() << "\n";
  return 0;
}

int run_simulate(const Flags& f) {
  const RunConfig c = config_from(f);
  const RawTable t = cmd_simulate(c, f.locations, f.times, f.seed.value_or(c.train.seed));
  std::ostringstream os;
  write_table(os, t);
  emit(f, os.str());
  return 0;
}

int run_variogram(const Flags& f) {
  RunConfig c = config_from(f);
  if (f.seed) c.variogram.seed = *f.seed;
  std::optional<std::filesystem::path> ck;
  if (!f.checkpoints.empty()) ck = f.checkpoints.front();
  const auto surface = cmd_variogram(c, parse_variogram_mode(f.mode), f.data, ck);
  std::ostringstream os;
  write_surface(os, surface);
  emit(f, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural field: train, predict, evaluate, simulate, variogram"};
  app.require_subcommand(1);
  Flags f;
  app.add_flag("-q,--quiet", f.quiet, "Silence warnings");

  auto* train = app.add_subcommand("train", "Fit an ensemble and write a checkpoint");
  auto* predict = app.add_subcommand("predict", "Predictive mean and quantiles at query rows");
  auto* evaluate = app.add_subcommand("evaluate", "RMSE, MAE and MIS on held-out rows");
  auto* simulate = app.add_subcommand("simulate", "Draw a synthetic table from the prior");
  auto* variogram = app.add_subcommand("variogram", "Empirical or inferred semivariogram surface");

  for (auto* sub : {train, predict, evaluate, simulate, variogram}) {
    sub->add_option("--config", f.config, "Run config (JSON)");
    sub->add_option("--out", f.out, "Output file (default stdout)");
  }
  for (auto* sub : {train, predict, evaluate, variogram}) {
    sub->add_option("--data", f.data, "Data table (query table for predict)");
    sub->add_option("--checkpoint", f.checkpoints, "Checkpoint directory");
  }
  for (auto* sub : {train, simulate, variogram}) sub->add_option("--seed", f.seed, "Seed override");
  for (auto* sub : {train, evaluate}) {
    sub->add_option("--split-index", f.split_index, "Split whose training (train) or test (evaluate) rows to use");
  }
  train->add_option("--splits", f.splits, "Number of splits");
  predict->add_option("--quantiles", f.quantiles, "Comma-separated levels, e.g. 0.025,0.5,0.975");
  variogram->add_option("--mode", f.mode, "empirical or inferred")->check(CLI::IsMember({"empirical", "inferred"}));
  simulate->add_option("--locations", f.locations, "Number of locations");
  simulate->add_option("--times", f.times, "Number of time steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kInputError);
  }
  set_warnings_enabled(!f.quiet);

  try {
    if (*train) return run_train(f);
    if (*predict) return run_predict(f);
    if (*evaluate) return run_evaluate(f);
    if (*simulate) return run_simulate(f);
    if (*variogram) return run_variogram(f);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
