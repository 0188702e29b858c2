#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cdppo/harness.hpp"

namespace {

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw cdppo::ConfigError("sweep value '" + item + "' is not a number");
    }
  }
  return out;
}

cdppo::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  cdppo::ExperimentConfig cfg = cdppo::load_config(path);
  if (seed) {
    cfg.train.seed = *seed;
    cfg.seeds = {*seed};
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cdppo: curiosity-driven PPO experiments"};
  app.require_subcommand(1);

  std::string config, out, run_dir, checkpoint, completions, embeddings, axis, values, golden = CDPPO_DEFAULT_GOLDEN;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> m, inputs;
  std::optional<double> temperature;
  bool resume = false, baseline = false;
  std::vector<std::string> runs;

  auto* train = app.add_subcommand("train", "pretrain, snapshot the reference and run PPO");
  train->add_option("--config", config, "config file")->required();
  train->add_option("--seed", seed, "run seed (overrides the config)");
  train->add_option("--out", out, "run directory")->required();
  train->add_flag("--resume", resume, "continue from the run directory's last checkpoint");

  auto* eval = app.add_subcommand("eval", "sample completions and score diversity and reward");
  eval->add_option("--run", run_dir, "run directory written by train")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint recorded in the run manifest");
  eval->add_option("--completions", completions, "score completions from a JSONL file instead of sampling");
  eval->add_option("--embeddings", embeddings, "JSONL {id, vector} used for the embedding cosine");
  eval->add_option("--m", m, "completions per input");
  eval->add_option("--inputs", inputs, "held-out inputs");
  eval->add_option("--temperature", temperature, "sampling temperature");

  auto* sweep = app.add_subcommand("sweep", "train and evaluate one run per value and seed");
  sweep->add_option("--config", config, "config file")->required();
  sweep->add_option("--axis", axis, "beta, temperature, gate_fraction or top_k")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--seed", seed, "single seed instead of the config's seed list");
  sweep->add_option("--out", out, "output directory")->required();
  sweep->add_flag("--baseline", baseline, "add vanilla PPO rows");

  auto* compare = app.add_subcommand("compare", "metric deltas of run B over run A");
  compare->add_option("runs", runs, "RUN_A RUN_B")->required()->expected(2);
  compare->add_option("--out", out, "report directory")->required();

  auto* selftest = app.add_subcommand("selftest", "gradient, oracle and golden checks");
  selftest->add_option("--golden", golden, "golden values file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      cdppo::cmd_train(load(config, seed), out, {resume, std::nullopt});
      std::cout << "run written to " << out << "\n";
    } else if (eval->parsed()) {
      cdppo::EvalCommandOptions opt{checkpoint, completions, embeddings, m, inputs, temperature};
      const cdppo::EvalResult r = cdppo::cmd_eval(run_dir, opt);
      std::cout << "diversity " << r.report.distinct << "  ead " << r.report.ead << "  selfbleu "
                << r.report.self_bleu << "  sentbert " << r.report.embed_cos << "  rm_score " << r.rm_score << "\n";
    } else if (sweep->parsed()) {
      cdppo::cmd_sweep(load(config, seed), cdppo::parse_sweep_axis(axis), parse_values(values), out, baseline);
      std::cout << "sweep table written to " << out << "/sweep.csv\n";
    } else if (compare->parsed()) {
      std::cout << cdppo::cmd_compare(runs[0], runs[1], out);
    } else if (selftest->parsed()) {
      return cdppo::cmd_selftest(golden, std::cout) == 0 ? 0 : 1;
    }
  } catch (const cdppo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
