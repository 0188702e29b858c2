#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cdppo/config.hpp"
#include "cdppo/diversity.hpp"
#include "cdppo/ppo.hpp"

namespace cdppo {

/// Everything a run derives from its config alone: vocabulary, task, model
/// layouts, pretraining corpus, training prompts and held-out eval prompts.
/// Identical for every run seed.
struct Pipeline {
  ExperimentConfig cfg;
  Vocab vocab;
  RewardTask task;
  Models models;
  std::vector<TokenSeq> corpus;
  std::vector<TokenSeq> prompts;
  std::vector<TokenSeq> eval_prompts;

  explicit Pipeline(ExperimentConfig config);

  std::size_t total_iterations() const;
  IterationContext context() const;
};

/// Seeded random init followed by likelihood pretraining on the corpus.
ParamStore pretrain_policy(const Pipeline& p, std::uint64_t seed, SftResult* losses = nullptr);

struct TrainOutcome {
  TrainState state;
  std::vector<IterationMetrics> metrics;
};

/// Pretraining plus `iterations` PPO iterations (all of them when empty),
/// without touching the filesystem.
TrainOutcome train_in_memory(const Pipeline& p, std::uint64_t seed,
                             std::optional<std::size_t> iterations = std::nullopt);

/// One JSONL record with the fixed key order.
std::string metrics_json(const IterationMetrics& m);

struct EvalResult {
  DiversityReport report;
  double rm_score = 0.0;
  std::vector<CompletionSet> sets;
};

/// Samples eval.m completions for each of the first eval.inputs held-out
/// prompts and scores them. Completions keep their trailing EOS.
EvalResult evaluate_policy(const Pipeline& p, const ParamStore& policy, std::uint64_t seed);
EvalOptions eval_options(const ExperimentConfig& cfg);

// ---- commands ----

struct TrainOptions {
  bool resume = false;
  // Stop after this many completed iterations without writing final
  // artifacts, as if the process had been killed.
  std::optional<std::size_t> stop_after;
};

/// SFT, reference snapshot, PPO training. Writes config.txt, corpus.txt,
/// reference.ckpt, checkpoint.ckpt, metrics.jsonl, final.ckpt, manifest.json.
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, const TrainOptions& opt = {});

/// Recomputes every hash recorded in `run/manifest.json`; throws on mismatch.
void verify_manifest(const std::filesystem::path& run);

struct EvalCommandOptions {
  std::filesystem::path checkpoint;   // default: run/final.ckpt
  std::filesystem::path completions;  // external completions JSONL instead of sampling
  std::filesystem::path embeddings;   // JSONL {id, vector} keyed by completion id
  std::optional<std::size_t> m;
  std::optional<std::size_t> inputs;
  std::optional<double> temperature;
};

/// Writes run/eval/report.json, report.csv and completions.jsonl.
EvalResult cmd_eval(const std::filesystem::path& run, const EvalCommandOptions& opt = {});

enum class SweepAxis { beta, temperature, gate_fraction, top_k };
SweepAxis parse_sweep_axis(const std::string& s);
std::string to_string(SweepAxis a);
void apply_sweep_value(ExperimentConfig& cfg, SweepAxis axis, double value);

/// One train+eval cell per (value, seed) under out/, plus out/sweep.csv.
/// With `baseline`, vanilla PPO rows are added for every seed.
void cmd_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values,
               const std::filesystem::path& out, bool baseline);

/// Per-metric deltas of run_b against run_a from their eval reports.
/// Writes compare.md and compare.csv into `out` and returns the markdown.
std::string cmd_compare(const std::filesystem::path& run_a, const std::filesystem::path& run_b,
                        const std::filesystem::path& out);

/// Δ% where a positive value means run b is better: (b - a)/a for
/// higher-better metrics, (a - b)/a for lower-better ones.
double delta_percent(double a, double b, bool higher_better);

/// Runs the built-in checks and golden tests; returns the failure count.
int cmd_selftest(const std::filesystem::path& golden, std::ostream& log);

}  // namespace cdppo
