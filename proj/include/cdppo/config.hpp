#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdppo/diversity.hpp"
#include "cdppo/ppo.hpp"
#include "cdppo/sft.hpp"

namespace cdppo {

/// Invalid or incomplete experiment configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TaskSetup {
  TaskKind kind = TaskKind::multi_target;
  TaskParams params;
  std::uint64_t seed = 1234;  // task, corpus and prompts are shared by all run seeds
  std::size_t corpus_size = 256;
  double corpus_noise = 0.15;
  std::size_t num_prompts = 320;
  std::size_t eval_prompts = 16;
  std::size_t prompt_len = 2;
};

struct EvalSetup {
  std::size_t m = 10;
  std::size_t inputs = 16;
  SamplerConfig sampler{1.0, 32, 1.0};
  std::uint64_t seed = 7;
  bool pooled = true;
  BleuMode bleu_mode = BleuMode::geometric;
  bool ead_literal = false;
  int distinct_max_n = 5;
  int bleu_max_n = 4;
};

struct ExperimentConfig {
  TaskSetup task;
  ModelDims model;
  std::size_t feature_dim = 0;  // 0: same as model.hidden_dim
  std::size_t icm_hidden = 128;
  SftConfig sft;
  TrainConfig train;
  EvalSetup eval;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  std::size_t resolved_feature_dim() const { return feature_dim ? feature_dim : model.hidden_dim; }
  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Parses `key = value` lines with dotted section keys and `#` comments.
/// `task` is required; unknown keys, repeated keys and malformed values are
/// rejected with the key named.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment to an existing config.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Every key in a fixed order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace cdppo
