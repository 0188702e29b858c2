#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdppo/rng.hpp"
#include "cdppo/vocab.hpp"

namespace cdppo {

enum class TaskKind { multi_target, pattern_coverage };

TaskKind parse_task_kind(const std::string& s);
std::string to_string(TaskKind k);

/// Synthetic terminal reward model standing in for a learned RM. Scores a
/// completion with any trailing EOS removed; always in [0, 1].
struct RewardTask {
  TaskKind kind = TaskKind::multi_target;
  std::size_t max_len = 10;
  // multi_target: many distinct optima, each scoring exactly 1.
  std::vector<TokenSeq> targets;
  // pattern_coverage: reward is the fraction of classes with a token present.
  std::vector<std::vector<int>> classes;

  double score(const TokenSeq& completion) const;
};

struct TaskParams {
  std::size_t num_targets = 8;
  std::size_t target_len = 6;
  std::size_t num_classes = 4;
  std::size_t max_len = 10;
};

RewardTask make_task(TaskKind kind, const Vocab& vocab, const TaskParams& params, std::uint64_t seed);

std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b);

/// Pretraining corpus for the reference model. multi_target: targets with
/// per-token substitution noise; pattern_coverage: random content strings.
std::vector<TokenSeq> make_corpus(const RewardTask& task, const Vocab& vocab, std::size_t size,
                                  double noise, SeededRng& rng);

std::vector<TokenSeq> make_prompts(const Vocab& vocab, std::size_t count, std::size_t length,
                                   SeededRng& rng);

// One whitespace-separated token sequence per line, UTF-8.
std::vector<TokenSeq> read_corpus(const std::filesystem::path& path, const Vocab& vocab);
void write_corpus(const std::filesystem::path& path, const std::vector<TokenSeq>& corpus,
                  const Vocab& vocab);

}  // namespace cdppo
