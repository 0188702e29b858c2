#pragma once

#include <vector>

#include "cdppo/networks.hpp"

namespace cdppo {

struct SftConfig {
  std::size_t epochs = 10;
  double lr = 3e-3;
  std::size_t batch = 16;
};

struct SftResult {
  std::vector<double> epoch_losses;  // token-mean cross-entropy seen during each epoch
};

/// Likelihood pretraining: next-token cross-entropy on every corpus line
/// followed by EOS. Line i is conditioned on prompts[i % prompts.size()]
/// when prompts are given. Zero epochs leaves `store` untouched.
SftResult sft_pretrain(const PolicyNet& net, ParamStore& store, const std::vector<TokenSeq>& corpus,
                       const std::vector<TokenSeq>& prompts, const SftConfig& cfg, SeededRng& rng);

/// Token-mean cross-entropy of the corpus under the current weights.
double corpus_nll(const PolicyNet& net, const ParamStore& store, const std::vector<TokenSeq>& corpus,
                  const std::vector<TokenSeq>& prompts);

}  // namespace cdppo
