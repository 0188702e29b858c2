#pragma once

#include "cdppo/networks.hpp"
#include "cdppo/sampler.hpp"
#include "cdppo/task.hpp"
#include "cdppo/trajectory.hpp"

namespace cdppo {

struct RolloutModels {
  const PolicyNet& net;  // layout shared by policy and reference
  const ParamStore& policy;
  const ParamStore& reference;
  const CriticNet& critic_net;
  const ParamStore& critic;
};

/// Samples one episode from `prompt` until EOS or max_len actions. Only reads
/// the stores, so concurrent calls with independent rngs are safe.
Trajectory rollout(const RolloutModels& models, const RewardTask& task, const SamplerConfig& cfg,
                   SeededRng& rng, std::size_t max_len, const TokenSeq& prompt,
                   std::size_t prompt_id = 0);

/// Completion tokens only (EOS included when generated); no critic or reference.
TokenSeq sample_completion(const PolicyNet& net, const ParamStore& policy, const SamplerConfig& cfg,
                           SeededRng& rng, std::size_t max_len, const TokenSeq& prompt);

TokenSeq greedy_decode(const PolicyNet& net, const ParamStore& policy, std::size_t max_len,
                       const TokenSeq& prompt);

}  // namespace cdppo
