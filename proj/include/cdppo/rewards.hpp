#pragma once

#include <span>
#include <vector>

#include "cdppo/trajectory.hpp"
#include "cdppo/vocab.hpp"

namespace cdppo {

/// beta * (logp_policy[t] - logp_ref[t]); callers subtract it from the reward.
std::vector<double> token_kl_penalty(std::span<const double> logp_policy, std::span<const double> logp_ref,
                                     double beta);

/// Same penalty from the full per-step KL sum_a pi(a)(log pi(a) - log ref(a)).
std::vector<double> full_kl_penalty(std::span<const double> kl_full, double beta);

/// -penalty at every step, plus the terminal score R on the last step.
std::vector<double> assemble_extrinsic(double terminal_score, std::span<const double> kl_penalty);

/// extrinsic + eta * intrinsic, elementwise.
std::vector<double> combine(std::span<const double> extrinsic, std::span<const double> intrinsic, double eta);

struct SentRewardWeights {
  double selfbleu = 0.5;
  double sentbert = 0.5;
  double entropy = 0.01;
};

/// Sent-Rewards baseline shaping. Trajectories sharing a prompt_id form one
/// group (at least two members each): the terminal step receives
/// -w_selfbleu * BLEU(own completion vs the rest) - w_sentbert * mean cosine
/// to the rest, and every step receives +w_entropy * H(pi(.|s_t)).
/// Returns one bonus vector per trajectory.
std::vector<std::vector<double>> sent_rewards_bonus(std::span<const Trajectory> batch,
                                                    const SentRewardWeights& weights, const Vocab& vocab);

double policy_entropy(std::span<const double> logprobs);

}  // namespace cdppo
