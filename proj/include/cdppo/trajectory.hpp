#pragma once

#include <vector>

#include "cdppo/tensor.hpp"
#include "cdppo/vocab.hpp"

namespace cdppo {

/// Per-token rewards; combined[t] == extrinsic[t] + eta * intrinsic[t].
struct RewardVector {
  std::vector<double> extrinsic;
  std::vector<double> intrinsic;
  std::vector<double> combined;
  double beta = 0.0;
  double eta = 0.0;
};

/// Curiosity bookkeeping for one trajectory. Positions with kept == false
/// hold raw == 0 and whitened == 0.
struct IntrinsicRecord {
  std::vector<double> raw;
  std::vector<bool> kept;
  std::vector<double> whitened;
};

/// One sampled episode. Per-step arrays have length T = actions.size();
/// h_ref has T + 1 rows so that row t + 1 is the state after action t.
struct Trajectory {
  std::size_t prompt_id = 0;
  TokenSeq prompt;
  TokenSeq actions;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  std::vector<double> kl_full;   // sum_a pi(a)(log pi(a) - log ref(a)) per step
  std::vector<double> values;
  Tensor policy_logprobs;        // [T, V], temperature 1
  Tensor h_policy;               // [T, d_h]
  Tensor h_ref;                  // [T + 1, d_h]
  double score = 0.0;            // terminal reward-model score R

  RewardVector rewards;
  IntrinsicRecord intrinsic;
  std::vector<double> advantages;
  std::vector<double> q_targets;

  std::size_t length() const { return actions.size(); }
};

}  // namespace cdppo
