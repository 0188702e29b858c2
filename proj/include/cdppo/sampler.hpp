#pragma once

#include <span>

#include "cdppo/rng.hpp"

namespace cdppo {

struct SamplerConfig {
  double temperature = 0.8;
  int top_k = 32;
  double top_p = 1.0;

  void validate(int vocab_size) const;
};

struct SampledToken {
  int token = 0;
  // Log-probability under the full temperature-1 softmax, regardless of the
  // truncation used for drawing.
  double logprob = 0.0;
};

/// Temperature scaling, then top-k, then nucleus (smallest prefix of the
/// renormalized top-k mass reaching top_p), then one draw from the survivors.
SampledToken sample_token(std::span<const double> logits, const SamplerConfig& cfg, SeededRng& rng);

/// Indices of the k most probable tokens, ties broken toward lower ids.
std::vector<int> top_k_indices(std::span<const double> scores, std::size_t k);

}  // namespace cdppo
