#include "cdppo/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cdppo/nn.hpp"

namespace cdppo {

void SamplerConfig::validate(int vocab_size) const {
  if (!(temperature > 0.0)) throw std::invalid_argument("sampler temperature must be > 0");
  if (top_k < 1 || top_k > vocab_size) {
    throw std::invalid_argument("sampler top_k must be in [1, " + std::to_string(vocab_size) + "]");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("sampler top_p must be in (0, 1]");
}

std::vector<int> top_k_indices(std::span<const double> scores, std::size_t k) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](int a, int b) {
                      const double sa = scores[static_cast<std::size_t>(a)];
                      const double sb = scores[static_cast<std::size_t>(b)];
                      return sa > sb || (sa == sb && a < b);
                    });
  order.resize(k);
  return order;
}

SampledToken sample_token(std::span<const double> logits, const SamplerConfig& cfg, SeededRng& rng) {
  cfg.validate(static_cast<int>(logits.size()));
  const std::vector<double> scaled = log_softmax(logits, cfg.temperature);
  std::vector<int> kept = top_k_indices(scaled, static_cast<std::size_t>(cfg.top_k));

  std::vector<double> probs;
  probs.reserve(kept.size());
  for (int id : kept) probs.push_back(std::exp(scaled[static_cast<std::size_t>(id)]));
  double mass = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(mass > 0.0)) throw NumericError("degenerate sampling distribution");

  if (cfg.top_p < 1.0) {
    double cum = 0.0;
    std::size_t cut = probs.size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i] / mass;
      if (cum >= cfg.top_p) {
        cut = i + 1;
        break;
      }
    }
    kept.resize(cut);
    probs.resize(cut);
    mass = std::accumulate(probs.begin(), probs.end(), 0.0);
  }

  const double u = rng.uniform() * mass;
  double cum = 0.0;
  int chosen = kept.back();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) {
      chosen = kept[i];
      break;
    }
  }
  const std::vector<double> full = log_softmax(logits, 1.0);
  return {chosen, full[static_cast<std::size_t>(chosen)]};
}

}  // namespace cdppo
