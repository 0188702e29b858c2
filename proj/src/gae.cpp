#include <stdexcept>

#include "cdppo/ppo.hpp"

namespace cdppo {

GaeResult compute_gae(std::span<const double> values, std::span<const double> rewards, double gamma,
                      double lambda) {
  if (values.empty() || values.size() != rewards.size()) {
    throw std::invalid_argument("compute_gae: values and rewards must be nonempty and equal length");
  }
  const std::size_t T = values.size();
  GaeResult out{std::vector<double>(T), std::vector<double>(T)};
  double next_value = 0.0, running = 0.0;
  for (std::size_t i = T; i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    out.advantages[i] = running;
    out.q_targets[i] = running + values[i];
    next_value = values[i];
  }
  return out;
}

}  // namespace cdppo
