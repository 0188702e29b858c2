#include <algorithm>
#include <cmath>

#include "cdppo/ppo.hpp"

namespace cdppo {

double ppo_policy_loss(std::span<const double> new_lp, std::span<const double> old_lp,
                       std::span<const double> adv, double clip_ratio, std::vector<double>* dnew) {
  if (new_lp.size() != old_lp.size() || new_lp.size() != adv.size() || new_lp.empty()) {
    throw ShapeError("ppo_policy_loss: arrays must be nonempty and equal length");
  }
  const double n = static_cast<double>(new_lp.size());
  if (dnew) dnew->assign(new_lp.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < new_lp.size(); ++i) {
    const double ratio = std::exp(new_lp[i] - old_lp[i]);
    if (!std::isfinite(ratio)) throw NumericError("ppo_policy_loss: non-finite probability ratio");
    const double unclipped = ratio * adv[i];
    const double clipped = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv[i];
    total += std::min(unclipped, clipped);
    // Only the unclipped branch depends on new_lp.
    if (dnew && unclipped <= clipped) (*dnew)[i] = -unclipped / n;
  }
  return -total / n;
}

double critic_loss(std::span<const double> values, std::span<const double> q, std::vector<double>* dvalues) {
  if (values.size() != q.size() || values.empty()) {
    throw ShapeError("critic_loss: arrays must be nonempty and equal length");
  }
  const double n = static_cast<double>(values.size());
  if (dvalues) dvalues->assign(values.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - q[i];
    total += d * d;
    if (dvalues) (*dvalues)[i] = 2.0 * d / n;
  }
  return total / n;
}

}  // namespace cdppo
