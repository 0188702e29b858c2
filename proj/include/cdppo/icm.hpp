#pragma once

#include <span>
#include <string>
#include <vector>

#include "cdppo/nn.hpp"

namespace cdppo {

/// Feature encoder phi (reference hidden state -> features) and forward model
/// fwd ([phi(s_t), psi(a_t)] -> predicted phi(s_{t+1})), both relu Mlp2s.
struct IcmNets {
  Mlp2 phi;
  Mlp2 fwd;

  IcmNets(std::size_t state_dim, std::size_t action_dim, std::size_t feature_dim,
          std::size_t fwd_hidden, const std::string& prefix = "icm");

  std::size_t feature_dim() const { return phi.out; }
  std::size_t action_dim() const { return fwd.in - phi.out; }
  void init(ParamStore& store, SeededRng& rng) const;
};

Tensor encode_state(const IcmNets& icm, const ParamStore& store, const Tensor& h_ref);
Tensor predict_next(const IcmNets& icm, const ParamStore& store, const Tensor& phi_s, const Tensor& psi_a);

/// 0.5 * ||predicted - actual||_2^2
double icm_loss(std::span<const double> predicted, std::span<const double> actual);

struct GateConfig {
  enum class Mode { top_k, random_fraction };
  Mode mode = Mode::top_k;
  int k = 1;
  double fraction = 1.0;

  void validate(int vocab_size) const;
};

struct IntrinsicValue {
  double value = 0.0;
  bool kept = false;
};

/// Curiosity for one transition. top_k mode drops the reward when the action is
/// among the k most probable tokens; random_fraction keeps it with probability
/// `fraction`. A kept reward is 0.5 * ||predicted - actual||_2, or the squared
/// norm times 0.5 when `squared`. Reads no gradients and writes none.
IntrinsicValue intrinsic_reward(std::span<const double> predicted, std::span<const double> actual,
                                int action, std::span<const double> policy_logits,
                                const GateConfig& gate, SeededRng& rng, bool squared = false);

enum class WhitenDivisor { stddev, variance };
enum class WhitenStatus { applied, skipped_too_few, degenerate_sigma };

struct WhitenResult {
  WhitenStatus status = WhitenStatus::applied;
  std::size_t count = 0;
  double mean = 0.0;
  double sigma = 0.0;  // population standard deviation of kept values
};

/// Normalizes kept values to zero mean and unit population std. Gated slots are
/// written as exactly 0. With fewer than two kept values the raw values pass
/// through; with sigma < 1e-8 every kept value becomes 0.
WhitenResult whiten(const std::vector<double>& raw, const std::vector<bool>& kept,
                    std::vector<double>& out, WhitenDivisor divisor = WhitenDivisor::stddev);

struct IcmTransition {
  std::vector<double> h_state;
  std::vector<double> psi_action;
  std::vector<double> h_next;
};

/// Mean ICM loss over the batch with gradients accumulated into `store`
/// (through both phi(s_t) and phi(s_{t+1})).
double icm_loss_and_grad(const IcmNets& icm, ParamStore& store, const std::vector<IcmTransition>& batch);

/// One Adam step on the mean ICM loss. Returns the pre-update mean loss.
double icm_train_step(const IcmNets& icm, ParamStore& store, const std::vector<IcmTransition>& batch,
                      const AdamConfig& adam);

}  // namespace cdppo
