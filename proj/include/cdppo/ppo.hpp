#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdppo/icm.hpp"
#include "cdppo/networks.hpp"
#include "cdppo/rewards.hpp"
#include "cdppo/sampler.hpp"
#include "cdppo/task.hpp"
#include "cdppo/trajectory.hpp"

namespace cdppo {

// ---- GAE and losses ----

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> q_targets;  // advantages + values
};

/// Backward recursion A_t = delta_t + gamma*lambda*A_{t+1} with
/// delta_t = r_t + gamma*V(s_{t+1}) - V(s_t) and V(s_T) = 0.
GaeResult compute_gae(std::span<const double> values, std::span<const double> rewards, double gamma,
                      double lambda);

/// -mean(min(ratio*A, clip(ratio, 1-eps, 1+eps)*A)) with ratio = exp(new - old).
/// If `dnew` is given it receives d(loss)/d(new_logprobs).
double ppo_policy_loss(std::span<const double> new_logprobs, std::span<const double> old_logprobs,
                       std::span<const double> advantages, double clip_ratio,
                       std::vector<double>* dnew = nullptr);

/// mean((V - Q)^2); `dvalues` receives 2(V - Q)/T.
double critic_loss(std::span<const double> values, std::span<const double> q_targets,
                   std::vector<double>* dvalues = nullptr);

// ---- training ----

enum class Method { ppo, cd_rlhf, sent_rewards };
enum class KlEstimator { logratio, full };

Method parse_method(const std::string& s);
std::string to_string(Method m);

struct TrainConfig {
  Method method = Method::cd_rlhf;
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::size_t samples_per_prompt = 4;
  std::size_t ppo_epochs = 1;
  std::size_t minibatches = 4;
  double clip_ratio = 0.2;
  double gae_lambda = 0.95;
  double gae_gamma = 1.0;
  double kl_beta = 0.05;
  double eta = 0.04;
  double policy_lr = 1e-3;
  double critic_lr = 3e-3;
  double icm_lr = 3e-3;
  double warmup_ratio = 0.1;
  bool norm_adv = true;
  KlEstimator kl_estimator = KlEstimator::logratio;
  SamplerConfig sampler;
  GateConfig gate;
  bool intrinsic_squared = false;
  WhitenDivisor whiten_divisor = WhitenDivisor::stddev;
  SentRewardWeights sent;
  std::size_t icm_updates = 16;
  std::size_t max_len = 10;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate(int vocab_size) const;
  std::size_t prompts_per_iteration() const { return batch_size / samples_per_prompt; }
};

/// Linear warmup: base * min(1, step / ceil(ratio * total)) for 1-based steps.
double warmup_lr(double base, std::size_t step, std::size_t total_steps, double warmup_ratio);

struct Models {
  PolicyNet policy;
  CriticNet critic;
  IcmNets icm;

  Models(const ModelDims& dims, std::size_t feature_dim, std::size_t icm_hidden);
};

struct TrainState {
  ParamStore policy;
  ParamStore reference;  // frozen
  ParamStore critic;
  ParamStore icm;
  std::size_t iteration = 0;
};

/// Fresh critic and ICM; policy and reference both copy `pretrained_policy`.
TrainState make_train_state(const Models& models, const ParamStore& pretrained_policy, SeededRng& rng);

void save_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_state(const std::filesystem::path& path);

struct IterationMetrics {
  std::size_t iter = 0;
  double mean_reward_rm = 0.0;
  double mean_kl = 0.0;
  double kept_frac = 0.0;
  double mean_ri_raw = 0.0;
  double mean_ri_white = 0.0;
  double loss_policy = 0.0;
  double loss_critic = 0.0;
  double loss_icm = 0.0;
  double lr = 0.0;
};

struct IterationContext {
  const Models& models;
  const TrainConfig& cfg;
  const RewardTask& task;
  const Vocab& vocab;
  const std::vector<TokenSeq>& prompts;
  std::size_t total_iterations;
};

std::size_t iterations_per_epoch(const TrainConfig& cfg, std::size_t num_prompts);

/// Samples this iteration's batch (deterministic in seed and iteration).
std::vector<Trajectory> collect_batch(const IterationContext& ctx, const TrainState& state);

/// Rewards for a collected batch: KL-shaped extrinsic, gated and whitened
/// intrinsic (cd_rlhf) or Sent-Rewards bonuses, combined with eta, then GAE.
/// Fills `metrics` reward fields.
void shape_batch(const IterationContext& ctx, const TrainState& state, std::vector<Trajectory>& batch,
                 IterationMetrics& metrics);

/// Rollouts, rewards, GAE, ppo_epochs of policy and critic updates, ICM
/// update. Works on a copy; `state` changes only if every step succeeds.
IterationMetrics train_iteration(TrainState& state, const IterationContext& ctx);

}  // namespace cdppo
