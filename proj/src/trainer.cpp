#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <thread>

#include "cdppo/ppo.hpp"
#include "cdppo/rollout.hpp"

namespace cdppo {

namespace {

// Stream tags; every random decision is keyed by (seed, tag, iteration, ...).
constexpr std::uint64_t kTagEpoch = 0xE90C;
constexpr std::uint64_t kTagRollout = 0x5011;
constexpr std::uint64_t kTagGate = 0x6A7E;
constexpr std::uint64_t kTagMinibatch = 0x313B;
constexpr std::uint64_t kTagInit = 0x1A17;

std::vector<double> row_vec(std::span<const double> r) { return {r.begin(), r.end()}; }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Method parse_method(const std::string& s) {
  if (s == "ppo") return Method::ppo;
  if (s == "cd_rlhf") return Method::cd_rlhf;
  if (s == "sent_rewards") return Method::sent_rewards;
  throw std::invalid_argument("unknown method '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::ppo: return "ppo";
    case Method::cd_rlhf: return "cd_rlhf";
    case Method::sent_rewards: return "sent_rewards";
  }
  return "?";
}

void TrainConfig::validate(int vocab_size) const {
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) throw std::invalid_argument("ppo.clip_ratio must be in (0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("ppo.gae_lambda must be in [0, 1]");
  if (!(gae_gamma > 0.0 && gae_gamma <= 1.0)) throw std::invalid_argument("ppo.gae_gamma must be in (0, 1]");
  if (batch_size == 0 || samples_per_prompt == 0 || batch_size % samples_per_prompt != 0) {
    throw std::invalid_argument("train.batch_size must be a positive multiple of train.samples_per_prompt");
  }
  if (minibatches == 0 || minibatches > batch_size) {
    throw std::invalid_argument("ppo.minibatches must be in [1, train.batch_size]");
  }
  if (method == Method::sent_rewards && samples_per_prompt < 2) {
    throw std::invalid_argument("sent_rewards needs train.samples_per_prompt >= 2");
  }
  if (max_len == 0) throw std::invalid_argument("task.max_len must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw std::invalid_argument("train.warmup_ratio must be in [0, 1]");
  sampler.validate(vocab_size);
  gate.validate(vocab_size);
}

double warmup_lr(double base, std::size_t step, std::size_t total_steps, double warmup_ratio) {
  const auto warm = static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps) - 1e-9));
  if (warm == 0 || step >= warm) return base;
  return base * static_cast<double>(step) / static_cast<double>(warm);
}

Models::Models(const ModelDims& dims, std::size_t feature_dim, std::size_t icm_hidden)
    : policy(dims, "policy"),
      critic(dims, "critic"),
      icm(dims.hidden_dim, dims.embed_dim, feature_dim, icm_hidden, "icm") {}

TrainState make_train_state(const Models& models, const ParamStore& pretrained_policy, SeededRng& rng) {
  TrainState s;
  s.policy = pretrained_policy.values_copy();
  s.reference = pretrained_policy.values_copy();
  SeededRng init = rng.split(kTagInit);
  models.critic.init(s.critic, init);
  models.icm.init(s.icm, init);
  return s;
}

void save_state(const std::filesystem::path& path, const TrainState& state) {
  std::vector<NamedTensor> entries;
  entries.push_back({"meta/iteration", Tensor({}, {static_cast<double>(state.iteration)})});
  append_store(entries, "policy", state.policy, true);
  append_store(entries, "critic", state.critic, true);
  append_store(entries, "icm", state.icm, true);
  append_store(entries, "reference", state.reference, false);
  write_checkpoint(path, entries);
}

TrainState load_state(const std::filesystem::path& path) {
  const auto entries = read_checkpoint(path);
  TrainState s;
  s.policy = extract_store(entries, "policy");
  s.critic = extract_store(entries, "critic");
  s.icm = extract_store(entries, "icm");
  s.reference = extract_store(entries, "reference");
  for (const auto& e : entries) {
    if (e.name == "meta/iteration") s.iteration = static_cast<std::size_t>(e.tensor[0]);
  }
  return s;
}

std::size_t iterations_per_epoch(const TrainConfig& cfg, std::size_t num_prompts) {
  const std::size_t per_iter = cfg.prompts_per_iteration();
  if (num_prompts < per_iter) {
    throw std::invalid_argument("prompt set smaller than the prompts needed for one batch");
  }
  return num_prompts / per_iter;
}

std::vector<Trajectory> collect_batch(const IterationContext& ctx, const TrainState& state) {
  const TrainConfig& cfg = ctx.cfg;
  const SeededRng root(cfg.seed);
  const std::size_t ipe = iterations_per_epoch(cfg, ctx.prompts.size());
  const std::size_t epoch = state.iteration / ipe;
  const std::size_t slot = state.iteration % ipe;

  std::vector<std::size_t> perm(ctx.prompts.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SeededRng perm_rng = root.split(kTagEpoch).split(epoch);
  perm_rng.shuffle(perm);

  const std::size_t per_iter = cfg.prompts_per_iteration();
  std::vector<std::size_t> prompt_ids(cfg.batch_size);
  for (std::size_t j = 0; j < cfg.batch_size; ++j) {
    prompt_ids[j] = perm[slot * per_iter + j / cfg.samples_per_prompt];
  }

  const RolloutModels rm{ctx.models.policy, state.policy, state.reference, ctx.models.critic, state.critic};
  const SeededRng iter_rng = root.split(kTagRollout).split(state.iteration);
  std::vector<Trajectory> batch(cfg.batch_size);
  std::vector<std::exception_ptr> errors(cfg.batch_size);

  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t j = begin; j < cfg.batch_size; j += step) {
      try {
        SeededRng rng = iter_rng.split(j);
        batch[j] = rollout(rm, ctx.task, cfg.sampler, rng, cfg.max_len, ctx.prompts[prompt_ids[j]], prompt_ids[j]);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, cfg.batch_size);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return batch;
}

void shape_batch(const IterationContext& ctx, const TrainState& state, std::vector<Trajectory>& batch,
                 IterationMetrics& m) {
  const TrainConfig& cfg = ctx.cfg;

  // Extrinsic: terminal score minus per-token KL penalty.
  double kl_sum = 0.0, score_sum = 0.0;
  for (auto& tr : batch) {
    std::vector<double> penalty = cfg.kl_estimator == KlEstimator::logratio
                                      ? token_kl_penalty(tr.logp_old, tr.logp_ref, cfg.kl_beta)
                                      : full_kl_penalty(tr.kl_full, cfg.kl_beta);
    for (std::size_t t = 0; t < tr.length(); ++t) {
      kl_sum += cfg.kl_estimator == KlEstimator::logratio ? tr.logp_old[t] - tr.logp_ref[t] : tr.kl_full[t];
    }
    score_sum += tr.score;
    tr.rewards.beta = cfg.kl_beta;
    tr.rewards.eta = cfg.method == Method::cd_rlhf ? cfg.eta : 0.0;
    tr.rewards.extrinsic = assemble_extrinsic(tr.score, penalty);
    tr.rewards.intrinsic.assign(tr.length(), 0.0);
    tr.intrinsic.raw.assign(tr.length(), 0.0);
    tr.intrinsic.kept.assign(tr.length(), false);
    tr.intrinsic.whitened.assign(tr.length(), 0.0);
  }
  const double n = static_cast<double>(batch.size());
  m.mean_reward_rm = score_sum / n;
  m.mean_kl = kl_sum / n;

  if (cfg.method == Method::sent_rewards) {
    const auto bonus = sent_rewards_bonus(batch, cfg.sent, ctx.vocab);
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (std::size_t t = 0; t < batch[i].length(); ++t) batch[i].rewards.extrinsic[t] += bonus[i][t];
  }

  // Curiosity is measured and logged for every method; only cd_rlhf adds it to the reward.
  {
    const IcmNets& icm = ctx.models.icm;
    SeededRng gate_rng = SeededRng(cfg.seed).split(kTagGate).split(state.iteration);
    std::vector<double> flat_raw;
    std::vector<bool> flat_kept;
    for (auto& tr : batch) {
      const std::size_t T = tr.length();
      Tensor phi = encode_state(icm, state.icm, tr.h_ref);  // [T+1, d_f]
      Tensor psi({T, icm.action_dim()});
      for (std::size_t t = 0; t < T; ++t) {
        auto e = ctx.models.policy.action_embedding(state.policy, tr.actions[t]);
        std::copy(e.begin(), e.end(), psi.row(t).begin());
      }
      Tensor phi_s({T, icm.feature_dim()});
      std::copy_n(phi.data().begin(), T * icm.feature_dim(), phi_s.data().begin());
      Tensor pred = predict_next(icm, state.icm, phi_s, psi);
      for (std::size_t t = 0; t < T; ++t) {
        const IntrinsicValue iv = intrinsic_reward(pred.row(t), phi.row(t + 1), tr.actions[t],
                                                   tr.policy_logprobs.row(t), cfg.gate, gate_rng,
                                                   cfg.intrinsic_squared);
        tr.intrinsic.raw[t] = iv.value;
        tr.intrinsic.kept[t] = iv.kept;
        flat_raw.push_back(iv.value);
        flat_kept.push_back(iv.kept);
      }
    }
    std::vector<double> flat_white;
    const WhitenResult wr = whiten(flat_raw, flat_kept, flat_white, cfg.whiten_divisor);
    if (wr.status == WhitenStatus::skipped_too_few) {
      std::clog << "[cdppo] iter " << state.iteration << ": " << wr.count
                << " kept intrinsic rewards, whitening skipped\n";
    } else if (wr.status == WhitenStatus::degenerate_sigma) {
      std::clog << "[cdppo] iter " << state.iteration << ": intrinsic reward std < 1e-8, kept values zeroed\n";
    }
    std::size_t k = 0, kept = 0;
    double raw_sum = 0.0, white_sum = 0.0;
    for (auto& tr : batch) {
      for (std::size_t t = 0; t < tr.length(); ++t, ++k) {
        tr.intrinsic.whitened[t] = flat_white[k];
        tr.rewards.intrinsic[t] = flat_white[k];
        if (flat_kept[k]) {
          ++kept;
          raw_sum += flat_raw[k];
          white_sum += flat_white[k];
        }
      }
    }
    m.kept_frac = flat_raw.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(flat_raw.size());
    m.mean_ri_raw = kept ? raw_sum / static_cast<double>(kept) : 0.0;
    m.mean_ri_white = kept ? white_sum / static_cast<double>(kept) : 0.0;
  }

  for (auto& tr : batch) {
    tr.rewards.combined = cfg.method == Method::cd_rlhf
                              ? combine(tr.rewards.extrinsic, tr.rewards.intrinsic, cfg.eta)
                              : tr.rewards.extrinsic;
    GaeResult g = compute_gae(tr.values, tr.rewards.combined, cfg.gae_gamma, cfg.gae_lambda);
    tr.advantages = std::move(g.advantages);
    tr.q_targets = std::move(g.q_targets);
  }
}

namespace {

struct TokenRef {
  std::size_t traj;
  std::size_t step;
};

struct UpdateLosses {
  double policy = 0.0;
  double critic = 0.0;
};

UpdateLosses ppo_updates(const IterationContext& ctx, TrainState& next, const std::vector<Trajectory>& batch,
                         double policy_lr, double critic_lr) {
  const TrainConfig& cfg = ctx.cfg;
  const Models& models = ctx.models;
  const std::size_t window = models.policy.dims().window;
  const auto V = static_cast<std::size_t>(models.policy.dims().vocab);

  // Advantage normalization over every token in the batch.
  std::vector<std::vector<double>> adv(batch.size());
  {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      adv[i] = batch[i].advantages;
      for (double a : adv[i]) {
        sum += a;
        ++count;
      }
    }
    if (cfg.norm_adv && count > 1) {
      const double mu = sum / static_cast<double>(count);
      for (const auto& a : adv)
        for (double x : a) sq += (x - mu) * (x - mu);
      const double sd = std::sqrt(sq / static_cast<double>(count));
      for (auto& a : adv)
        for (double& x : a) x = (x - mu) / (sd + 1e-8);
    }
  }

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng mb_rng = SeededRng(cfg.seed).split(kTagMinibatch).split(next.iteration);

  UpdateLosses losses;
  std::size_t updates = 0;
  for (std::size_t epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    mb_rng.shuffle(order);
    for (std::size_t mb = 0; mb < cfg.minibatches; ++mb) {
      const std::size_t lo = mb * order.size() / cfg.minibatches;
      const std::size_t hi = (mb + 1) * order.size() / cfg.minibatches;
      std::vector<Window> contexts;
      std::vector<TokenRef> refs;
      std::vector<double> old_lp, a, q;
      for (std::size_t k = lo; k < hi; ++k) {
        const Trajectory& tr = batch[order[k]];
        for (std::size_t t = 0; t < tr.length(); ++t) {
          contexts.push_back(make_window(tr.prompt, tr.actions, t, window));
          refs.push_back({order[k], t});
          old_lp.push_back(tr.logp_old[t]);
          a.push_back(adv[order[k]][t]);
          q.push_back(tr.q_targets[t]);
        }
      }
      if (contexts.empty()) continue;

      // Policy.
      next.policy.zero_grad();
      PolicyPass pp = models.policy.forward(next.policy, contexts);
      std::vector<double> new_lp(contexts.size());
      std::vector<std::vector<double>> lps(contexts.size());
      for (std::size_t r = 0; r < contexts.size(); ++r) {
        lps[r] = log_softmax(pp.logits.row(r), 1.0);
        const Trajectory& tr = batch[refs[r].traj];
        new_lp[r] = lps[r][static_cast<std::size_t>(tr.actions[refs[r].step])];
      }
      std::vector<double> dnew;
      losses.policy += ppo_policy_loss(new_lp, old_lp, a, cfg.clip_ratio, &dnew);
      Tensor dlogits({contexts.size(), V});
      for (std::size_t r = 0; r < contexts.size(); ++r) {
        const auto act = static_cast<std::size_t>(batch[refs[r].traj].actions[refs[r].step]);
        for (std::size_t j = 0; j < V; ++j) {
          dlogits.at(r, j) = dnew[r] * ((j == act ? 1.0 : 0.0) - std::exp(lps[r][j]));
        }
      }
      models.policy.backward(next.policy, pp, dlogits);
      adam_step(next.policy, AdamConfig{.lr = policy_lr});

      // Critic.
      next.critic.zero_grad();
      CriticPass cp = models.critic.forward(next.critic, contexts);
      std::vector<double> v(cp.values.data().begin(), cp.values.data().end()), dv;
      losses.critic += critic_loss(v, q, &dv);
      models.critic.backward(next.critic, cp, Tensor({dv.size(), 1}, dv));
      adam_step(next.critic, AdamConfig{.lr = critic_lr});
      ++updates;
    }
  }
  if (updates) {
    losses.policy /= static_cast<double>(updates);
    losses.critic /= static_cast<double>(updates);
  }
  return losses;
}

}  // namespace

IterationMetrics train_iteration(TrainState& state, const IterationContext& ctx) {
  const TrainConfig& cfg = ctx.cfg;
  IterationMetrics m;
  m.iter = state.iteration;
  const std::size_t step = state.iteration + 1;
  m.lr = warmup_lr(cfg.policy_lr, step, ctx.total_iterations, cfg.warmup_ratio);
  const double critic_lr = warmup_lr(cfg.critic_lr, step, ctx.total_iterations, cfg.warmup_ratio);
  const double icm_lr = warmup_lr(cfg.icm_lr, step, ctx.total_iterations, cfg.warmup_ratio);

  std::vector<Trajectory> batch = collect_batch(ctx, state);
  shape_batch(ctx, state, batch, m);

  TrainState next = state;
  const UpdateLosses losses = ppo_updates(ctx, next, batch, m.lr, critic_lr);
  m.loss_policy = losses.policy;
  m.loss_critic = losses.critic;

  {
    std::vector<IcmTransition> transitions;
    for (const auto& tr : batch) {
      for (std::size_t t = 0; t < tr.length(); ++t) {
        transitions.push_back({row_vec(tr.h_ref.row(t)),
                               row_vec(ctx.models.policy.action_embedding(state.policy, tr.actions[t])),
                               row_vec(tr.h_ref.row(t + 1))});
      }
    }
    std::vector<double> icm_losses;
    for (std::size_t u = 0; u < cfg.icm_updates; ++u) {
      icm_losses.push_back(icm_train_step(ctx.models.icm, next.icm, transitions, AdamConfig{.lr = icm_lr}));
    }
    m.loss_icm = mean_of(icm_losses);
  }

  const auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(m.loss_policy) || !finite(m.loss_critic) || !finite(m.loss_icm)) {
    throw NumericError("iteration " + std::to_string(state.iteration) + " produced a non-finite loss");
  }
  next.iteration = state.iteration + 1;
  state = std::move(next);
  return m;
}

}  // namespace cdppo
