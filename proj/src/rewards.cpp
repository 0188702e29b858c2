#include "cdppo/rewards.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "cdppo/diversity.hpp"
#include "cdppo/tensor.hpp"

namespace cdppo {

std::vector<double> token_kl_penalty(std::span<const double> logp_policy, std::span<const double> logp_ref,
                                     double beta) {
  if (logp_policy.size() != logp_ref.size()) throw ShapeError("kl penalty: length mismatch");
  std::vector<double> out(logp_policy.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = beta * (logp_policy[t] - logp_ref[t]);
  return out;
}

std::vector<double> full_kl_penalty(std::span<const double> kl_full, double beta) {
  std::vector<double> out(kl_full.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = beta * kl_full[t];
  return out;
}

std::vector<double> assemble_extrinsic(double terminal_score, std::span<const double> kl_penalty) {
  if (kl_penalty.empty()) throw std::invalid_argument("assemble_extrinsic: empty trajectory");
  std::vector<double> r(kl_penalty.size());
  // 0.0 - x keeps a zero penalty at +0.
  for (std::size_t t = 0; t + 1 < r.size(); ++t) r[t] = 0.0 - kl_penalty[t];
  r.back() = terminal_score - kl_penalty.back();
  return r;
}

std::vector<double> combine(std::span<const double> extrinsic, std::span<const double> intrinsic, double eta) {
  if (extrinsic.size() != intrinsic.size()) throw ShapeError("combine: length mismatch");
  std::vector<double> out(extrinsic.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = extrinsic[t] + eta * intrinsic[t];
  return out;
}

double policy_entropy(std::span<const double> logprobs) {
  double h = 0.0;
  for (double lp : logprobs) {
    if (std::isfinite(lp)) h -= std::exp(lp) * lp;
  }
  return h;
}

std::vector<std::vector<double>> sent_rewards_bonus(std::span<const Trajectory> batch,
                                                    const SentRewardWeights& w, const Vocab& vocab) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < batch.size(); ++i) groups[batch[i].prompt_id].push_back(i);

  std::vector<std::vector<double>> bonus(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) bonus[i].assign(batch[i].length(), 0.0);

  if (w.selfbleu != 0.0 || w.sentbert != 0.0) {
    for (const auto& [prompt, members] : groups) {
      if (members.size() < 2) {
        throw std::invalid_argument("sent_rewards: prompt " + std::to_string(prompt) +
                                    " has fewer than two completions in the batch");
      }
      std::vector<Completion> comps;
      std::vector<std::vector<double>> emb;
      for (std::size_t idx : members) {
        comps.push_back(vocab.to_strings(batch[idx].actions));
        emb.push_back(trigram_embedding(comps.back()));
      }
      for (std::size_t k = 0; k < members.size(); ++k) {
        const double sb = bleu_against_rest(comps, k);
        double cos = 0.0;
        for (std::size_t j = 0; j < members.size(); ++j) {
          if (j != k) cos += cosine_similarity(emb[k], emb[j]);
        }
        cos /= static_cast<double>(members.size() - 1);
        bonus[members[k]].back() += -w.selfbleu * sb - w.sentbert * cos;
      }
    }
  }
  if (w.entropy != 0.0) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t t = 0; t < batch[i].length(); ++t) {
        bonus[i][t] += w.entropy * policy_entropy(batch[i].policy_logprobs.row(t));
      }
    }
  }
  return bonus;
}

}  // namespace cdppo
