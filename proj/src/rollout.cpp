#include "cdppo/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "cdppo/nn.hpp"

namespace cdppo {

Trajectory rollout(const RolloutModels& models, const RewardTask& task, const SamplerConfig& cfg,
                   SeededRng& rng, std::size_t max_len, const TokenSeq& prompt,
                   std::size_t prompt_id) {
  if (max_len == 0) throw std::invalid_argument("rollout max_len must be at least 1");
  const ModelDims& dims = models.net.dims();
  const auto V = static_cast<std::size_t>(dims.vocab);
  cfg.validate(dims.vocab);

  Trajectory tr;
  tr.prompt_id = prompt_id;
  tr.prompt = prompt;
  std::vector<std::vector<double>> logprob_rows, hpol_rows, href_rows;

  auto row_of = [](const Tensor& m) {
    auto r = m.row(0);
    return std::vector<double>(r.begin(), r.end());
  };

  while (true) {
    const std::size_t t = tr.actions.size();
    Window ctx = make_window(prompt, tr.actions, t, dims.window);
    PolicyPass pol = models.net.forward(models.policy, {ctx});
    PolicyPass ref = models.net.forward(models.reference, {ctx});
    CriticPass crit = models.critic_net.forward(models.critic, {ctx});

    const auto logits = pol.logits.row(0);
    const std::vector<double> lp = log_softmax(logits, 1.0);
    const std::vector<double> lr = log_softmax(ref.logits.row(0), 1.0);
    const SampledToken s = sample_token(logits, cfg, rng);

    double kl = 0.0;
    for (std::size_t a = 0; a < V; ++a) kl += std::exp(lp[a]) * (lp[a] - lr[a]);

    tr.actions.push_back(s.token);
    tr.logp_old.push_back(s.logprob);
    tr.logp_ref.push_back(lr[static_cast<std::size_t>(s.token)]);
    tr.kl_full.push_back(kl);
    tr.values.push_back(crit.values[0]);
    logprob_rows.push_back(lp);
    hpol_rows.push_back(row_of(pol.enc.h));
    href_rows.push_back(row_of(ref.enc.h));

    if (s.token == Vocab::kEos || tr.actions.size() >= max_len) break;
  }
  {
    Window ctx = make_window(prompt, tr.actions, tr.actions.size(), dims.window);
    href_rows.push_back(row_of(models.net.forward(models.reference, {ctx}).enc.h));
  }

  auto stack = [](const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size(), c = rows.front().size();
    std::vector<double> data;
    data.reserve(n * c);
    for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
    return Tensor({n, c}, std::move(data));
  };
  tr.policy_logprobs = stack(logprob_rows);
  tr.h_policy = stack(hpol_rows);
  tr.h_ref = stack(href_rows);
  tr.score = task.score(tr.actions);
  return tr;
}

TokenSeq sample_completion(const PolicyNet& net, const ParamStore& policy, const SamplerConfig& cfg,
                           SeededRng& rng, std::size_t max_len, const TokenSeq& prompt) {
  TokenSeq out;
  while (out.size() < max_len) {
    PolicyPass p = net.forward(policy, {make_window(prompt, out, out.size(), net.dims().window)});
    const int tok = sample_token(p.logits.row(0), cfg, rng).token;
    out.push_back(tok);
    if (tok == Vocab::kEos) break;
  }
  return out;
}

TokenSeq greedy_decode(const PolicyNet& net, const ParamStore& policy, std::size_t max_len,
                       const TokenSeq& prompt) {
  TokenSeq out;
  while (out.size() < max_len) {
    PolicyPass p = net.forward(policy, {make_window(prompt, out, out.size(), net.dims().window)});
    auto l = p.logits.row(0);
    const int tok = static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
    out.push_back(tok);
    if (tok == Vocab::kEos) break;
  }
  return out;
}

}  // namespace cdppo
