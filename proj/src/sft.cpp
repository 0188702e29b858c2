#include "cdppo/sft.hpp"

#include <cmath>
#include <numeric>

namespace cdppo {

namespace {

struct Example {
  std::vector<Window> contexts;
  std::vector<int> targets;
};

void append_example(Example& ex, const TokenSeq& prompt, const TokenSeq& line, std::size_t window) {
  TokenSeq seq = line;
  seq.push_back(Vocab::kEos);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    ex.contexts.push_back(make_window(prompt, seq, t, window));
    ex.targets.push_back(seq[t]);
  }
}

const TokenSeq& prompt_for(const std::vector<TokenSeq>& prompts, std::size_t i) {
  static const TokenSeq empty;
  return prompts.empty() ? empty : prompts[i % prompts.size()];
}

// Returns summed NLL; if `store_grad`, accumulates d(mean NLL)/dθ.
double nll_pass(const PolicyNet& net, ParamStore& store, const Example& ex, bool store_grad) {
  PolicyPass pass = net.forward(store, ex.contexts);
  const std::size_t n = ex.targets.size(), V = static_cast<std::size_t>(net.dims().vocab);
  Tensor dlogits({n, V});
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::vector<double> lp = log_softmax(pass.logits.row(r), 1.0);
    const auto tgt = static_cast<std::size_t>(ex.targets[r]);
    total -= lp[tgt];
    for (std::size_t a = 0; a < V; ++a) {
      dlogits.at(r, a) = (std::exp(lp[a]) - (a == tgt ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  if (store_grad) net.backward(store, pass, dlogits);
  return total;
}

}  // namespace

SftResult sft_pretrain(const PolicyNet& net, ParamStore& store, const std::vector<TokenSeq>& corpus,
                       const std::vector<TokenSeq>& prompts, const SftConfig& cfg, SeededRng& rng) {
  if (corpus.empty()) throw std::invalid_argument("sft_pretrain: corpus is empty");
  if (cfg.batch == 0) throw std::invalid_argument("sft_pretrain: batch must be positive");
  SftResult result;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  store.zero_grad();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      Example ex;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch); ++k) {
        append_example(ex, prompt_for(prompts, order[k]), corpus[order[k]], net.dims().window);
      }
      loss_sum += nll_pass(net, store, ex, true);
      tokens += ex.targets.size();
      adam_step(store, AdamConfig{.lr = cfg.lr});
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(tokens));
  }
  return result;
}

double corpus_nll(const PolicyNet& net, const ParamStore& store, const std::vector<TokenSeq>& corpus,
                  const std::vector<TokenSeq>& prompts) {
  Example ex;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    append_example(ex, prompt_for(prompts, i), corpus[i], net.dims().window);
  }
  ParamStore scratch = store.values_copy();
  return nll_pass(net, scratch, ex, false) / static_cast<double>(ex.targets.size());
}

}  // namespace cdppo
