#include "cdppo/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace cdppo {

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, std::size_t> ngram_counts(const Completion& tokens, std::size_t n) {
  std::map<NGram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

struct LevelCount {
  std::size_t distinct = 0;
  std::size_t total = 0;
};

LevelCount level_count(std::span<const Completion> set, std::size_t n) {
  std::set<NGram> seen;
  LevelCount c;
  for (const auto& comp : set) {
    for (const auto& [g, k] : ngram_counts(comp, n)) {
      seen.insert(g);
      c.total += k;
    }
  }
  c.distinct = seen.size();
  return c;
}

void require_nonempty(std::span<const Completion> set, const char* who) {
  if (set.empty()) throw std::invalid_argument(std::string(who) + ": no completions");
  for (const auto& c : set) {
    if (c.empty()) throw std::invalid_argument(std::string(who) + ": empty completion");
  }
}

double distinct_impl(std::span<const Completion> set, int max_n) {
  double prod = 1.0;
  for (int n = 1; n <= max_n; ++n) {
    const LevelCount c = level_count(set, static_cast<std::size_t>(n));
    if (c.total == 0) continue;
    prod *= static_cast<double>(c.distinct) / static_cast<double>(c.total);
  }
  return prod;
}

double ead_impl(std::span<const Completion> set, int vocab_size, int max_n, bool literal) {
  double sum = 0.0;
  int levels = 0;
  for (int n = 1; n <= max_n; ++n) {
    const LevelCount c = level_count(set, static_cast<std::size_t>(n));
    if (c.total == 0) continue;
    sum += ead_term(c.distinct, c.total, vocab_size, literal);
    ++levels;
  }
  return levels == 0 ? 0.0 : sum / levels;
}

}  // namespace

double distinct_n(const Completion& tokens, int max_n) {
  require_nonempty(std::span(&tokens, 1), "distinct_n");
  return distinct_impl(std::span(&tokens, 1), max_n);
}

double distinct_n_pooled(std::span<const Completion> set, int max_n) {
  require_nonempty(set, "distinct_n");
  return distinct_impl(set, max_n);
}

double ead_term(std::size_t distinct, std::size_t total, int vocab_size, bool literal) {
  if (vocab_size < 2) throw std::invalid_argument("ead: vocabulary size must be at least 2");
  const double V = vocab_size;
  const double C = static_cast<double>(total);
  const double expected = literal ? V * std::pow(1.0 - (V - 1.0) / V, C)
                                  : V * (1.0 - std::pow((V - 1.0) / V, C));
  return static_cast<double>(distinct) / expected;
}

double ead(const Completion& tokens, int vocab_size, int max_n, bool literal) {
  if (vocab_size < 2) throw std::invalid_argument("ead: vocabulary size must be at least 2");
  require_nonempty(std::span(&tokens, 1), "ead");
  return ead_impl(std::span(&tokens, 1), vocab_size, max_n, literal);
}

double ead_pooled(std::span<const Completion> set, int vocab_size, int max_n, bool literal) {
  if (vocab_size < 2) throw std::invalid_argument("ead: vocabulary size must be at least 2");
  require_nonempty(set, "ead");
  return ead_impl(set, vocab_size, max_n, literal);
}

double bleu(const Completion& hyp, std::span<const Completion> refs, int max_n, BleuMode mode) {
  if (refs.empty()) throw std::invalid_argument("bleu: no references");
  if (hyp.empty()) return 0.0;

  // Closest reference length, ties to the shorter one.
  std::size_t best_len = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
    if (d(r.size()) < d(best_len) || (d(r.size()) == d(best_len) && r.size() < best_len)) best_len = r.size();
  }
  const double c = static_cast<double>(hyp.size());
  const double bp = hyp.size() > best_len ? 1.0 : std::exp(1.0 - static_cast<double>(best_len) / c);

  double acc = 0.0;
  int levels = 0;
  for (int n = 1; n <= max_n; ++n) {
    const auto hc = ngram_counts(hyp, static_cast<std::size_t>(n));
    std::size_t total = 0, clipped = 0;
    for (const auto& [g, k] : hc) {
      std::size_t ref_max = 0;
      for (const auto& r : refs) {
        const auto rc = ngram_counts(r, static_cast<std::size_t>(n));
        auto it = rc.find(g);
        if (it != rc.end()) ref_max = std::max(ref_max, it->second);
      }
      total += k;
      clipped += std::min(k, ref_max);
    }
    if (total == 0) continue;
    const double p = clipped == 0 ? kBleuEpsilon / static_cast<double>(total)
                                  : static_cast<double>(clipped) / static_cast<double>(total);
    acc += mode == BleuMode::geometric ? std::log(p) : bp * p;
    ++levels;
  }
  if (levels == 0) return 0.0;
  return mode == BleuMode::geometric ? bp * std::exp(acc / levels) : acc / levels;
}

double bleu_against_rest(std::span<const Completion> set, std::size_t i, int max_n, BleuMode mode) {
  if (set.size() < 2) throw std::invalid_argument("self_bleu needs at least two completions");
  std::vector<Completion> refs;
  for (std::size_t j = 0; j < set.size(); ++j) {
    if (j != i) refs.push_back(set[j]);
  }
  return bleu(set[i], refs, max_n, mode);
}

double self_bleu(std::span<const Completion> set, int max_n, BleuMode mode) {
  if (set.size() < 2) throw std::invalid_argument("self_bleu needs at least two completions");
  double sum = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) sum += bleu_against_rest(set, i, max_n, mode);
  return sum / static_cast<double>(set.size());
}

std::vector<double> trigram_embedding(const Completion& tokens, std::size_t dim) {
  std::string text = " ";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) text += ' ';
    text += tokens[i];
  }
  text += ' ';
  std::vector<double> v(dim, 0.0);
  for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
    std::uint32_t h = 2166136261u;
    for (std::size_t k = i; k < i + 3; ++k) {
      h ^= static_cast<unsigned char>(text[k]);
      h *= 16777619u;
    }
    v[h % dim] += 1.0;
  }
  return v;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero-norm embedding");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

double mean_pairwise_cosine(const std::vector<std::vector<double>>& e) {
  if (e.size() < 2) throw std::invalid_argument("embed_cosine needs at least two completions");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      sum += cosine_similarity(e[i], e[j]);
      ++pairs;
    }
  return sum / static_cast<double>(pairs);
}

Embedder default_embedder() {
  return [](const CompletionSet& set, std::size_t i) { return trigram_embedding(set.completions[i]); };
}

double embed_cosine(const CompletionSet& set, const Embedder& embedder) {
  std::vector<std::vector<double>> e;
  for (std::size_t i = 0; i < set.completions.size(); ++i) e.push_back(embedder(set, i));
  return mean_pairwise_cosine(e);
}

DiversityReport evaluate(const std::vector<CompletionSet>& sets, const EvalOptions& opt) {
  if (sets.empty()) throw std::invalid_argument("evaluate: no completion sets");
  const Embedder embedder = opt.embedder ? opt.embedder : default_embedder();
  DiversityReport rep;
  for (const auto& s : sets) {
    if (s.completions.size() < 2) {
      throw std::invalid_argument("input '" + s.input_id + "' has fewer than two completions");
    }
    std::span<const Completion> comps(s.completions);
    double d, e;
    if (opt.pooled) {
      d = distinct_n_pooled(comps, opt.distinct_max_n);
      e = ead_pooled(comps, opt.vocab_size, opt.distinct_max_n, opt.ead_literal);
    } else {
      d = e = 0.0;
      for (const auto& c : comps) {
        d += distinct_n(c, opt.distinct_max_n);
        e += ead(c, opt.vocab_size, opt.distinct_max_n, opt.ead_literal);
      }
      d /= static_cast<double>(comps.size());
      e /= static_cast<double>(comps.size());
    }
    rep.input_ids.push_back(s.input_id);
    rep.per_input_distinct.push_back(d);
    rep.per_input_ead.push_back(e);
    rep.per_input_self_bleu.push_back(self_bleu(comps, opt.bleu_max_n, opt.bleu_mode));
    rep.per_input_embed_cos.push_back(embed_cosine(s, embedder));
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  rep.distinct = mean(rep.per_input_distinct);
  rep.ead = mean(rep.per_input_ead);
  rep.self_bleu = mean(rep.per_input_self_bleu);
  rep.embed_cos = mean(rep.per_input_embed_cos);
  return rep;
}

}  // namespace cdppo
