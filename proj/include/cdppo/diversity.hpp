#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cdppo {

using Completion = std::vector<std::string>;

/// The completions generated for one input; per-input metrics are computed
/// over this unit and then averaged across inputs.
struct CompletionSet {
  std::string input_id;
  std::vector<Completion> completions;
  std::vector<std::string> completion_ids;  // optional, keys for external embeddings
};

// ---- N-gram Distinct ----

/// prod_{n=1..N} distinct_n / total_n over one sequence; orders with no
/// n-grams contribute a factor of 1.
double distinct_n(const Completion& tokens, int max_n = 5);
/// Same ratio with n-grams counted inside each completion and pooled over the set.
double distinct_n_pooled(std::span<const Completion> set, int max_n = 5);

// ---- Expectation-adjusted distinct ----

/// One order's term N_n / (V (1 - ((V-1)/V)^C_n)). `literal` uses
/// V (1 - (V-1)/V)^C_n in the denominator instead.
double ead_term(std::size_t distinct, std::size_t total, int vocab_size, bool literal = false);
/// Mean of ead_term over the orders 1..N that have at least one n-gram.
double ead(const Completion& tokens, int vocab_size, int max_n = 5, bool literal = false);
double ead_pooled(std::span<const Completion> set, int vocab_size, int max_n = 5, bool literal = false);

// ---- BLEU / SelfBLEU ----

enum class BleuMode {
  geometric,   // BP * exp(mean_n log p_n), uniform weights
  arithmetic,  // mean_n of the single-order scores BP * p_n
};

inline constexpr double kBleuEpsilon = 1e-9;

/// Multi-reference BLEU with clipped modified precision, closest-length
/// brevity penalty, and add-epsilon smoothing of zero precisions. Orders
/// longer than the hypothesis are left out of the average.
double bleu(const Completion& hypothesis, std::span<const Completion> references, int max_n = 4,
            BleuMode mode = BleuMode::geometric);
/// BLEU of completions[i] against all the other completions in the set.
double bleu_against_rest(std::span<const Completion> set, std::size_t i, int max_n = 4,
                         BleuMode mode = BleuMode::geometric);
double self_bleu(std::span<const Completion> set, int max_n = 4, BleuMode mode = BleuMode::geometric);

// ---- embedding cosine ----

/// Hashed character-trigram counts of the space-joined tokens, padded with a
/// leading and trailing space. FNV-1a indexing, so identical on all platforms.
std::vector<double> trigram_embedding(const Completion& tokens, std::size_t dim = 512);
double cosine_similarity(std::span<const double> a, std::span<const double> b);
/// Mean cosine over all unordered pairs (normalized by M(M-1)/2).
double mean_pairwise_cosine(const std::vector<std::vector<double>>& embeddings);

using Embedder = std::function<std::vector<double>(const CompletionSet& set, std::size_t index)>;
Embedder default_embedder();
double embed_cosine(const CompletionSet& set, const Embedder& embedder = default_embedder());

// ---- per-input evaluation ----

struct EvalOptions {
  int vocab_size = 32;
  int distinct_max_n = 5;
  int bleu_max_n = 4;
  bool pooled = true;  // false: per-completion Distinct/EAD averaged within a set
  BleuMode bleu_mode = BleuMode::geometric;
  bool ead_literal = false;
  Embedder embedder;  // empty: trigram embedding
};

struct DiversityReport {
  double distinct = 0.0;
  double ead = 0.0;
  double self_bleu = 0.0;
  double embed_cos = 0.0;
  std::vector<std::string> input_ids;
  std::vector<double> per_input_distinct;
  std::vector<double> per_input_ead;
  std::vector<double> per_input_self_bleu;
  std::vector<double> per_input_embed_cos;
};

DiversityReport evaluate(const std::vector<CompletionSet>& sets, const EvalOptions& options);

}  // namespace cdppo
