#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "cdppo/diversity.hpp"
#include "cdppo/hashing.hpp"
#include "oracles.hpp"

using namespace cdppo;

namespace {

Completion random_completion(cdppo::SeededRng& rng, std::size_t len, int alphabet) {
  Completion c;
  for (std::size_t i = 0; i < len; ++i) c.push_back("w" + std::to_string(rng.below(alphabet)));
  return c;
}

double oracle_distinct(const Completion& c, int max_n) {
  double prod = 1.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto [d, t] = oracle::ngram_counts(c, n);
    if (t) prod *= static_cast<double>(d) / static_cast<double>(t);
  }
  return prod;
}

}  // namespace

TEST_CASE("distinct_n examples") {
  CHECK(distinct_n({"a", "b", "c", "d", "e"}, 1) == 1.0);
  CHECK(distinct_n({"a", "a", "a", "a"}, 2) == doctest::Approx(1.0 / 12).epsilon(1e-15));
  CHECK(distinct_n({"a", "b", "a", "b"}, 2) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(distinct_n({"a"}, 5) == 1.0);
  CHECK_THROWS(distinct_n({}, 5));
}

TEST_CASE("distinct_n matches brute-force counting") {
  SeededRng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const Completion c = random_completion(rng, 1 + rng.below(12), 1 + static_cast<int>(rng.below(6)));
    const double d = distinct_n(c, 5);
    CHECK(d == doctest::Approx(oracle_distinct(c, 5)).epsilon(1e-14));
    CHECK(d > 0.0);
    CHECK(d <= 1.0);
    bool all_distinct = true;
    for (int n = 1; n <= 5; ++n) {
      const auto [dd, t] = oracle::ngram_counts(c, n);
      all_distinct = all_distinct && dd == t;
    }
    CHECK((d == 1.0) == all_distinct);
  }
}

TEST_CASE("pooled distinct counts n-grams inside completions only") {
  const std::vector<Completion> set{{"a", "b"}, {"c", "d"}};
  CHECK(distinct_n_pooled(set, 2) == 1.0);
  const std::vector<Completion> copies(10, Completion{"a", "b", "c"});
  CHECK(distinct_n_pooled(copies, 3) == doctest::Approx(std::pow(0.1, 3)).epsilon(1e-14));
}

TEST_CASE("ead") {
  CHECK(ead_term(2, 2, 2) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(ead_term(1, 1, 10) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ead_term(500, 100000, 1000) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ead({"a", "b"}, 2, 1) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(ead_term(2, 2, 2, true) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK_THROWS(ead_term(1, 1, 1));
  CHECK_THROWS(ead({"a"}, 1));
  CHECK(ead({"a", "b", "c"}, 10, 5) ==
        doctest::Approx((ead_term(3, 3, 10) + ead_term(2, 2, 10) + ead_term(1, 1, 10)) / 3).epsilon(1e-15));
}

TEST_CASE("bleu and self_bleu") {
  const std::vector<Completion> ref{{"a", "b", "d"}};
  CHECK(bleu({"a", "b", "c"}, ref, 2) == doctest::Approx(std::sqrt(1.0 / 3)).epsilon(1e-12));
  CHECK(bleu({"a", "b", "c"}, ref, 2, BleuMode::arithmetic) == doctest::Approx((2.0 / 3 + 0.5) / 2).epsilon(1e-12));
  CHECK(bleu({"a"}, std::vector<Completion>{{"a", "b", "c"}}, 1) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(bleu({"a", "a", "a"}, std::vector<Completion>{{"a", "b", "c"}}, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const std::vector<Completion> same(3, Completion{"a", "b", "c", "d"});
  CHECK(self_bleu(same) == 1.0);
  CHECK(self_bleu(std::vector<Completion>{{"a", "b"}, {"c", "d"}}) < 1e-6);
  CHECK_THROWS(self_bleu(std::vector<Completion>{{"a"}}));
  CHECK_THROWS(bleu({"a"}, std::vector<Completion>{}, 4));
}

TEST_CASE("self_bleu is permutation invariant and drops when duplicates are replaced") {
  SeededRng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Completion> set;
    for (int i = 0; i < 5; ++i) set.push_back(random_completion(rng, 3 + rng.below(5), 4));
    set.push_back(set[0]);
    const double base = self_bleu(set);
    auto shuffled = set;
    rng.shuffle(shuffled);
    CHECK(self_bleu(shuffled) == doctest::Approx(base).epsilon(1e-12));
    auto fresh = set;
    fresh.back() = Completion{"z1", "z2", "z3", "z4", "z5"};
    CHECK(self_bleu(fresh) <= base + 1e-12);
  }
}

TEST_CASE("embedding cosine") {
  CHECK(mean_pairwise_cosine({{1, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}}) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(mean_pairwise_cosine({{1, 0}, {0, 1}}) == 0.0);
  CHECK_THROWS(mean_pairwise_cosine({{1, 0}}));
  CHECK_THROWS(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}));
  const CompletionSet s{"x", std::vector<Completion>(4, Completion{"x", "y", "z"}), {}};
  CHECK(embed_cosine(s) == 1.0);
  const auto e = trigram_embedding({"ab"});
  double total = 0;
  for (double v : e) total += v;
  CHECK(total == 2.0);
  CHECK(trigram_embedding({"hello", "world"}) == trigram_embedding({"hello", "world"}));

  const CompletionSet custom{"c", {{"a"}, {"b"}}, {"id0", "id1"}};
  const Embedder emb = [](const CompletionSet& set, std::size_t i) {
    return set.completion_ids[i] == "id0" ? std::vector<double>{1, 0} : std::vector<double>{0, 1};
  };
  CHECK(embed_cosine(custom, emb) == 0.0);
}

TEST_CASE("copies score less diverse than distinct strings") {
  SeededRng rng(3);
  const Completion one = random_completion(rng, 8, 20);
  CompletionSet a{"a", std::vector<Completion>(10, one), {}};
  CompletionSet b{"b", {}, {}};
  for (int i = 0; i < 10; ++i) b.completions.push_back(random_completion(rng, 8, 20));
  for (bool pooled : {true, false}) {
    EvalOptions opt;
    opt.pooled = pooled;
    const auto ra = evaluate({a}, opt), rb = evaluate({b}, opt);
    if (pooled) CHECK(rb.distinct > ra.distinct);
    CHECK(rb.self_bleu < ra.self_bleu);
    CHECK(rb.embed_cos < ra.embed_cos);
  }
}

TEST_CASE("evaluate") {
  const CompletionSet s{"s", {{"a", "b", "c"}, {"a", "b", "d"}, {"e"}}, {}};
  EvalOptions opt;
  const auto one = evaluate({s}, opt);
  CHECK(one.distinct == distinct_n_pooled(s.completions, 5));
  CHECK(one.self_bleu == self_bleu(s.completions));
  CHECK(one.embed_cos == embed_cosine(s));
  CHECK(one.input_ids == std::vector<std::string>{"s"});

  const CompletionSet t{"t", {{"x", "y"}, {"y", "x"}}, {}};
  const auto two = evaluate({s, t}, opt);
  const auto four = evaluate({s, t, s, t}, opt);
  CHECK(four.distinct == doctest::Approx(two.distinct).epsilon(1e-15));
  CHECK(four.ead == doctest::Approx(two.ead).epsilon(1e-15));
  CHECK(four.self_bleu == doctest::Approx(two.self_bleu).epsilon(1e-15));
  CHECK(four.embed_cos == doctest::Approx(two.embed_cos).epsilon(1e-15));
  CHECK(two.distinct == doctest::Approx((two.per_input_distinct[0] + two.per_input_distinct[1]) / 2).epsilon(1e-15));

  CHECK_THROWS(evaluate({}, opt));
  CHECK_THROWS(evaluate({CompletionSet{"lonely", {{"a"}}, {}}}, opt));
}

TEST_CASE("golden report") {
  const auto g = nlohmann::json::parse(read_file(CDPPO_DEFAULT_GOLDEN)).at("report");
  std::vector<CompletionSet> sets;
  for (const auto& [name, comps] : g.at("sets").items()) {
    sets.push_back({name, comps.get<std::vector<Completion>>(), {}});
  }
  REQUIRE(sets.size() == 5);
  for (const char* mode : {"pooled", "per_completion"}) {
    EvalOptions opt;
    opt.vocab_size = g.at("vocab").get<int>();
    opt.pooled = std::string(mode) == "pooled";
    const auto r = evaluate(sets, opt);
    const auto& want = g.at(mode);
    CHECK(std::fabs(r.distinct - want.at("distinct").get<double>()) < 1e-6);
    CHECK(std::fabs(r.ead - want.at("ead").get<double>()) < 1e-6);
    CHECK(std::fabs(r.self_bleu - want.at("selfbleu").get<double>()) < 1e-6);
    CHECK(std::fabs(r.embed_cos - want.at("sentbert").get<double>()) < 1e-6);
  }
}
