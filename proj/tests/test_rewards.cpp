#include <doctest.h>

#include <cmath>

#include "cdppo/rewards.hpp"
#include "oracles.hpp"

using namespace cdppo;

TEST_CASE("token_kl_penalty") {
  const std::vector<double> lp{-1.0, -0.5, -3.0};
  for (double v : token_kl_penalty(lp, lp, 0.05)) CHECK(v == 0.0);
  for (double v : token_kl_penalty(lp, std::vector<double>{-2, -2, -2}, 0.0)) CHECK(v == 0.0);
  const auto p = token_kl_penalty(std::vector<double>{-1.0}, std::vector<double>{-2.0}, 0.05);
  CHECK(p[0] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK_THROWS_AS(token_kl_penalty(lp, std::vector<double>{1.0}, 0.1), ShapeError);
  const auto f = full_kl_penalty(std::vector<double>{0.2, 0.4}, 0.5);
  CHECK(f[1] == doctest::Approx(0.2));
}

TEST_CASE("assemble_extrinsic") {
  const auto a = assemble_extrinsic(1.0, std::vector<double>{0, 0, 0});
  CHECK(a == std::vector<double>{0, 0, 1});
  CHECK_FALSE(std::signbit(a[0]));
  const auto b = assemble_extrinsic(0.0, std::vector<double>{0.1, 0.1});
  CHECK(b[0] == doctest::Approx(-0.1));
  CHECK(b[1] == doctest::Approx(-0.1));
  const auto kl = token_kl_penalty(std::vector<double>{-0.8, -0.8}, std::vector<double>{-1.0, -1.0}, 0.05);
  const auto c = assemble_extrinsic(0.9, kl);
  CHECK(c[0] == doctest::Approx(-0.01).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(0.89).epsilon(1e-12));
  CHECK_THROWS(assemble_extrinsic(1.0, std::vector<double>{}));

  SeededRng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pen(1 + rng.below(8));
    for (double& x : pen) x = 0.1 * rng.normal();
    const double R = rng.uniform();
    const auto r = assemble_extrinsic(R, pen);
    double lhs = 0.0, rhs = R;
    for (double x : r) lhs += x;
    for (double x : pen) rhs -= x;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("policy equal to reference leaves only the terminal reward") {
  const std::vector<double> lp{-1.2, -0.3, -2.2, -0.7};
  const auto r = assemble_extrinsic(0.75, token_kl_penalty(lp, lp, 0.05));
  CHECK(r == std::vector<double>{0, 0, 0, 0.75});
}

TEST_CASE("combine") {
  const std::vector<double> e{0.5, -0.25, 1.0}, i{3.0, -1.0, 0.0};
  CHECK(combine(e, i, 0.0) == e);
  const auto c = combine(std::vector<double>{0, 0}, std::vector<double>{1, 1}, 0.04);
  CHECK(c[0] == doctest::Approx(0.04));
  CHECK(c[1] == doctest::Approx(0.04));
  CHECK(combine(e, std::vector<double>(3, 0.0), 0.04) == e);
  const auto lhs = combine(e, i, 0.3 + 0.2);
  const auto rhs = combine(e, i, 0.3);
  for (std::size_t k = 0; k < e.size(); ++k) CHECK(lhs[k] == doctest::Approx(rhs[k] + 0.2 * i[k]).epsilon(1e-14));
  CHECK_THROWS_AS(combine(e, std::vector<double>{1.0}, 0.1), ShapeError);
}

namespace {

Trajectory traj(std::size_t prompt_id, TokenSeq actions, int V) {
  Trajectory t;
  t.prompt_id = prompt_id;
  t.actions = std::move(actions);
  t.policy_logprobs = Tensor({t.actions.size(), static_cast<std::size_t>(V)}, -std::log(static_cast<double>(V)));
  return t;
}

}  // namespace

TEST_CASE("sent_rewards shaping") {
  Vocab v(32);
  const std::vector<Trajectory> same{traj(0, {2, 3, 4, 1}, 32), traj(0, {2, 3, 4, 1}, 32)};

  SUBCASE("zero weights change nothing") {
    for (const auto& b : sent_rewards_bonus(same, {0, 0, 0}, v))
      for (double x : b) CHECK(x == 0.0);
  }
  SUBCASE("identical completions with w_selfbleu = 1") {
    const auto b = sent_rewards_bonus(same, {1.0, 0.0, 0.0}, v);
    for (const auto& row : b) {
      CHECK(row.back() == doctest::Approx(-1.0).epsilon(1e-12));
      for (std::size_t t = 0; t + 1 < row.size(); ++t) CHECK(row[t] == 0.0);
    }
  }
  SUBCASE("uniform policy entropy bonus") {
    const auto b = sent_rewards_bonus(same, {0.0, 0.0, 0.01}, v);
    for (double x : b[0]) CHECK(x == doctest::Approx(0.01 * std::log(32.0)).epsilon(1e-12));
    CHECK(0.01 * std::log(32.0) == doctest::Approx(0.03466).epsilon(1e-4));
  }
  SUBCASE("a prompt with a single completion is rejected") {
    const std::vector<Trajectory> lonely{traj(0, {2, 1}, 32), traj(1, {3, 1}, 32)};
    CHECK_THROWS(sent_rewards_bonus(lonely, {0.5, 0.5, 0.01}, v));
  }
  SUBCASE("diverse completions earn a larger bonus than duplicates") {
    const std::vector<Trajectory> diverse{traj(0, {2, 3, 4, 1}, 32), traj(0, {9, 12, 20, 1}, 32)};
    CHECK(sent_rewards_bonus(diverse, {0.5, 0.5, 0.0}, v)[0].back() >
          sent_rewards_bonus(same, {0.5, 0.5, 0.0}, v)[0].back());
  }
}
