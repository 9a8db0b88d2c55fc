#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "bisim/environments.hpp"
#include "bisim/exact_metrics.hpp"
#include "test_support.hpp"

using namespace bisim;

namespace {

// Reflection of the default layout through its hallway row.
StateId mirror(const GridLayout& g, StateId s) {
  const auto [r, c] = g.cell(s);
  return g.state_at(g.height() - 1 - r, c);
}

double truncated_normal_sd(double sigma, double clip) {
  const double a = clip / sigma;
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
  const double mass = std::erf(a / std::sqrt(2.0));  // 2 Phi(a) - 1
  return sigma * std::sqrt(1.0 - 2.0 * a * pdf / mass);
}

}  // namespace

TEST(GridWorld, DefaultLayoutHas31StatesAnd4Actions) {
  const auto g = GridLayout::mirrored_rooms();
  EXPECT_EQ(g.num_states(), 31u);
  EXPECT_EQ(g.num_goals(), 2u);
  const auto m = build_gridworld(g, 0.99);
  EXPECT_EQ(m.num_states, 31u);
  EXPECT_EQ(m.num_actions, 4u);
  EXPECT_TRUE(validate(m).ok());
  EXPECT_EQ(m.state_labels.size(), 31u);
  EXPECT_EQ(m.coordinates.size(), 31u);
}

TEST(GridWorld, WallBumpStaysWithPenalty) {
  const auto g = GridLayout::mirrored_rooms();
  const auto m = build_gridworld(g, 0.9);
  std::size_t bumps = 0;
  for (StateId s = 0; s < m.num_states; ++s) {
    const auto [r, c] = g.cell(s);
    const std::array<std::pair<long, long>, 4> moves{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    for (ActionId a = 0; a < 4; ++a) {
      const long nr = static_cast<long>(r) + moves[a].first, nc = static_cast<long>(c) + moves[a].second;
      if (!g.open(nr, nc)) {
        ++bumps;
        EXPECT_EQ(m.next(s, a), s);
        EXPECT_EQ(m.r(s, a), -1.0);
      } else {
        EXPECT_EQ(g.cell(m.next(s, a)), std::make_pair(std::size_t(nr), std::size_t(nc)));
        EXPECT_EQ(m.r(s, a), g.is_goal(m.next(s, a)) ? 1.0 : 0.0);
      }
    }
  }
  EXPECT_GT(bumps, 0u);
}

TEST(GridWorld, EnteringGoalPays) {
  const auto g = GridLayout::mirrored_rooms();
  const auto m = build_gridworld(g, 0.9);
  const StateId below_goal = g.state_at(2, 1), right_of_goal = g.state_at(1, 2);
  EXPECT_EQ(m.r(below_goal, kUp), 1.0);
  EXPECT_EQ(m.r(right_of_goal, kLeft), 1.0);
  const StateId goal = g.state_at(1, 1);
  EXPECT_TRUE(g.is_goal(goal));
  EXPECT_EQ(m.r(goal, kUp), -1.0);
  EXPECT_EQ(m.r(goal, kDown), 0.0);
}

TEST(GridWorld, LayoutErrors) {
  EXPECT_THROW(build_gridworld(GridLayout::parse("###\n#.#\n###\n"), 0.9), InputError);
  EXPECT_THROW(GridLayout::parse("#x#\n"), InputError);
  EXPECT_THROW(GridLayout::parse("###\n"), InputError);
  EXPECT_THROW(GridLayout::load("/nonexistent/layout.txt"), InputError);
  const auto g = GridLayout::parse("####\r\n#G.#\r\n####\r\n");
  EXPECT_EQ(g.num_states(), 2u);
}

TEST(Embedding, CornersMapToExtremes) {
  const auto g = GridLayout::mirrored_rooms();
  const auto top_left = embed_xy(g, g.state_at(1, 1));
  const auto bottom_right = embed_xy(g, g.state_at(7, 5));
  EXPECT_DOUBLE_EQ(top_left[0], -1.0);
  EXPECT_DOUBLE_EQ(top_left[1], -1.0);
  EXPECT_DOUBLE_EQ(bottom_right[0], 1.0);
  EXPECT_DOUBLE_EQ(bottom_right[1], 1.0);
  for (StateId s = 0; s < g.num_states(); ++s)
    for (double v : embed_xy(g, s)) EXPECT_LE(std::abs(v), 1.0);
  const auto hall = embed_xy(g, g.state_at(4, 3));
  EXPECT_DOUBLE_EQ(hall[0], 0.0);
  EXPECT_DOUBLE_EQ(hall[1], 0.0);
}

TEST(Embedding, ZeroSigmaIsNoiseless) {
  const auto g = GridLayout::mirrored_rooms();
  Rng rng(1);
  const NoiseModel none{0.0, 0.3};
  for (StateId s = 0; s < g.num_states(); ++s) EXPECT_EQ(embed_xy(g, s, &none, &rng), embed_xy(g, s));
}

TEST(Noise, TruncatedSdMatchesClosedForm) {
  Rng rng(2024);
  const NoiseModel noise{0.1, 0.3};
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = noise.sample(rng);
    ASSERT_LE(std::abs(x), 0.3);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  const double oracle = truncated_normal_sd(0.1, 0.3);
  EXPECT_NEAR(oracle, 0.0986, 1e-4);
  EXPECT_NEAR(sd, oracle, 0.1 * oracle);
  EXPECT_NEAR(mean, 0.0, 0.002);
}

TEST(Noise, ClampModeHitsTheBounds) {
  Rng rng(5);
  const NoiseModel noise{1.0, 0.3, ClipMode::kClamp};
  int at_bound = 0;
  for (int i = 0; i < 1000; ++i) {
    const double x = noise.sample(rng);
    EXPECT_LE(std::abs(x), 0.3);
    at_bound += std::abs(x) == 0.3;
  }
  EXPECT_GT(at_bound, 500);
}

TEST(Fig2, Structure) {
  const auto m = build_fig2(2.0, 0.9);
  EXPECT_EQ(m.next(0, 0), 1u);
  EXPECT_EQ(m.next(0, 1), 2u);
  EXPECT_EQ(m.next(1, 1), 0u);
  EXPECT_EQ(m.next(1, 0), 2u);
  EXPECT_EQ(m.r(0, 0), 2.0);
  EXPECT_EQ(m.r(1, 1), 2.0);
  EXPECT_EQ(m.r(2, 0) + m.r(2, 1) + m.r(0, 1) + m.r(1, 0), 0.0);
  EXPECT_EQ(m.next(2, 0), 2u);
  EXPECT_EQ(m.next(2, 1), 2u);
}

TEST(Duplicate, RowsSumToOneAndJumpSplits) {
  const auto base = random_deterministic_mdp(5, 3, 0.0, 1.0, 0.9, 3);
  for (double jump : {0.0, 0.3, 0.5, 1.0}) {
    const auto d = duplicate_mdp(base, jump);
    EXPECT_TRUE(validate(d).ok());
    EXPECT_EQ(d.num_states, 10u);
    for (StateId s = 0; s < 5; ++s)
      for (ActionId a = 0; a < 3; ++a) {
        const StateId n = base.next(s, a);
        EXPECT_DOUBLE_EQ(d.p(s, a, n), 1.0 - jump);
        EXPECT_DOUBLE_EQ(d.p(s + 5, a, n + 5), 1.0 - jump);
        EXPECT_DOUBLE_EQ(d.p(s, a, n + 5), jump);
        EXPECT_EQ(d.r(s + 5, a), base.r(s, a));
      }
  }
  EXPECT_THROW(duplicate_mdp(base, 1.5), InputError);
}

TEST(Duplicate, TwinsIndistinguishableForAnyJump) {
  const auto base = random_deterministic_mdp(4, 2, 0.0, 1.0, 0.8, 9);
  for (double jump : {0.0, 0.25, 0.5}) {
    const auto d = solve_fixed_point(duplicate_mdp(base, jump), 1e-7).first;
    for (StateId s = 0; s < 4; ++s) EXPECT_LE(d(s, s + 4), 1e-7);
  }
}

TEST(RandomMdp, DeterministicAndValid) {
  const auto a = random_deterministic_mdp(12, 3, -1.0, 1.0, 0.9, 42);
  const auto b = random_deterministic_mdp(12, 3, -1.0, 1.0, 0.9, 42);
  EXPECT_EQ(a.next_state, b.next_state);
  EXPECT_EQ(a.reward, b.reward);
  EXPECT_TRUE(validate(a).ok());
  for (double r : a.reward) EXPECT_TRUE(r >= -1.0 && r <= 1.0);
  EXPECT_NE(a.reward, random_deterministic_mdp(12, 3, -1.0, 1.0, 0.9, 43).reward);
  EXPECT_THROW(random_deterministic_mdp(0, 1, 0.0, 1.0, 0.9, 1), InputError);
}

// Reflection through the hallway row maps up to down, so it is a symmetry of
// the MDP only up to relabelling actions. The action-labelled metric is
// invariant under it; the lax metric, which may match different actions,
// puts mirror images at distance zero.
TEST(GridWorldProperty, MirrorSymmetry) {
  const auto g = GridLayout::mirrored_rooms();
  const auto m = build_gridworld(g, 0.9);
  const double tol = 1e-8;
  const auto d = solve_fixed_point(MetricOperator::kBisimulation, m, tol).first;
  const auto lax = solve_fixed_point(MetricOperator::kLax, m, tol).first;
  for (StateId s = 0; s < m.num_states; ++s) {
    EXPECT_LE(lax(s, mirror(g, s)), tol);
    for (StateId t = 0; t < m.num_states; ++t)
      EXPECT_NEAR(d(mirror(g, s), mirror(g, t)), d(s, t), 2 * tol);
  }
  const StateId hall = g.state_at(4, 3);
  EXPECT_EQ(mirror(g, hall), hall);
  EXPECT_GT(d(g.state_at(2, 1), mirror(g, g.state_at(2, 1))), 0.5);
}
