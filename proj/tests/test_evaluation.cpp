#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "bisim/environments.hpp"
#include "bisim/evaluation.hpp"
#include "test_support.hpp"

using namespace bisim;

namespace {

// Points {0,1,2} and {3,4,5}: within-block distances <= 0.1, across >= 1.
StateMetric two_blocks() {
  StateMetric d(6);
  const double intra[3] = {0.05, 0.08, 0.1};
  for (StateId s = 0; s < 6; ++s)
    for (StateId t = s + 1; t < 6; ++t) {
      const bool same = (s < 3) == (t < 3);
      d.set_symmetric(s, t, same ? intra[(s + t) % 3] : 1.0 + 0.1 * static_cast<double>(s + t));
    }
  return d;
}

bool sound(const Clustering& c, const StateMetric& d) {
  for (StateId s = 0; s < d.size(); ++s)
    for (StateId t = 0; t < d.size(); ++t)
      if (c.cluster_of[s] == c.cluster_of[t] && d(s, t) > c.epsilon) return false;
  return true;
}

// Enumerates every set partition (restricted growth strings) and returns
// the fewest blocks among partitions whose blocks are epsilon-cliques.
std::size_t min_clique_partition(const StateMetric& d, double eps, std::size_t* partitions_seen = nullptr) {
  const std::size_t n = d.size();
  std::vector<std::size_t> label(n, 0);
  std::size_t best = n, seen = 0;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      ++seen;
      Clustering c{label, eps};
      if (sound(c, d)) best = std::min(best, used);
      return;
    }
    for (std::size_t k = 0; k <= used && k < n; ++k) {
      label[i] = k;
      rec(i + 1, std::max(used, k + 1));
    }
  };
  rec(0, 0);
  if (partitions_seen) *partitions_seen = seen;
  return best;
}

}  // namespace

TEST(MetricErrors, IdentityScalingAndOffset) {
  Rng rng(1);
  const auto oracle = test::random_point_metric(7, rng);
  const auto same = metric_errors(oracle, [&](StateId s, StateId t) { return oracle(s, t); });
  EXPECT_EQ(same.absolute_error, 0.0);
  EXPECT_NEAR(*same.normalized_error, 0.0, 1e-15);

  const auto twice = metric_errors(oracle, [&](StateId s, StateId t) { return 2.0 * oracle(s, t); });
  EXPECT_NEAR(twice.absolute_error, oracle.max_entry(), 1e-12);
  EXPECT_NEAR(*twice.normalized_error, 0.0, 1e-15);

  const auto offset = metric_errors(oracle, [&](StateId s, StateId t) { return s == t ? 0.0 : oracle(s, t) + 0.5; });
  EXPECT_NEAR(offset.absolute_error, 0.5, 1e-12);
  EXPECT_EQ(offset.diagonal_residual, 0.0);
  EXPECT_EQ(offset.asymmetry, 0.0);
}

TEST(MetricErrors, DiagnosticsAndUndefinedNormalization) {
  const StateMetric oracle(3, 1.0);
  const auto biased = metric_errors(oracle, [](StateId s, StateId t) { return s == t ? 0.25 : (s < t ? 1.0 : 1.5); });
  EXPECT_DOUBLE_EQ(biased.diagonal_residual, 0.25);
  EXPECT_DOUBLE_EQ(biased.asymmetry, 0.5);
  const auto zero = metric_errors(oracle, [](StateId, StateId) { return 0.0; });
  EXPECT_FALSE(zero.normalized_error.has_value());
  EXPECT_DOUBLE_EQ(zero.absolute_error, 1.0);
  EXPECT_THROW(metric_errors(oracle, [](StateId, StateId) { return 0.0; }, PairList{}), InputError);
  EXPECT_THROW(metric_errors(oracle, [](StateId, StateId) { return 0.0; }, PairList{{0, 9}}), InputError);
}

TEST(MetricErrors, NormalizedErrorIgnoresDiagonal) {
  // Oracle and approximant agree off the diagonal; a large diagonal value in
  // the approximant must not change the normalized error.
  Rng rng(2);
  const auto oracle = test::random_point_metric(5, rng);
  const auto r = metric_errors(oracle, [&](StateId s, StateId t) { return s == t ? 100.0 : oracle(s, t); });
  EXPECT_NEAR(*r.normalized_error, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.absolute_error, 100.0);
}

TEST(MetricErrorsProperty, NormalizedInvariantUnderPositiveScaling) {
  Rng rng(3);
  std::uniform_real_distribution<double> noise(0.0, 1.0), scale(0.01, 100.0);
  for (int k = 0; k < 30; ++k) {
    const auto oracle = test::random_graph_metric(6, rng);
    StateMetric approx(6);
    for (StateId s = 0; s < 6; ++s)
      for (StateId t = 0; t < 6; ++t) approx.at(s, t) = noise(rng);
    const double c = scale(rng);
    const auto a = metric_errors(oracle, [&](StateId s, StateId t) { return approx(s, t); });
    const auto b = metric_errors(oracle, [&](StateId s, StateId t) { return c * approx(s, t); });
    EXPECT_NEAR(*a.normalized_error, *b.normalized_error, 1e-12);
    EXPECT_GE(a.absolute_error, 0.0);
  }
}

TEST(AuditBounds, Fig2AndZeroReward) {
  const auto m = build_fig2(1.0, 0.9);
  const auto a = audit_bounds(m, 1e-8, DeterministicPolicy{{0, 1, 0}});
  EXPECT_LE(a.max_violation(), 1e-8);
  // |V*(s) - V*(t)| - d_lax(s,t) is 0 on the (s,t) pair itself.
  EXPECT_NEAR(a.value_vs_lax, 0.0, 1e-8);
  EXPECT_LT(a.lax_vs_bisim, 1e-8);

  auto z = random_deterministic_mdp(6, 2, 0.0, 1.0, 0.9, 4);
  std::fill(z.reward.begin(), z.reward.end(), 0.0);
  const auto az = audit_bounds(z, 1e-8);
  EXPECT_EQ(az.value_vs_lax, 0.0);
  EXPECT_EQ(az.lax_vs_bisim, 0.0);
  EXPECT_EQ(az.policy_vs_onpolicy, 0.0);
}

TEST(AuditBoundsProperty, RandomMdpsWithinTwiceTolAndTighterWithTol) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_deterministic_mdp(2 + seed % 19, 1 + seed % 4, -1.0, 1.0, 0.9, seed);
    const double loose = audit_bounds(m, 1e-3).max_violation();
    const double tight = audit_bounds(m, 1e-7).max_violation();
    EXPECT_LE(loose, 2e-3);
    EXPECT_LE(tight, 2e-7);
    EXPECT_LE(tight, loose + 1e-12);
  }
}

TEST(Aggregate, TwoBlocksGiveTwoClusters) {
  const auto d = two_blocks();
  const auto c = aggregate(d, 0.5);
  EXPECT_EQ(c.num_clusters(), 2u);
  EXPECT_EQ(c.cluster_of, (std::vector<std::size_t>{0, 0, 0, 1, 1, 1}));
  EXPECT_TRUE(sound(c, d));
  std::size_t seen = 0;
  EXPECT_EQ(min_clique_partition(d, 0.5, &seen), 2u);
  EXPECT_EQ(seen, 203u);  // Bell number B6
}

TEST(Aggregate, ExtremeEpsilons) {
  const auto d = two_blocks();
  EXPECT_EQ(aggregate(d, 100.0).num_clusters(), 1u);
  EXPECT_EQ(aggregate(d, 0.0).num_clusters(), 6u);
  EXPECT_THROW(aggregate(d, -1.0), InputError);
  EXPECT_EQ(aggregate(StateMetric(0), 1.0).num_clusters(), 0u);
}

TEST(Aggregate, OrderDependence) {
  // 0 -- 1 -- 2 on a line with unit spacing, epsilon 1: index order puts
  // {0,1},{2}; the reverse order puts {2,1},{0}.
  StateMetric d(3);
  d.set_symmetric(0, 1, 1.0);
  d.set_symmetric(1, 2, 1.0);
  d.set_symmetric(0, 2, 2.0);
  EXPECT_EQ(aggregate(d, 1.0).cluster_of, (std::vector<std::size_t>{0, 0, 1}));
}

TEST(AggregateProperty, SoundDeterministicAndNeverBelowOptimum) {
  Rng rng(5);
  std::uniform_real_distribution<double> eps(0.0, 3.0);
  for (int k = 0; k < 60; ++k) {
    const std::size_t n = 1 + k % 7;
    const auto d = k % 2 ? test::random_point_metric(n, rng) : test::random_graph_metric(n, rng);
    const double e = eps(rng);
    const auto c = aggregate(d, e);
    EXPECT_TRUE(sound(c, d));
    EXPECT_EQ(aggregate(d, e).cluster_of, c.cluster_of);
    EXPECT_GE(c.num_clusters(), min_clique_partition(d, e));
  }
}
