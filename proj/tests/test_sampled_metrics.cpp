#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bisim/environments.hpp"
#include "bisim/exact_metrics.hpp"
#include "bisim/sampled_metrics.hpp"
#include "test_support.hpp"

using namespace bisim;

namespace {

SampledRunOptions budget(std::size_t n) {
  SampledRunOptions o;
  o.budget = n;
  return o;
}

TransitionPair make_pair(StateId s, StateId t, double rs, double rt, StateId ns, StateId nt) {
  return {{s, 0, rs, ns}, {t, 0, rt, nt}};
}

}  // namespace

TEST(SampledUpdate, ZeroMetricTakesRewardGap) {
  SampledEstimate est(4);
  EXPECT_DOUBLE_EQ(sampled_update(est, make_pair(0, 1, 1.0, 0.0, 2, 2), 0.9), 1.0);
  EXPECT_DOUBLE_EQ(est.metric(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(est.metric(1, 0), 1.0);
  EXPECT_EQ(est.updates_applied, 1u);
  EXPECT_EQ(est.steps, 1u);
}

TEST(SampledUpdate, MaxKeepsLargerValue) {
  SampledEstimate est(3);
  est.metric.set_symmetric(0, 1, 5.0);
  EXPECT_EQ(sampled_update(est, make_pair(0, 1, 3.0, 0.0, 2, 2), 0.9), 0.0);
  EXPECT_DOUBLE_EQ(est.metric(0, 1), 5.0);
  EXPECT_EQ(est.updates_applied, 0u);
  EXPECT_EQ(est.steps, 1u);
}

TEST(SampledUpdate, RejectsIdenticalStates) {
  SampledEstimate est(3);
  EXPECT_THROW(sampled_update(est, make_pair(1, 1, 1.0, 0.0, 2, 2), 0.9), InputError);
}

TEST(SampledUpdate, Locality) {
  Rng rng(3);
  const auto m = random_deterministic_mdp(8, 2, 0.0, 1.0, 0.9, 3);
  PairSampler sampler = PairSampler::uniform(SampleMode::kOffPolicy, 3);
  SampledEstimate est(8);
  for (int k = 0; k < 2000; ++k) {
    const StateMetric before = est.metric;
    const auto p = sampler.draw(m, nullptr);
    ASSERT_TRUE(consistent_with(p, m));
    ASSERT_EQ(p.first.action, p.second.action);
    sampled_update(est, p, m.gamma);
    for (StateId s = 0; s < 8; ++s)
      for (StateId t = 0; t < 8; ++t) {
        const bool touched = (s == p.first.state && t == p.second.state) || (t == p.first.state && s == p.second.state);
        if (!touched) {
          ASSERT_EQ(est.metric(s, t), before(s, t));
        }
      }
  }
}

TEST(RunSampled, Fig2ConvergesToDpOracle) {
  const auto m = build_fig2(1.0, 0.9);
  const auto oracle = solve_fixed_point(MetricOperator::kBisimulation, m, 1e-10).first;
  PairSampler sampler = PairSampler::uniform(SampleMode::kOffPolicy, 7);
  const auto [est, rep] = run_sampled(m, sampler, std::nullopt, budget(100000));
  EXPECT_LE(sup_distance(est.metric, oracle), 1e-3);
  EXPECT_GE(est.metric(0, 1), 10.0 - 1e-3);
  EXPECT_LE(est.metric(0, 1), 10.0 + 1e-9);
  EXPECT_EQ(rep.stop, StopReason::kBudget);
  EXPECT_EQ(rep.steps, 100000u);
}

TEST(RunSampled, ZeroBudgetReturnsZeroMatrix) {
  const auto m = build_fig2(1.0, 0.9);
  PairSampler sampler = PairSampler::uniform(SampleMode::kOffPolicy, 1);
  const auto [est, rep] = run_sampled(m, sampler, std::nullopt, budget(0));
  EXPECT_EQ(est.metric, StateMetric(3));
  EXPECT_EQ(rep.steps, 0u);
}

TEST(RunSampled, StallWindowFiresAfterConvergence) {
  const auto m = build_fig2(1.0, 0.9);
  PairSampler sampler = PairSampler::uniform(SampleMode::kOffPolicy, 2);
  SampledRunOptions o = budget(10'000'000);
  o.stall_window = 500;
  o.tol = 1e-9;
  const auto [est, rep] = run_sampled(m, sampler, std::nullopt, o);
  EXPECT_EQ(rep.stop, StopReason::kStall);
  EXPECT_LT(rep.steps, 10'000'000u);
  EXPECT_EQ(rep.steps - rep.last_improvement_step, 500u);
}

TEST(RunSampled, PolicyPresenceMustMatchMode) {
  const auto m = build_fig2(1.0, 0.9);
  PairSampler off = PairSampler::uniform(SampleMode::kOffPolicy, 1);
  PairSampler on = PairSampler::uniform(SampleMode::kOnPolicy, 1);
  EXPECT_THROW(run_sampled(m, on, std::nullopt, budget(10)), InputError);
  EXPECT_THROW(run_sampled(m, off, DeterministicPolicy{{0, 1, 0}}, budget(10)), InputError);
}

TEST(RunSampled, TraceRecordsEveryStrictIncrease) {
  const auto m = build_fig2(1.0, 0.9);
  PairSampler sampler = PairSampler::uniform(SampleMode::kOffPolicy, 4);
  std::vector<UpdateTrace> log;
  SampledRunOptions o = budget(2000);
  o.trace = [&](const UpdateTrace& t) { log.push_back(t); };
  const auto [est, rep] = run_sampled(m, sampler, std::nullopt, o);
  EXPECT_EQ(log.size(), rep.updates_applied);
  for (const auto& t : log) EXPECT_GT(t.new_value, t.old_value);
}

TEST(ReplaySampler, RespectsActionsAndRejectsDegenerateBuffers) {
  const auto m = build_fig2(1.0, 0.9);
  std::vector<Transition> buf;
  for (StateId s = 0; s < 3; ++s)
    for (ActionId a = 0; a < 2; ++a) buf.push_back(transition_of(m, s, a));
  PairSampler replay = PairSampler::replay(SampleMode::kOffPolicy, 5, buf);
  for (int k = 0; k < 500; ++k) {
    const auto p = replay.draw(m, nullptr);
    EXPECT_EQ(p.first.action, p.second.action);
    EXPECT_NE(p.first.state, p.second.state);
  }
  const auto oracle = solve_fixed_point(MetricOperator::kBisimulation, m, 1e-10).first;
  PairSampler replay2 = PairSampler::replay(SampleMode::kOffPolicy, 5, buf);
  EXPECT_LE(sup_distance(run_sampled(m, replay2, std::nullopt, budget(100000)).first.metric, oracle), 1e-3);

  PairSampler one_state = PairSampler::replay(SampleMode::kOffPolicy, 1, {buf[0], buf[1]});
  EXPECT_THROW(one_state.draw(m, nullptr), InputError);
}

TEST(Coverage, FormulaAndEdgeCases) {
  const auto m = build_fig2(1.0, 0.9);
  const PairSampler sampler = PairSampler::uniform(SampleMode::kOffPolicy, 0);
  const auto rep = coverage_check(sampler, m, 100, 0.01);
  EXPECT_EQ(rep.num_pairs, 6u);
  EXPECT_DOUBLE_EQ(rep.pair_probability, 1.0 / 6.0);
  EXPECT_EQ(rep.min_samples, static_cast<std::size_t>(std::ceil(std::log(0.01) / std::log(1.0 - 1.0 / 6.0))));
  EXPECT_EQ(rep.min_samples, 26u);
  EXPECT_NEAR(rep.miss_probability, std::pow(5.0 / 6.0, 100.0), 1e-15);
  EXPECT_EQ(samples_for_coverage(0.25, 1.0), 0u);
  EXPECT_EQ(samples_for_coverage(1.0, 0.001), 1u);
  EXPECT_THROW(coverage_check(PairSampler::replay(SampleMode::kOffPolicy, 0, {}), m, 1, 0.5), InputError);
}

TEST(OnPolicy, ConvergesToFpiFixedPoint) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = random_deterministic_mdp(7, 3, 0.0, 1.0, 0.8, seed);
    const auto pi = greedy_policy(m, value_iteration_optimal(m, 1e-10));
    const auto oracle = solve_fixed_point(MetricOperator::kOnPolicy, m, 1e-10, pi).first;
    PairSampler sampler = PairSampler::uniform(SampleMode::kOnPolicy, seed);
    const auto [est, rep] = run_sampled(m, sampler, pi, budget(200000));
    EXPECT_LE(sup_distance(est.metric, oracle), 1e-3) << "seed " << seed;
  }
}

TEST(OnPolicy, StartStatesRestrictToReachablePairs) {
  // A chain 0 -> 1 -> 2 -> 2 under the policy; states 3 and 4 are unreachable from 0.
  DeterministicMdp m;
  m.num_states = 5;
  m.num_actions = 1;
  m.gamma = 0.9;
  m.next_state = {1, 2, 2, 4, 3};
  m.reward = {1.0, 0.0, 0.5, 2.0, 0.0};
  const DeterministicPolicy pi{{0, 0, 0, 0, 0}};
  PairSampler sampler = PairSampler::uniform(SampleMode::kOnPolicy, 3);
  sampler.set_start_states({0});
  EXPECT_EQ(sampler.active_states(m, &pi), (std::vector<StateId>{0, 1, 2}));
  EXPECT_EQ(sampler.num_pairs(m, &pi), 3u);
  const auto [est, rep] = run_sampled(m, sampler, pi, budget(50000));
  const auto oracle = solve_fixed_point(MetricOperator::kOnPolicy, m, 1e-10, pi).first;
  for (StateId s = 0; s < 3; ++s)
    for (StateId t = 0; t < 3; ++t) EXPECT_NEAR(est.metric(s, t), oracle(s, t), 1e-3);
  EXPECT_EQ(est.metric(3, 4), 0.0);
  EXPECT_EQ(est.metric(0, 3), 0.0);
}

// --- properties ----------------------------------------------------------------

TEST(SampledProperty, MonotoneAndBoundedByFixedPoint) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto m = random_deterministic_mdp(3 + seed, 2, -1.0, 1.0, 0.9, seed);
    const auto oracle = solve_fixed_point(MetricOperator::kBisimulation, m, 1e-10).first;
    PairSampler sampler = PairSampler::uniform(SampleMode::kOffPolicy, seed);
    StateMetric prev(m.num_states);
    bool ok = true;
    SampledRunOptions o = budget(20000);
    o.checkpoint_every = 100;
    o.checkpoint = [&](const SampledEstimate& e) {
      for (std::size_t i = 0; i < prev.data().size(); ++i) {
        ok &= e.metric.data()[i] >= prev.data()[i];
        ok &= e.metric.data()[i] <= oracle.data()[i] + 1e-9;
      }
      prev = e.metric;
    };
    run_sampled(m, sampler, std::nullopt, o);
    EXPECT_TRUE(ok) << "seed " << seed;
  }
}

TEST(SampledProperty, SeedsAgree) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = random_deterministic_mdp(6, 3, 0.0, 1.0, 0.85, seed);
    PairSampler a = PairSampler::uniform(SampleMode::kOffPolicy, 100 + seed);
    PairSampler b = PairSampler::uniform(SampleMode::kOffPolicy, 200 + seed);
    const auto da = run_sampled(m, a, std::nullopt, budget(100000)).first.metric;
    const auto db = run_sampled(m, b, std::nullopt, budget(100000)).first.metric;
    EXPECT_LE(sup_distance(da, db), 2e-3);
  }
}

TEST(SampledProperty, UniformSamplerCoversEveryPair) {
  const auto m = random_deterministic_mdp(6, 3, 0.0, 1.0, 0.9, 1);
  PairSampler sampler = PairSampler::uniform(SampleMode::kOffPolicy, 9);
  const auto cov = coverage_check(sampler, m, 0, 1e-6);
  std::vector<int> seen(6 * 6 * 3, 0);
  for (std::size_t k = 0; k < cov.min_samples; ++k) {
    const auto p = sampler.draw(m, nullptr);
    ASSERT_LT(p.first.state, p.second.state);
    seen[(p.first.state * 6 + p.second.state) * 3 + p.first.action] = 1;
  }
  int covered = 0;
  for (int v : seen) covered += v;
  EXPECT_EQ(static_cast<std::size_t>(covered), cov.num_pairs);
}
