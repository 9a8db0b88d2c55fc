#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "bisim/environments.hpp"
#include "bisim/errors.hpp"
#include "bisim/mdp.hpp"
#include "bisim/state_metric.hpp"

namespace bisim {

enum class SampleMode { kOffPolicy, kOnPolicy };

/// Two transitions compared by one sampled update. Off-policy pairs share
/// the action; on-policy pairs carry each state's own policy action.
struct TransitionPair {
  Transition first;
  Transition second;
};

inline bool consistent_with(const TransitionPair& p, const DeterministicMdp& mdp) {
  auto ok = [&](const Transition& x) {
    return x.state < mdp.num_states && x.action < mdp.num_actions &&
           x.reward == mdp.r(x.state, x.action) && x.next == mdp.next(x.state, x.action);
  };
  return ok(p.first) && ok(p.second);
}

struct SampledEstimate {
  StateMetric metric;
  std::size_t steps = 0;            // pairs processed
  std::size_t updates_applied = 0;  // strict increases
  std::size_t last_improvement_step = 0;

  explicit SampledEstimate(std::size_t n) : metric(n) {}
};

/// Max-backup update on a single pair:
///   d(s,t) <- max(d(s,t), |r_s - r_t| + gamma d(ns, nt)).
/// Writes both (s,t) and (t,s). Returns the increase (0 if none).
inline double sampled_update(SampledEstimate& est, const TransitionPair& pair, double gamma) {
  const StateId s = pair.first.state, t = pair.second.state;
  if (s == t) throw InputError("sampled_update: pair has identical states");
  const auto& d = est.metric;
  const double backup =
      std::abs(pair.first.reward - pair.second.reward) + gamma * d(pair.first.next, pair.second.next);
  const double old = d(s, t);
  ++est.steps;
  if (backup > old) {
    est.metric.set_symmetric(s, t, backup);
    ++est.updates_applied;
    return backup - old;
  }
  return 0.0;
}

/// Source of transition pairs: uniform over the pair set T, or uniform draws
/// of two stored transitions from a replay buffer.
class PairSampler {
 public:
  enum class Kind { kUniform, kReplay };

  PairSampler(Kind kind, SampleMode mode, std::uint64_t seed) : kind_(kind), mode_(mode), rng_(seed) {}

  static PairSampler uniform(SampleMode mode, std::uint64_t seed) {
    return PairSampler(Kind::kUniform, mode, seed);
  }
  static PairSampler replay(SampleMode mode, std::uint64_t seed, std::vector<Transition> buffer) {
    PairSampler p(Kind::kReplay, mode, seed);
    p.buffer_ = std::move(buffer);
    return p;
  }

  Kind kind() const { return kind_; }
  SampleMode mode() const { return mode_; }
  void add(const Transition& tr) { buffer_.push_back(tr); }
  const std::vector<Transition>& buffer() const { return buffer_; }

  // Restricts on-policy uniform sampling to states reachable from these
  // starts under the policy. Default: every state.
  void set_start_states(std::vector<StateId> starts) { starts_ = std::move(starts); }

  /// States whose pairs the uniform sampler covers.
  std::vector<StateId> active_states(const DeterministicMdp& mdp,
                                     const DeterministicPolicy* policy) const {
    std::vector<StateId> all;
    if (mode_ == SampleMode::kOffPolicy || !starts_ || !policy) {
      for (StateId s = 0; s < mdp.num_states; ++s) all.push_back(s);
      return all;
    }
    std::vector<bool> seen(mdp.num_states, false);
    std::vector<StateId> stack;
    for (StateId s : *starts_)
      if (s < mdp.num_states && !seen[s]) {
        seen[s] = true;
        stack.push_back(s);
      }
    while (!stack.empty()) {
      const StateId s = stack.back();
      stack.pop_back();
      const StateId n = mdp.next(s, (*policy)(s));
      if (!seen[n]) {
        seen[n] = true;
        stack.push_back(n);
      }
    }
    for (StateId s = 0; s < mdp.num_states; ++s)
      if (seen[s]) all.push_back(s);
    return all;
  }

  /// Number of elements of T that uniform mode draws from.
  std::size_t num_pairs(const DeterministicMdp& mdp, const DeterministicPolicy* policy) const {
    const std::size_t k = active_states(mdp, policy).size();
    const std::size_t unordered = k * (k - (k > 0 ? 1 : 0)) / 2;
    return mode_ == SampleMode::kOffPolicy ? unordered * mdp.num_actions : unordered;
  }

  TransitionPair draw(const DeterministicMdp& mdp, const DeterministicPolicy* policy) {
    return kind_ == Kind::kUniform ? draw_uniform(mdp, policy) : draw_replay();
  }

 private:
  TransitionPair draw_uniform(const DeterministicMdp& mdp, const DeterministicPolicy* policy) {
    if (!cache_valid_) {
      active_ = active_states(mdp, policy);
      cache_valid_ = true;
    }
    const std::size_t k = active_.size();
    if (k < 2) throw InputError("pair sampler needs at least two states");
    const std::size_t unordered = k * (k - 1) / 2;
    const std::size_t actions = mode_ == SampleMode::kOffPolicy ? mdp.num_actions : 1;
    std::uniform_int_distribution<std::size_t> pick(0, unordered * actions - 1);
    std::size_t idx = pick(rng_);
    const std::size_t a = idx % actions;
    idx /= actions;
    // Unrank idx into (i, j) with i < j.
    std::size_t i = 0;
    while (idx >= k - 1 - i) {
      idx -= k - 1 - i;
      ++i;
    }
    const StateId s = active_[i], t = active_[i + 1 + idx];
    if (mode_ == SampleMode::kOffPolicy) return {transition_of(mdp, s, a), transition_of(mdp, t, a)};
    return {transition_of(mdp, s, (*policy)(s)), transition_of(mdp, t, (*policy)(t))};
  }

  TransitionPair draw_replay() {
    if (buffer_.size() < 2) throw InputError("replay buffer needs at least two transitions");
    std::uniform_int_distribution<std::size_t> pick(0, buffer_.size() - 1);
    const std::size_t max_tries = 1000 * buffer_.size();
    for (std::size_t tries = 0; tries < max_tries; ++tries) {
      const Transition& x = buffer_[pick(rng_)];
      const Transition& y = buffer_[pick(rng_)];
      if (x.state == y.state) continue;
      if (mode_ == SampleMode::kOffPolicy && x.action != y.action) continue;
      return {x, y};
    }
    throw InputError("replay buffer holds no usable transition pair");
  }

  Kind kind_;
  SampleMode mode_;
  Rng rng_;
  std::vector<Transition> buffer_;
  std::optional<std::vector<StateId>> starts_;
  std::vector<StateId> active_;
  bool cache_valid_ = false;
};

struct UpdateTrace {
  std::size_t step;
  StateId s, t;
  double old_value, new_value;
};

struct SampledRunOptions {
  std::size_t budget = 0;
  // Stop once no entry grew by more than `tol` for this many consecutive
  // samples. 0 disables the rule.
  std::size_t stall_window = 0;
  double tol = 0.0;
  std::function<void(const UpdateTrace&)> trace;
  // Called after every `checkpoint_every`-th sample.
  std::size_t checkpoint_every = 0;
  std::function<void(const SampledEstimate&)> checkpoint;
};

enum class StopReason { kBudget, kStall };

struct SampledRunReport {
  StopReason stop = StopReason::kBudget;
  std::size_t steps = 0;
  std::size_t updates_applied = 0;
  std::size_t last_improvement_step = 0;
};

inline std::pair<SampledEstimate, SampledRunReport> run_sampled(
    const DeterministicMdp& mdp, PairSampler& sampler,
    const std::optional<DeterministicPolicy>& policy, const SampledRunOptions& opt) {
  if (sampler.mode() == SampleMode::kOnPolicy && !policy)
    throw InputError("on-policy sampling requires a policy");
  if (sampler.mode() == SampleMode::kOffPolicy && policy)
    throw InputError("off-policy sampling does not take a policy");
  const DeterministicPolicy* pi = policy ? &*policy : nullptr;

  SampledEstimate est(mdp.num_states);
  SampledRunReport rep;
  while (est.steps < opt.budget) {
    const TransitionPair pair = sampler.draw(mdp, pi);
    const StateId s = pair.first.state, t = pair.second.state;
    const double old = est.metric(s, t);
    const double gain = sampled_update(est, pair, mdp.gamma);
    if (gain > 0.0 && opt.trace) opt.trace({est.steps, s, t, old, est.metric(s, t)});
    if (gain > opt.tol) est.last_improvement_step = est.steps;
    if (opt.checkpoint && opt.checkpoint_every > 0 && est.steps % opt.checkpoint_every == 0)
      opt.checkpoint(est);
    if (opt.stall_window > 0 && est.steps - est.last_improvement_step >= opt.stall_window) {
      rep.stop = StopReason::kStall;
      break;
    }
  }
  rep.steps = est.steps;
  rep.updates_applied = est.updates_applied;
  rep.last_improvement_step = est.last_improvement_step;
  return {std::move(est), rep};
}

struct CoverageReport {
  std::size_t num_pairs = 0;
  double pair_probability = 0.0;
  // (1 - D)^n: chance a given pair is still unsampled after n draws.
  double miss_probability = 0.0;
  // Union bound over all pairs, capped at 1.
  double any_miss_bound = 0.0;
  // Smallest n with per-pair miss probability <= delta.
  std::size_t min_samples = 0;
};

/// Samples needed for every pair to be drawn at least once with
/// per-pair probability 1 - delta: ceil(ln delta / ln(1 - D)).
inline std::size_t samples_for_coverage(double pair_probability, double delta) {
  if (delta >= 1.0) return 0;
  if (pair_probability >= 1.0) return 1;
  if (!(pair_probability > 0.0) || !(delta > 0.0))
    throw InputError("coverage needs pair probability and delta in (0, 1]");
  return static_cast<std::size_t>(std::ceil(std::log(delta) / std::log1p(-pair_probability)));
}

inline CoverageReport coverage_check(const PairSampler& sampler, const DeterministicMdp& mdp,
                                     std::size_t n, double delta,
                                     const DeterministicPolicy* policy = nullptr) {
  if (sampler.kind() != PairSampler::Kind::kUniform)
    throw InputError("coverage_check applies to the uniform sampler only");
  CoverageReport rep;
  rep.num_pairs = sampler.num_pairs(mdp, policy);
  if (rep.num_pairs == 0) throw InputError("sampler covers no pairs");
  rep.pair_probability = 1.0 / static_cast<double>(rep.num_pairs);
  rep.miss_probability = std::pow(1.0 - rep.pair_probability, static_cast<double>(n));
  rep.any_miss_bound =
      std::min(1.0, static_cast<double>(rep.num_pairs) * rep.miss_probability);
  rep.min_samples = samples_for_coverage(rep.pair_probability, delta);
  return rep;
}

}  // namespace bisim
