#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "bisim/errors.hpp"
#include "bisim/mdp.hpp"
#include "bisim/state_metric.hpp"
#include "bisim/wasserstein.hpp"

namespace bisim {

enum class MetricOperator { kBisimulation, kOnPolicy, kLax };

inline MetricOperator parse_operator(std::string_view s) {
  if (s == "bisim") return MetricOperator::kBisimulation;
  if (s == "pi-bisim") return MetricOperator::kOnPolicy;
  if (s == "lax") return MetricOperator::kLax;
  throw InputError("unknown metric mode '" + std::string(s) + "'");
}

struct SolverReport {
  std::size_t iterations = 0;
  // Sup-norm change of the last sweep.
  double final_residual = 0.0;
  // final_residual * gamma / (1 - gamma): bound on the distance to the fixed point.
  double guaranteed_error = 0.0;
  // ceil(ln tol / ln gamma), the iteration count that suffices for 1-bounded metrics.
  std::size_t apriori_iterations = 0;
};

namespace detail {

// Fills the upper triangle from `cell(s, t)` and mirrors it.
template <class Cell>
StateMetric sweep_pairs(std::size_t n, Cell cell) {
  StateMetric out(n);
  for (StateId s = 0; s < n; ++s)
    for (StateId t = s + 1; t < n; ++t) out.set_symmetric(s, t, cell(s, t));
  return out;
}

inline void check_metric_size(const StateMetric& d, std::size_t n) {
  if (d.size() != n) throw InputError("metric size does not match the MDP");
}

}  // namespace detail

/// One application of the bisimulation operator on a deterministic MDP:
///   F(d)(s,t) = max_a |R(s,a) - R(t,a)| + gamma d(N(s,a), N(t,a)).
inline StateMetric apply_F(const DeterministicMdp& mdp, const StateMetric& d) {
  detail::check_metric_size(d, mdp.num_states);
  return detail::sweep_pairs(mdp.num_states, [&](StateId s, StateId t) {
    double best = 0.0;
    for (ActionId a = 0; a < mdp.num_actions; ++a) {
      const double v = std::abs(mdp.r(s, a) - mdp.r(t, a)) +
                       mdp.gamma * wasserstein_deterministic(d, mdp.next(s, a), mdp.next(t, a));
      best = std::max(best, v);
    }
    return best;
  });
}

/// On-policy operator: each state follows its own action pi(s).
inline StateMetric apply_F_pi(const DeterministicMdp& mdp, const DeterministicPolicy& policy,
                              const StateMetric& d) {
  detail::check_metric_size(d, mdp.num_states);
  return detail::sweep_pairs(mdp.num_states, [&](StateId s, StateId t) {
    const ActionId as = policy(s), at = policy(t);
    return std::abs(mdp.r(s, as) - mdp.r(t, at)) +
           mdp.gamma * wasserstein_deterministic(d, mdp.next(s, as), mdp.next(t, at));
  });
}

/// Lax operator: Hausdorff lift of the state-action distance
///   delta(d)((s,a),(t,b)) = |R(s,a) - R(t,b)| + gamma d(N(s,a), N(t,b))
/// over the action sets of s and t.
inline StateMetric apply_F_lax(const DeterministicMdp& mdp, const StateMetric& d) {
  detail::check_metric_size(d, mdp.num_states);
  const std::size_t na = mdp.num_actions;
  std::vector<double> delta(na * na);
  return detail::sweep_pairs(mdp.num_states, [&](StateId s, StateId t) {
    for (ActionId a = 0; a < na; ++a)
      for (ActionId b = 0; b < na; ++b)
        delta[a * na + b] = std::abs(mdp.r(s, a) - mdp.r(t, b)) +
                            mdp.gamma * d(mdp.next(s, a), mdp.next(t, b));
    double s_to_t = 0.0, t_to_s = 0.0;
    for (ActionId a = 0; a < na; ++a) {
      double row_min = std::numeric_limits<double>::infinity();
      double col_min = std::numeric_limits<double>::infinity();
      for (ActionId b = 0; b < na; ++b) {
        row_min = std::min(row_min, delta[a * na + b]);
        col_min = std::min(col_min, delta[b * na + a]);
      }
      s_to_t = std::max(s_to_t, row_min);
      t_to_s = std::max(t_to_s, col_min);
    }
    return std::max(s_to_t, t_to_s);
  });
}

/// General-MDP operator with the Wasserstein term solved as a transport LP.
/// Costs one LP per (pair, action); meant for small validation instances.
inline StateMetric apply_F_stochastic(const StochasticMdp& mdp, const StateMetric& d) {
  detail::check_metric_size(d, mdp.num_states);
  const std::size_t n = mdp.num_states;
  const CostMatrix cost = CostMatrix::from_metric(d);
  auto row = [&](StateId s, ActionId a) {
    const double* p = mdp.dist(s, a);
    return Distribution{std::vector<double>(p, p + n)};
  };
  return detail::sweep_pairs(n, [&](StateId s, StateId t) {
    double best = 0.0;
    for (ActionId a = 0; a < mdp.num_actions; ++a) {
      const double w = wasserstein_dual(row(s, a), row(t, a), cost).objective;
      best = std::max(best, std::abs(mdp.r(s, a) - mdp.r(t, a)) + mdp.gamma * w);
    }
    return best;
  });
}

inline std::size_t apriori_iteration_bound(double tol, double gamma) {
  if (gamma <= 0.0) return 1;
  if (tol >= 1.0) return 0;
  return static_cast<std::size_t>(std::ceil(std::log(tol) / std::log(gamma)));
}

/// Iterates `step` from the zero metric until the sweep change certifies
/// ||d - fixed point|| <= tol.
template <class Step>
std::pair<StateMetric, SolverReport> iterate_metric(std::size_t n, double gamma, double tol,
                                                    Step step) {
  if (!(tol > 0.0)) throw InputError("tolerance must be positive");
  const double threshold = residual_threshold(tol, gamma);
  StateMetric d(n);
  SolverReport rep;
  rep.apriori_iterations = apriori_iteration_bound(tol, gamma);
  for (;;) {
    StateMetric next = step(d);
    rep.final_residual = sup_distance(next, d);
    ++rep.iterations;
    d = std::move(next);
    if (rep.final_residual <= threshold || at_rounding_floor(rep.final_residual, d.max_entry()))
      break;
  }
  rep.guaranteed_error = gamma > 0.0 ? rep.final_residual * gamma / (1.0 - gamma) : 0.0;
  return {std::move(d), rep};
}

/// Least fixed point of the selected operator, starting from d = 0.
inline std::pair<StateMetric, SolverReport> solve_fixed_point(
    MetricOperator op, const DeterministicMdp& mdp, double tol,
    const std::optional<DeterministicPolicy>& policy = std::nullopt) {
  switch (op) {
    case MetricOperator::kBisimulation:
      return iterate_metric(mdp.num_states, mdp.gamma, tol,
                            [&](const StateMetric& d) { return apply_F(mdp, d); });
    case MetricOperator::kOnPolicy:
      if (!policy) throw InputError("on-policy metric requires a policy");
      if (auto v = validate(*policy, mdp); !v.ok()) throw InputError("invalid policy:\n" + v.summary());
      return iterate_metric(mdp.num_states, mdp.gamma, tol,
                            [&](const StateMetric& d) { return apply_F_pi(mdp, *policy, d); });
    case MetricOperator::kLax:
      return iterate_metric(mdp.num_states, mdp.gamma, tol,
                            [&](const StateMetric& d) { return apply_F_lax(mdp, d); });
  }
  throw InputError("unknown metric operator");
}

inline std::pair<StateMetric, SolverReport> solve_fixed_point(const StochasticMdp& mdp,
                                                              double tol) {
  return iterate_metric(mdp.num_states, mdp.gamma, tol,
                        [&](const StateMetric& d) { return apply_F_stochastic(mdp, d); });
}

}  // namespace bisim
