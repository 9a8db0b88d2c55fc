#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "bisim/errors.hpp"
#include "bisim/exact_metrics.hpp"
#include "bisim/mdp.hpp"
#include "bisim/state_metric.hpp"

namespace bisim {

using PairList = std::vector<std::pair<StateId, StateId>>;
using PairDistance = std::function<double(StateId, StateId)>;

inline PairList all_ordered_pairs(std::size_t n) {
  PairList p;
  for (StateId s = 0; s < n; ++s)
    for (StateId t = 0; t < n; ++t) p.emplace_back(s, t);
  return p;
}

struct ErrorReport {
  double absolute_error = 0.0;
  // Empty when the approximant has zero L2 norm on the off-diagonal pairs.
  std::optional<double> normalized_error;
  double diagonal_residual = 0.0;
  double asymmetry = 0.0;
};

/// Sup-norm errors of an approximant against an oracle metric.
///
/// absolute_error is taken over `pairs`. The normalized error uses only the
/// off-diagonal members of `pairs`, both for the two L2 norms and for the
/// sup, so the forced-zero diagonal does not dilute the norms.
/// diagonal_residual and asymmetry are computed over all states.
inline ErrorReport metric_errors(const StateMetric& oracle, const PairDistance& approx,
                                 const PairList& pairs) {
  if (pairs.empty()) throw InputError("metric_errors: empty pair list");
  ErrorReport rep;
  double oracle_sq = 0.0, approx_sq = 0.0;
  for (const auto& [s, t] : pairs) {
    if (s >= oracle.size() || t >= oracle.size()) throw InputError("metric_errors: pair out of range");
    const double a = approx(s, t);
    rep.absolute_error = std::max(rep.absolute_error, std::abs(oracle(s, t) - a));
    if (s != t) {
      oracle_sq += oracle(s, t) * oracle(s, t);
      approx_sq += a * a;
    }
  }
  if (approx_sq > 0.0 && oracle_sq > 0.0) {
    const double no = std::sqrt(oracle_sq), na = std::sqrt(approx_sq);
    double worst = 0.0;
    for (const auto& [s, t] : pairs)
      if (s != t) worst = std::max(worst, std::abs(oracle(s, t) / no - approx(s, t) / na));
    rep.normalized_error = worst;
  }
  for (StateId s = 0; s < oracle.size(); ++s) {
    rep.diagonal_residual = std::max(rep.diagonal_residual, std::abs(approx(s, s)));
    for (StateId t = s + 1; t < oracle.size(); ++t)
      rep.asymmetry = std::max(rep.asymmetry, std::abs(approx(s, t) - approx(t, s)));
  }
  return rep;
}

inline ErrorReport metric_errors(const StateMetric& oracle, const PairDistance& approx) {
  return metric_errors(oracle, approx, all_ordered_pairs(oracle.size()));
}

/// Largest (lhs - rhs) over all pairs for each audited inequality; values
/// <= 0 mean the bound holds with that much slack.
struct BoundAudit {
  double value_vs_lax = 0.0;      // |V*(s) - V*(t)| - d_lax(s,t)
  double lax_vs_bisim = 0.0;      // d_lax(s,t) - d~(s,t)
  double policy_vs_onpolicy = 0.0;  // |V^pi(s) - V^pi(t)| - d^pi(s,t)

  double max_violation() const {
    return std::max({0.0, value_vs_lax, lax_vs_bisim, policy_vs_onpolicy});
  }
};

/// Solves for V*, V^pi, d~, d^pi and d_lax and audits
///   |V*(s) - V*(t)| <= d_lax(s,t) <= d~(s,t),  |V^pi(s) - V^pi(t)| <= d^pi(s,t).
/// Each solver runs at tol/4, so any single inequality is off by at most tol
/// from solver error. The policy defaults to the greedy policy of V*.
inline BoundAudit audit_bounds(const DeterministicMdp& mdp, double tol,
                               std::optional<DeterministicPolicy> policy = std::nullopt) {
  const double t4 = tol / 4.0;
  const ValueFunction vstar = value_iteration_optimal(mdp, t4);
  if (!policy) policy = greedy_policy(mdp, vstar);
  const ValueFunction vpi = value_iteration_policy(mdp, *policy, t4);
  const StateMetric bisim = solve_fixed_point(MetricOperator::kBisimulation, mdp, t4).first;
  const StateMetric lax = solve_fixed_point(MetricOperator::kLax, mdp, t4).first;
  const StateMetric onpol = solve_fixed_point(MetricOperator::kOnPolicy, mdp, t4, policy).first;

  BoundAudit a;
  a.value_vs_lax = a.lax_vs_bisim = a.policy_vs_onpolicy = -std::numeric_limits<double>::infinity();
  for (StateId s = 0; s < mdp.num_states; ++s)
    for (StateId t = 0; t < mdp.num_states; ++t) {
      a.value_vs_lax = std::max(a.value_vs_lax, std::abs(vstar(s) - vstar(t)) - lax(s, t));
      a.lax_vs_bisim = std::max(a.lax_vs_bisim, lax(s, t) - bisim(s, t));
      a.policy_vs_onpolicy = std::max(a.policy_vs_onpolicy, std::abs(vpi(s) - vpi(t)) - onpol(s, t));
    }
  return a;
}

struct Clustering {
  std::vector<std::size_t> cluster_of;
  double epsilon = 0.0;

  std::size_t num_clusters() const {
    return cluster_of.empty() ? 0 : *std::max_element(cluster_of.begin(), cluster_of.end()) + 1;
  }
};

/// Greedy first-fit aggregation in index order: item i joins the first
/// cluster whose members are all within epsilon of it, else opens a new one.
/// The result depends on the item order.
inline Clustering aggregate(std::size_t n, const PairDistance& dist, double epsilon) {
  if (!(epsilon >= 0.0)) throw InputError("epsilon must be nonnegative");
  Clustering c;
  c.epsilon = epsilon;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t chosen = members.size();
    for (std::size_t k = 0; k < members.size() && chosen == members.size(); ++k) {
      const bool fits = std::all_of(members[k].begin(), members[k].end(), [&](std::size_t j) {
        return dist(i, j) <= epsilon && dist(j, i) <= epsilon;
      });
      if (fits) chosen = k;
    }
    if (chosen == members.size()) members.emplace_back();
    members[chosen].push_back(i);
    c.cluster_of.push_back(chosen);
  }
  return c;
}

inline Clustering aggregate(const StateMetric& d, double epsilon) {
  return aggregate(d.size(), [&](StateId s, StateId t) { return d(s, t); }, epsilon);
}

}  // namespace bisim
