#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "bisim/detail/dense_simplex.hpp"
#include "bisim/detail/transport_simplex.hpp"
#include "bisim/errors.hpp"
#include "bisim/state_metric.hpp"

namespace bisim {

/// Probability vector over a finite state set.
struct Distribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }

  static Distribution dirac(std::size_t n, std::size_t at) {
    Distribution d{std::vector<double>(n, 0.0)};
    d.probs.at(at) = 1.0;
    return d;
  }
};

inline void require_valid(const Distribution& x) {
  double sum = 0.0;
  for (double p : x.probs) {
    if (!(p >= 0.0)) throw InputError("distribution has a negative or NaN entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InputError("distribution does not sum to 1");
}

/// Ground cost between support points; square, row = source point.
struct CostMatrix {
  std::size_t n = 0;
  std::vector<double> cost;  // n*n, row-major

  double operator()(std::size_t i, std::size_t j) const { return cost[i * n + j]; }

  static CostMatrix from_metric(const StateMetric& d) { return {d.size(), d.data()}; }
};

/// Optimal coupling lambda(s', t') and its cost.
struct TransportPlan {
  std::size_t n = 0;
  std::vector<double> lambda;  // n*n, row-major
  double objective = 0.0;

  double operator()(std::size_t i, std::size_t j) const { return lambda[i * n + j]; }
};

namespace detail {

inline void check_instance(const Distribution& x, const Distribution& y, const CostMatrix& c) {
  if (x.size() != y.size()) throw InputError("wasserstein: mismatched support sizes");
  if (c.n != x.size() || c.cost.size() != c.n * c.n)
    throw InputError("wasserstein: cost matrix does not match support size");
  require_valid(x);
  require_valid(y);
  for (double v : c.cost)
    if (!(v >= 0.0)) throw InputError("wasserstein: cost entries must be nonnegative");
}

inline std::vector<std::size_t> support(const Distribution& x) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x.probs[i] > 0.0) idx.push_back(i);
  return idx;
}

}  // namespace detail

/// W1 as a minimum-cost transportation problem over couplings of (x, y).
inline TransportPlan wasserstein_dual(const Distribution& x, const Distribution& y,
                                      const CostMatrix& cost) {
  detail::check_instance(x, y, cost);
  const auto rows = detail::support(x);
  const auto cols = detail::support(y);

  TransportPlan plan;
  plan.n = x.size();
  plan.lambda.assign(plan.n * plan.n, 0.0);

  std::vector<double> supply, demand, c;
  for (auto i : rows) supply.push_back(x.probs[i]);
  for (auto j : cols) demand.push_back(y.probs[j]);
  for (auto i : rows)
    for (auto j : cols) c.push_back(cost(i, j));

  auto sol = detail::TransportSimplex(std::move(supply), std::move(demand), std::move(c)).solve();
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b)
      plan.lambda[rows[a] * plan.n + cols[b]] = sol.flow[a * cols.size() + b];
  plan.objective = sol.objective;
  return plan;
}

/// W1 through the potential-function LP.
///
/// Solves  max sum_i x_i f_i - sum_j y_j g_j  s.t.  f_i - g_j <= cost(i,j).
/// When cost is a pseudometric the optimal f and g coincide and this is the
/// single-potential program  max sum (x - y) u,  u_s - u_t <= d(s,t).
/// Potentials are boxed in [0, max_cost * max(n, 2)], which contains an
/// optimal solution (potentials are shift-invariant and their spread never
/// exceeds twice the largest cost).
inline double wasserstein_primal(const Distribution& x, const Distribution& y,
                                 const CostMatrix& cost) {
  detail::check_instance(x, y, cost);
  const auto rows = detail::support(x);
  const auto cols = detail::support(y);
  const std::size_t m = rows.size(), n = cols.size();

  double max_cost = 0.0;
  for (auto i : rows)
    for (auto j : cols) max_cost = std::max(max_cost, cost(i, j));
  const double box = max_cost * static_cast<double>(std::max<std::size_t>(x.size(), 2));

  // Variables: f (m), then g (n).
  const std::size_t vars = m + n;
  const std::size_t cons = m * n + vars;
  std::vector<double> a(cons * vars, 0.0), b(cons, 0.0), obj(vars, 0.0);
  std::size_t r = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j, ++r) {
      a[r * vars + i] = 1.0;
      a[r * vars + m + j] = -1.0;
      b[r] = cost(rows[i], cols[j]);
    }
  for (std::size_t k = 0; k < vars; ++k, ++r) {
    a[r * vars + k] = 1.0;
    b[r] = box;
  }
  for (std::size_t i = 0; i < m; ++i) obj[i] = x.probs[rows[i]];
  for (std::size_t j = 0; j < n; ++j) obj[m + j] = -y.probs[cols[j]];

  return detail::solve_lp_max(cons, vars, a, b, obj).objective;
}

/// Deterministic successors: the coupling of two Diracs is forced, so W1
/// reduces to a lookup of the ground metric.
inline double wasserstein_deterministic(const StateMetric& d, StateId s_next, StateId t_next) {
  return d(s_next, t_next);
}

}  // namespace bisim
