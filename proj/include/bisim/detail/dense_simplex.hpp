#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bisim::detail {

struct LpResult {
  double objective = 0.0;
  std::vector<double> x;
};

/// Tableau simplex for   max c'x  s.t.  A x <= b,  x >= 0,  with b >= 0.
///
/// The origin is feasible so no phase one is needed. Bland's rule (lowest
/// index enters, lowest basic index leaves among ratio ties) rules out
/// cycling on degenerate vertices. A is row-major, rows x cols.
inline LpResult solve_lp_max(std::size_t rows, std::size_t cols, const std::vector<double>& a,
                             const std::vector<double>& b, const std::vector<double>& c,
                             double eps = 1e-12) {
  const std::size_t width = cols + rows + 1;  // structural, slack, rhs
  std::vector<double> t((rows + 1) * width, 0.0);
  auto at = [&](std::size_t r, std::size_t k) -> double& { return t[r * width + k]; };
  std::vector<std::size_t> basis(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (b[r] < 0.0) throw std::invalid_argument("solve_lp_max: negative rhs");
    for (std::size_t k = 0; k < cols; ++k) at(r, k) = a[r * cols + k];
    at(r, cols + r) = 1.0;
    at(r, width - 1) = b[r];
    basis[r] = cols + r;
  }
  // Objective row holds -c so that a negative entry marks an improving column.
  for (std::size_t k = 0; k < cols; ++k) at(rows, k) = -c[k];

  const std::size_t max_pivots = 50 * (rows + cols) + 1000;
  for (std::size_t pivots = 0;; ++pivots) {
    if (pivots > max_pivots) throw std::runtime_error("solve_lp_max: pivot limit exceeded");
    std::size_t enter = width;
    for (std::size_t k = 0; k + 1 < width; ++k)
      if (at(rows, k) < -eps) {
        enter = k;
        break;
      }
    if (enter == width) break;

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rows; ++r)
      if (at(r, enter) > eps) best = std::min(best, at(r, width - 1) / at(r, enter));
    if (!std::isfinite(best)) throw std::runtime_error("solve_lp_max: unbounded");
    std::size_t leave = rows;
    for (std::size_t r = 0; r < rows; ++r) {
      if (at(r, enter) <= eps) continue;
      if (at(r, width - 1) / at(r, enter) > best + eps) continue;
      if (leave == rows || basis[r] < basis[leave]) leave = r;
    }

    const double pivot = at(leave, enter);
    for (std::size_t k = 0; k < width; ++k) at(leave, k) /= pivot;
    for (std::size_t r = 0; r <= rows; ++r) {
      if (r == leave) continue;
      const double f = at(r, enter);
      if (f == 0.0) continue;
      for (std::size_t k = 0; k < width; ++k) at(r, k) -= f * at(leave, k);
    }
    basis[leave] = enter;
  }

  LpResult res;
  res.x.assign(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    if (basis[r] < cols) res.x[basis[r]] = at(r, width - 1);
  res.objective = 0.0;
  for (std::size_t k = 0; k < cols; ++k) res.objective += c[k] * res.x[k];
  return res;
}

}  // namespace bisim::detail
