#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bisim/errors.hpp"
#include "bisim/mdp.hpp"

namespace bisim {

/// Dense |S|x|S| distance matrix. Every solver returns one of these.
///
/// The class does not enforce the pseudometric axioms on write (iterates of
/// the approximate solvers are allowed to be anything); use
/// check_pseudometric() at fixed points.
class StateMetric {
 public:
  StateMetric() = default;
  explicit StateMetric(std::size_t n, double fill = 0.0) : n_(n), dist_(n * n, fill) {
    for (std::size_t i = 0; i < n; ++i) dist_[i * n + i] = 0.0;
  }
  StateMetric(std::size_t n, std::vector<double> row_major) : n_(n), dist_(std::move(row_major)) {
    if (dist_.size() != n * n) throw InputError("metric data does not match size");
  }

  std::size_t size() const { return n_; }

  double operator()(StateId s, StateId t) const { return dist_[s * n_ + t]; }
  double& at(StateId s, StateId t) { return dist_[s * n_ + t]; }

  void set_symmetric(StateId s, StateId t, double v) {
    dist_[s * n_ + t] = v;
    dist_[t * n_ + s] = v;
  }

  const std::vector<double>& data() const { return dist_; }

  double max_entry() const {
    double m = 0.0;
    for (double x : dist_) m = std::max(m, x);
    return m;
  }

  friend bool operator==(const StateMetric&, const StateMetric&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> dist_;
};

inline double sup_distance(const StateMetric& a, const StateMetric& b) {
  if (a.size() != b.size()) throw InputError("metric size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

struct MetricCheck {
  double max_diagonal = 0.0;
  double max_asymmetry = 0.0;
  double min_entry = 0.0;
  double max_triangle_excess = 0.0;

  bool ok(double tol) const {
    return max_diagonal <= tol && max_asymmetry <= tol && min_entry >= -tol &&
           max_triangle_excess <= tol;
  }
};

/// Measures how far `d` is from a pseudometric. O(n^3) for the triangle term.
inline MetricCheck check_pseudometric(const StateMetric& d) {
  MetricCheck c;
  const std::size_t n = d.size();
  for (std::size_t s = 0; s < n; ++s) {
    c.max_diagonal = std::max(c.max_diagonal, std::abs(d(s, s)));
    for (std::size_t t = 0; t < n; ++t) {
      c.max_asymmetry = std::max(c.max_asymmetry, std::abs(d(s, t) - d(t, s)));
      c.min_entry = std::min(c.min_entry, d(s, t));
      for (std::size_t u = 0; u < n; ++u)
        c.max_triangle_excess = std::max(c.max_triangle_excess, d(s, t) - d(s, u) - d(u, t));
    }
  }
  return c;
}

}  // namespace bisim
