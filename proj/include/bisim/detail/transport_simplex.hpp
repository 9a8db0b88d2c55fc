#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bisim::detail {

struct TransportSolution {
  std::vector<double> flow;  // supply.size() x demand.size(), row-major
  double objective = 0.0;
};

/// Balanced transportation problem solved by the transportation simplex
/// (northwest-corner start, MODI potentials, stepping-stone pivots).
///
/// Entering and leaving cells are chosen by Bland's rule over the row-major
/// cell index, so degenerate pivots cannot cycle. All supplies and demands
/// must be strictly positive; callers drop empty rows and columns first.
class TransportSimplex {
 public:
  TransportSimplex(std::vector<double> supply, std::vector<double> demand,
                   std::vector<double> cost)
      : m_(supply.size()), n_(demand.size()), supply_(std::move(supply)),
        demand_(std::move(demand)), cost_(std::move(cost)) {
    if (m_ == 0 || n_ == 0) throw std::invalid_argument("transport: empty side");
    if (cost_.size() != m_ * n_) throw std::invalid_argument("transport: cost shape");
    double scale = 1.0;
    for (double c : cost_) scale = std::max(scale, std::abs(c));
    eps_ = 1e-12 * scale;
  }

  TransportSolution solve() {
    northwest_corner();
    const std::size_t limit = 1000 + 50 * m_ * n_;
    for (std::size_t it = 0;; ++it) {
      if (it > limit) throw std::runtime_error("transport: pivot limit exceeded");
      compute_potentials();
      std::size_t enter = m_ * n_;
      for (std::size_t k = 0; k < m_ * n_; ++k) {
        if (in_basis_[k]) continue;
        const std::size_t i = k / n_, j = k % n_;
        if (cost_[k] - u_[i] - v_[j] < -eps_) {
          enter = k;
          break;
        }
      }
      if (enter == m_ * n_) break;
      pivot(enter);
    }
    TransportSolution sol;
    sol.flow = flow_;
    for (std::size_t k = 0; k < m_ * n_; ++k) sol.objective += flow_[k] * cost_[k];
    return sol;
  }

 private:
  void northwest_corner() {
    flow_.assign(m_ * n_, 0.0);
    in_basis_.assign(m_ * n_, false);
    basis_.clear();
    std::vector<double> ra = supply_, rb = demand_;
    std::size_t i = 0, j = 0;
    for (;;) {
      const double q = std::min(ra[i], rb[j]);
      flow_[i * n_ + j] = q;
      in_basis_[i * n_ + j] = true;
      basis_.push_back(i * n_ + j);
      ra[i] -= q;
      rb[j] -= q;
      if (i + 1 == m_ && j + 1 == n_) break;
      if (i + 1 == m_) {
        ++j;
      } else if (j + 1 == n_) {
        ++i;
      } else if (ra[i] <= rb[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Tree adjacency over nodes 0..m-1 (rows) and m..m+n-1 (columns).
  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(m_ + n_);
    for (std::size_t k : basis_) {
      adj[k / n_].push_back(k);
      adj[m_ + k % n_].push_back(k);
    }
    return adj;
  }

  void compute_potentials() {
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    const auto adj = adjacency();
    std::vector<bool> seen(m_ + n_, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t k : adj[node]) {
        const std::size_t i = k / n_, j = k % n_;
        if (node < m_ && !seen[m_ + j]) {
          v_[j] = cost_[k] - u_[i];
          seen[m_ + j] = true;
          stack.push_back(m_ + j);
        } else if (node >= m_ && !seen[i]) {
          u_[i] = cost_[k] - v_[j];
          seen[i] = true;
          stack.push_back(i);
        }
      }
    }
  }

  // Adds `enter`, pushes flow around the unique cycle and drops one cell.
  void pivot(std::size_t enter) {
    const std::size_t ei = enter / n_, ej = enter % n_;
    // Path in the basis tree from column node ej to row node ei.
    const auto adj = adjacency();
    const std::size_t nodes = m_ + n_;
    std::vector<std::size_t> parent_edge(nodes, m_ * n_);
    std::vector<std::size_t> parent(nodes, nodes);
    std::vector<bool> seen(nodes, false);
    std::vector<std::size_t> stack{m_ + ej};
    seen[m_ + ej] = true;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node == ei) break;
      for (std::size_t k : adj[node]) {
        const std::size_t other = node < m_ ? m_ + k % n_ : k / n_;
        if (seen[other]) continue;
        seen[other] = true;
        parent[other] = node;
        parent_edge[other] = k;
        stack.push_back(other);
      }
    }
    // Walking back from row ei to column ej: edges alternate -, +, -, ...
    std::vector<std::size_t> minus, plus;
    std::size_t node = ei;
    bool negative = true;
    while (node != m_ + ej) {
      (negative ? minus : plus).push_back(parent_edge[node]);
      negative = !negative;
      node = parent[node];
    }
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k : minus) theta = std::min(theta, flow_[k]);
    std::size_t leave = m_ * n_;
    for (std::size_t k : minus)
      if (flow_[k] <= theta && k < leave) leave = k;

    flow_[enter] = theta;
    for (std::size_t k : plus) flow_[k] += theta;
    for (std::size_t k : minus) flow_[k] -= theta;
    flow_[leave] = 0.0;

    in_basis_[leave] = false;
    in_basis_[enter] = true;
    std::replace(basis_.begin(), basis_.end(), leave, enter);
  }

  std::size_t m_, n_;
  std::vector<double> supply_, demand_, cost_;
  double eps_ = 1e-12;
  std::vector<double> flow_;
  std::vector<bool> in_basis_;
  std::vector<std::size_t> basis_;
  std::vector<double> u_, v_;
};

}  // namespace bisim::detail
