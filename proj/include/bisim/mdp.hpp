#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bisim/errors.hpp"

namespace bisim {

using StateId = std::size_t;
using ActionId = std::size_t;

/// Finite MDP with a unique successor N(s,a) for every state-action pair.
///
/// Tables are row-major over (state, action). The struct is deliberately
/// a plain aggregate so that malformed instances can be represented and
/// reported by validate(); solvers assume a validated instance.
struct DeterministicMdp {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  double gamma = 0.0;
  std::vector<StateId> next_state;  // [S*A]
  std::vector<double> reward;       // [S*A]
  std::vector<std::string> state_labels;
  // Optional raw cell coordinates (x, y) per state, emitted by grid builders.
  std::vector<std::pair<double, double>> coordinates;

  StateId next(StateId s, ActionId a) const { return next_state[s * num_actions + a]; }
  double r(StateId s, ActionId a) const { return reward[s * num_actions + a]; }

  // Maximum absolute reward, always recomputed from the table.
  double r_max() const {
    double m = 0.0;
    for (double x : reward) m = std::max(m, std::abs(x));
    return m;
  }
};

/// Finite MDP with an explicit transition distribution per (state, action).
struct StochasticMdp {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  double gamma = 0.0;
  std::vector<double> transition;  // [S*A*S]
  std::vector<double> reward;      // [S*A]

  const double* dist(StateId s, ActionId a) const {
    return transition.data() + (s * num_actions + a) * num_states;
  }
  double p(StateId s, ActionId a, StateId to) const { return dist(s, a)[to]; }
  double r(StateId s, ActionId a) const { return reward[s * num_actions + a]; }
};

struct DeterministicPolicy {
  std::vector<ActionId> action_of;

  ActionId operator()(StateId s) const { return action_of[s]; }
};

struct ValueFunction {
  std::vector<double> values;

  double operator()(StateId s) const { return values[s]; }
  std::size_t size() const { return values.size(); }
};

// One observed step <s, a, R(s,a), N(s,a)>.
struct Transition {
  StateId state = 0;
  ActionId action = 0;
  double reward = 0.0;
  StateId next = 0;
};

inline Transition transition_of(const DeterministicMdp& mdp, StateId s, ActionId a) {
  return {s, a, mdp.r(s, a), mdp.next(s, a)};
}

struct Violation {
  std::string field;
  // Coordinates of the offending entry, when it has any.
  std::ptrdiff_t state = -1;
  std::ptrdiff_t action = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  std::string summary() const {
    std::ostringstream os;
    for (const auto& v : violations) {
      os << v.field;
      if (v.state >= 0) os << "[" << v.state << "]";
      if (v.action >= 0) os << "[" << v.action << "]";
      os << ": " << v.message << "\n";
    }
    return os.str();
  }
};

inline ValidationReport validate(const DeterministicMdp& mdp) {
  ValidationReport rep;
  auto add = [&](std::string field, std::ptrdiff_t s, std::ptrdiff_t a, std::string msg) {
    rep.violations.push_back({std::move(field), s, a, std::move(msg)});
  };
  if (mdp.num_states == 0) add("num_states", -1, -1, "must be positive");
  if (mdp.num_actions == 0) add("num_actions", -1, -1, "must be positive");
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0))
    add("gamma", -1, -1, "discount must lie in [0, 1), got " + std::to_string(mdp.gamma));

  const std::size_t cells = mdp.num_states * mdp.num_actions;
  if (mdp.next_state.size() != cells) {
    add("next_state", -1, -1,
        "expected " + std::to_string(cells) + " entries, got " +
            std::to_string(mdp.next_state.size()));
  } else {
    for (std::size_t s = 0; s < mdp.num_states; ++s)
      for (std::size_t a = 0; a < mdp.num_actions; ++a)
        if (mdp.next(s, a) >= mdp.num_states)
          add("next_state", static_cast<std::ptrdiff_t>(s), static_cast<std::ptrdiff_t>(a),
              "successor " + std::to_string(mdp.next(s, a)) + " out of range");
  }
  if (mdp.reward.size() != cells) {
    add("reward", -1, -1,
        "expected " + std::to_string(cells) + " entries, got " +
            std::to_string(mdp.reward.size()));
  } else {
    for (std::size_t s = 0; s < mdp.num_states; ++s)
      for (std::size_t a = 0; a < mdp.num_actions; ++a)
        if (!std::isfinite(mdp.r(s, a)))
          add("reward", static_cast<std::ptrdiff_t>(s), static_cast<std::ptrdiff_t>(a),
              "reward must be finite");
  }
  if (!mdp.state_labels.empty() && mdp.state_labels.size() != mdp.num_states)
    add("labels", -1, -1, "label count does not match num_states");
  if (!mdp.coordinates.empty() && mdp.coordinates.size() != mdp.num_states)
    add("coordinates", -1, -1, "coordinate count does not match num_states");
  return rep;
}

inline ValidationReport validate(const StochasticMdp& mdp) {
  ValidationReport rep;
  auto add = [&](std::string field, std::ptrdiff_t s, std::ptrdiff_t a, std::string msg) {
    rep.violations.push_back({std::move(field), s, a, std::move(msg)});
  };
  if (mdp.num_states == 0) add("num_states", -1, -1, "must be positive");
  if (mdp.num_actions == 0) add("num_actions", -1, -1, "must be positive");
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0)) add("gamma", -1, -1, "discount must lie in [0, 1)");
  const std::size_t cells = mdp.num_states * mdp.num_actions;
  if (mdp.reward.size() != cells) add("reward", -1, -1, "wrong number of entries");
  if (mdp.transition.size() != cells * mdp.num_states) {
    add("transition", -1, -1, "wrong number of entries");
    return rep;
  }
  for (std::size_t s = 0; s < mdp.num_states; ++s) {
    for (std::size_t a = 0; a < mdp.num_actions; ++a) {
      double sum = 0.0;
      bool negative = false;
      for (std::size_t t = 0; t < mdp.num_states; ++t) {
        const double p = mdp.p(s, a, t);
        negative |= !(p >= 0.0);
        sum += p;
      }
      if (negative || std::abs(sum - 1.0) > 1e-12)
        add("transition", static_cast<std::ptrdiff_t>(s), static_cast<std::ptrdiff_t>(a),
            "not a probability distribution (sum " + std::to_string(sum) + ")");
    }
  }
  return rep;
}

inline ValidationReport validate(const DeterministicPolicy& policy, const DeterministicMdp& mdp) {
  ValidationReport rep;
  if (policy.action_of.size() != mdp.num_states) {
    rep.violations.push_back({"action_of", -1, -1, "policy length does not match num_states"});
    return rep;
  }
  for (std::size_t s = 0; s < policy.action_of.size(); ++s)
    if (policy.action_of[s] >= mdp.num_actions)
      rep.violations.push_back(
          {"action_of", static_cast<std::ptrdiff_t>(s), -1, "action id out of range"});
  return rep;
}

template <class Model>
void require_valid(const Model& m) {
  auto rep = validate(m);
  if (!rep.ok()) throw InvariantError("invalid MDP:\n" + rep.summary());
}

// Sweep termination threshold on the sup-norm change that guarantees the
// iterate is within `tol` of the fixed point of a gamma-contraction.
inline double residual_threshold(double tol, double gamma) {
  if (gamma <= 0.0) return std::numeric_limits<double>::infinity();
  return tol * (1.0 - gamma) / gamma;
}

// True once a sweep changed nothing beyond rounding noise of magnitude `scale`.
inline bool at_rounding_floor(double change, double scale) {
  return change <= 8.0 * std::numeric_limits<double>::epsilon() * scale;
}

namespace detail {

template <class Backup>
ValueFunction iterate_values(std::size_t n, double gamma, double tol, Backup backup) {
  if (!(tol > 0.0)) throw InputError("tolerance must be positive");
  std::vector<double> v(n, 0.0), next(n, 0.0);
  const double threshold = residual_threshold(tol, gamma);
  for (;;) {
    double change = 0.0, scale = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      next[s] = backup(s, v);
      change = std::max(change, std::abs(next[s] - v[s]));
      scale = std::max(scale, std::abs(next[s]));
    }
    v.swap(next);
    if (change <= threshold || at_rounding_floor(change, scale)) break;
  }
  return {std::move(v)};
}

}  // namespace detail

/// Optimal state values by synchronous value iteration from V = 0.
inline ValueFunction value_iteration_optimal(const DeterministicMdp& mdp, double tol) {
  return detail::iterate_values(
      mdp.num_states, mdp.gamma, tol, [&](StateId s, const std::vector<double>& v) {
        double best = -std::numeric_limits<double>::infinity();
        for (ActionId a = 0; a < mdp.num_actions; ++a)
          best = std::max(best, mdp.r(s, a) + mdp.gamma * v[mdp.next(s, a)]);
        return best;
      });
}

inline ValueFunction value_iteration_policy(const DeterministicMdp& mdp,
                                            const DeterministicPolicy& policy, double tol) {
  return detail::iterate_values(
      mdp.num_states, mdp.gamma, tol, [&](StateId s, const std::vector<double>& v) {
        const ActionId a = policy(s);
        return mdp.r(s, a) + mdp.gamma * v[mdp.next(s, a)];
      });
}

// Ties go to the lowest action id.
inline DeterministicPolicy greedy_policy(const DeterministicMdp& mdp, const ValueFunction& v) {
  if (v.size() != mdp.num_states) throw InputError("value function size mismatch");
  DeterministicPolicy pi;
  pi.action_of.resize(mdp.num_states);
  for (StateId s = 0; s < mdp.num_states; ++s) {
    ActionId best_a = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (ActionId a = 0; a < mdp.num_actions; ++a) {
      const double q = mdp.r(s, a) + mdp.gamma * v(mdp.next(s, a));
      if (q > best) {
        best = q;
        best_a = a;
      }
    }
    pi.action_of[s] = best_a;
  }
  return pi;
}

}  // namespace bisim
