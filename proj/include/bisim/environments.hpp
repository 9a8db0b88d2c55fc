#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bisim/errors.hpp"
#include "bisim/mdp.hpp"

namespace bisim {

using Rng = std::mt19937_64;

// Grid action ids.
enum GridAction : ActionId { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

/// Character grid: '#' wall, '.' floor, 'G' goal. Cells outside the grid
/// are walls.
class GridLayout {
 public:
  explicit GridLayout(std::vector<std::string> rows) : rows_(std::move(rows)) {
    if (rows_.empty()) throw InputError("layout has no rows");
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      for (std::size_t c = 0; c < rows_[r].size(); ++c) {
        const char ch = rows_[r][c];
        if (ch != '#' && ch != '.' && ch != 'G')
          throw InputError("layout row " + std::to_string(r) + " has invalid character '" +
                           std::string(1, ch) + "'");
        if (ch != '#') {
          id_of_.push_back({r, c});
          goal_.push_back(ch == 'G');
        }
      }
    }
    if (id_of_.empty()) throw InputError("layout has no open cells");
  }

  static GridLayout parse(const std::string& text) {
    std::vector<std::string> rows;
    std::istringstream is(text);
    for (std::string line; std::getline(is, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) rows.push_back(line);
    }
    return GridLayout(std::move(rows));
  }

  static GridLayout load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open layout file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Reconstructed 31-cell default: two mirrored 3x5 rooms stacked
  /// vertically and joined by a one-cell hallway, goals in mirrored corners.
  /// The mirror axis is the hallway row.
  static GridLayout mirrored_rooms() {
    return GridLayout({
        "#######",
        "#G....#",
        "#.....#",
        "#.....#",
        "###.###",
        "#.....#",
        "#.....#",
        "#G....#",
        "#######",
    });
  }

  std::size_t num_states() const { return id_of_.size(); }
  std::size_t height() const { return rows_.size(); }
  const std::vector<std::string>& rows() const { return rows_; }

  bool open(std::ptrdiff_t r, std::ptrdiff_t c) const {
    if (r < 0 || c < 0 || static_cast<std::size_t>(r) >= rows_.size()) return false;
    const auto& row = rows_[static_cast<std::size_t>(r)];
    return static_cast<std::size_t>(c) < row.size() && row[static_cast<std::size_t>(c)] != '#';
  }

  // (row, col) of a state.
  std::pair<std::size_t, std::size_t> cell(StateId s) const { return id_of_.at(s); }
  bool is_goal(StateId s) const { return goal_.at(s); }
  std::size_t num_goals() const { return static_cast<std::size_t>(std::count(goal_.begin(), goal_.end(), true)); }

  StateId state_at(std::size_t r, std::size_t c) const {
    for (StateId s = 0; s < id_of_.size(); ++s)
      if (id_of_[s].first == r && id_of_[s].second == c) return s;
    throw InputError("no state at cell (" + std::to_string(r) + "," + std::to_string(c) + ")");
  }

 private:
  std::vector<std::string> rows_;
  std::vector<std::pair<std::size_t, std::size_t>> id_of_;
  std::vector<bool> goal_;
};

/// Four-action grid MDP: bumping a wall stays put with reward -1, entering a
/// goal cell pays +1, everything else pays 0. Goals are ordinary states.
inline DeterministicMdp build_gridworld(const GridLayout& layout, double gamma) {
  if (layout.num_goals() == 0) throw InputError("layout has no goal cells");
  DeterministicMdp mdp;
  mdp.num_states = layout.num_states();
  mdp.num_actions = 4;
  mdp.gamma = gamma;
  mdp.next_state.resize(mdp.num_states * 4);
  mdp.reward.resize(mdp.num_states * 4);
  constexpr std::array<std::array<int, 2>, 4> kMoves{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
  for (StateId s = 0; s < mdp.num_states; ++s) {
    const auto [r, c] = layout.cell(s);
    mdp.state_labels.push_back("r" + std::to_string(r) + "c" + std::to_string(c));
    mdp.coordinates.emplace_back(static_cast<double>(c), static_cast<double>(r));
    for (ActionId a = 0; a < 4; ++a) {
      const auto nr = static_cast<std::ptrdiff_t>(r) + kMoves[a][0];
      const auto nc = static_cast<std::ptrdiff_t>(c) + kMoves[a][1];
      const std::size_t k = s * 4 + a;
      if (!layout.open(nr, nc)) {
        mdp.next_state[k] = s;
        mdp.reward[k] = -1.0;
      } else {
        const StateId t = layout.state_at(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc));
        mdp.next_state[k] = t;
        mdp.reward[k] = layout.is_goal(t) ? 1.0 : 0.0;
      }
    }
  }
  return mdp;
}

enum class ClipMode { kTruncate, kClamp };

/// Zero-mean Gaussian coordinate noise limited to [-clip, clip], either by
/// rejection (truncated normal) or by clamping.
struct NoiseModel {
  double sigma = 0.0;
  double clip = 0.0;
  ClipMode mode = ClipMode::kTruncate;

  double sample(Rng& rng) const {
    if (sigma <= 0.0) return 0.0;
    std::normal_distribution<double> normal(0.0, sigma);
    if (mode == ClipMode::kClamp) return std::clamp(normal(rng), -clip, clip);
    for (;;) {
      const double x = normal(rng);
      if (std::abs(x) <= clip) return x;
    }
  }
};

/// Min-max normalisation of per-state coordinates into [-1, 1] per axis.
inline std::vector<std::array<double, 2>> normalized_coordinates(
    const std::vector<std::pair<double, double>>& coords) {
  if (coords.empty()) throw InputError("MDP has no coordinates for an (x, y) representation");
  double x0 = coords[0].first, x1 = x0, y0 = coords[0].second, y1 = y0;
  for (const auto& [x, y] : coords) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  auto scale = [](double v, double lo, double hi) {
    return hi > lo ? 2.0 * (v - lo) / (hi - lo) - 1.0 : 0.0;
  };
  std::vector<std::array<double, 2>> out;
  out.reserve(coords.size());
  for (const auto& [x, y] : coords) out.push_back({scale(x, x0, x1), scale(y, y0, y1)});
  return out;
}

/// Normalized (x, y) of a grid state, optionally perturbed by fresh noise.
inline std::array<double, 2> embed_xy(const GridLayout& layout, StateId s,
                                      const NoiseModel* noise = nullptr, Rng* rng = nullptr) {
  std::vector<std::pair<double, double>> coords;
  for (StateId k = 0; k < layout.num_states(); ++k) {
    const auto [r, c] = layout.cell(k);
    coords.emplace_back(static_cast<double>(c), static_cast<double>(r));
  }
  auto xy = normalized_coordinates(coords).at(s);
  if (noise && rng) {
    xy[0] += noise->sample(*rng);
    xy[1] += noise->sample(*rng);
  }
  return xy;
}

/// Three-state example where V* cannot tell s and t apart, the bisimulation
/// metric puts them 10K apart (gamma = 0.9) and the lax metric puts them at 0.
/// States s=0, t=1, u=2; actions a=0, b=1.
inline DeterministicMdp build_fig2(double k, double gamma) {
  DeterministicMdp mdp;
  mdp.num_states = 3;
  mdp.num_actions = 2;
  mdp.gamma = gamma;
  //                  s(a)  s(b)  t(a)  t(b)  u(a)  u(b)
  mdp.next_state = {1, 2, 2, 0, 2, 2};
  mdp.reward = {k, 0.0, 0.0, k, 0.0, 0.0};
  mdp.state_labels = {"s", "t", "u"};
  return mdp;
}

/// Two copies of `mdp`; every transition stays in its copy with probability
/// 1 - jump_prob and lands on the twin successor otherwise. State i of the
/// first copy is twinned with state i + |S|.
inline StochasticMdp duplicate_mdp(const DeterministicMdp& mdp, double jump_prob) {
  if (!(jump_prob >= 0.0 && jump_prob <= 1.0)) throw InputError("jump_prob must lie in [0, 1]");
  const std::size_t n = mdp.num_states, na = mdp.num_actions, n2 = 2 * n;
  StochasticMdp out;
  out.num_states = n2;
  out.num_actions = na;
  out.gamma = mdp.gamma;
  out.transition.assign(n2 * na * n2, 0.0);
  out.reward.resize(n2 * na);
  for (std::size_t copy = 0; copy < 2; ++copy) {
    for (StateId s = 0; s < n; ++s) {
      const StateId from = copy * n + s;
      for (ActionId a = 0; a < na; ++a) {
        const StateId same = copy * n + mdp.next(s, a);
        const StateId other = (1 - copy) * n + mdp.next(s, a);
        double* row = out.transition.data() + (from * na + a) * n2;
        row[same] += 1.0 - jump_prob;
        row[other] += jump_prob;
        out.reward[from * na + a] = mdp.r(s, a);
      }
    }
  }
  return out;
}

/// Uniform successor table and uniform rewards in [lo, hi].
inline DeterministicMdp random_deterministic_mdp(std::size_t num_states, std::size_t num_actions,
                                                 double reward_lo, double reward_hi, double gamma,
                                                 std::uint64_t seed) {
  if (num_states == 0 || num_actions == 0) throw InputError("sizes must be positive");
  Rng rng(seed);
  std::uniform_int_distribution<StateId> pick(0, num_states - 1);
  std::uniform_real_distribution<double> rew(reward_lo, reward_hi);
  DeterministicMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  for (std::size_t k = 0; k < num_states * num_actions; ++k) {
    mdp.next_state.push_back(pick(rng));
    mdp.reward.push_back(rew(rng));
  }
  return mdp;
}

}  // namespace bisim
