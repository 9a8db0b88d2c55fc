#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bisim/approximator.hpp"
#include "bisim/errors.hpp"
#include "bisim/evaluation.hpp"
#include "bisim/exact_metrics.hpp"
#include "bisim/mdp.hpp"
#include "bisim/sampled_metrics.hpp"
#include "bisim/state_metric.hpp"

namespace bisim::io {

using nlohmann::json;

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(what + ": malformed JSON (" + e.what() + ")");
  }
}

inline json read_json(const std::filesystem::path& path) {
  return parse_json(read_text(path), path.string());
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// --- JSON field helpers with path-qualified errors --------------------------

namespace detail {

inline const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw InputError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw InputError(path + "." + key + ": missing required field");
  return *it;
}

inline double real(const json& j, const std::string& path) {
  if (!j.is_number()) throw InputError(path + ": expected a number");
  return j.get<double>();
}

inline std::size_t count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw InputError(path + ": expected a nonnegative integer");
  return j.get<std::size_t>();
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw InputError(path + ": expected a string");
  return j.get<std::string>();
}

inline const json& array(const json& j, std::size_t n, const std::string& path) {
  if (!j.is_array()) throw InputError(path + ": expected an array");
  if (n != static_cast<std::size_t>(-1) && j.size() != n)
    throw InputError(path + ": expected " + std::to_string(n) + " entries, got " + std::to_string(j.size()));
  return j;
}

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw InputError(path + "." + it.key() + ": unknown key");
}

constexpr std::size_t kAny = static_cast<std::size_t>(-1);

}  // namespace detail

// --- MDPs --------------------------------------------------------------------

inline bool is_stochastic_json(const json& j) { return j.is_object() && j.contains("transition"); }

inline DeterministicMdp mdp_from_json(const json& j) {
  using namespace detail;
  DeterministicMdp m;
  m.num_states = count(field(j, "num_states", "mdp"), "mdp.num_states");
  m.num_actions = count(field(j, "num_actions", "mdp"), "mdp.num_actions");
  m.gamma = real(field(j, "gamma", "mdp"), "mdp.gamma");
  const json& ns = array(field(j, "next_state", "mdp"), m.num_states, "mdp.next_state");
  const json& rw = array(field(j, "reward", "mdp"), m.num_states, "mdp.reward");
  for (std::size_t s = 0; s < m.num_states; ++s) {
    const std::string ps = "[" + std::to_string(s) + "]";
    const json& row = array(ns[s], m.num_actions, "mdp.next_state" + ps);
    const json& rrow = array(rw[s], m.num_actions, "mdp.reward" + ps);
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      const std::string pa = ps + "[" + std::to_string(a) + "]";
      m.next_state.push_back(count(row[a], "mdp.next_state" + pa));
      m.reward.push_back(real(rrow[a], "mdp.reward" + pa));
    }
  }
  if (j.contains("labels")) {
    const json& l = array(j["labels"], m.num_states, "mdp.labels");
    for (std::size_t s = 0; s < m.num_states; ++s)
      m.state_labels.push_back(text(l[s], "mdp.labels[" + std::to_string(s) + "]"));
  }
  if (j.contains("coordinates")) {
    const json& c = array(j["coordinates"], m.num_states, "mdp.coordinates");
    for (std::size_t s = 0; s < m.num_states; ++s) {
      const std::string p = "mdp.coordinates[" + std::to_string(s) + "]";
      const json& xy = array(c[s], 2, p);
      m.coordinates.emplace_back(real(xy[0], p + "[0]"), real(xy[1], p + "[1]"));
    }
  }
  return m;
}

inline StochasticMdp stochastic_mdp_from_json(const json& j) {
  using namespace detail;
  StochasticMdp m;
  m.num_states = count(field(j, "num_states", "mdp"), "mdp.num_states");
  m.num_actions = count(field(j, "num_actions", "mdp"), "mdp.num_actions");
  m.gamma = real(field(j, "gamma", "mdp"), "mdp.gamma");
  const json& tr = array(field(j, "transition", "mdp"), m.num_states, "mdp.transition");
  const json& rw = array(field(j, "reward", "mdp"), m.num_states, "mdp.reward");
  for (std::size_t s = 0; s < m.num_states; ++s) {
    const std::string ps = "[" + std::to_string(s) + "]";
    const json& row = array(tr[s], m.num_actions, "mdp.transition" + ps);
    const json& rrow = array(rw[s], m.num_actions, "mdp.reward" + ps);
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      const std::string pa = ps + "[" + std::to_string(a) + "]";
      const json& dist = array(row[a], m.num_states, "mdp.transition" + pa);
      for (std::size_t t = 0; t < m.num_states; ++t)
        m.transition.push_back(real(dist[t], "mdp.transition" + pa + "[" + std::to_string(t) + "]"));
      m.reward.push_back(real(rrow[a], "mdp.reward" + pa));
    }
  }
  return m;
}

inline json to_json(const DeterministicMdp& m) {
  json j;
  j["num_states"] = m.num_states;
  j["num_actions"] = m.num_actions;
  j["gamma"] = m.gamma;
  json ns = json::array(), rw = json::array();
  for (std::size_t s = 0; s < m.num_states; ++s) {
    json a = json::array(), r = json::array();
    for (std::size_t k = 0; k < m.num_actions; ++k) {
      a.push_back(m.next(s, k));
      r.push_back(m.r(s, k));
    }
    ns.push_back(a);
    rw.push_back(r);
  }
  j["next_state"] = ns;
  j["reward"] = rw;
  if (!m.state_labels.empty()) j["labels"] = m.state_labels;
  if (!m.coordinates.empty()) {
    json c = json::array();
    for (const auto& [x, y] : m.coordinates) c.push_back({x, y});
    j["coordinates"] = c;
  }
  return j;
}

inline json to_json(const StochasticMdp& m) {
  json j;
  j["num_states"] = m.num_states;
  j["num_actions"] = m.num_actions;
  j["gamma"] = m.gamma;
  json tr = json::array(), rw = json::array();
  for (std::size_t s = 0; s < m.num_states; ++s) {
    json rows = json::array(), r = json::array();
    for (std::size_t a = 0; a < m.num_actions; ++a) {
      rows.push_back(std::vector<double>(m.dist(s, a), m.dist(s, a) + m.num_states));
      r.push_back(m.r(s, a));
    }
    tr.push_back(rows);
    rw.push_back(r);
  }
  j["transition"] = tr;
  j["reward"] = rw;
  return j;
}

inline DeterministicPolicy policy_from_json(const json& j) {
  using namespace detail;
  const json& a = array(field(j, "action_of", "policy"), kAny, "policy.action_of");
  DeterministicPolicy p;
  for (std::size_t s = 0; s < a.size(); ++s)
    p.action_of.push_back(count(a[s], "policy.action_of[" + std::to_string(s) + "]"));
  return p;
}

inline json to_json(const DeterministicPolicy& p) { return json{{"action_of", p.action_of}}; }

// --- Metrics -------------------------------------------------------------------

inline std::string metric_to_csv(const StateMetric& d) {
  std::string out;
  for (StateId s = 0; s < d.size(); ++s) {
    for (StateId t = 0; t < d.size(); ++t) {
      if (t) out += ',';
      out += format_real(d(s, t));
    }
    out += '\n';
  }
  return out;
}

/// Square matrix CSV, no header. Blank lines are ignored.
inline StateMetric metric_from_csv(const std::string& text, const std::string& what = "metric") {
  std::vector<double> vals;
  std::size_t rows = 0, cols = 0;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t c = 0;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InputError(what + ": row " + std::to_string(rows) + " has a non-numeric cell '" + cell + "'");
      }
      ++c;
    }
    if (rows == 0) cols = c;
    if (c != cols) throw InputError(what + ": row " + std::to_string(rows) + " has " + std::to_string(c) + " columns");
    ++rows;
  }
  if (rows != cols) throw InputError(what + ": matrix is not square");
  return StateMetric(rows, std::move(vals));
}

inline json to_json(const SolverReport& r) {
  return json{{"iterations", r.iterations},
              {"final_residual", r.final_residual},
              {"guaranteed_error", r.guaranteed_error},
              {"apriori_iterations", r.apriori_iterations}};
}

inline std::string trace_line(const UpdateTrace& t) {
  json j{{"step", t.step}, {"s", t.s}, {"t", t.t}, {"old", t.old_value}, {"new", t.new_value}};
  return j.dump() + "\n";
}

// --- Networks and training config ---------------------------------------------

inline std::string representation_name(Representation::Type t) {
  switch (t) {
    case Representation::Type::kXy:
      return "xy";
    case Representation::Type::kXyNoisy:
      return "xy_noisy";
    case Representation::Type::kOneHot:
      return "onehot";
  }
  return "xy";
}

/// Online parameters only; layers as row-major [out][in] weights plus bias.
inline json net_to_json(const ApproxNet& net, const std::string& representation) {
  json j;
  j["layer_sizes"] = net.shape.sizes();
  j["representation"] = representation;
  json layers = json::array();
  for (std::size_t l = 0; l < net.shape.num_layers(); ++l) {
    const auto w0 = net.online.begin() + static_cast<std::ptrdiff_t>(net.shape.w_offset(l));
    const auto b0 = net.online.begin() + static_cast<std::ptrdiff_t>(net.shape.b_offset(l));
    layers.push_back({{"weights", std::vector<double>(w0, b0)},
                      {"bias", std::vector<double>(b0, b0 + static_cast<std::ptrdiff_t>(net.shape.out(l)))}});
  }
  j["layers"] = layers;
  return j;
}

inline std::pair<ApproxNet, std::string> net_from_json(const json& j) {
  using namespace detail;
  std::vector<std::size_t> sizes;
  const json& ls = array(field(j, "layer_sizes", "net"), kAny, "net.layer_sizes");
  for (std::size_t k = 0; k < ls.size(); ++k) sizes.push_back(count(ls[k], "net.layer_sizes[" + std::to_string(k) + "]"));
  ApproxNet net = ApproxNet::zeros(sizes);
  const json& layers = array(field(j, "layers", "net"), net.shape.num_layers(), "net.layers");
  for (std::size_t l = 0; l < net.shape.num_layers(); ++l) {
    const std::string p = "net.layers[" + std::to_string(l) + "]";
    const json& w = array(field(layers[l], "weights", p), net.shape.in(l) * net.shape.out(l), p + ".weights");
    const json& b = array(field(layers[l], "bias", p), net.shape.out(l), p + ".bias");
    for (std::size_t k = 0; k < w.size(); ++k) net.online[net.shape.w_offset(l) + k] = real(w[k], p + ".weights");
    for (std::size_t k = 0; k < b.size(); ++k) net.online[net.shape.b_offset(l) + k] = real(b[k], p + ".bias");
  }
  net.sync_target();
  std::string rep = j.contains("representation") ? text(j["representation"], "net.representation") : "xy";
  return {std::move(net), rep};
}

/// Training configuration plus the optional file references a run may use.
struct TrainSetup {
  TrainConfig config;
  std::filesystem::path mdp_path;     // empty: default grid world
  std::filesystem::path policy_path;  // on-policy; empty: greedy w.r.t. V*
  std::filesystem::path oracle_path;  // metric CSV for error curves
};

inline TrainSetup train_setup_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  if (!j.is_object()) throw InputError("config: expected an object");
  reject_unknown(j,
                 {"gamma", "batch_size", "target_update_period", "beta_gap_factor", "learning_rate",
                  "total_steps", "hidden_layers", "representation", "mode", "seed", "eval_every", "mdp",
                  "policy", "oracle_metric"},
                 "config");
  TrainSetup setup;
  TrainConfig& c = setup.config;
  c.gamma = real(field(j, "gamma", "config"), "config.gamma");
  c.batch_size = count(field(j, "batch_size", "config"), "config.batch_size");
  c.target_update_period = count(field(j, "target_update_period", "config"), "config.target_update_period");
  c.beta_gap_factor = real(field(j, "beta_gap_factor", "config"), "config.beta_gap_factor");
  c.learning_rate = real(field(j, "learning_rate", "config"), "config.learning_rate");
  c.total_steps = count(field(j, "total_steps", "config"), "config.total_steps");
  c.seed = count(field(j, "seed", "config"), "config.seed");
  const json& hl = array(field(j, "hidden_layers", "config"), kAny, "config.hidden_layers");
  c.hidden_layers.clear();
  for (std::size_t k = 0; k < hl.size(); ++k) {
    const std::string p = "config.hidden_layers[" + std::to_string(k) + "]";
    const std::size_t h = count(hl[k], p);
    if (h == 0) throw InputError(p + ": layer width must be positive");
    c.hidden_layers.push_back(h);
  }
  const std::string mode = text(field(j, "mode", "config"), "config.mode");
  if (mode == "off-policy") c.mode = SampleMode::kOffPolicy;
  else if (mode == "on-policy") c.mode = SampleMode::kOnPolicy;
  else throw InputError("config.mode: expected \"off-policy\" or \"on-policy\"");

  const json& rep = field(j, "representation", "config");
  if (!rep.is_object()) throw InputError("config.representation: expected an object");
  reject_unknown(rep, {"type", "noise_sigma", "noise_clip", "clip_mode"}, "config.representation");
  c.representation.type = text(field(rep, "type", "config.representation"), "config.representation.type");
  if (c.representation.type != "xy" && c.representation.type != "xy_noisy" && c.representation.type != "onehot")
    throw InputError("config.representation.type: expected \"xy\", \"xy_noisy\" or \"onehot\"");
  if (rep.contains("noise_sigma")) c.representation.noise_sigma = real(rep["noise_sigma"], "config.representation.noise_sigma");
  if (rep.contains("noise_clip")) c.representation.noise_clip = real(rep["noise_clip"], "config.representation.noise_clip");
  if (rep.contains("clip_mode")) {
    const std::string cm = text(rep["clip_mode"], "config.representation.clip_mode");
    if (cm == "truncate") c.representation.clip_mode = ClipMode::kTruncate;
    else if (cm == "clamp") c.representation.clip_mode = ClipMode::kClamp;
    else throw InputError("config.representation.clip_mode: expected \"truncate\" or \"clamp\"");
  }
  if (j.contains("eval_every")) c.eval_every = count(j["eval_every"], "config.eval_every");
  auto resolve = [&](const char* key) -> std::filesystem::path {
    if (!j.contains(key)) return {};
    std::filesystem::path p = text(j[key], std::string("config.") + key);
    return p.is_relative() ? base_dir / p : p;
  };
  setup.mdp_path = resolve("mdp");
  setup.policy_path = resolve("policy");
  setup.oracle_path = resolve("oracle_metric");
  try {
    require_valid(c);
  } catch (const InputError& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return setup;
}

// --- Evaluation outputs ---------------------------------------------------------

inline json to_json(const ErrorReport& r) {
  json j{{"absolute_error", r.absolute_error},
         {"diagonal_residual", r.diagonal_residual},
         {"asymmetry", r.asymmetry},
         {"normalized_error_pairs", "off-diagonal ordered pairs"}};
  j["normalized_error"] = r.normalized_error ? json(*r.normalized_error) : json(nullptr);
  return j;
}

inline std::string clustering_to_csv(const Clustering& c) {
  std::string out = "state_id,cluster_id\n";
  for (std::size_t s = 0; s < c.cluster_of.size(); ++s)
    out += std::to_string(s) + "," + std::to_string(c.cluster_of[s]) + "\n";
  return out;
}

inline json to_json(const Clustering& c) {
  return json{{"epsilon", c.epsilon}, {"num_clusters", c.num_clusters()}, {"cluster_of", c.cluster_of}};
}

}  // namespace bisim::io
