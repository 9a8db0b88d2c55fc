#pragma once

// File-based workflows behind the `bisim` command-line tool. Each command
// reads its inputs, writes its outputs plus one manifest.json into the
// output directory, and reports failures as InputError (exit 2) or
// InvariantError (exit 3).

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "bisim/approximator.hpp"
#include "bisim/environments.hpp"
#include "bisim/errors.hpp"
#include "bisim/evaluation.hpp"
#include "bisim/exact_metrics.hpp"
#include "bisim/io.hpp"
#include "bisim/mdp.hpp"
#include "bisim/sampled_metrics.hpp"

namespace bisim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw InvariantError("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Records one command invocation; written last so a complete directory
/// always has exactly one manifest.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void arg(const std::string& key, json value) { args_[key] = std::move(value); }
  void seed(std::uint64_t s) { seed_ = s; }
  void input(const fs::path& path) { inputs_[path.string()] = sha256_hex(io::read_text(path)); }

  void write(const fs::path& dir) const {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json j{{"command", command_},
           {"arguments", args_},
           {"tool_version", kToolVersion},
           {"input_digests_sha256", inputs_},
           {"wall_clock_seconds", secs},
           {"finished_at", stamp}};
    j["seed"] = seed_ ? json(*seed_) : json(nullptr);
    io::write_text(dir / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  json args_ = json::object();
  std::map<std::string, std::string> inputs_;
  std::optional<std::uint64_t> seed_;
  std::chrono::steady_clock::time_point start_;
};

inline DeterministicMdp load_mdp(const fs::path& path) {
  const json j = io::read_json(path);
  if (io::is_stochastic_json(j)) throw InputError(path.string() + ": expected a deterministic MDP (found \"transition\")");
  DeterministicMdp m = io::mdp_from_json(j);
  require_valid(m);
  return m;
}

inline DeterministicPolicy load_policy(const fs::path& path, const DeterministicMdp& mdp) {
  DeterministicPolicy p = io::policy_from_json(io::read_json(path));
  if (auto v = validate(p, mdp); !v.ok()) throw InvariantError(path.string() + ": invalid policy:\n" + v.summary());
  return p;
}

// --- exact ---------------------------------------------------------------------

struct ExactOptions {
  fs::path mdp;
  std::string mode = "bisim";
  std::optional<fs::path> policy;
  double tol = 1e-8;
  fs::path out;
};

inline void cmd_exact(const ExactOptions& o) {
  const MetricOperator op = parse_operator(o.mode);
  if (op == MetricOperator::kOnPolicy && !o.policy) throw InputError("--mode pi-bisim requires --policy");
  if (!(o.tol > 0.0)) throw InputError("--tol must be positive");
  RunManifest man("exact");
  man.arg("mdp", o.mdp.string());
  man.arg("mode", o.mode);
  man.arg("tol", o.tol);
  man.input(o.mdp);
  if (o.policy) {
    man.arg("policy", o.policy->string());
    man.input(*o.policy);
  }
  const json j = io::read_json(o.mdp);
  StateMetric d;
  SolverReport rep;
  if (io::is_stochastic_json(j)) {
    if (op != MetricOperator::kBisimulation)
      throw InputError("stochastic MDPs support --mode bisim only");
    StochasticMdp m = io::stochastic_mdp_from_json(j);
    require_valid(m);
    std::tie(d, rep) = solve_fixed_point(m, o.tol);
  } else {
    DeterministicMdp m = io::mdp_from_json(j);
    require_valid(m);
    std::optional<DeterministicPolicy> pi;
    if (o.policy) pi = load_policy(*o.policy, m);
    std::tie(d, rep) = solve_fixed_point(op, m, o.tol, pi);
  }
  if (!check_pseudometric(d).ok(1e-7)) throw InvariantError("solver returned a non-pseudometric");
  io::write_text(o.out / "metric.csv", io::metric_to_csv(d));
  io::write_text(o.out / "report.json", io::to_json(rep).dump(2) + "\n");
  man.write(o.out);
}

// --- sample --------------------------------------------------------------------

struct SampleOptions {
  fs::path mdp;
  std::string mode = "off";
  std::optional<fs::path> policy;
  std::size_t budget = 0;
  std::size_t stall_window = 0;
  double tol = 1e-9;
  std::uint64_t seed = 0;
  fs::path out;
  bool trace = false;
};

inline void cmd_sample(const SampleOptions& o) {
  SampleMode mode;
  if (o.mode == "off") mode = SampleMode::kOffPolicy;
  else if (o.mode == "on") mode = SampleMode::kOnPolicy;
  else throw InputError("--mode must be 'off' or 'on'");
  if (mode == SampleMode::kOnPolicy && !o.policy) throw InputError("--mode on requires --policy");
  if (mode == SampleMode::kOffPolicy && o.policy) throw InputError("--mode off does not take --policy");

  RunManifest man("sample");
  man.arg("mdp", o.mdp.string());
  man.arg("mode", o.mode);
  man.arg("budget", o.budget);
  man.arg("stall_window", o.stall_window);
  man.arg("tol", o.tol);
  man.arg("trace", o.trace);
  man.seed(o.seed);
  man.input(o.mdp);
  const DeterministicMdp m = load_mdp(o.mdp);
  std::optional<DeterministicPolicy> pi;
  if (o.policy) {
    man.arg("policy", o.policy->string());
    man.input(*o.policy);
    pi = load_policy(*o.policy, m);
  }

  std::string trace;
  SampledRunOptions ro;
  ro.budget = o.budget;
  ro.stall_window = o.stall_window;
  ro.tol = o.tol;
  if (o.trace) ro.trace = [&](const UpdateTrace& t) { trace += io::trace_line(t); };
  PairSampler sampler = PairSampler::uniform(mode, o.seed);
  auto [est, rep] = run_sampled(m, sampler, pi, ro);

  io::write_text(o.out / "metric.csv", io::metric_to_csv(est.metric));
  json r{{"steps", rep.steps},
         {"updates_applied", rep.updates_applied},
         {"last_improvement_step", rep.last_improvement_step},
         {"stop_reason", rep.stop == StopReason::kStall ? "stall" : "budget"}};
  io::write_text(o.out / "report.json", r.dump(2) + "\n");
  if (o.trace) io::write_text(o.out / "trace.jsonl", trace);
  man.write(o.out);
}

// --- train ---------------------------------------------------------------------

struct TrainOptions {
  fs::path config;
  fs::path out;
};

inline void cmd_train(const TrainOptions& o) {
  RunManifest man("train");
  man.arg("config", o.config.string());
  man.input(o.config);
  const io::TrainSetup setup = io::train_setup_from_json(io::read_json(o.config), o.config.parent_path());
  const TrainConfig& cfg = setup.config;
  man.seed(cfg.seed);

  DeterministicMdp mdp;
  if (setup.mdp_path.empty()) {
    mdp = build_gridworld(GridLayout::mirrored_rooms(), cfg.gamma);
  } else {
    man.input(setup.mdp_path);
    mdp = load_mdp(setup.mdp_path);
    mdp.gamma = cfg.gamma;
  }
  std::optional<DeterministicPolicy> pi;
  if (cfg.mode == SampleMode::kOnPolicy) {
    if (!setup.policy_path.empty()) {
      man.input(setup.policy_path);
      pi = load_policy(setup.policy_path, mdp);
    } else {
      pi = greedy_policy(mdp, value_iteration_optimal(mdp, 1e-10));
    }
  }
  std::optional<StateMetric> oracle;
  if (!setup.oracle_path.empty()) {
    man.input(setup.oracle_path);
    oracle = io::metric_from_csv(io::read_text(setup.oracle_path), setup.oracle_path.string());
    if (oracle->size() != mdp.num_states) throw InputError("config.oracle_metric: size does not match the MDP");
  }

  const Representation rep = make_representation(cfg.representation, mdp);
  std::string errors = "step,absolute_error,normalized_error\n";
  std::function<void(std::size_t, const ApproxNet&)> evaluate;
  if (oracle) {
    evaluate = [&](std::size_t step, const ApproxNet& net) {
      const auto r = metric_errors(*oracle, [&](StateId s, StateId t) { return evaluate_psi(net, rep, s, t); });
      errors += std::to_string(step) + "," + io::format_real(r.absolute_error) + "," +
                (r.normalized_error ? io::format_real(*r.normalized_error) : std::string("nan")) + "\n";
    };
  }
  const TrainResult res = train(uniform_transitions(mdp, cfg.mode, pi), rep, cfg, evaluate);

  std::string log = "step,loss,beta\n";
  for (const auto& row : res.log) {
    if (!std::isfinite(row.loss)) throw InvariantError("training produced a non-finite loss at step " + std::to_string(row.step));
    log += std::to_string(row.step) + "," + io::format_real(row.loss) + "," + io::format_real(row.beta) + "\n";
  }
  io::write_text(o.out / "net.json", io::net_to_json(res.net, cfg.representation.type).dump() + "\n");
  io::write_text(o.out / "train_log.csv", log);
  if (oracle) io::write_text(o.out / "errors.csv", errors);
  man.write(o.out);
}

// --- eval / aggregate / gridworld -----------------------------------------------

struct EvalOptions {
  fs::path oracle;
  fs::path approx;
  fs::path mdp;
  fs::path out;
};

inline void cmd_eval(const EvalOptions& o) {
  RunManifest man("eval");
  man.arg("oracle", o.oracle.string());
  man.arg("approx", o.approx.string());
  man.arg("mdp", o.mdp.string());
  man.input(o.oracle);
  man.input(o.approx);
  man.input(o.mdp);
  const DeterministicMdp mdp = load_mdp(o.mdp);
  const StateMetric oracle = io::metric_from_csv(io::read_text(o.oracle), o.oracle.string());
  if (oracle.size() != mdp.num_states) throw InputError("--oracle: size does not match the MDP");

  const std::string text = io::read_text(o.approx);
  const auto first = text.find_first_not_of(" \t\r\n");
  ErrorReport r;
  if (first != std::string::npos && text[first] == '{') {
    const auto [net, rep_type] = io::net_from_json(io::parse_json(text, o.approx.string()));
    RepresentationConfig rc;
    // Error curves are always measured on noise-free embeddings.
    rc.type = rep_type == "xy_noisy" ? "xy" : rep_type;
    const Representation rep = make_representation(rc, mdp);
    if (net.shape.input_dim() != 2 * rep.dim()) throw InputError("--approx: network input does not match the representation");
    r = metric_errors(oracle, [&](StateId s, StateId t) { return evaluate_psi(net, rep, s, t); });
  } else {
    const StateMetric approx = io::metric_from_csv(text, o.approx.string());
    if (approx.size() != oracle.size()) throw InputError("--approx: size does not match the oracle");
    r = metric_errors(oracle, [&](StateId s, StateId t) { return approx(s, t); });
  }
  io::write_text(o.out / "errors.json", io::to_json(r).dump(2) + "\n");
  man.write(o.out);
}

struct AggregateOptions {
  fs::path metric;
  double epsilon = 0.0;
  fs::path out;
};

inline void cmd_aggregate(const AggregateOptions& o) {
  if (!(o.epsilon >= 0.0)) throw InputError("--epsilon must be nonnegative");
  RunManifest man("aggregate");
  man.arg("metric", o.metric.string());
  man.arg("epsilon", o.epsilon);
  man.input(o.metric);
  const StateMetric d = io::metric_from_csv(io::read_text(o.metric), o.metric.string());
  const Clustering c = aggregate(d, o.epsilon);
  io::write_text(o.out / "clustering.csv", io::clustering_to_csv(c));
  io::write_text(o.out / "clustering.json", io::to_json(c).dump(2) + "\n");
  man.write(o.out);
}

struct GridworldOptions {
  std::string layout = "default";
  double gamma = 0.99;
  fs::path out;
};

inline void cmd_gridworld(const GridworldOptions& o) {
  const GridLayout layout = o.layout == "default" ? GridLayout::mirrored_rooms() : GridLayout::load(o.layout);
  DeterministicMdp m = build_gridworld(layout, o.gamma);
  require_valid(m);
  io::write_text(o.out, io::to_json(m).dump(2) + "\n");
}

}  // namespace bisim::cli
