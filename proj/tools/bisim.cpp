// bisim: command-line front end for the bisimulation metric library.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bisim/commands.hpp"

namespace {

using namespace bisim::cli;

void add_exact(CLI::App& app, ExactOptions& o) {
  auto* c = app.add_subcommand("exact", "fixed-point metric by dynamic programming");
  c->add_option("--mdp", o.mdp, "MDP JSON file")->required();
  c->add_option("--mode", o.mode, "bisim | pi-bisim | lax")->required();
  c->add_option("--policy", o.policy, "policy JSON (pi-bisim)");
  c->add_option("--tol", o.tol, "sup-norm error target")->required();
  c->add_option("--out", o.out, "output directory")->required();
  c->callback([&o] { cmd_exact(o); });
}

void add_sample(CLI::App& app, SampleOptions& o) {
  auto* c = app.add_subcommand("sample", "sampled max-backup estimate");
  c->add_option("--mdp", o.mdp, "MDP JSON file")->required();
  c->add_option("--mode", o.mode, "off | on")->required();
  c->add_option("--policy", o.policy, "policy JSON (on)");
  c->add_option("--budget", o.budget, "number of sampled pairs")->required();
  c->add_option("--stall-window", o.stall_window, "stop after this many samples without improvement (0 = off)");
  c->add_option("--tol", o.tol, "improvement threshold for the stall rule");
  c->add_option("--seed", o.seed, "RNG seed");
  c->add_option("--out", o.out, "output directory")->required();
  c->add_flag("--trace", o.trace, "write trace.jsonl");
  c->callback([&o] { cmd_sample(o); });
}

void add_train(CLI::App& app, TrainOptions& o) {
  auto* c = app.add_subcommand("train", "train a neural metric approximant");
  c->add_option("--config", o.config, "training config JSON")->required();
  c->add_option("--out", o.out, "output directory")->required();
  c->callback([&o] { cmd_train(o); });
}

void add_eval(CLI::App& app, EvalOptions& o) {
  auto* c = app.add_subcommand("eval", "compare an approximant with an oracle metric");
  c->add_option("--oracle", o.oracle, "oracle metric CSV")->required();
  c->add_option("--approx", o.approx, "trained net JSON or metric CSV")->required();
  c->add_option("--mdp", o.mdp, "MDP JSON file")->required();
  c->add_option("--out", o.out, "output directory")->required();
  c->callback([&o] { cmd_eval(o); });
}

void add_aggregate(CLI::App& app, AggregateOptions& o) {
  auto* c = app.add_subcommand("aggregate", "greedy epsilon-clustering of states");
  c->add_option("--metric", o.metric, "metric CSV")->required();
  c->add_option("--epsilon", o.epsilon, "cluster diameter bound")->required();
  c->add_option("--out", o.out, "output directory")->required();
  c->callback([&o] { cmd_aggregate(o); });
}

void add_gridworld(CLI::App& app, GridworldOptions& o) {
  auto* c = app.add_subcommand("gridworld", "write a GridWorld MDP as JSON");
  c->add_option("--layout", o.layout, "layout file or 'default'")->required();
  c->add_option("--gamma", o.gamma, "discount factor")->required();
  c->add_option("--out", o.out, "output MDP JSON file")->required();
  c->callback([&o] { cmd_gridworld(o); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bisimulation metrics for deterministic MDPs"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  ExactOptions exact;
  SampleOptions sample;
  TrainOptions train;
  EvalOptions eval;
  AggregateOptions aggregate;
  GridworldOptions gridworld;
  add_exact(app, exact);
  add_sample(app, sample);
  add_train(app, train);
  add_eval(app, eval);
  add_aggregate(app, aggregate);
  add_gridworld(app, gridworld);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const bisim::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const bisim::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
