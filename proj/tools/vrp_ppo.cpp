// vrp-ppo: train, evaluate and run an improvement-style CVRP solver that
// reassigns customers between vehicle clusters with a learned policy and
// prices each cluster with a fast tour approximation.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "vrpppo/commands.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string out;
  double budget_seconds = -1.0;
  std::string matching;
  bool greedy_eval = false;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* checkpoint_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* budget_opt = nullptr;
  CLI::Option* matching_opt = nullptr;
  CLI::Option* greedy_opt = nullptr;
};

void add_common_options(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_path, "experiment config file (key=value lines)")
      ->required();
  o.seed_opt = sub->add_option("--seed", o.seed, "override the config seed");
  o.checkpoint_opt = sub->add_option("--checkpoint", o.checkpoint, "override the checkpoint path");
  o.out_opt = sub->add_option("--out", o.out, "override the output directory");
  o.budget_opt = sub->add_option("--budget-seconds", o.budget_seconds,
                                 "wall-clock cap per evaluated instance (negative = none)");
  o.matching_opt = sub->add_option("--matching", o.matching,
                                   "odd-vertex matching mode for tour pricing")
                       ->check(CLI::IsMember({"exact", "greedy"}));
  o.greedy_opt = sub->add_flag("--greedy-eval", o.greedy_eval,
                               "take argmax actions instead of sampling during evaluation");
}

vrpppo::ExperimentConfig merged_config(const Overrides& o) {
  vrpppo::ExperimentConfig config = vrpppo::load_config(o.config_path);
  if (o.seed_opt->count()) config.seed = o.seed;
  if (o.checkpoint_opt->count()) config.checkpoint_path = o.checkpoint;
  if (o.out_opt->count()) config.out_dir = o.out;
  if (o.budget_opt->count()) config.budget_seconds = o.budget_seconds;
  if (o.matching_opt->count())
    config.set("matching", o.matching);
  if (o.greedy_opt->count()) config.greedy_eval = true;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CVRP improvement solver: cluster reassignment policy + tour pricing"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const vrpppo::ExperimentConfig&);
    Overrides overrides;
  };
  Command commands[] = {
      {"train", "train the reassignment policy (resumes from an existing checkpoint)",
       vrpppo::cmd_train, {}},
      {"eval", "run the improvement loop from a checkpoint over held-out instances",
       vrpppo::cmd_eval, {}},
      {"solve", "improve one instance file and write a .sol route listing", vrpppo::cmd_solve, {}},
      {"generate", "write synthetic instance files plus a manifest", vrpppo::cmd_generate, {}},
      {"inspect", "print a summary of one instance file", vrpppo::cmd_inspect, {}},
  };
  for (Command& command : commands)
    add_common_options(app.add_subcommand(command.name, command.help), command.overrides);

  CLI11_PARSE(app, argc, argv);

  for (Command& command : commands) {
    if (!app.got_subcommand(command.name)) continue;
    try {
      return command.run(merged_config(command.overrides));
    } catch (const std::exception& e) {
      std::cerr << "vrp-ppo " << command.name << ": " << e.what() << "\n";
      return 1;
    }
  }
  return 1;  // unreachable: a subcommand is required
}
