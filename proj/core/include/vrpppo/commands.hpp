#ifndef VRPPPO_COMMANDS_HPP_
#define VRPPPO_COMMANDS_HPP_

#include "vrpppo/io.hpp"

namespace vrpppo {

// Subcommand bodies behind the vrp-ppo binary. Each takes a fully merged
// config (file plus command-line overrides), writes its artifacts under
// config.out_dir, and returns a process exit code. Errors are reported by
// throwing; the binary turns them into stderr + exit 1.

// Train (or resume from config.checkpoint_path) and keep metrics.csv and the
// checkpoint current.
int cmd_train(const ExperimentConfig& config);

// Run the improvement loop from a checkpoint over held-out instances —
// either the dataset's test split or freshly generated ones — and write
// eval.csv.
int cmd_eval(const ExperimentConfig& config);

// Improve one instance file and write <name>.sol next to a printed COST.
int cmd_solve(const ExperimentConfig& config);

// Write generate_count synthetic instance files plus a manifest.
int cmd_generate(const ExperimentConfig& config);

// Print a human-readable summary of one instance file.
int cmd_inspect(const ExperimentConfig& config);

// Rollout parallelism from VRP_PPO_THREADS (default 1); throws on garbage.
int rollout_threads();

}  // namespace vrpppo

#endif  // VRPPPO_COMMANDS_HPP_
