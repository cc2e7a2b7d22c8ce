#ifndef VRPPPO_IO_HPP_
#define VRPPPO_IO_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vrpppo/instance.hpp"
#include "vrpppo/nets.hpp"
#include "vrpppo/ppo.hpp"

namespace vrpppo {

// Experiment settings: a flat key=value file ('#' starts a comment) plus
// command-line overrides. Unknown keys are errors.
struct ExperimentConfig {
  std::string instance_class = "C1";  // C1 | C2 | C3 | cvrplib
  std::string dataset_dir;            // cvrplib pool / generate target
  std::string checkpoint_path;
  std::string out_dir = ".";
  std::string instance_path;          // solve / inspect subject
  Hyperparams hp;
  int n_min = 15, n_max = 25;         // generator bounds
  int m_min = 2, m_max = 3;
  double fill_ratio = 0.8;
  int conv_depth = 3;                 // network shape
  int hidden_channels = 27;
  int out_channels = 4;
  std::uint64_t seed = 0;
  int eval_steps = 100;
  int eval_count = 10;                // generated held-out instances for eval
  double budget_seconds = -1.0;
  bool greedy_eval = false;
  int generate_count = 10;
  int checkpoint_every = 1;           // iterations between checkpoint writes

  // Applies one key=value pair; throws on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  GeneratorConfig generator_config() const;  // throws for instance_class=cvrplib
  EncoderConfig encoder_config() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Shortest decimal string that round-trips the double.
std::string format_number(double value);

// Appends rows to a comma-separated file, writing the header line first when
// the file starts empty.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::string path);
  void append(const MetricsRow& row);

  static std::string header();
  static std::string format(const MetricsRow& row);

 private:
  std::string path_;
};

// Versioned container for parameters, optimizer moments, beta, the master
// rng and the iteration counter. Binary layout: a magic line, a little-endian
// u64 JSON header length, the JSON header (shapes and scalars), then every
// tensor's doubles little-endian in header order. Loading reproduces training
// bit-exactly on the same platform. Writes go through a temp file + rename.
void save_checkpoint(const std::string& path, const AgentBundle& agents,
                     const TrainerState& state);
struct LoadedCheckpoint {
  AgentBundle agents;
  TrainerState state;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// One route per vehicle, customers only (the depot is implicit at both ends).
struct Solution {
  std::vector<std::vector<int>> routes;
  double cost = 0.0;
};

// Reads the per-cluster tours off a state.
Solution solution_from_state(const State& state, MatchingMode mode);

// "COST <c>" then one "ROUTE <v>: 0 i1 ... 0" line per vehicle (1-based v).
std::string serialize_solution(const Solution& solution);

// Independent feasibility audit against the instance alone: every customer
// exactly once, per-feature loads within capacity. Throws with a diagnostic.
void check_solution(const CvrpInstance& instance, const Solution& solution);

// Every *.vrp file under dir, sorted by filename.
std::vector<std::pair<std::string, std::shared_ptr<const CvrpInstance>>> load_dataset(
    const std::string& dir);

struct DatasetSplit {
  std::vector<std::shared_ptr<const CvrpInstance>> train;
  std::vector<std::shared_ptr<const CvrpInstance>> test;
  std::vector<std::string> test_names;
};

// Deterministic 85/15 split: instances ranked by a seeded name hash, the top
// 15% (rounded) become the test set.
DatasetSplit split_dataset(
    const std::vector<std::pair<std::string, std::shared_ptr<const CvrpInstance>>>& pool,
    std::uint64_t seed);

// Writes content via a temp file and rename so readers never see a partial
// file.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace vrpppo

#endif  // VRPPPO_IO_HPP_
