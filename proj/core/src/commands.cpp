#include "vrpppo/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <stdexcept>

#include "vrpppo/mdp.hpp"

namespace vrpppo {

namespace fs = std::filesystem;

namespace {

std::string join_path(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

// Distinct deterministic stream from the training master rng, so held-out
// episodes never reuse training seeds.
std::mt19937_64 eval_rng(std::uint64_t seed) {
  return std::mt19937_64(seed * 0x9e3779b97f4a7c15ull + 1);
}

AgentBundle load_agents_for(const ExperimentConfig& config, const std::string& path,
                            TrainerState* state_out = nullptr) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  if (!(loaded.agents.config == config.encoder_config()))
    throw std::runtime_error("checkpoint " + path +
                             " was trained with a different network shape than the config");
  if (state_out) *state_out = std::move(loaded.state);
  return loaded.agents;
}

void print_eval_line(int index, const std::string& name, const EvalResult& result) {
  std::printf("[%3d] %-24s init %12.4f  best %12.4f  impr %6.4f  steps %5d  %7.0f ms\n",
              index, name.c_str(), result.init_cost, result.best_cost, result.improvement,
              result.steps_taken, result.wall_ms);
}

MetricsRow eval_row(int index, const EvalResult& result) {
  MetricsRow row;  // training-only columns stay 0
  row.id = index;
  row.init_cost = result.init_cost;
  row.best_cost = result.best_cost;
  row.improvement = result.improvement;
  row.wall_ms = result.wall_ms;
  return row;
}

void write_split_names(const std::string& path, const std::vector<std::string>& names) {
  std::string text;
  for (const std::string& name : names) text += name + "\n";
  write_file_atomic(path, text);
}

}  // namespace

int rollout_threads() {
  const char* raw = std::getenv("VRP_PPO_THREADS");
  if (!raw || !*raw) return 1;
  int threads = 0;
  auto [end, ec] = std::from_chars(raw, raw + std::strlen(raw), threads);
  if (ec != std::errc{} || *end != '\0' || threads < 1)
    throw std::invalid_argument(std::string("VRP_PPO_THREADS must be a positive integer, got '") +
                                raw + "'");
  return threads;
}

int cmd_train(const ExperimentConfig& config) {
  config.hp.validate();
  fs::create_directories(config.out_dir);
  const std::string checkpoint = config.checkpoint_path.empty()
                                     ? join_path(config.out_dir, "checkpoint.bin")
                                     : config.checkpoint_path;

  AgentBundle agents;
  TrainerState state;
  if (fs::exists(checkpoint)) {
    agents = load_agents_for(config, checkpoint, &state);
    std::cout << "resuming from " << checkpoint << " at iteration " << state.iteration << "\n";
  } else {
    agents = make_agents(config.encoder_config(), config.seed);
    state.beta = config.hp.beta0;
    state.master_rng.seed(config.seed);
  }

  std::unique_ptr<InstanceSource> source;
  if (config.instance_class == "cvrplib") {
    DatasetSplit split = split_dataset(load_dataset(config.dataset_dir), config.seed);
    if (split.train.empty()) throw std::runtime_error("dataset has no training instances");
    write_split_names(join_path(config.out_dir, "eval_split.txt"), split.test_names);
    std::cout << "dataset: " << split.train.size() << " train / " << split.test.size()
              << " held out (names in eval_split.txt)\n";
    source = std::make_unique<DatasetSource>(std::move(split.train));
  } else {
    source = std::make_unique<GeneratorSource>(config.generator_config());
  }

  MetricsWriter metrics(join_path(config.out_dir, "metrics.csv"));
  TrainHooks hooks;
  hooks.on_metrics = [&metrics](const MetricsRow& row) {
    metrics.append(row);
    std::printf(
        "iter %4d  return %10.4f  adv %10.4f  kl %.6f  beta %-10g  init %10.3f  best %10.3f"
        "  impr %7.4f  %6.0f ms\n",
        row.id, row.mean_return, row.mean_advantage, row.kl_d, row.beta, row.init_cost,
        row.best_cost, row.improvement, row.wall_ms);
    std::fflush(stdout);
  };
  hooks.on_checkpoint = [&](const AgentBundle& a, const TrainerState& s) {
    if (config.checkpoint_every > 0 && s.iteration % config.checkpoint_every == 0)
      save_checkpoint(checkpoint, a, s);
  };

  train(agents, state, *source, config.hp, rollout_threads(), hooks);
  save_checkpoint(checkpoint, agents, state);
  std::cout << "checkpoint: " << checkpoint << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& config) {
  fs::create_directories(config.out_dir);
  const std::string checkpoint = config.checkpoint_path.empty()
                                     ? join_path(config.out_dir, "checkpoint.bin")
                                     : config.checkpoint_path;
  if (!fs::exists(checkpoint))
    throw std::runtime_error("eval needs a checkpoint; none at " + checkpoint);
  const AgentBundle agents = load_agents_for(config, checkpoint);

  std::vector<std::pair<std::string, std::shared_ptr<const CvrpInstance>>> subjects;
  std::mt19937_64 rng = eval_rng(config.seed);
  if (config.instance_class == "cvrplib") {
    DatasetSplit split = split_dataset(load_dataset(config.dataset_dir), config.seed);
    if (split.test.empty()) throw std::runtime_error("dataset split has no held-out instances");
    write_split_names(join_path(config.out_dir, "eval_split.txt"), split.test_names);
    for (size_t i = 0; i < split.test.size(); ++i)
      subjects.emplace_back(split.test_names[i], split.test[i]);
  } else {
    for (int i = 0; i < config.eval_count; ++i) {
      GeneratorConfig gen = config.generator_config();
      gen.seed = rng();
      auto instance = std::make_shared<const CvrpInstance>(generate(gen));
      subjects.emplace_back(instance->name(), std::move(instance));
    }
  }

  EvalOptions options;
  options.max_steps = config.eval_steps;
  options.greedy = config.greedy_eval;
  options.budget_seconds = config.budget_seconds;
  options.matching = config.hp.matching;

  const std::string csv_path = join_path(config.out_dir, "eval.csv");
  fs::remove(csv_path);
  MetricsWriter csv(csv_path);

  double improvement_sum = 0.0;
  for (size_t i = 0; i < subjects.size(); ++i) {
    options.seed = rng();
    EvalResult result = evaluate_instance(agents, subjects[i].second, options);
    print_eval_line(static_cast<int>(i), subjects[i].first, result);
    csv.append(eval_row(static_cast<int>(i), result));
    improvement_sum += result.improvement;
  }
  std::printf("mean improvement over %zu instances: %.4f\n", subjects.size(),
              improvement_sum / static_cast<double>(subjects.size()));
  std::cout << "rows: " << csv_path << "\n";
  return 0;
}

int cmd_solve(const ExperimentConfig& config) {
  if (config.instance_path.empty()) throw std::runtime_error("solve needs instance=<path>");
  fs::create_directories(config.out_dir);
  auto instance =
      std::make_shared<const CvrpInstance>(parse_cvrplib(read_file(config.instance_path)));

  AgentBundle agents = config.checkpoint_path.empty()
                           ? make_agents(config.encoder_config(), config.seed)
                           : load_agents_for(config, config.checkpoint_path);

  EvalOptions options;
  options.max_steps = config.eval_steps;
  options.greedy = config.greedy_eval;
  options.budget_seconds = config.budget_seconds;
  options.matching = config.hp.matching;
  options.seed = config.seed;
  EvalResult result = evaluate_instance(agents, instance, options);

  Solution solution = solution_from_state(result.best_state, options.matching);
  check_solution(*instance, solution);
  const std::string sol_path =
      join_path(config.out_dir, fs::path(config.instance_path).stem().string() + ".sol");
  write_file_atomic(sol_path, serialize_solution(solution));

  std::cout << "COST " << format_number(solution.cost) << "\n";
  std::printf("init %.4f  improved %.4f  steps %d  %.0f ms\n", result.init_cost,
              result.improvement, result.steps_taken, result.wall_ms);
  std::cout << "solution: " << sol_path << "\n";
  return 0;
}

int cmd_generate(const ExperimentConfig& config) {
  const std::string target = config.dataset_dir.empty() ? config.out_dir : config.dataset_dir;
  fs::create_directories(target);

  std::string manifest = "# generated instances\n";
  manifest += "# class=" + config.instance_class + " n=[" + std::to_string(config.n_min) + "," +
              std::to_string(config.n_max) + "] m=[" + std::to_string(config.m_min) + "," +
              std::to_string(config.m_max) + "] fill_ratio=" + format_number(config.fill_ratio) +
              "\n";
  for (int i = 0; i < config.generate_count; ++i) {
    GeneratorConfig gen = config.generator_config();
    gen.seed = config.seed + static_cast<std::uint64_t>(i);
    const CvrpInstance instance = generate(gen);
    const std::string file = instance.name() + ".vrp";
    write_file_atomic(join_path(target, file), serialize_cvrplib(instance));
    manifest += file + " seed=" + std::to_string(gen.seed) + "\n";
  }
  write_file_atomic(join_path(target, "manifest.txt"), manifest);
  std::cout << config.generate_count << " instances in " << target << "\n";
  return 0;
}

int cmd_inspect(const ExperimentConfig& config) {
  if (config.instance_path.empty()) throw std::runtime_error("inspect needs instance=<path>");
  auto instance =
      std::make_shared<const CvrpInstance>(parse_cvrplib_lenient(read_file(config.instance_path)));

  std::cout << "name:      " << instance->name() << "\n";
  std::cout << "customers: " << instance->customers() << "\n";
  std::cout << "vehicles:  " << instance->vehicles() << "\n";
  std::cout << "features:  " << instance->features() << "\n";
  std::cout << "metric:    "
            << (instance->edge_rounding() == EdgeRounding::exact ? "exact euclidean"
                                                                 : "nearest-integer euclidean")
            << "\n";
  for (int f = 0; f < instance->features(); ++f)
    std::printf("feature %d: demand %.6g over capacity %.6g\n", f, instance->total_demand(f),
                instance->total_capacity(f));

  const std::vector<int> bad = instance->infeasible_features();
  if (!bad.empty()) {
    std::cout << "verdict:   infeasible (fleet too small on feature";
    for (int f : bad) std::cout << " " << f;
    std::cout << ")\n";
    return 0;
  }
  std::cout << "verdict:   feasible\n";
  const State start = initial_solution(instance, config.seed, config.hp.matching);
  std::cout << "initial solution cost (seed " << config.seed
            << "): " << format_number(total_cost(start)) << "\n";
  return 0;
}

}  // namespace vrpppo
