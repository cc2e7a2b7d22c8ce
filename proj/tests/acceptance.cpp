// End-to-end acceptance gate: eight numbered checks, one PASS/FAIL line
// each, non-zero exit if any fail. Thresholds live next to the checks they
// guard; subprocess-free, but criteria 5 and 8 drive the real command
// entry points.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "support/fd.hpp"
#include "support/oracles.hpp"
#include "vrpppo/commands.hpp"
#include "vrpppo/io.hpp"
#include "vrpppo/mdp.hpp"
#include "vrpppo/nets.hpp"
#include "vrpppo/ppo.hpp"
#include "vrpppo/tensor.hpp"
#include "vrpppo/tsp.hpp"

using namespace vrpppo;
namespace fs = std::filesystem;

namespace {

// The commands narrate their progress on stdout; the gate wants eight clean
// lines, so their chatter goes to /dev/null while they run.
class StdoutSilencer {
 public:
  StdoutSilencer() {
    std::fflush(stdout);
    saved_ = dup(1);
    const int null_fd = open("/dev/null", O_WRONLY);
    dup2(null_fd, 1);
    close(null_fd);
  }
  ~StdoutSilencer() {
    std::fflush(stdout);
    dup2(saved_, 1);
    close(saved_);
  }

 private:
  int saved_ = -1;
};

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path dir = fs::temp_directory_path() / "vrp-ppo-acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }();
  return root;
}

CvrpInstance random_cluster_instance(std::mt19937_64& rng, int customers) {
  std::uniform_real_distribution<double> coord(0.0, 100.0);
  std::vector<Point> coords;
  for (int i = 0; i <= customers; ++i) coords.push_back({coord(rng), coord(rng)});
  Grid<double> demands(1, customers, 1.0);
  Grid<double> capacities(1, 1, std::numeric_limits<double>::infinity());
  return CvrpInstance("cluster", std::move(coords), std::move(demands), std::move(capacities),
                      EdgeRounding::exact);
}

// --- 1. Routing estimate stays within the approximation guarantee ----------

bool check_christofides_bound(std::string& detail) {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 4 + trial % 6;
    const CvrpInstance instance = random_cluster_instance(rng, k);
    std::vector<int> members(k);
    for (int i = 0; i < k; ++i) members[i] = i + 1;
    const ClusterSubgraph sub(instance, members);

    const double upper = christofides_cost(sub, MatchingMode::exact).cost;
    const double optimal = brute_force_tsp(sub).cost;
    const double ratio = upper / optimal;
    worst = std::max(worst, ratio);
    if (ratio < 1.0 || ratio > 1.5) {
      detail = "trial " + std::to_string(trial) + " ratio " + format_number(ratio);
      return false;
    }
  }
  detail = "200 clusters, worst ratio " + format_number(worst);
  return true;
}

// --- 2. Environment arithmetic: telescoping, feasibility, cached costs -----

bool check_mdp_trajectories(std::string& detail) {
  constexpr int kTrajectories = 100;
  constexpr int kSteps = 20;
  const InstanceClass classes[] = {InstanceClass::C1, InstanceClass::C2, InstanceClass::C3};

  for (int traj = 0; traj < kTrajectories; ++traj) {
    GeneratorConfig gen;
    gen.klass = classes[traj % 3];
    gen.n_min = 10;
    gen.n_max = 16;
    gen.m_min = 2;
    gen.m_max = 3;
    gen.seed = 5000 + traj;
    auto instance = std::make_shared<const CvrpInstance>(generate(gen));

    State state = initial_solution(instance, traj, MatchingMode::greedy);
    const double initial = total_cost(state);
    double reward_sum = 0.0;
    std::mt19937_64 rng(traj * 77 + 1);

    for (int t = 0; t < kSteps; ++t) {
      // (b) columns one-hot and loads within capacity at every step.
      for (int i = 0; i < instance->customers(); ++i) {
        int ones = 0;
        for (int v = 0; v < instance->vehicles(); ++v) ones += state.assignment.at(v, i);
        if (ones != 1) {
          detail = "trajectory " + std::to_string(traj) + ": column " + std::to_string(i) +
                   " sums to " + std::to_string(ones);
          return false;
        }
      }
      for (int f = 0; f < instance->features(); ++f)
        for (int v = 0; v < instance->vehicles(); ++v)
          if (state.loads.at(f, v) > instance->capacities().at(f, v)) {
            detail = "trajectory " + std::to_string(traj) + ": overloaded vehicle";
            return false;
          }

      // (c) incrementally maintained cluster costs equal full recomputation.
      if (state.costs != cluster_costs(*instance, state.assignment, MatchingMode::greedy)) {
        detail = "trajectory " + std::to_string(traj) + " step " + std::to_string(t) +
                 ": cached costs drifted";
        return false;
      }

      std::uniform_int_distribution<int> node_dist(1, instance->customers());
      const int node = node_dist(rng);
      const std::vector<uint8_t> mask = feasible_clusters_mask(state, node);
      std::vector<int> open;
      for (int v = 0; v < instance->vehicles(); ++v)
        if (mask[v]) open.push_back(v);
      const int cluster = open[std::uniform_int_distribution<size_t>(0, open.size() - 1)(rng)];

      StepResult step = transition(state, {node, cluster}, MatchingMode::greedy);
      reward_sum += step.reward;
      state = std::move(step.next);
    }

    // (a) rewards telescope to the full cost change with no tolerance.
    if (reward_sum != total_cost(state) - initial) {
      detail = "trajectory " + std::to_string(traj) + ": reward sum " +
               format_number(reward_sum) + " vs cost delta " +
               format_number(total_cost(state) - initial);
      return false;
    }
  }
  detail = "100 trajectories x 20 steps, telescoping exact";
  return true;
}

// --- 3. Every differentiable op and both losses agree with finite differences

bool check_gradients(std::string& detail) {
  constexpr double kOpTol = 1e-4;
  constexpr double kLossTol = 1e-3;
  std::mt19937_64 rng(7);

  struct OpCase {
    const char* name;
    std::function<double(std::vector<Tensor>&, std::mt19937_64&)> run;
  };

  // Each case builds fresh parameters, returns the worst relative error over
  // 20 probes of a scalar built from the op under test.
  auto param = [&rng](std::vector<int> shape) {
    std::uniform_real_distribution<double> init(-1.0, 1.0);
    int n = 1;
    for (int d : shape) n *= d;
    std::vector<double> values(n);
    for (double& v : values) v = init(rng);
    return Tensor::parameter(std::move(shape), std::move(values));
  };

  const std::vector<OpCase> ops = {
      {"add/sub/mul/scale", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({2, 3}), param({2, 3})};
         auto build = [&] {
           return global_sum(sub(mul(params[0], params[1]), scale(add(params[0], params[1]), 0.3)));
         };
         return testing::max_fd_error(build, params, prng);
       }},
      {"tanh", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({3, 4})};
         auto build = [&] { return global_sum(tanh(params[0])); };
         return testing::max_fd_error(build, params, prng);
       }},
      {"conv2d", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({2, 3, 5}), param({3, 2, 3, 3}), param({3})};
         auto build = [&] { return global_sum(conv2d(params[0], params[1], params[2])); };
         return testing::max_fd_error(build, params, prng);
       }},
      {"channel_sum", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({3, 2, 4})};
         auto build = [&] { return global_sum(tanh(channel_sum(params[0]))); };
         return testing::max_fd_error(build, params, prng);
       }},
      {"collapse", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({2, 3, 4})};
         auto build = [&] {
           return add(pick(collapse(params[0], CollapseAxis::clusters), 1),
                      pick(collapse(params[0], CollapseAxis::nodes), 2));
         };
         return testing::max_fd_error(build, params, prng);
       }},
      {"softmax/pick", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({5})};
         auto build = [&] { return pick(softmax(params[0]), 2); };
         return testing::max_fd_error(build, params, prng);
       }},
      {"masked_softmax", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({5})};
         auto build = [&] {
           return pick(masked_softmax(params[0], {1, 0, 1, 1, 0}), 3);
         };
         return testing::max_fd_error(build, params, prng);
       }},
      {"kl_categorical", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({4})};
         const Tensor q = Tensor::constant({4}, {0.4, 0.3, 0.2, 0.1});
         auto build = [&] { return kl_categorical(softmax(params[0]), q); };
         return testing::max_fd_error(build, params, prng);
       }},
      {"stack/tile/global_sum", [&](std::vector<Tensor>& params, std::mt19937_64& prng) {
         params = {param({3}), param({2})};
         auto build = [&] {
           return global_sum(mul(stack_channels({tile_rows(params[0], 2)}),
                                 stack_channels({tile_cols(params[1], 3)})));
         };
         return testing::max_fd_error(build, params, prng);
       }},
  };

  double worst_op = 0.0;
  for (const OpCase& op : ops) {
    std::vector<Tensor> params;
    const double err = op.run(params, rng);
    worst_op = std::max(worst_op, err);
    if (err > kOpTol) {
      detail = std::string(op.name) + " relative error " + format_number(err);
      return false;
    }
  }

  // Composite losses on a genuine rollout batch, probed away from the
  // collection parameters so the penalty term differentiates too.
  GeneratorConfig gen;
  gen.klass = InstanceClass::C3;
  gen.n_min = 8;
  gen.n_max = 11;
  GeneratorSource source(gen);
  AgentBundle agents = make_agents(EncoderConfig{}, 19);
  Hyperparams hp;
  hp.steps = 3;
  hp.rollouts = 4;
  Buffers batch;
  for (int r = 0; r < hp.rollouts; ++r)
    batch.iteration.push_back(run_rollout(source, agents, hp, 4000 + r));
  agents.actor1.weights[1].data()[3] += 0.05;
  agents.actor2.weights[1].data()[3] -= 0.05;
  agents.critic.weights[1].data()[3] += 0.05;

  std::vector<Tensor> theta = actor_params(agents);
  const double actor_err = testing::max_fd_error(
      [&] { return actor_objective(batch, agents, 0.7); }, theta, rng);
  if (actor_err > kLossTol) {
    detail = "actor loss relative error " + format_number(actor_err);
    return false;
  }
  std::vector<Tensor> omega = critic_params(agents);
  const double critic_err = testing::max_fd_error(
      [&] { return critic_objective(batch, agents); }, omega, rng);
  if (critic_err > kLossTol) {
    detail = "critic loss relative error " + format_number(critic_err);
    return false;
  }

  detail = "worst op " + format_number(worst_op) + ", actor " + format_number(actor_err) +
           ", critic " + format_number(critic_err);
  return true;
}

// --- 4. Update-rule mechanics ----------------------------------------------

bool check_ppo_mechanics(std::string& detail) {
  constexpr double kObjectiveTol = 1e-10;

  GeneratorConfig gen;
  gen.klass = InstanceClass::C3;
  gen.n_min = 8;
  gen.n_max = 12;
  GeneratorSource source(gen);
  const AgentBundle agents = make_agents(EncoderConfig{}, 29);
  Hyperparams hp;
  hp.steps = 4;
  hp.rollouts = 8;

  Buffers batch;
  double mean_advantage = 0.0;
  for (int r = 0; r < hp.rollouts; ++r) {
    batch.iteration.push_back(run_rollout(source, agents, hp, 8800 + r));
    mean_advantage += batch.iteration.back().advantage;
  }
  mean_advantage /= hp.rollouts;
  const double at_old = actor_objective(batch, agents, 3.0).item();
  if (std::abs(at_old - mean_advantage) > kObjectiveTol) {
    detail = "objective at the collection parameters off by " +
             format_number(std::abs(at_old - mean_advantage));
    return false;
  }

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> d_dist(0.0, 0.08);
  std::uniform_real_distribution<double> targ_dist(1e-4, 0.05);
  std::uniform_real_distribution<double> beta_dist(1e-6, 8.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double d = d_dist(rng);
    const double d_targ = targ_dist(rng);
    const double beta = beta_dist(rng);
    const double next = update_beta(d, d_targ, beta);
    if (next != beta / 2.0 && next != beta && next != 2.0 * beta) {
      detail = "beta " + format_number(beta) + " became " + format_number(next);
      return false;
    }
  }

  AgentBundle trainee = make_agents(EncoderConfig{}, 29);
  TrainerState state;
  state.master_rng.seed(5);
  hp.rollouts = 6;
  hp.iterations = 3;
  hp.lr_actor = 1e-3;
  hp.lr_critic = 1e-3;
  int batches = 0;
  bool sizes_ok = true;
  TrainHooks hooks;
  hooks.on_batch = [&](const Buffers& b) {
    ++batches;
    sizes_ok = sizes_ok && b.iteration.size() == static_cast<size_t>(hp.rollouts);
  };
  train(trainee, state, source, hp, 1, hooks);
  if (batches != 3 || !sizes_ok) {
    detail = "expected 3 batches of exactly 6 records";
    return false;
  }

  detail = "objective gap " + format_number(std::abs(at_old - mean_advantage)) +
           ", 1000 beta updates in range, batches exact";
  return true;
}

// --- 5. Trained policy beats the uniform baseline on held-out instances ----

ExperimentConfig learning_config(const fs::path& out_dir, int iterations) {
  ExperimentConfig config;
  config.instance_class = "C1";
  config.seed = 3;
  config.n_min = 15;
  config.n_max = 25;
  config.m_min = 2;
  config.m_max = 3;
  config.hp.steps = 10;
  config.hp.rollouts = 16;
  config.hp.iterations = iterations;
  config.hp.lr_actor = 3e-4;
  config.hp.lr_critic = 3e-4;
  config.hp.epochs_actor = 3;
  config.hp.epochs_critic = 3;
  config.hp.beta0 = 1.0;
  config.hp.d_targ = 0.01;
  config.hp.gamma = 0.99;
  config.eval_steps = 60;
  config.eval_count = 10;
  config.checkpoint_every = 0;
  config.out_dir = out_dir.string();
  return config;
}

double mean_improvement_from_csv(const fs::path& csv) {
  std::istringstream in(read_file(csv.string()));
  std::string line;
  std::getline(in, line);  // header
  double sum = 0.0;
  int rows = 0;
  while (std::getline(in, line)) {
    size_t start = 0;
    for (int field = 0; field < 7; ++field) start = line.find(',', start) + 1;
    sum += std::stod(line.substr(start, line.find(',', start) - start));
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("no rows in " + csv.string());
  return sum / rows;
}

bool check_learning(std::string& detail) {
  constexpr double kImprovementBar = 0.05;
  constexpr double kBudgetSeconds = 1800.0;

  const fs::path trained_dir = scratch_root() / "learn-trained";
  const fs::path baseline_dir = scratch_root() / "learn-baseline";

  const auto started = std::chrono::steady_clock::now();
  {
    StdoutSilencer quiet;
    cmd_train(learning_config(baseline_dir, 0));  // checkpoint of the fresh uniform policy
    cmd_train(learning_config(trained_dir, 50));
  }
  const double train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (train_seconds > kBudgetSeconds) {
    detail = "training took " + format_number(train_seconds) + " s";
    return false;
  }

  {
    StdoutSilencer quiet;
    cmd_eval(learning_config(baseline_dir, 0));
    cmd_eval(learning_config(trained_dir, 50));
  }
  const double baseline = mean_improvement_from_csv(baseline_dir / "eval.csv");
  const double trained = mean_improvement_from_csv(trained_dir / "eval.csv");

  detail = "trained " + format_number(trained) + " vs baseline " + format_number(baseline) +
           " on 10 held-out instances, " + format_number(train_seconds) + " s training";
  return trained >= kImprovementBar && trained > baseline;
}

// --- 6. One parameter set serves both size bands ----------------------------

bool check_size_generalization(std::string& detail) {
  GeneratorConfig train_gen;
  train_gen.klass = InstanceClass::C1;
  train_gen.n_min = 15;
  train_gen.n_max = 25;
  GeneratorSource source(train_gen);
  AgentBundle agents = make_agents(EncoderConfig{}, 41);
  TrainerState state;
  state.master_rng.seed(41);
  Hyperparams hp;
  hp.steps = 10;
  hp.rollouts = 8;
  hp.iterations = 5;
  hp.lr_actor = 3e-4;
  hp.lr_critic = 3e-4;
  train(agents, state, source, hp, 1, {});

  for (int n : {35, 65}) {
    GeneratorConfig gen;
    gen.klass = InstanceClass::C1;
    gen.n_min = n;
    gen.n_max = n;
    gen.m_min = 5;
    gen.m_max = 5;
    gen.seed = 600 + n;
    auto instance = std::make_shared<const CvrpInstance>(generate(gen));

    const State start = initial_solution(instance, 1, MatchingMode::greedy);
    const Actor1Out a1 = actor1_forward(agents, encode_state(start));
    double sum = 0.0;
    for (double p : a1.pi.data()) {
      if (p < 0.0) {
        detail = "n=" + std::to_string(n) + ": negative node probability";
        return false;
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      detail = "n=" + std::to_string(n) + ": node distribution sums to " + format_number(sum);
      return false;
    }
    const std::vector<uint8_t> mask = feasible_clusters_mask(start, 1);
    const Actor2Out a2 = actor2_forward(agents, a1.hbar, 1, mask);
    sum = 0.0;
    for (int v = 0; v < instance->vehicles(); ++v) {
      const double p = a2.pi.data()[v];
      if (p < 0.0 || (!mask[v] && p != 0.0)) {
        detail = "n=" + std::to_string(n) + ": cluster distribution violates the mask";
        return false;
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      detail = "n=" + std::to_string(n) + ": cluster distribution sums to " + format_number(sum);
      return false;
    }

    EvalOptions options;
    options.max_steps = 30;
    options.seed = 9;
    const EvalResult result = evaluate_instance(agents, instance, options);
    const Solution solution = solution_from_state(result.best_state, MatchingMode::greedy);
    check_solution(*instance, solution);  // throws on any feasibility breach
    if (result.best_cost > result.init_cost) {
      detail = "n=" + std::to_string(n) + ": best cost above the initial cost";
      return false;
    }
  }
  detail = "n=35 and n=65 (m=5), valid distributions, audited solutions";
  return true;
}

// --- 7. Published-instance ingestion and generator round-trips --------------

bool check_ingestion(std::string& detail) {
  const std::string path = std::string(VRP_PPO_DATA_DIR) + "/A-n32-k5.vrp";
  const CvrpInstance a32 = parse_cvrplib(read_file(path));
  if (a32.nodes() != 32 || a32.customers() != 31 || a32.vehicles() != 5) {
    detail = "A-n32-k5 header mismatch: nodes " + std::to_string(a32.nodes()) + ", vehicles " +
             std::to_string(a32.vehicles());
    return false;
  }
  for (int v = 0; v < 5; ++v)
    if (a32.capacities().at(0, v) != 100.0) {
      detail = "A-n32-k5 capacity mismatch";
      return false;
    }
  if (a32.coords()[0] != Point{82.0, 76.0} || a32.edge_rounding() != EdgeRounding::tsplib_nint) {
    detail = "A-n32-k5 depot or metric mismatch";
    return false;
  }

  for (InstanceClass klass : {InstanceClass::C1, InstanceClass::C2, InstanceClass::C3}) {
    GeneratorConfig gen;
    gen.klass = klass;
    gen.n_min = 12;
    gen.n_max = 20;
    gen.seed = 77;
    const CvrpInstance original = generate(gen);
    const CvrpInstance reparsed = parse_cvrplib(serialize_cvrplib(original));
    if (!(reparsed == original)) {
      detail = "round-trip mismatch for " + original.name();
      return false;
    }
  }
  detail = "A-n32-k5 header exact, three generator round-trips identical";
  return true;
}

// --- 8. Solve output bracketed by the brute-force optimum and the start ----

bool check_small_instance_sanity(std::string& detail) {
  double worst_gap = 1.0;
  for (int i = 0; i < 5; ++i) {
    GeneratorConfig gen;
    gen.klass = i % 2 == 0 ? InstanceClass::C3 : InstanceClass::C1;
    gen.n_min = 6;
    gen.n_max = 8;
    gen.m_min = 2;
    gen.m_max = 2;
    gen.seed = 300 + i;
    const CvrpInstance instance = generate(gen);
    const double optimum = testing::brute_force_vrp(instance);

    const fs::path dir = scratch_root() / ("solve-" + std::to_string(i));
    fs::create_directories(dir);
    const fs::path vrp = dir / (instance.name() + ".vrp");
    write_file_atomic(vrp.string(), serialize_cvrplib(instance));

    auto solve_cost = [&](int steps, const fs::path& out)
        -> double {
      ExperimentConfig config;
      config.instance_path = vrp.string();
      config.out_dir = out.string();
      config.eval_steps = steps;
      config.seed = 11;
      {
        StdoutSilencer quiet;
        cmd_solve(config);
      }
      const std::string sol = read_file((out / (instance.name() + ".sol")).string());
      return std::stod(sol.substr(5, sol.find('\n') - 5));
    };

    const double initial = solve_cost(0, dir / "initial");
    const double improved = solve_cost(120, dir / "improved");
    if (improved < optimum || improved > initial || initial < optimum) {
      detail = instance.name() + ": optimum " + format_number(optimum) + ", solve " +
               format_number(improved) + ", initial " + format_number(initial);
      return false;
    }
    worst_gap = std::max(worst_gap, improved / optimum);
  }
  detail = "5 instances, solve cost within [optimum, initial]; worst ratio " +
           format_number(worst_gap);
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*run)(std::string&);
  };
  const Criterion criteria[] = {
      {"christofides upper bound within [1.0, 1.5] of the exact tour", check_christofides_bound},
      {"rewards telescope exactly; assignments, loads, cached costs hold", check_mdp_trajectories},
      {"ops within 1e-4 and losses within 1e-3 of finite differences", check_gradients},
      {"surrogate equals mean advantage at theta_old; beta and buffers exact", check_ppo_mechanics},
      {"trained policy improves held-out instances by >= 0.05 and beats uniform", check_learning},
      {"one parameter set serves n=35 and n=65 with feasible output", check_size_generalization},
      {"published instance and generator files round-trip exactly", check_ingestion},
      {"solve cost bracketed by brute-force optimum and initial cost", check_small_instance_sanity},
  };

  int failures = 0;
  for (size_t i = 0; i < std::size(criteria); ++i) {
    std::string detail;
    bool ok = false;
    const auto started = std::chrono::steady_clock::now();
    try {
      ok = criteria[i].run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::printf("%s  criterion %zu: %s (%.1f s)%s%s\n", ok ? "PASS" : "FAIL", i + 1,
                criteria[i].name, seconds, detail.empty() ? "" : " -- ", detail.c_str());
    failures += !ok;
  }
  if (failures) std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
