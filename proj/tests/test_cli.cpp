#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vrpppo/commands.hpp"
#include "vrpppo/io.hpp"
#include "vrpppo/mdp.hpp"

using namespace vrpppo;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("vrp-ppo-tests-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VRP_PPO_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int line_count(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

CvrpInstance tiny_instance(std::string name) {
  Grid<double> demands(1, 3);
  demands.at(0, 0) = 2.0;
  demands.at(0, 1) = 3.0;
  demands.at(0, 2) = 4.0;
  Grid<double> capacities(1, 2, 5.0);
  return CvrpInstance(std::move(name), {{0, 0}, {3, 0}, {0, 4}, {6, 8}},
                      std::move(demands), std::move(capacities), EdgeRounding::exact);
}

// A config small enough that train/eval complete in well under a second.
std::string toy_config(const fs::path& out_dir) {
  return "class = C1\n"
         "seed = 7\n"
         "n_min = 6\nn_max = 8\nm_min = 2\nm_max = 2\n"
         "steps = 2\nrollouts = 2\niterations = 2\n"
         "epochs_actor = 1\nepochs_critic = 1\n"
         "conv_depth = 2\nhidden_channels = 6\nout_channels = 3\n"
         "eval_steps = 3\neval_count = 2\n"
         "out_dir = " +
         out_dir.string() + "\n";
}

}  // namespace

TEST_CASE("config parsing covers every key and strips comments") {
  const std::string text =
      "# experiment settings\n"
      "class = C2\n"
      "dataset_dir = data/pool\n"
      "checkpoint = run/ck.bin\n"
      "out_dir = run\n"
      "instance = a.vrp   # trailing comment\n"
      "seed = 42\n"
      "gamma = 0.9\n"
      "steps = 7\n"
      "rollouts = 5\n"
      "iterations = 11\n"
      "lr_actor = 0.002\n"
      "lr_critic = 0.003\n"
      "epochs_actor = 2\n"
      "epochs_critic = 4\n"
      "beta0 = 0.5\n"
      "d_targ = 0.02\n"
      "matching = exact\n"
      "\n"
      "n_min = 6\n"
      "n_max = 9\n"
      "m_min = 2\n"
      "m_max = 3\n"
      "fill_ratio = 0.7\n"
      "conv_depth = 2\n"
      "hidden_channels = 9\n"
      "out_channels = 3\n"
      "eval_steps = 12\n"
      "eval_count = 4\n"
      "budget_seconds = 1.5\n"
      "greedy_eval = true\n"
      "generate_count = 6\n"
      "checkpoint_every = 3\n";

  const ExperimentConfig c = parse_config(text);
  CHECK(c.instance_class == "C2");
  CHECK(c.dataset_dir == "data/pool");
  CHECK(c.checkpoint_path == "run/ck.bin");
  CHECK(c.out_dir == "run");
  CHECK(c.instance_path == "a.vrp");
  CHECK(c.seed == 42);
  CHECK(c.hp.gamma == 0.9);
  CHECK(c.hp.steps == 7);
  CHECK(c.hp.rollouts == 5);
  CHECK(c.hp.iterations == 11);
  CHECK(c.hp.lr_actor == 0.002);
  CHECK(c.hp.lr_critic == 0.003);
  CHECK(c.hp.epochs_actor == 2);
  CHECK(c.hp.epochs_critic == 4);
  CHECK(c.hp.beta0 == 0.5);
  CHECK(c.hp.d_targ == 0.02);
  CHECK(c.hp.matching == MatchingMode::exact);
  CHECK(c.n_min == 6);
  CHECK(c.n_max == 9);
  CHECK(c.m_min == 2);
  CHECK(c.m_max == 3);
  CHECK(c.fill_ratio == 0.7);
  CHECK(c.conv_depth == 2);
  CHECK(c.hidden_channels == 9);
  CHECK(c.out_channels == 3);
  CHECK(c.eval_steps == 12);
  CHECK(c.eval_count == 4);
  CHECK(c.budget_seconds == 1.5);
  CHECK(c.greedy_eval);
  CHECK(c.generate_count == 6);
  CHECK(c.checkpoint_every == 3);
}

TEST_CASE("config parsing rejects malformed input with context") {
  CHECK_THROWS_AS(parse_config("mystery = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("steps = soon\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("gamma = almost\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("greedy_eval = maybe\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("class = C9\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("matching = hungarian\n"), std::invalid_argument);

  try {
    parse_config("seed = 1\n\nnot a pair\n");
    FAIL("expected a parse failure");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("configs map onto generator and encoder settings") {
  ExperimentConfig c;
  c.instance_class = "C3";
  c.n_min = 5;
  c.n_max = 8;
  c.m_min = 2;
  c.m_max = 4;
  c.fill_ratio = 0.6;
  c.seed = 99;
  c.conv_depth = 4;
  c.hidden_channels = 11;
  c.out_channels = 5;

  const GeneratorConfig gen = c.generator_config();
  CHECK(gen.klass == InstanceClass::C3);
  CHECK(gen.n_min == 5);
  CHECK(gen.n_max == 8);
  CHECK(gen.m_min == 2);
  CHECK(gen.m_max == 4);
  CHECK(gen.capacity_fill_ratio == 0.6);
  CHECK(gen.seed == 99);

  const EncoderConfig enc = c.encoder_config();
  CHECK(enc.features == 1);
  CHECK(enc.conv_depth == 4);
  CHECK(enc.hidden_channels == 11);
  CHECK(enc.out_channels == 5);

  c.instance_class = "cvrplib";
  CHECK_THROWS(c.generator_config());
}

TEST_CASE("numbers render as the shortest round-tripping decimals") {
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(-0.25) == "-0.25");
  CHECK(format_number(3.0) == "3");
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(9.5367431640625e-07) == "9.5367431640625e-07");
  for (double v : {1.0 / 3.0, 12345.678901, -2.5e-13, 1e17, 745.0078125})
    CHECK(std::stod(format_number(v)) == v);
}

TEST_CASE("metrics files get one header and append-only rows") {
  CHECK(MetricsWriter::header() ==
        "iter,mean_return,mean_adv,kl_d,beta,init_cost,best_cost,impr,wall_ms");

  MetricsRow row;
  row.id = 3;
  row.mean_return = -1.5;
  row.mean_advantage = -0.25;
  row.kl_d = 0.0078125;
  row.beta = 0.5;
  row.init_cost = 100.25;
  row.best_cost = 90.5;
  row.improvement = 0.125;
  row.wall_ms = 12.0;
  CHECK(MetricsWriter::format(row) == "3,-1.5,-0.25,0.0078125,0.5,100.25,90.5,0.125,12");

  const fs::path dir = fresh_dir("metrics");
  const std::string path = (dir / "metrics.csv").string();
  {
    MetricsWriter writer(path);
    writer.append(row);
  }
  {
    MetricsWriter writer(path);  // reopening must not repeat the header
    row.id = 4;
    writer.append(row);
  }
  const std::string content = read_file(path);
  CHECK(line_count(content) == 3);
  CHECK(content.find(MetricsWriter::header()) == 0);
  CHECK(content.find("4,-1.5") != std::string::npos);
}

TEST_CASE("solutions serialize with explicit depot visits") {
  Solution solution;
  solution.routes = {{1, 2}, {3}};
  solution.cost = 10.5;
  CHECK(serialize_solution(solution) == "COST 10.5\nROUTE 1: 0 1 2 0\nROUTE 2: 0 3 0\n");
  CHECK(serialize_solution(Solution{{{}, {}}, 0.0}) == "COST 0\nROUTE 1: 0 0\nROUTE 2: 0 0\n");
}

TEST_CASE("the solution audit catches every tampering mode") {
  const CvrpInstance tiny = tiny_instance("tiny");

  Solution good;
  good.routes = {{1, 2}, {3}};  // loads 5 and 4 against capacity 5
  CHECK_NOTHROW(check_solution(tiny, good));

  Solution wrong_fleet{{{1, 2, 3}}, 0.0};
  CHECK_THROWS(check_solution(tiny, wrong_fleet));
  Solution missing{{{1}, {3}}, 0.0};
  CHECK_THROWS(check_solution(tiny, missing));
  Solution duplicated{{{1, 2}, {2, 3}}, 0.0};
  CHECK_THROWS(check_solution(tiny, duplicated));
  Solution unknown{{{1, 9}, {3}}, 0.0};
  CHECK_THROWS(check_solution(tiny, unknown));
  Solution overloaded{{{1, 2, 3}, {}}, 0.0};  // load 9 against capacity 5
  CHECK_THROWS(check_solution(tiny, overloaded));
}

TEST_CASE("states convert to audited solutions with matching cost") {
  GeneratorConfig gen;
  gen.klass = InstanceClass::C3;
  gen.n_min = 8;
  gen.n_max = 10;
  gen.seed = 3;
  auto instance = std::make_shared<const CvrpInstance>(generate(gen));
  const State state = initial_solution(instance, 1, MatchingMode::greedy);

  const Solution solution = solution_from_state(state, MatchingMode::greedy);
  CHECK_NOTHROW(check_solution(*instance, solution));
  CHECK(solution.cost == total_cost(state));
  CHECK(solution.routes.size() == static_cast<size_t>(instance->vehicles()));
}

TEST_CASE("dataset splits hold out a deterministic 15 percent") {
  std::vector<std::pair<std::string, std::shared_ptr<const CvrpInstance>>> pool;
  for (int i = 0; i < 100; ++i) {
    std::string name = "inst-" + std::to_string(i / 10) + std::to_string(i % 10) + ".vrp";
    pool.emplace_back(name, std::make_shared<const CvrpInstance>(tiny_instance(name)));
  }

  const DatasetSplit split = split_dataset(pool, 11);
  CHECK(split.test.size() == 15);
  CHECK(split.train.size() == 85);
  CHECK(split.test_names.size() == 15);

  // Membership partitions the pool and both halves keep pool order.
  std::vector<std::string> train_names, test_names;
  size_t train_i = 0, test_i = 0;
  for (const auto& [name, instance] : pool) {
    if (test_i < split.test.size() && split.test[test_i] == instance) {
      test_names.push_back(name);
      ++test_i;
    } else {
      REQUIRE(train_i < split.train.size());
      CHECK(split.train[train_i] == instance);
      ++train_i;
    }
  }
  CHECK(test_names == split.test_names);

  const DatasetSplit again = split_dataset(pool, 11);
  CHECK(again.test_names == split.test_names);
  const DatasetSplit reshuffled = split_dataset(pool, 12);
  CHECK(reshuffled.test_names != split.test_names);
  CHECK(reshuffled.test_names.size() == 15);

  CHECK(split_dataset({pool.begin(), pool.begin() + 3}, 1).test.empty());
  CHECK(split_dataset({pool.begin(), pool.begin() + 4}, 1).test.size() == 1);
}

TEST_CASE("dataset directories load sorted and report bad files by name") {
  const fs::path dir = fresh_dir("dataset");
  GeneratorConfig gen;
  gen.klass = InstanceClass::C3;
  gen.n_min = 5;
  gen.n_max = 6;
  for (int i : {0, 1, 2}) {
    gen.seed = 40 + i;
    const std::string name = std::string(1, static_cast<char>('c' - i)) + ".vrp";
    write_file_atomic((dir / name).string(), serialize_cvrplib(generate(gen)));
  }
  write_file_atomic((dir / "notes.txt").string(), "not an instance\n");

  auto pool = load_dataset(dir.string());
  REQUIRE(pool.size() == 3);
  CHECK(pool[0].first == "a.vrp");
  CHECK(pool[1].first == "b.vrp");
  CHECK(pool[2].first == "c.vrp");
  CHECK(pool[0].second->customers() >= 5);

  write_file_atomic((dir / "z.vrp").string(), "NAME : broken\n");
  try {
    load_dataset(dir.string());
    FAIL("expected a parse failure");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("z.vrp") != std::string::npos);
  }
  CHECK_THROWS(load_dataset((dir / "missing").string()));
}

TEST_CASE("checkpoints restore every trainable and stateful value bitwise") {
  const fs::path dir = fresh_dir("checkpoint");
  const std::string path = (dir / "ck.bin").string();

  EncoderConfig enc;
  enc.hidden_channels = 6;
  enc.out_channels = 3;
  AgentBundle agents = make_agents(enc, 17);
  TrainerState state;
  state.beta = 0.125;
  state.iteration = 9;
  state.master_rng.seed(1234);
  state.master_rng();  // advance so the stream position matters

  // Give the optimizer moments a non-trivial shape to restore.
  GeneratorConfig gen;
  gen.klass = InstanceClass::C1;
  gen.n_min = 6;
  gen.n_max = 7;
  GeneratorSource source(gen);
  Hyperparams hp;
  hp.steps = 2;
  hp.rollouts = 2;
  hp.iterations = 10;  // state.iteration 9 -> one more iteration
  hp.epochs_actor = 1;
  hp.epochs_critic = 1;
  hp.lr_actor = 1e-3;
  hp.lr_critic = 1e-3;
  train(agents, state, source, hp, 1, {});

  save_checkpoint(path, agents, state);
  LoadedCheckpoint loaded = load_checkpoint(path);

  CHECK(loaded.state.beta == state.beta);
  CHECK(loaded.state.iteration == 10);
  CHECK(loaded.state.master_rng == state.master_rng);
  CHECK(loaded.agents.config == enc);
  const auto original = actor_params(agents);
  const auto restored = actor_params(loaded.agents);
  REQUIRE(original.size() == restored.size());
  for (size_t i = 0; i < original.size(); ++i)
    CHECK(original[i].data() == restored[i].data());
  for (size_t i = 0; i < state.adam_actor.m1.size(); ++i) {
    CHECK(loaded.state.adam_actor.m1[i] == state.adam_actor.m1[i]);
    CHECK(loaded.state.adam_actor.m2[i] == state.adam_actor.m2[i]);
  }
  CHECK(loaded.state.adam_actor.step == state.adam_actor.step);
  CHECK(loaded.state.adam_critic.step == state.adam_critic.step);

  CHECK_THROWS(load_checkpoint((dir / "absent.bin").string()));
  write_file_atomic((dir / "bogus.bin").string(), "vrp-ppo-checkpoint\nxxxx");
  CHECK_THROWS(load_checkpoint((dir / "bogus.bin").string()));
  write_file_atomic((dir / "noise.bin").string(), "something else entirely");
  CHECK_THROWS(load_checkpoint((dir / "noise.bin").string()));
}

TEST_CASE("a save/load cycle mid-run changes nothing about training") {
  const fs::path dir = fresh_dir("resume");
  const std::string path = (dir / "ck.bin").string();

  EncoderConfig enc;
  enc.hidden_channels = 6;
  enc.out_channels = 3;
  GeneratorConfig gen;
  gen.klass = InstanceClass::C1;
  gen.n_min = 6;
  gen.n_max = 8;
  Hyperparams hp;
  hp.steps = 2;
  hp.rollouts = 3;
  hp.epochs_actor = 2;
  hp.epochs_critic = 2;
  hp.lr_actor = 1e-3;
  hp.lr_critic = 1e-3;

  // One uninterrupted run to four iterations...
  AgentBundle straight = make_agents(enc, 23);
  TrainerState straight_state;
  straight_state.beta = hp.beta0;
  straight_state.master_rng.seed(77);
  GeneratorSource source_a(gen);
  hp.iterations = 4;
  train(straight, straight_state, source_a, hp, 1, {});

  // ...against two iterations, a checkpoint cycle, then two more.
  AgentBundle resumed = make_agents(enc, 23);
  TrainerState resumed_state;
  resumed_state.beta = hp.beta0;
  resumed_state.master_rng.seed(77);
  GeneratorSource source_b(gen);
  hp.iterations = 2;
  train(resumed, resumed_state, source_b, hp, 1, {});
  save_checkpoint(path, resumed, resumed_state);

  LoadedCheckpoint loaded = load_checkpoint(path);
  GeneratorSource source_c(gen);
  hp.iterations = 4;
  train(loaded.agents, loaded.state, source_c, hp, 1, {});

  CHECK(loaded.state.iteration == straight_state.iteration);
  CHECK(loaded.state.beta == straight_state.beta);
  CHECK(loaded.state.master_rng == straight_state.master_rng);
  const auto expected = actor_params(straight);
  const auto actual = actor_params(loaded.agents);
  for (size_t i = 0; i < expected.size(); ++i) CHECK(expected[i].data() == actual[i].data());
  const auto expected_critic = critic_params(straight);
  const auto actual_critic = critic_params(loaded.agents);
  for (size_t i = 0; i < expected_critic.size(); ++i)
    CHECK(expected_critic[i].data() == actual_critic[i].data());
}

TEST_CASE("the worker count comes from the environment when set") {
  setenv("VRP_PPO_THREADS", "3", 1);
  CHECK(rollout_threads() == 3);
  setenv("VRP_PPO_THREADS", "junk", 1);
  CHECK_THROWS(rollout_threads());
  setenv("VRP_PPO_THREADS", "0", 1);
  CHECK_THROWS(rollout_threads());
  unsetenv("VRP_PPO_THREADS");
  CHECK(rollout_threads() >= 1);
}

TEST_CASE("the binary rejects bad invocations and honors --help") {
  CHECK(run_cli("") != 0);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("launder") != 0);
  CHECK(run_cli("train --config /definitely/not/here.cfg") == 1);
  CHECK(run_cli("solve --config /definitely/not/here.cfg") == 1);
}

TEST_CASE("generate, inspect, solve, train, eval cooperate end to end") {
  const fs::path dir = fresh_dir("pipeline");
  setenv("VRP_PPO_THREADS", "2", 1);

  const fs::path gen_cfg = dir / "gen.cfg";
  write_file_atomic(gen_cfg.string(),
                    "class = C3\nseed = 5\ngenerate_count = 3\n"
                    "n_min = 6\nn_max = 8\nm_min = 2\nm_max = 2\n"
                    "dataset_dir = " + (dir / "pool").string() + "\n");
  REQUIRE(run_cli("generate --config " + gen_cfg.string()) == 0);
  CHECK(fs::exists(dir / "pool" / "manifest.txt"));
  auto pool = load_dataset((dir / "pool").string());
  REQUIRE(pool.size() == 3);

  const std::string subject = (dir / "pool" / pool[0].first).string();
  const fs::path solve_cfg = dir / "solve.cfg";
  write_file_atomic(solve_cfg.string(),
                    toy_config(dir) + "instance = " + subject + "\neval_steps = 4\n");
  CHECK(run_cli("inspect --config " + solve_cfg.string()) == 0);
  REQUIRE(run_cli("solve --config " + solve_cfg.string()) == 0);
  const fs::path sol = dir / (fs::path(subject).stem().string() + ".sol");
  REQUIRE(fs::exists(sol));
  const std::string sol_text = read_file(sol.string());
  CHECK(sol_text.rfind("COST ", 0) == 0);
  CHECK(line_count(sol_text) == 1 + pool[0].second->vehicles());

  const fs::path train_cfg = dir / "train.cfg";
  write_file_atomic(train_cfg.string(), toy_config(dir));
  REQUIRE(run_cli("train --config " + train_cfg.string()) == 0);
  CHECK(fs::exists(dir / "checkpoint.bin"));
  CHECK(line_count(read_file((dir / "metrics.csv").string())) == 3);

  // A second run resumes at the saved iteration count and adds nothing.
  REQUIRE(run_cli("train --config " + train_cfg.string()) == 0);
  CHECK(line_count(read_file((dir / "metrics.csv").string())) == 3);

  const fs::path eval_cfg = dir / "eval.cfg";
  write_file_atomic(eval_cfg.string(),
                    toy_config(dir) + "checkpoint = " + (dir / "checkpoint.bin").string() + "\n");
  REQUIRE(run_cli("eval --config " + eval_cfg.string()) == 0);
  const std::string eval_rows = read_file((dir / "eval.csv").string());
  CHECK(line_count(eval_rows) == 3);  // header + eval_count rows
  CHECK(eval_rows.find(MetricsWriter::header()) == 0);

  // eval without any reachable checkpoint is an error, not a fresh policy.
  const fs::path bad_eval = dir / "bad_eval.cfg";
  write_file_atomic(bad_eval.string(), toy_config(dir / "never-trained"));
  CHECK(run_cli("eval --config " + bad_eval.string()) == 1);
  unsetenv("VRP_PPO_THREADS");
}
