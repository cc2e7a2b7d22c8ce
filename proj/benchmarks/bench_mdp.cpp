#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "vrpppo/instance.hpp"
#include "vrpppo/mdp.hpp"
#include "vrpppo/nets.hpp"
#include "vrpppo/ppo.hpp"

namespace vrpppo {
namespace {

std::shared_ptr<const CvrpInstance> bench_instance(int n, int m, std::uint64_t seed) {
  GeneratorConfig gen;
  gen.klass = InstanceClass::C3;
  gen.n_min = n;
  gen.n_max = n;
  gen.m_min = m;
  gen.m_max = m;
  gen.seed = seed;
  return std::make_shared<const CvrpInstance>(generate(gen));
}

void BM_InitialSolution(benchmark::State& state) {
  const auto instance = bench_instance(static_cast<int>(state.range(0)), 3, 7);
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(initial_solution(instance, seed++, MatchingMode::greedy));
}
BENCHMARK(BM_InitialSolution)->Arg(15)->Arg(25)->Arg(65);

void BM_Transition(benchmark::State& state) {
  const auto instance = bench_instance(static_cast<int>(state.range(0)), 3, 7);
  const State start = initial_solution(instance, 1, MatchingMode::greedy);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> node(1, instance->customers());
  std::uniform_int_distribution<int> cluster(0, instance->vehicles() - 1);
  for (auto _ : state) {
    const int i = node(rng);
    const std::vector<uint8_t> mask = feasible_clusters_mask(start, i);
    int v = cluster(rng);
    while (!mask[v]) v = cluster(rng);
    benchmark::DoNotOptimize(transition(start, {i, v}, MatchingMode::greedy));
  }
}
BENCHMARK(BM_Transition)->Arg(15)->Arg(25)->Arg(65);

void BM_EncodeState(benchmark::State& state) {
  const auto instance = bench_instance(static_cast<int>(state.range(0)), 3, 7);
  const State start = initial_solution(instance, 1, MatchingMode::greedy);
  for (auto _ : state) benchmark::DoNotOptimize(encode_state(start));
}
BENCHMARK(BM_EncodeState)->Arg(15)->Arg(25)->Arg(65);

void BM_Rollout(benchmark::State& state) {
  GeneratorConfig gen;
  gen.klass = InstanceClass::C1;
  gen.n_min = 15;
  gen.n_max = 25;
  GeneratorSource source(gen);
  const AgentBundle agents = make_agents(EncoderConfig{}, 3);
  Hyperparams hp;
  hp.steps = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_rollout(source, agents, hp, seed++));
}
BENCHMARK(BM_Rollout)->Arg(1)->Arg(10);

}  // namespace
}  // namespace vrpppo

BENCHMARK_MAIN();
