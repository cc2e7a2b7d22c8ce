#include <benchmark/benchmark.h>

#include <limits>
#include <random>
#include <vector>

#include "vrpppo/instance.hpp"
#include "vrpppo/tsp.hpp"

namespace vrpppo {
namespace {

CvrpInstance cluster_instance(int customers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, 100.0);
  std::vector<Point> coords;
  for (int i = 0; i <= customers; ++i) coords.push_back({coord(rng), coord(rng)});
  return CvrpInstance("bench", std::move(coords), Grid<double>(1, customers, 1.0),
                      Grid<double>(1, 1, std::numeric_limits<double>::infinity()),
                      EdgeRounding::exact);
}

std::vector<int> all_members(int customers) {
  std::vector<int> members(customers);
  for (int i = 0; i < customers; ++i) members[i] = i + 1;
  return members;
}

void BM_ChristofidesGreedy(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const CvrpInstance instance = cluster_instance(k, 33);
  const ClusterSubgraph sub(instance, all_members(k));
  for (auto _ : state) benchmark::DoNotOptimize(christofides_cost(sub, MatchingMode::greedy));
}
BENCHMARK(BM_ChristofidesGreedy)->Arg(6)->Arg(12)->Arg(24)->Arg(48);

void BM_ChristofidesExactMatching(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const CvrpInstance instance = cluster_instance(k, 33);
  const ClusterSubgraph sub(instance, all_members(k));
  for (auto _ : state) benchmark::DoNotOptimize(christofides_cost(sub, MatchingMode::exact));
}
BENCHMARK(BM_ChristofidesExactMatching)->Arg(6)->Arg(9)->Arg(12);

void BM_BruteForceTsp(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const CvrpInstance instance = cluster_instance(k, 33);
  const ClusterSubgraph sub(instance, all_members(k));
  for (auto _ : state) benchmark::DoNotOptimize(brute_force_tsp(sub));
}
BENCHMARK(BM_BruteForceTsp)->DenseRange(6, 9);

void BM_Mst(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const CvrpInstance instance = cluster_instance(k, 33);
  const ClusterSubgraph sub(instance, all_members(k));
  for (auto _ : state) benchmark::DoNotOptimize(mst(sub));
}
BENCHMARK(BM_Mst)->Arg(12)->Arg(48);

}  // namespace
}  // namespace vrpppo

BENCHMARK_MAIN();
