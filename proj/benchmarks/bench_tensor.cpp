#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "vrpppo/tensor.hpp"

namespace vrpppo {
namespace {

Tensor random_parameter(std::vector<int> shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> init(-1.0, 1.0);
  int n = 1;
  for (int d : shape) n *= d;
  std::vector<double> values(n);
  for (double& v : values) v = init(rng);
  return Tensor::parameter(std::move(shape), std::move(values));
}

void BM_Conv2dForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  const Tensor input = random_parameter({6, 3, n}, rng);
  const Tensor weight = random_parameter({27, 6, 3, 3}, rng);
  const Tensor bias = random_parameter({27}, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(input, weight, bias));
}
BENCHMARK(BM_Conv2dForward)->Arg(15)->Arg(25)->Arg(65);

void BM_StackForwardBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::vector<Tensor> params = {
      random_parameter({27, 6, 3, 3}, rng), random_parameter({27}, rng),
      random_parameter({27, 27, 3, 3}, rng), random_parameter({27}, rng),
      random_parameter({4, 27, 3, 3}, rng), random_parameter({4}, rng),
  };
  const Tensor input = random_parameter({6, 3, n}, rng);
  for (auto _ : state) {
    zero_grads(params);
    Tensor h = tanh(conv2d(input, params[0], params[1]));
    h = tanh(conv2d(h, params[2], params[3]));
    h = conv2d(h, params[4], params[5]);
    backward(global_sum(h));
    benchmark::DoNotOptimize(params[0].grad().data());
  }
}
BENCHMARK(BM_StackForwardBackward)->Arg(15)->Arg(25)->Arg(65);

void BM_MaskedSoftmax(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  const Tensor logits = random_parameter({n}, rng);
  std::vector<uint8_t> mask(n, 1);
  for (int i = 0; i < n; i += 3) mask[i] = 0;
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(masked_softmax(logits, mask));
}
BENCHMARK(BM_MaskedSoftmax)->Arg(25)->Arg(65);

}  // namespace
}  // namespace vrpppo

BENCHMARK_MAIN();
