#include "vrpppo/nets.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace vrpppo {

Tensor conv_stack_forward(const ConvStack& stack, const Tensor& input) {
  if (stack.weights.empty()) throw std::invalid_argument("conv_stack_forward: empty stack");
  Tensor x = input;
  for (size_t layer = 0; layer < stack.weights.size(); ++layer) {
    x = conv2d(x, stack.weights[layer], stack.biases[layer]);
    if (layer + 1 < stack.weights.size()) x = tanh(x);
  }
  return x;
}

namespace {

ConvStack make_stack(int in_channels, const EncoderConfig& config, std::mt19937_64& rng) {
  ConvStack stack;
  int c_in = in_channels;
  for (int layer = 0; layer < config.conv_depth; ++layer) {
    const bool last = layer + 1 == config.conv_depth;
    const int k = last ? config.out_channels : config.hidden_channels;
    const int count = k * c_in * 9;
    std::vector<double> values(count, 0.0);
    if (!last) {
      const double bound = std::sqrt(6.0 / (c_in * 9 + k * 9));
      std::uniform_real_distribution<double> uniform(-bound, bound);
      for (double& w : values) w = uniform(rng);
    }
    stack.weights.push_back(Tensor::parameter({k, c_in, 3, 3}, std::move(values)));
    stack.biases.push_back(Tensor::zeros_parameter({k}));
    c_in = k;
  }
  return stack;
}

void append_params(std::vector<Tensor>& out, ConvStack& stack) {
  for (size_t layer = 0; layer < stack.weights.size(); ++layer) {
    out.push_back(stack.weights[layer]);
    out.push_back(stack.biases[layer]);
  }
}

Tensor detach(const Tensor& t) { return Tensor::constant(t.shape(), t.data()); }

}  // namespace

AgentBundle make_agents(const EncoderConfig& config, std::uint64_t seed) {
  if (config.features < 1 || config.conv_depth < 1 || config.hidden_channels < 1 ||
      config.out_channels < 1)
    throw std::invalid_argument("make_agents: invalid encoder config");
  std::mt19937_64 rng(seed);
  AgentBundle agents;
  agents.config = config;
  agents.actor1 = make_stack(config.actor1_inputs(), config, rng);
  agents.actor2 = make_stack(2, config, rng);
  agents.critic = make_stack(3, config, rng);
  return agents;
}

std::vector<Tensor> actor_params(AgentBundle& agents) {
  std::vector<Tensor> params;
  append_params(params, agents.actor1);
  append_params(params, agents.actor2);
  return params;
}

std::vector<Tensor> critic_params(AgentBundle& agents) {
  std::vector<Tensor> params;
  append_params(params, agents.critic);
  return params;
}

Tensor encode_state(const State& state) {
  const CvrpInstance& instance = *state.instance;
  const Grid<double>& dist = *state.adjacency;
  const int n = instance.customers();
  const int m = instance.vehicles();
  const int l = instance.features();

  std::vector<double> channels(static_cast<size_t>(4 + 2 * l) * m * n, 0.0);
  auto entry = [&](int ch, int v, int i) -> double& {
    return channels[(static_cast<size_t>(ch) * m + v) * n + i];
  };

  for (int v = 0; v < m; ++v) {
    const std::vector<int> members = cluster_members(state.assignment, v);

    // Residual capacity share of cluster v, worst feature; unbounded
    // capacity counts as fully free.
    double residual = 1.0;
    for (int f = 0; f < l; ++f) {
      const double q = instance.capacities().at(f, v);
      if (std::isinf(q)) continue;
      residual = std::min(residual, q > 0.0 ? (q - state.loads.at(f, v)) / q : 0.0);
    }
    residual = std::max(residual, 0.0);

    for (int i = 0; i < n; ++i) {
      entry(0, v, i) = dist.at(0, i + 1);
      entry(1, v, i) = state.assignment.at(v, i);
      entry(3, v, i) = residual;

      // Mean scaled distance from node i+1 to the other members of cluster
      // v; zero when the cluster holds nothing besides possibly the node.
      double sum = 0.0;
      int count = 0;
      for (int member : members)
        if (member != i + 1) {
          sum += dist.at(i + 1, member);
          ++count;
        }
      entry(2, v, i) = count > 0 ? sum / count : 0.0;
    }
  }

  for (int f = 0; f < l; ++f) {
    const double total = instance.total_demand(f);
    for (int v = 0; v < m; ++v)
      for (int i = 0; i < n; ++i) {
        entry(4 + f, v, i) = total > 0.0 ? instance.demands().at(f, i) / total : 0.0;
        const double q = instance.capacities().at(f, v);
        entry(4 + l + f, v, i) = total > 0.0 ? std::min(q / total, 1.0) : 1.0;
      }
  }

  return Tensor::constant({4 + 2 * l, m, n}, std::move(channels));
}

Actor1Out actor1_forward(const AgentBundle& agents, const Tensor& encoding) {
  if (encoding.shape().size() != 3 || encoding.shape()[0] != agents.config.actor1_inputs())
    throw std::invalid_argument("actor1_forward: encoding channels mismatch");
  const Tensor map = conv_stack_forward(agents.actor1, encoding);
  Actor1Out out;
  out.hbar = channel_sum(map);
  out.pi = softmax(collapse(map, CollapseAxis::clusters));
  return out;
}

Actor2Out actor2_forward(const AgentBundle& agents, const Tensor& hbar, int node,
                         const std::vector<uint8_t>& mask) {
  if (hbar.shape().size() != 2) throw std::invalid_argument("actor2_forward: hbar must be {m,n}");
  const int m = hbar.shape()[0];
  const int n = hbar.shape()[1];
  if (node < 1 || node > n) throw std::invalid_argument("actor2_forward: node out of range");
  if (static_cast<int>(mask.size()) != m)
    throw std::invalid_argument("actor2_forward: mask length mismatch");

  std::vector<double> onehot(n, 0.0);
  onehot[node - 1] = 1.0;
  const Tensor h1 = Tensor::constant({n}, std::move(onehot));
  const Tensor map =
      conv_stack_forward(agents.actor2, stack_channels({hbar, tile_rows(h1, m)}));
  Actor2Out out;
  out.hhat = channel_sum(map);
  out.pi = masked_softmax(collapse(map, CollapseAxis::nodes), mask);
  return out;
}

Tensor critic_forward(const AgentBundle& agents, const std::vector<double>& y_scaled,
                      const Tensor& hbar, const Tensor& hhat) {
  if (hbar.shape().size() != 2 || hhat.shape() != hbar.shape())
    throw std::invalid_argument("critic_forward: embedding shape mismatch");
  const int m = hbar.shape()[0];
  const int n = hbar.shape()[1];
  if (static_cast<int>(y_scaled.size()) != m)
    throw std::invalid_argument("critic_forward: y length mismatch");

  const Tensor y = Tensor::constant({m}, y_scaled);
  const Tensor input = stack_channels({detach(hbar), detach(hhat), tile_cols(y, n)});
  return global_sum(conv_stack_forward(agents.critic, input));
}

double joint_action_prob(const Tensor& pi1, int node_index, const Tensor& pi2, int cluster) {
  if (node_index < 0 || node_index >= pi1.numel())
    throw std::invalid_argument("joint_action_prob: node index out of range");
  if (cluster < 0 || cluster >= pi2.numel())
    throw std::invalid_argument("joint_action_prob: cluster out of range");
  const double p = pi1.data()[node_index] * pi2.data()[cluster];
  if (p <= 0.0) throw std::logic_error("joint_action_prob: zero-probability action");
  return p;
}

}  // namespace vrpppo
