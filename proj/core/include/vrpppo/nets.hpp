#ifndef VRPPPO_NETS_HPP_
#define VRPPPO_NETS_HPP_

#include <cstdint>
#include <vector>

#include "vrpppo/mdp.hpp"
#include "vrpppo/tensor.hpp"

namespace vrpppo {

// Shape knobs shared by the three networks. `features` pins the demand
// feature count the first convolution was built for; everything else about
// the instance (n, m) stays flexible at run time.
struct EncoderConfig {
  int features = 1;
  int conv_depth = 3;        // layers per network, last one linear
  int hidden_channels = 27;  // filters on hidden layers
  int out_channels = 4;      // filters on the final layer

  int actor1_inputs() const { return 4 + 2 * features; }
  bool operator==(const EncoderConfig&) const = default;
};

// A stack of 3x3 convolutions: tanh between layers, linear at the end.
struct ConvStack {
  std::vector<Tensor> weights;  // {K,C,3,3} per layer
  std::vector<Tensor> biases;   // {K} per layer
};

Tensor conv_stack_forward(const ConvStack& stack, const Tensor& input);

// The three parameter sets: node policy, cluster policy, state value. They
// share nothing; the final layers start at zero so a fresh bundle yields
// uniform policies and V = 0.
struct AgentBundle {
  EncoderConfig config;
  ConvStack actor1;
  ConvStack actor2;
  ConvStack critic;
};

// Hidden layers drawn uniformly at +-sqrt(6/(fan_in+fan_out)), final layers
// zeroed; deterministic per seed.
AgentBundle make_agents(const EncoderConfig& config, std::uint64_t seed);

// Flat views over the learned tensors (aliases, not copies): both actors
// together, and the critic alone.
std::vector<Tensor> actor_params(AgentBundle& agents);
std::vector<Tensor> critic_params(AgentBundle& agents);

// State tuple as convolution channels, shape {4+2l, m, n}, all entries in
// [0,1]: depot distances, the assignment, mean member distances, residual
// capacity ratios, then per-feature demand and capacity shares. Constant —
// gradients never flow into the encoding.
Tensor encode_state(const State& state);

struct Actor1Out {
  Tensor pi;    // {n} distribution over customer nodes (index i = node i+1)
  Tensor hbar;  // {m,n} embedded matrix
};

// Node policy: conv stack, channel sum for the embedding, cluster collapse
// and softmax for the distribution.
Actor1Out actor1_forward(const AgentBundle& agents, const Tensor& encoding);

struct Actor2Out {
  Tensor pi;    // {m} distribution over clusters, masked entries exactly 0
  Tensor hhat;  // {m,n} embedded matrix
};

// Cluster policy conditioned on the chosen node (id 1..n): consumes the pair
// (one-hot node row, embedding) as two channels.
Actor2Out actor2_forward(const AgentBundle& agents, const Tensor& hbar, int node,
                         const std::vector<uint8_t>& mask);

// State value from (scaled y, embeddings). The embeddings enter detached, so
// this differentiates into the critic parameters only.
Tensor critic_forward(const AgentBundle& agents, const std::vector<double>& y_scaled,
                      const Tensor& hbar, const Tensor& hhat);

// pi1[node_index] * pi2[cluster]; throws if the pair has zero probability
// (a sampler must never have produced it).
double joint_action_prob(const Tensor& pi1, int node_index, const Tensor& pi2, int cluster);

}  // namespace vrpppo

#endif  // VRPPPO_NETS_HPP_
