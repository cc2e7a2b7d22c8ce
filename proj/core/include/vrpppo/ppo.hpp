#ifndef VRPPPO_PPO_HPP_
#define VRPPPO_PPO_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "vrpppo/instance.hpp"
#include "vrpppo/mdp.hpp"
#include "vrpppo/nets.hpp"
#include "vrpppo/tensor.hpp"

namespace vrpppo {

struct Hyperparams {
  double gamma = 0.99;    // discount
  int steps = 10;         // T, moves per rollout
  int rollouts = 8;       // N, rollouts per iteration
  int iterations = 100;   // k, total iteration budget
  double lr_actor = 1e-5;
  double lr_critic = 1e-5;
  int epochs_actor = 3;
  int epochs_critic = 3;
  double beta0 = 1.0;     // initial KL coefficient
  double d_targ = 0.01;   // target KL drift
  MatchingMode matching = MatchingMode::greedy;

  void validate() const;  // throws on non-positive fields or gamma >= 1
};

// Where episodes come from. Implementations must be deterministic per seed.
class InstanceSource {
 public:
  virtual ~InstanceSource() = default;
  virtual std::shared_ptr<const CvrpInstance> draw(std::uint64_t seed) = 0;
};

// A fresh synthetic instance per episode.
class GeneratorSource : public InstanceSource {
 public:
  explicit GeneratorSource(GeneratorConfig config) : config_(config) {}
  std::shared_ptr<const CvrpInstance> draw(std::uint64_t seed) override;

 private:
  GeneratorConfig config_;
};

// Uniform sampling from a fixed pool (e.g. a CVRPLIB training split).
class DatasetSource : public InstanceSource {
 public:
  explicit DatasetSource(std::vector<std::shared_ptr<const CvrpInstance>> pool);
  std::shared_ptr<const CvrpInstance> draw(std::uint64_t seed) override;

 private:
  std::vector<std::shared_ptr<const CvrpInstance>> pool_;
};

// Everything the update phase needs about one rollout: the first state, the
// first action with its collection-time distributions and embeddings, and
// the discounted return of the whole trajectory.
struct RolloutRecord {
  State s1;
  Action action1;
  double pi_old_joint = 0.0;     // probability of action1 when collected
  std::vector<double> pi1_old;   // node distribution at s1
  std::vector<double> pi2_old;   // cluster distribution at s1 (masked zeros)
  std::vector<uint8_t> mask1;    // feasibility mask used for action1.node
  std::vector<double> hbar1;     // m*n embedding, row-major
  std::vector<double> hhat1;     // m*n embedding, row-major
  double g1 = 0.0;               // sum over t of gamma^t * r_t
  double v1 = 0.0;               // critic value at s1 when collected
  double advantage = 0.0;        // g1 - v1
  double init_cost = 0.0;        // total cost at s1 (also scales y for the critic)
  double final_cost = 0.0;       // total cost after the T-th step
};

// The per-rollout scratch record lives inside run_rollout; what accumulates
// across an iteration is this list, cleared after every update.
struct Buffers {
  std::vector<RolloutRecord> iteration;
};

// Mutable training state alongside the parameters; everything here goes into
// a checkpoint so runs resume bit-exactly.
struct TrainerState {
  AdamState adam_actor;
  AdamState adam_critic;
  double beta = 1.0;
  int iteration = 0;  // completed iterations
  std::mt19937_64 master_rng;
};

// One row of training (or evaluation) telemetry.
struct MetricsRow {
  int id = 0;  // iteration, or instance index during evaluation
  double mean_return = 0.0;
  double mean_advantage = 0.0;
  double kl_d = 0.0;
  double beta = 0.0;
  double init_cost = 0.0;
  double best_cost = 0.0;
  double improvement = 0.0;  // (init_cost - best_cost) / init_cost
  double wall_ms = 0.0;
};

struct TrainHooks {
  std::function<void(const Buffers&)> on_batch;       // after collection, before updates
  std::function<void(const MetricsRow&)> on_metrics;  // after each iteration
  std::function<void(const AgentBundle&, const TrainerState&)> on_checkpoint;
};

// Plays one T-step episode under the current parameters (forward-only) and
// reduces it to a RolloutRecord. The seed determines the instance draw, the
// initial solution, and every sample.
RolloutRecord run_rollout(InstanceSource& source, const AgentBundle& agents,
                          const Hyperparams& hp, std::uint64_t seed);

// Surrogate loss for the joint actor parameters, minimized by Adam:
//   mean over records of [ ratio * advantage + beta * KL(pi_new, pi_old) ]
// with ratio = pi_theta(a1|s1) / pi_old(a1|s1) from fresh forward passes and
// KL summed over the node and cluster distributions at s1. At theta =
// theta_old the value is exactly the mean advantage; descending it raises
// the probability of actions whose trajectories cut cost faster than the
// critic expected.
Tensor actor_objective(const Buffers& batch, const AgentBundle& agents, double beta);

// Mean squared error of the critic against each record's discounted return,
// evaluated on the stored collection-time embeddings.
Tensor critic_objective(const Buffers& batch, const AgentBundle& agents);

// Batch-mean KL between the current policy and each record's stored
// distributions, forward passes only.
double measure_kl(const Buffers& batch, const AgentBundle& agents);

// Halves beta when the measured drift d undershoots d_targ/1.5, doubles it
// when d overshoots 1.5*d_targ, otherwise keeps it.
double update_beta(double d, double d_targ, double beta);

// Runs iterations until state.iteration reaches hp.iterations: N rollouts,
// epochs_actor steps on the actor objective, epochs_critic on the critic
// objective, beta update, metrics and checkpoint hooks. `threads` caps
// concurrent rollouts; results are identical for any thread count.
void train(AgentBundle& agents, TrainerState& state, InstanceSource& source,
           const Hyperparams& hp, int threads, const TrainHooks& hooks);

struct EvalOptions {
  int max_steps = 100;
  bool greedy = false;             // argmax instead of sampling
  double budget_seconds = -1.0;    // wall-clock cap; negative = unlimited
  MatchingMode matching = MatchingMode::greedy;
  std::uint64_t seed = 0;
};

struct EvalResult {
  double init_cost = 0.0;
  double best_cost = 0.0;
  double improvement = 0.0;
  double wall_ms = 0.0;
  int steps_taken = 0;
  State best_state;  // cheapest state seen, for extracting routes
};

// Improvement loop from a fresh initial solution, tracking the best total
// cost seen within the step and time budgets.
EvalResult evaluate_instance(const AgentBundle& agents,
                             std::shared_ptr<const CvrpInstance> instance,
                             const EvalOptions& options);

}  // namespace vrpppo

#endif  // VRPPPO_PPO_HPP_
