#include "vrpppo/ppo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace vrpppo {

void Hyperparams::validate() const {
  if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma must lie in (0,1)");
  if (steps < 1) throw std::invalid_argument("steps must be positive");
  if (rollouts < 1) throw std::invalid_argument("rollouts must be positive");
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (lr_actor <= 0.0 || lr_critic <= 0.0) throw std::invalid_argument("learning rates must be positive");
  if (epochs_actor < 1 || epochs_critic < 1) throw std::invalid_argument("epochs must be positive");
  if (beta0 <= 0.0) throw std::invalid_argument("beta0 must be positive");
  if (d_targ <= 0.0) throw std::invalid_argument("d_targ must be positive");
}

std::shared_ptr<const CvrpInstance> GeneratorSource::draw(std::uint64_t seed) {
  GeneratorConfig config = config_;
  config.seed = seed;
  return std::make_shared<const CvrpInstance>(generate(config));
}

DatasetSource::DatasetSource(std::vector<std::shared_ptr<const CvrpInstance>> pool)
    : pool_(std::move(pool)) {
  if (pool_.empty()) throw std::invalid_argument("DatasetSource: empty pool");
}

std::shared_ptr<const CvrpInstance> DatasetSource::draw(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> index(0, pool_.size() - 1);
  return pool_[index(rng)];
}

namespace {

std::vector<double> scaled_costs(const State& state, double init_cost) {
  const double denom = init_cost > 0.0 ? init_cost : 1.0;
  std::vector<double> y = state.costs;
  for (double& v : y) v /= denom;
  return y;
}

// Sampled (or greedy) action at `state`, shared by rollouts and evaluation.
Action choose_action(const AgentBundle& agents, const State& state, std::mt19937_64& rng,
                     bool greedy, Actor1Out* out1 = nullptr, Actor2Out* out2 = nullptr,
                     std::vector<uint8_t>* mask_out = nullptr) {
  const Actor1Out a1 = actor1_forward(agents, encode_state(state));
  int node_index;
  if (greedy) {
    node_index = static_cast<int>(std::max_element(a1.pi.data().begin(), a1.pi.data().end()) -
                                  a1.pi.data().begin());
  } else {
    node_index = categorical_sample(a1.pi.data(), rng);
  }
  const int node = node_index + 1;

  const std::vector<uint8_t> mask = feasible_clusters_mask(state, node);
  const Actor2Out a2 = actor2_forward(agents, a1.hbar, node, mask);
  int cluster;
  if (greedy) {
    cluster = static_cast<int>(std::max_element(a2.pi.data().begin(), a2.pi.data().end()) -
                               a2.pi.data().begin());
  } else {
    cluster = categorical_sample(a2.pi.data(), rng);
  }

  if (out1) *out1 = a1;
  if (out2) *out2 = a2;
  if (mask_out) *mask_out = mask;
  return Action{node, cluster};
}

}  // namespace

RolloutRecord run_rollout(InstanceSource& source, const AgentBundle& agents,
                          const Hyperparams& hp, std::uint64_t seed) {
  NoGradGuard forward_only;
  std::mt19937_64 rng(seed);

  std::shared_ptr<const CvrpInstance> instance = source.draw(rng());
  State state = initial_solution(std::move(instance), rng(), hp.matching);

  RolloutRecord record;
  record.s1 = state;
  record.init_cost = total_cost(state);

  std::vector<double> rewards;
  rewards.reserve(hp.steps);
  for (int t = 0; t < hp.steps; ++t) {
    Action action;
    if (t == 0) {
      Actor1Out a1;
      Actor2Out a2;
      action = choose_action(agents, state, rng, false, &a1, &a2, &record.mask1);
      record.action1 = action;
      record.pi1_old = a1.pi.data();
      record.pi2_old = a2.pi.data();
      record.pi_old_joint = joint_action_prob(a1.pi, action.node - 1, a2.pi, action.cluster);
      record.hbar1 = a1.hbar.data();
      record.hhat1 = a2.hhat.data();
      record.v1 =
          critic_forward(agents, scaled_costs(state, record.init_cost), a1.hbar, a2.hhat).item();
    } else {
      action = choose_action(agents, state, rng, false);
    }
    StepResult step = transition(state, action, hp.matching);
    rewards.push_back(step.reward);
    state = std::move(step.next);
  }

  double g1 = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    discount *= hp.gamma;
    g1 += discount * r;
  }
  record.g1 = g1;
  record.advantage = g1 - record.v1;
  record.final_cost = total_cost(state);
  return record;
}

Tensor actor_objective(const Buffers& batch, const AgentBundle& agents, double beta) {
  if (batch.iteration.empty()) throw std::invalid_argument("actor_objective: empty batch");
  Tensor total;
  for (const RolloutRecord& record : batch.iteration) {
    const Actor1Out a1 = actor1_forward(agents, encode_state(record.s1));
    const Actor2Out a2 = actor2_forward(agents, a1.hbar, record.action1.node, record.mask1);

    const Tensor p_new = mul(pick(a1.pi, record.action1.node - 1), pick(a2.pi, record.action1.cluster));
    const Tensor ratio = scale(p_new, 1.0 / record.pi_old_joint);

    const Tensor kl =
        add(kl_categorical(a1.pi, Tensor::constant(a1.pi.shape(), record.pi1_old)),
            kl_categorical(a2.pi, Tensor::constant(a2.pi.shape(), record.pi2_old)));

    const Tensor term = add(scale(ratio, record.advantage), scale(kl, beta));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / batch.iteration.size());
}

Tensor critic_objective(const Buffers& batch, const AgentBundle& agents) {
  if (batch.iteration.empty()) throw std::invalid_argument("critic_objective: empty batch");
  Tensor total;
  for (const RolloutRecord& record : batch.iteration) {
    const int m = record.s1.instance->vehicles();
    const int n = record.s1.instance->customers();
    const Tensor hbar = Tensor::constant({m, n}, record.hbar1);
    const Tensor hhat = Tensor::constant({m, n}, record.hhat1);
    const Tensor v =
        critic_forward(agents, scaled_costs(record.s1, record.init_cost), hbar, hhat);
    const Tensor diff = sub(v, Tensor::scalar(record.g1));
    const Tensor term = mul(diff, diff);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / batch.iteration.size());
}

double measure_kl(const Buffers& batch, const AgentBundle& agents) {
  if (batch.iteration.empty()) throw std::invalid_argument("measure_kl: empty batch");
  NoGradGuard forward_only;
  double sum = 0.0;
  for (const RolloutRecord& record : batch.iteration) {
    const Actor1Out a1 = actor1_forward(agents, encode_state(record.s1));
    const Actor2Out a2 = actor2_forward(agents, a1.hbar, record.action1.node, record.mask1);
    sum += kl_categorical(a1.pi, Tensor::constant(a1.pi.shape(), record.pi1_old)).item();
    sum += kl_categorical(a2.pi, Tensor::constant(a2.pi.shape(), record.pi2_old)).item();
  }
  return sum / batch.iteration.size();
}

double update_beta(double d, double d_targ, double beta) {
  if (d < d_targ / 1.5) return beta / 2.0;
  if (d > d_targ * 1.5) return 2.0 * beta;
  return beta;
}

void train(AgentBundle& agents, TrainerState& state, InstanceSource& source,
           const Hyperparams& hp, int threads, const TrainHooks& hooks) {
  hp.validate();
  if (threads < 1) threads = 1;

  std::vector<Tensor> theta = actor_params(agents);
  std::vector<Tensor> omega = critic_params(agents);

  while (state.iteration < hp.iterations) {
    const auto started = std::chrono::steady_clock::now();

    // Seeds come off the master stream one per rollout, so the schedule is
    // the same no matter how many workers run them.
    std::vector<std::uint64_t> seeds(hp.rollouts);
    for (auto& s : seeds) s = state.master_rng();

    Buffers batch;
    batch.iteration.resize(hp.rollouts);
    if (threads == 1) {
      for (int r = 0; r < hp.rollouts; ++r)
        batch.iteration[r] = run_rollout(source, agents, hp, seeds[r]);
    } else {
      std::atomic<int> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      auto worker = [&] {
        for (int r = next.fetch_add(1); r < hp.rollouts; r = next.fetch_add(1)) {
          try {
            batch.iteration[r] = run_rollout(source, agents, hp, seeds[r]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      };
      std::vector<std::thread> pool;
      const int count = std::min(threads, hp.rollouts);
      pool.reserve(count);
      for (int w = 0; w < count; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      if (failure) std::rethrow_exception(failure);
    }

    if (hooks.on_batch) hooks.on_batch(batch);

    for (int epoch = 0; epoch < hp.epochs_actor; ++epoch) {
      zero_grads(theta);
      backward(actor_objective(batch, agents, state.beta));
      adam_step(theta, state.adam_actor, hp.lr_actor);
    }
    for (int epoch = 0; epoch < hp.epochs_critic; ++epoch) {
      zero_grads(omega);
      backward(critic_objective(batch, agents));
      adam_step(omega, state.adam_critic, hp.lr_critic);
    }

    const double d = measure_kl(batch, agents);
    state.beta = update_beta(d, hp.d_targ, state.beta);
    ++state.iteration;

    MetricsRow row;
    row.id = state.iteration;
    for (const RolloutRecord& record : batch.iteration) {
      row.mean_return += record.g1;
      row.mean_advantage += record.advantage;
      row.init_cost += record.init_cost;
      row.best_cost += record.final_cost;
    }
    row.mean_return /= hp.rollouts;
    row.mean_advantage /= hp.rollouts;
    row.init_cost /= hp.rollouts;
    row.best_cost /= hp.rollouts;
    row.improvement =
        row.init_cost > 0.0 ? (row.init_cost - row.best_cost) / row.init_cost : 0.0;
    row.kl_d = d;
    row.beta = state.beta;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            started)
                      .count();
    if (hooks.on_metrics) hooks.on_metrics(row);
    if (hooks.on_checkpoint) hooks.on_checkpoint(agents, state);
    // batch goes out of scope here: B_iteration cleared for the next round.
  }
}

EvalResult evaluate_instance(const AgentBundle& agents,
                             std::shared_ptr<const CvrpInstance> instance,
                             const EvalOptions& options) {
  NoGradGuard forward_only;
  const auto started = std::chrono::steady_clock::now();
  auto elapsed_seconds = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };

  std::mt19937_64 rng(options.seed);
  State state = initial_solution(std::move(instance), rng(), options.matching);

  EvalResult result;
  result.init_cost = total_cost(state);
  result.best_cost = result.init_cost;
  result.best_state = state;

  for (int t = 0; t < options.max_steps; ++t) {
    if (options.budget_seconds >= 0.0 && elapsed_seconds() >= options.budget_seconds) break;
    const Action action = choose_action(agents, state, rng, options.greedy);
    StepResult step = transition(state, action, options.matching);
    state = std::move(step.next);
    ++result.steps_taken;
    if (step.cost_after < result.best_cost) {
      result.best_cost = step.cost_after;
      result.best_state = state;
    }
  }

  result.improvement =
      result.init_cost > 0.0 ? (result.init_cost - result.best_cost) / result.init_cost : 0.0;
  result.wall_ms = 1000.0 * elapsed_seconds();
  return result;
}

}  // namespace vrpppo
