#include "vrpppo/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace vrpppo {

int cluster_of(const State& state, int node) {
  for (int v = 0; v < state.assignment.rows(); ++v)
    if (state.assignment.at(v, node - 1)) return v;
  throw std::logic_error("node assigned to no cluster");
}

double total_cost(const State& state) {
  double sum = 0.0;
  for (double y : state.costs) sum += y;
  return sum;
}

Grid<double> compute_loads(const CvrpInstance& instance, const Grid<uint8_t>& assignment) {
  Grid<double> loads(instance.features(), instance.vehicles());
  for (int f = 0; f < instance.features(); ++f)
    for (int v = 0; v < instance.vehicles(); ++v) {
      double load = 0.0;
      for (int c = 0; c < assignment.cols(); ++c)
        if (assignment.at(v, c)) load += instance.demands().at(f, c);
      loads.at(f, v) = load;
    }
  return loads;
}

State make_state(std::shared_ptr<const CvrpInstance> instance, Grid<uint8_t> assignment,
                 MatchingMode mode) {
  if (!instance) throw std::invalid_argument("make_state: null instance");
  if (assignment.rows() != instance->vehicles() || assignment.cols() != instance->customers())
    throw std::invalid_argument("make_state: assignment shape mismatch");
  for (int c = 0; c < assignment.cols(); ++c) {
    int ones = 0;
    for (int v = 0; v < assignment.rows(); ++v) ones += assignment.at(v, c) ? 1 : 0;
    if (ones != 1) throw std::invalid_argument("make_state: column not one-hot");
  }
  State state;
  state.adjacency =
      std::make_shared<Grid<double>>(scale_adjacency(instance->adjacency_matrix()));
  state.loads = compute_loads(*instance, assignment);
  state.costs = cluster_costs(*instance, assignment, mode);
  state.assignment = std::move(assignment);
  state.instance = std::move(instance);
  return state;
}

namespace {

// Customers in angular order around the depot, starting from `offset` radians.
std::vector<int> sweep_order(const CvrpInstance& instance, double offset) {
  const Point depot = instance.coords()[0];
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(instance.customers());
  for (int node = 1; node <= instance.customers(); ++node) {
    const Point p = instance.coords()[node];
    double angle = std::atan2(p.y - depot.y, p.x - depot.x) - offset;
    angle = std::fmod(angle, 2.0 * std::numbers::pi);
    if (angle < 0.0) angle += 2.0 * std::numbers::pi;
    keyed.emplace_back(angle, node);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> order;
  order.reserve(keyed.size());
  for (const auto& [angle, node] : keyed) order.push_back(node);
  return order;
}

bool fits(const CvrpInstance& instance, const Grid<double>& loads, int v, int node) {
  for (int f = 0; f < instance.features(); ++f)
    if (loads.at(f, v) + instance.demand_of_node(f, node) > instance.capacities().at(f, v))
      return false;
  return true;
}

// Walks the angular order once, keeping cluster v until it has either taken
// its share of the total demand or cannot fit the next customer. Returns an
// empty grid when the tail clusters run out of room.
Grid<uint8_t> sweep_attempt(const CvrpInstance& instance, const std::vector<int>& order) {
  const int m = instance.vehicles();
  Grid<uint8_t> assignment(m, instance.customers());
  Grid<double> loads(instance.features(), m);

  std::vector<double> totals(instance.features());
  bool any_demand = false;
  for (int f = 0; f < instance.features(); ++f) {
    totals[f] = instance.total_demand(f);
    any_demand = any_demand || totals[f] > 0.0;
  }

  int v = 0;
  size_t placed = 0;
  std::vector<double> placed_demand(instance.features(), 0.0);
  for (int node : order) {
    while (v < m - 1 && !fits(instance, loads, v, node)) ++v;
    if (!fits(instance, loads, v, node)) return {};
    assignment.at(v, node - 1) = 1;
    for (int f = 0; f < instance.features(); ++f) {
      loads.at(f, v) += instance.demand_of_node(f, node);
      placed_demand[f] += instance.demand_of_node(f, node);
    }
    ++placed;

    // Cluster v closes once the cumulative demand placed reaches its share
    // (v+1)/m of the total (customer-count share when demands are all zero),
    // so unconstrained instances still split into m angular sectors.
    double progress = any_demand ? 0.0 : static_cast<double>(placed) / order.size();
    for (int f = 0; f < instance.features(); ++f)
      if (totals[f] > 0.0) progress = std::max(progress, placed_demand[f] / totals[f]);
    if (v < m - 1 && progress >= static_cast<double>(v + 1) / m) ++v;
  }
  return assignment;
}

// Last-resort construction: largest demand first into the tightest feasible
// cluster.
Grid<uint8_t> best_fit_decreasing(const CvrpInstance& instance) {
  const int m = instance.vehicles();
  std::vector<int> order(instance.customers());
  for (int node = 1; node <= instance.customers(); ++node) order[node - 1] = node;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    double da = 0.0, db = 0.0;
    for (int f = 0; f < instance.features(); ++f) {
      da = std::max(da, instance.demand_of_node(f, a));
      db = std::max(db, instance.demand_of_node(f, b));
    }
    if (da != db) return da > db;
    return a < b;
  });

  Grid<uint8_t> assignment(m, instance.customers());
  Grid<double> loads(instance.features(), m);
  for (int node : order) {
    int best = -1;
    double best_slack = std::numeric_limits<double>::infinity();
    for (int v = 0; v < m; ++v) {
      if (!fits(instance, loads, v, node)) continue;
      double slack = std::numeric_limits<double>::infinity();
      for (int f = 0; f < instance.features(); ++f)
        slack = std::min(slack, instance.capacities().at(f, v) - loads.at(f, v) -
                                    instance.demand_of_node(f, node));
      if (slack < best_slack) {
        best_slack = slack;
        best = v;
      }
    }
    if (best < 0) return {};
    assignment.at(best, node - 1) = 1;
    for (int f = 0; f < instance.features(); ++f)
      loads.at(f, best) += instance.demand_of_node(f, node);
  }
  return assignment;
}

}  // namespace

State initial_solution(std::shared_ptr<const CvrpInstance> instance, uint64_t seed,
                       MatchingMode mode) {
  if (!instance) throw std::invalid_argument("initial_solution: null instance");
  if (!instance->infeasible_features().empty())
    throw std::invalid_argument("initial_solution: total demand exceeds fleet capacity");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offsets(0.0, 2.0 * std::numbers::pi);
  for (int attempt = 0; attempt <= 50; ++attempt) {
    const double offset = attempt == 0 ? 0.0 : offsets(rng);
    Grid<uint8_t> assignment = sweep_attempt(*instance, sweep_order(*instance, offset));
    if (assignment.rows() > 0) return make_state(std::move(instance), std::move(assignment), mode);
  }
  Grid<uint8_t> assignment = best_fit_decreasing(*instance);
  if (assignment.rows() == 0)
    throw std::runtime_error("initial_solution: no feasible assignment found");
  return make_state(std::move(instance), std::move(assignment), mode);
}

std::vector<uint8_t> feasible_clusters_mask(const State& state, int node) {
  const CvrpInstance& instance = *state.instance;
  const int current = cluster_of(state, node);
  std::vector<uint8_t> mask(instance.vehicles(), 0);
  for (int v = 0; v < instance.vehicles(); ++v)
    mask[v] = (v == current || fits(instance, state.loads, v, node)) ? 1 : 0;
  return mask;
}

StepResult transition(const State& state, Action action, MatchingMode mode) {
  const CvrpInstance& instance = *state.instance;
  if (action.node < 1 || action.node > instance.customers())
    throw std::invalid_argument("transition: node out of range");
  if (action.cluster < 0 || action.cluster >= instance.vehicles())
    throw std::invalid_argument("transition: cluster out of range");

  StepResult result;
  result.cost_before = total_cost(state);
  const int source = cluster_of(state, action.node);
  if (source == action.cluster) {
    result.next = state;
    result.cost_after = result.cost_before;
    result.reward = 0.0;
    return result;
  }
  if (!fits(instance, state.loads, action.cluster, action.node))
    throw std::invalid_argument("transition: destination cluster over capacity");

  State next = state;
  next.assignment.at(source, action.node - 1) = 0;
  next.assignment.at(action.cluster, action.node - 1) = 1;

  // Loads of the two touched clusters are rebuilt from scratch so they never
  // drift from the assignment.
  for (int v : {source, action.cluster})
    for (int f = 0; f < instance.features(); ++f) {
      double load = 0.0;
      for (int c = 0; c < next.assignment.cols(); ++c)
        if (next.assignment.at(v, c)) load += instance.demands().at(f, c);
      next.loads.at(f, v) = load;
    }
  for (int v : {source, action.cluster}) {
    std::vector<int> members = cluster_members(next.assignment, v);
    next.costs[v] =
        members.empty() ? 0.0 : christofides_cost(ClusterSubgraph(instance, members), mode).cost;
  }

  result.cost_after = total_cost(next);
  result.reward = result.cost_after - result.cost_before;
  result.next = std::move(next);
  return result;
}

double reward(const State& prev, const State& next) {
  return total_cost(next) - total_cost(prev);
}

}  // namespace vrpppo
