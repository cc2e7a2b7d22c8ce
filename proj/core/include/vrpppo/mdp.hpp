#ifndef VRPPPO_MDP_HPP_
#define VRPPPO_MDP_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "vrpppo/grid.hpp"
#include "vrpppo/instance.hpp"
#include "vrpppo/tsp.hpp"

namespace vrpppo {

// A snapshot of the improvement process: the assignment X (m x n, one-hot
// columns), the cached per-cluster loads, and the per-cluster routing cost
// estimates y. Instance data and the scaled adjacency are shared between
// successive states; transition() returns a fresh snapshot.
struct State {
  std::shared_ptr<const CvrpInstance> instance;
  std::shared_ptr<const Grid<double>> adjacency;  // distances scaled into [0,1]
  Grid<uint8_t> assignment;                       // m x n, X[v][i-1]
  Grid<double> loads;                             // l x m
  std::vector<double> costs;                      // y[v]
};

// A single improvement move: put customer `node` into cluster `cluster`.
struct Action {
  int node = 0;     // customer id, 1..n
  int cluster = 0;  // destination cluster, 0-based
};

struct StepResult {
  State next;
  double reward = 0.0;  // total cost after minus total cost before
  double cost_before = 0.0;
  double cost_after = 0.0;
};

// Cluster currently holding `node` under the state's assignment.
int cluster_of(const State& state, int node);

// Sum of the per-cluster cost estimates.
double total_cost(const State& state);

// Per-cluster demand totals implied by an assignment, recomputed from scratch.
Grid<double> compute_loads(const CvrpInstance& instance, const Grid<uint8_t>& assignment);

// Builds a state around an explicit assignment: loads and costs are computed
// fresh, the scaled adjacency is derived from the instance.
State make_state(std::shared_ptr<const CvrpInstance> instance, Grid<uint8_t> assignment,
                 MatchingMode mode);

// Feasible starting assignment: customers sorted by polar angle around the
// depot and dealt into clusters in angular order, advancing to the next
// cluster when capacity would be violated or when the cluster has taken its
// demand share (so unconstrained instances still start from a genuine
// partition). Falls back to 50 randomized angle offsets and then to
// best-fit-decreasing; throws if everything fails. Deterministic per seed.
State initial_solution(std::shared_ptr<const CvrpInstance> instance, uint64_t seed,
                       MatchingMode mode);

// mask[k] = 1 iff moving `node` into cluster k keeps every feature load within
// capacity, or k already holds the node — so the mask is never all-zero.
std::vector<uint8_t> feasible_clusters_mask(const State& state, int node);

// Applies a move. Reassigning a node to its own cluster returns an identical
// state; otherwise only the source and destination clusters have their loads
// and costs recomputed, everything else is carried over bitwise.
StepResult transition(const State& state, Action action, MatchingMode mode);

// Cost difference between two consecutive states (negative when the move
// improved the solution).
double reward(const State& prev, const State& next);

}  // namespace vrpppo

#endif  // VRPPPO_MDP_HPP_
