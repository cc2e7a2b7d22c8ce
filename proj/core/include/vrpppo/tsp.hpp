#ifndef VRPPPO_TSP_HPP_
#define VRPPPO_TSP_HPP_

#include <utility>
#include <vector>

#include "vrpppo/grid.hpp"
#include "vrpppo/instance.hpp"

namespace vrpppo {

enum class MatchingMode {
  exact,   // exhaustive minimum-weight perfect matching (up to 12 odd vertices)
  greedy,  // shortest-edge-first matching
};

// A cluster's customer node ids plus the depot, viewed against the parent
// instance's metric.
struct ClusterSubgraph {
  const CvrpInstance* instance = nullptr;
  std::vector<int> members;  // customer node ids, kept sorted ascending

  ClusterSubgraph(const CvrpInstance& inst, std::vector<int> member_nodes);
  double dist(int i, int j) const { return instance->distance(i, j); }
};

// A closed route: order starts and ends at the depot (node 0) and visits each
// member exactly once; cost is the sum of consecutive distances, snapped up
// to the cost grid (see quantize_cost).
struct Tour {
  std::vector<int> order;
  double cost = 0.0;
};

// Rounds a raw cost up to the next multiple of 2^-20. Every cluster cost
// estimate passes through this, so costs are exact binary fractions well
// inside double precision: sums and differences of them (total costs,
// rewards, telescoped returns) incur no rounding at all. Rounding up rather
// than to nearest keeps a quantized tour cost >= its true length.
double quantize_cost(double raw);

// Builds a tour from a depot-anchored vertex sequence, canonicalizing the
// traversal direction (first visited member id < last) so equal tours cost
// out to identical doubles regardless of how they were discovered.
Tour make_tour(const ClusterSubgraph& sub, std::vector<int> order);

using Edge = std::pair<int, int>;

// Minimum spanning tree over depot + members, >= 2 vertices. Kruskal with
// (weight, i, j) ordering, so ties break deterministically.
std::vector<Edge> mst(const ClusterSubgraph& sub);

// Minimum-weight perfect matching over an even-sized vertex set. Exact mode
// enumerates all matchings up to 12 vertices and falls back to greedy above
// that (with a one-time stderr note); greedy picks shortest pairs first.
std::vector<Edge> odd_vertex_matching(const ClusterSubgraph& sub,
                                      const std::vector<int>& vertices,
                                      MatchingMode mode);

// Walks an Eulerian circuit of the multigraph from the depot and shortcuts
// repeated vertices in first-visit order. Requires even degrees everywhere
// and a connected multigraph.
Tour euler_shortcut(const ClusterSubgraph& sub, const std::vector<Edge>& multigraph);

// Christofides upper bound on the cluster's TSP: MST + matching on odd-degree
// vertices + Euler shortcut. Exact matching keeps the 3/2 guarantee.
Tour christofides_cost(const ClusterSubgraph& sub, MatchingMode mode);

// Exact optimum by permutation enumeration (members <= 10), depot start,
// symmetric halves collapsed.
Tour brute_force_tsp(const ClusterSubgraph& sub);

// Per-cluster routing cost estimate: y[v] = christofides over cluster v's
// members plus the depot; empty clusters cost 0. X is the m x n assignment.
std::vector<double> cluster_costs(const CvrpInstance& instance, const Grid<uint8_t>& assignment,
                                  MatchingMode mode);

// Members (customer node ids, ascending) of cluster v under X.
std::vector<int> cluster_members(const Grid<uint8_t>& assignment, int v);

}  // namespace vrpppo

#endif  // VRPPPO_TSP_HPP_
