#include "vrpppo/tsp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>

namespace vrpppo {

namespace {

// Union-find for Kruskal.
struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

struct WeightedEdge {
  double w;
  int i, j;
  bool operator<(const WeightedEdge& o) const {
    if (w != o.w) return w < o.w;
    if (i != o.i) return i < o.i;
    return j < o.j;
  }
};

}  // namespace

ClusterSubgraph::ClusterSubgraph(const CvrpInstance& inst, std::vector<int> member_nodes)
    : instance(&inst), members(std::move(member_nodes)) {
  std::sort(members.begin(), members.end());
  for (int id : members)
    if (id < 1 || id > inst.customers())
      throw std::invalid_argument("cluster member out of range");
  if (std::adjacent_find(members.begin(), members.end()) != members.end())
    throw std::invalid_argument("duplicate cluster member");
}

double quantize_cost(double raw) {
  return std::ceil(raw * 1048576.0) / 1048576.0;
}

Tour make_tour(const ClusterSubgraph& sub, std::vector<int> order) {
  if (order.empty() || order.front() != 0)
    throw std::invalid_argument("tour must start at the depot");
  if (order.size() == 1) return Tour{std::move(order), 0.0};
  if (order.back() != 0) throw std::invalid_argument("tour must end at the depot");
  // Canonical direction: first member id below last member id.
  if (order.size() >= 4 && order[1] > order[order.size() - 2])
    std::reverse(order.begin() + 1, order.end() - 1);
  double cost = 0.0;
  for (size_t t = 0; t + 1 < order.size(); ++t) cost += sub.dist(order[t], order[t + 1]);
  return Tour{std::move(order), quantize_cost(cost)};
}

std::vector<Edge> mst(const ClusterSubgraph& sub) {
  std::vector<int> vertices;
  vertices.push_back(0);
  vertices.insert(vertices.end(), sub.members.begin(), sub.members.end());
  if (vertices.size() < 2) throw std::invalid_argument("mst needs at least 2 vertices");

  std::vector<WeightedEdge> edges;
  edges.reserve(vertices.size() * (vertices.size() - 1) / 2);
  for (size_t a = 0; a < vertices.size(); ++a)
    for (size_t b = a + 1; b < vertices.size(); ++b)
      edges.push_back({sub.dist(vertices[a], vertices[b]), vertices[a], vertices[b]});
  std::sort(edges.begin(), edges.end());

  // Union-find keyed by position in the vertex list.
  std::map<int, int> slot;
  for (size_t k = 0; k < vertices.size(); ++k) slot[vertices[k]] = static_cast<int>(k);
  Dsu dsu(static_cast<int>(vertices.size()));
  std::vector<Edge> tree;
  for (const auto& e : edges) {
    if (dsu.unite(slot[e.i], slot[e.j])) {
      tree.emplace_back(e.i, e.j);
      if (tree.size() == vertices.size() - 1) break;
    }
  }
  return tree;
}

namespace {

double exact_matching_search(const std::vector<int>& vertices, const ClusterSubgraph& sub,
                             std::vector<bool>& used, std::vector<Edge>& current,
                             double current_weight, double& best_weight,
                             std::vector<Edge>& best) {
  size_t first = 0;
  while (first < vertices.size() && used[first]) ++first;
  if (first == vertices.size()) {
    if (current_weight < best_weight) {
      best_weight = current_weight;
      best = current;
    }
    return best_weight;
  }
  used[first] = true;
  for (size_t other = first + 1; other < vertices.size(); ++other) {
    if (used[other]) continue;
    double w = sub.dist(vertices[first], vertices[other]);
    if (current_weight + w >= best_weight) continue;
    used[other] = true;
    current.emplace_back(vertices[first], vertices[other]);
    exact_matching_search(vertices, sub, used, current, current_weight + w, best_weight, best);
    current.pop_back();
    used[other] = false;
  }
  used[first] = false;
  return best_weight;
}

std::vector<Edge> greedy_matching(const std::vector<int>& vertices, const ClusterSubgraph& sub) {
  std::vector<WeightedEdge> pairs;
  for (size_t a = 0; a < vertices.size(); ++a)
    for (size_t b = a + 1; b < vertices.size(); ++b)
      pairs.push_back({sub.dist(vertices[a], vertices[b]), vertices[a], vertices[b]});
  std::sort(pairs.begin(), pairs.end());

  std::map<int, bool> matched;
  for (int v : vertices) matched[v] = false;
  std::vector<Edge> result;
  for (const auto& p : pairs) {
    if (matched[p.i] || matched[p.j]) continue;
    matched[p.i] = matched[p.j] = true;
    result.emplace_back(p.i, p.j);
    if (result.size() * 2 == vertices.size()) break;
  }
  return result;
}

constexpr size_t kExactMatchingLimit = 12;

void note_matching_downgrade(size_t count) {
  static std::once_flag flag;
  std::call_once(flag, [count] {
    std::cerr << "vrp-ppo: exact matching requested for " << count
              << " odd vertices; using greedy above " << kExactMatchingLimit << "\n";
  });
}

}  // namespace

std::vector<Edge> odd_vertex_matching(const ClusterSubgraph& sub,
                                      const std::vector<int>& vertices, MatchingMode mode) {
  if (vertices.size() % 2 != 0)
    throw std::invalid_argument("odd_vertex_matching needs an even vertex count");
  if (vertices.empty()) return {};
  if (vertices.size() == 2) return {Edge{vertices[0], vertices[1]}};

  if (mode == MatchingMode::exact && vertices.size() <= kExactMatchingLimit) {
    std::vector<int> sorted = vertices;
    std::sort(sorted.begin(), sorted.end());
    std::vector<bool> used(sorted.size(), false);
    std::vector<Edge> current, best;
    double best_weight = std::numeric_limits<double>::infinity();
    exact_matching_search(sorted, sub, used, current, 0.0, best_weight, best);
    return best;
  }
  if (mode == MatchingMode::exact) note_matching_downgrade(vertices.size());
  return greedy_matching(vertices, sub);
}

Tour euler_shortcut(const ClusterSubgraph& sub, const std::vector<Edge>& multigraph) {
  // Adjacency with per-slot used flags; neighbor lists sorted for determinism.
  std::map<int, std::vector<std::pair<int, size_t>>> adj;  // vertex -> (neighbor, edge id)
  for (size_t e = 0; e < multigraph.size(); ++e) {
    adj[multigraph[e].first].emplace_back(multigraph[e].second, e);
    adj[multigraph[e].second].emplace_back(multigraph[e].first, e);
  }
  for (auto& [v, list] : adj) {
    if (list.size() % 2 != 0)
      throw std::invalid_argument("euler_shortcut: odd degree at vertex " + std::to_string(v));
    std::sort(list.begin(), list.end());
  }
  if (adj.find(0) == adj.end()) {
    if (multigraph.empty()) return Tour{{0}, 0.0};
    throw std::invalid_argument("euler_shortcut: depot not in multigraph");
  }

  // Hierholzer from the depot.
  std::vector<bool> edge_used(multigraph.size(), false);
  std::map<int, size_t> next_slot;
  std::vector<int> stack{0};
  std::vector<int> circuit;
  while (!stack.empty()) {
    int v = stack.back();
    auto& list = adj[v];
    size_t& slot = next_slot[v];
    while (slot < list.size() && edge_used[list[slot].second]) ++slot;
    if (slot == list.size()) {
      circuit.push_back(v);
      stack.pop_back();
    } else {
      edge_used[list[slot].second] = true;
      stack.push_back(list[slot].first);
    }
  }
  if (std::find(edge_used.begin(), edge_used.end(), false) != edge_used.end())
    throw std::invalid_argument("euler_shortcut: multigraph is not connected");

  // Shortcut: keep first visits, close at the depot.
  std::vector<int> order;
  std::vector<bool> visited(sub.instance->nodes(), false);
  for (int v : circuit) {
    if (visited[v]) continue;
    visited[v] = true;
    order.push_back(v);
  }
  order.push_back(0);
  return make_tour(sub, std::move(order));
}

Tour christofides_cost(const ClusterSubgraph& sub, MatchingMode mode) {
  if (sub.members.empty()) return Tour{{0}, 0.0};
  if (sub.members.size() == 1) {
    int i = sub.members[0];
    return make_tour(sub, {0, i, 0});
  }

  std::vector<Edge> tree = mst(sub);

  std::map<int, int> degree;
  for (const auto& [a, b] : tree) {
    ++degree[a];
    ++degree[b];
  }
  std::vector<int> odd;
  for (const auto& [v, d] : degree)
    if (d % 2 != 0) odd.push_back(v);

  std::vector<Edge> multigraph = tree;
  std::vector<Edge> matching = odd_vertex_matching(sub, odd, mode);
  multigraph.insert(multigraph.end(), matching.begin(), matching.end());

  return euler_shortcut(sub, multigraph);
}

Tour brute_force_tsp(const ClusterSubgraph& sub) {
  if (sub.members.size() > 10)
    throw std::invalid_argument("brute_force_tsp limited to 10 members");
  if (sub.members.empty()) return Tour{{0}, 0.0};
  if (sub.members.size() == 1) return make_tour(sub, {0, sub.members[0], 0});

  std::vector<int> perm = sub.members;  // sorted ascending already
  std::vector<int> best_perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    if (perm.front() > perm.back()) continue;  // skip mirrored traversals
    double cost = sub.dist(0, perm.front());
    for (size_t t = 0; t + 1 < perm.size(); ++t) cost += sub.dist(perm[t], perm[t + 1]);
    cost += sub.dist(perm.back(), 0);
    if (cost < best_cost) {
      best_cost = cost;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  std::vector<int> order;
  order.reserve(best_perm.size() + 2);
  order.push_back(0);
  order.insert(order.end(), best_perm.begin(), best_perm.end());
  order.push_back(0);
  return make_tour(sub, std::move(order));
}

std::vector<int> cluster_members(const Grid<uint8_t>& assignment, int v) {
  std::vector<int> members;
  for (int c = 0; c < assignment.cols(); ++c)
    if (assignment.at(v, c)) members.push_back(c + 1);
  return members;
}

std::vector<double> cluster_costs(const CvrpInstance& instance, const Grid<uint8_t>& assignment,
                                  MatchingMode mode) {
  std::vector<double> y(assignment.rows(), 0.0);
  for (int v = 0; v < assignment.rows(); ++v) {
    std::vector<int> members = cluster_members(assignment, v);
    if (members.empty()) continue;
    ClusterSubgraph sub(instance, std::move(members));
    y[v] = christofides_cost(sub, mode).cost;
  }
  return y;
}

}  // namespace vrpppo
