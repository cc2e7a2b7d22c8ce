#ifndef VRPPPO_INSTANCE_HPP_
#define VRPPPO_INSTANCE_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrpppo/grid.hpp"

namespace vrpppo {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

enum class EdgeRounding {
  exact,        // plain Euclidean distances
  tsplib_nint,  // distances rounded to nearest integer (TSPLIB convention)
};

// Thrown on malformed or infeasible instance files.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A capacitated vehicle routing instance. Node 0 is always the depot;
// customer node ids run 1..n. Demands and capacities are per feature:
// demands(f, c) refers to customer node c+1, capacities(f, v) to vehicle v.
// Unbounded capacity is stored as +infinity.
class CvrpInstance {
 public:
  CvrpInstance() = default;
  CvrpInstance(std::string name, std::vector<Point> coords, Grid<double> demands,
               Grid<double> capacities, EdgeRounding rounding);

  const std::string& name() const { return name_; }
  int customers() const { return static_cast<int>(coords_.size()) - 1; }  // n
  int vehicles() const { return capacities_.cols(); }                     // m
  int features() const { return demands_.rows(); }                        // l
  int nodes() const { return static_cast<int>(coords_.size()); }          // n + 1

  const std::vector<Point>& coords() const { return coords_; }
  const Grid<double>& demands() const { return demands_; }
  const Grid<double>& capacities() const { return capacities_; }
  EdgeRounding edge_rounding() const { return edge_rounding_; }

  // Demand of customer node id (1..n) for feature f.
  double demand_of_node(int f, int node) const { return demands_.at(f, node - 1); }

  // Metric cost of arc (i, j), symmetric with zero diagonal.
  double distance(int i, int j) const;

  // Full (n+1)x(n+1) distance matrix including the depot row/column.
  Grid<double> adjacency_matrix() const;

  // Total demand over all customers for feature f.
  double total_demand(int f) const;
  // Total fleet capacity for feature f (+infinity if any vehicle is unbounded).
  double total_capacity(int f) const;

  // Feature indices whose total demand exceeds total capacity; empty means a
  // feasible assignment can exist.
  std::vector<int> infeasible_features() const;

  bool operator==(const CvrpInstance&) const = default;

 private:
  std::string name_;
  std::vector<Point> coords_;  // index 0 = depot
  Grid<double> demands_;       // l x n
  Grid<double> capacities_;    // l x m
  EdgeRounding edge_rounding_ = EdgeRounding::exact;
};

// Entries divided by the max entry so results lie in [0, 1]; an all-zero
// matrix is returned unchanged.
Grid<double> scale_adjacency(const Grid<double>& a);

// Parses a TSPLIB-style CVRP file (NODE_COORD_SECTION / DEMAND_SECTION /
// DEPOT_SECTION, EUC_2D weights). The depot is relocated to index 0 no matter
// where the file places it. The vehicle count comes from a "-k<m>" suffix of
// NAME when present, otherwise ceil(total demand / capacity).
// Throws ParseError on malformed input or when total demand exceeds the fleet.
CvrpInstance parse_cvrplib(const std::string& text);

// Same as parse_cvrplib but skips the fleet feasibility check (used by
// `inspect` to report a verdict instead of failing).
CvrpInstance parse_cvrplib_lenient(const std::string& text);

// Emits the same dialect parse_cvrplib reads. Requires a single feature and a
// uniform fleet capacity. Unbounded capacity is written as CAPACITY : -1 and
// an exact (unrounded) metric is recorded in the COMMENT line.
std::string serialize_cvrplib(const CvrpInstance& instance);

enum class InstanceClass { C1, C2, C3 };

struct GeneratorConfig {
  InstanceClass klass = InstanceClass::C1;
  int n_min = 30, n_max = 40;
  int m_min = 3, m_max = 4;
  std::uint64_t seed = 0;
  double capacity_fill_ratio = 0.8;          // C2/C3 only
  Point cluster_center_a{25.0, 50.0};        // C2 only
  Point cluster_center_b{75.0, 50.0};        // C2 only
  double cluster_radius = 15.0;              // C2 only
};

// Draws a synthetic instance. C1: uniform coords on [0,100]^2, unbounded
// capacity. C2: customers split evenly between two discs, depot at the disc
// midpoint. C3: uniform coords, finite capacity. Finite capacity per vehicle
// is total demand / (m * capacity_fill_ratio); demands are integers in
// [1, 10]. Deterministic for a fixed config.
CvrpInstance generate(const GeneratorConfig& config);

}  // namespace vrpppo

#endif  // VRPPPO_INSTANCE_HPP_
