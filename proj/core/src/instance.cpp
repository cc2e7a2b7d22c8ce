#include "vrpppo/instance.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace vrpppo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest round-trip decimal form, so serialize -> parse is lossless.
std::string format_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

CvrpInstance::CvrpInstance(std::string name, std::vector<Point> coords,
                           Grid<double> demands, Grid<double> capacities,
                           EdgeRounding rounding)
    : name_(std::move(name)),
      coords_(std::move(coords)),
      demands_(std::move(demands)),
      capacities_(std::move(capacities)),
      edge_rounding_(rounding) {
  if (coords_.empty()) throw std::invalid_argument("instance needs at least a depot");
  if (demands_.cols() != customers()) throw std::invalid_argument("demand matrix width != n");
  if (capacities_.rows() != demands_.rows())
    throw std::invalid_argument("capacity/demand feature count mismatch");
  for (double d : demands_.cells())
    if (!(d >= 0.0)) throw std::invalid_argument("demands must be non-negative");
  for (double q : capacities_.cells())
    if (!(q > 0.0)) throw std::invalid_argument("capacities must be positive or infinite");
}

double CvrpInstance::distance(int i, int j) const {
  const Point& a = coords_[i];
  const Point& b = coords_[j];
  double d = std::hypot(a.x - b.x, a.y - b.y);
  if (edge_rounding_ == EdgeRounding::tsplib_nint) d = std::floor(d + 0.5);
  return d;
}

Grid<double> CvrpInstance::adjacency_matrix() const {
  const int total = nodes();
  Grid<double> a(total, total, 0.0);
  for (int i = 0; i < total; ++i)
    for (int j = i + 1; j < total; ++j) {
      double d = distance(i, j);
      a.at(i, j) = d;
      a.at(j, i) = d;
    }
  return a;
}

double CvrpInstance::total_demand(int f) const {
  double sum = 0.0;
  for (int c = 0; c < demands_.cols(); ++c) sum += demands_.at(f, c);
  return sum;
}

double CvrpInstance::total_capacity(int f) const {
  double sum = 0.0;
  for (int v = 0; v < capacities_.cols(); ++v) {
    if (std::isinf(capacities_.at(f, v))) return kInf;
    sum += capacities_.at(f, v);
  }
  return sum;
}

std::vector<int> CvrpInstance::infeasible_features() const {
  std::vector<int> bad;
  for (int f = 0; f < features(); ++f)
    if (total_demand(f) > total_capacity(f)) bad.push_back(f);
  return bad;
}

Grid<double> scale_adjacency(const Grid<double>& a) {
  double max_entry = 0.0;
  for (double v : a.cells()) {
    if (v < 0.0) throw std::invalid_argument("scale_adjacency: negative entry");
    max_entry = std::max(max_entry, v);
  }
  if (max_entry == 0.0) return a;
  Grid<double> out(a.rows(), a.cols());
  for (size_t i = 0; i < a.cells().size(); ++i) out.cells()[i] = a.cells()[i] / max_entry;
  return out;
}

namespace {

struct RawFile {
  std::string name;
  std::string comment;
  std::string type;
  std::string edge_weight_type;
  int dimension = -1;
  double capacity = std::numeric_limits<double>::quiet_NaN();
  bool has_capacity = false;
  std::vector<std::pair<int, Point>> coords;        // file node id -> point
  std::vector<std::pair<int, double>> demands;      // file node id -> demand
  std::vector<int> depot_ids;
  bool saw_coord_section = false;
  bool saw_demand_section = false;
  bool saw_depot_section = false;
};

bool parse_double(const std::string& tok, double& out) {
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && p == tok.data() + tok.size();
}

RawFile scan_file(const std::string& text) {
  RawFile raw;
  std::istringstream in(text);
  std::string line;
  enum class Section { none, coords, demands, depot } section = Section::none;

  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t == "EOF") break;

    // Keyword header lines ("KEY : value" or "KEY: value").
    auto starts_with_key = [&](const char* key) {
      size_t k = std::string(key).size();
      if (t.rfind(key, 0) != 0) return false;
      size_t rest = t.find_first_not_of(" \t", k);
      return rest == std::string::npos || t[rest] == ':' || t.size() == k;
    };
    auto value_after_colon = [&]() {
      size_t c = t.find(':');
      return c == std::string::npos ? std::string() : trim(t.substr(c + 1));
    };

    if (starts_with_key("NAME")) { raw.name = value_after_colon(); section = Section::none; continue; }
    if (starts_with_key("COMMENT")) { raw.comment = value_after_colon(); section = Section::none; continue; }
    if (starts_with_key("TYPE")) { raw.type = value_after_colon(); section = Section::none; continue; }
    if (starts_with_key("EDGE_WEIGHT_TYPE")) { raw.edge_weight_type = value_after_colon(); section = Section::none; continue; }
    if (starts_with_key("DIMENSION")) {
      double d;
      if (!parse_double(value_after_colon(), d)) throw ParseError("bad DIMENSION value");
      raw.dimension = static_cast<int>(d);
      section = Section::none;
      continue;
    }
    if (starts_with_key("CAPACITY")) {
      if (!parse_double(value_after_colon(), raw.capacity)) throw ParseError("bad CAPACITY value");
      raw.has_capacity = true;
      section = Section::none;
      continue;
    }
    if (t.rfind("NODE_COORD_SECTION", 0) == 0) { section = Section::coords; raw.saw_coord_section = true; continue; }
    if (t.rfind("DEMAND_SECTION", 0) == 0) { section = Section::demands; raw.saw_demand_section = true; continue; }
    if (t.rfind("DEPOT_SECTION", 0) == 0) { section = Section::depot; raw.saw_depot_section = true; continue; }
    if (t.rfind("EDGE_WEIGHT_SECTION", 0) == 0 || t.rfind("DISPLAY_DATA_SECTION", 0) == 0)
      throw ParseError("unsupported section: " + t);

    std::istringstream row(t);
    switch (section) {
      case Section::coords: {
        int id; double x, y;
        if (!(row >> id >> x >> y)) throw ParseError("bad NODE_COORD_SECTION row: " + t);
        raw.coords.emplace_back(id, Point{x, y});
        break;
      }
      case Section::demands: {
        int id; double d;
        if (!(row >> id >> d)) throw ParseError("bad DEMAND_SECTION row: " + t);
        raw.demands.emplace_back(id, d);
        break;
      }
      case Section::depot: {
        int id;
        if (!(row >> id)) throw ParseError("bad DEPOT_SECTION row: " + t);
        if (id != -1) raw.depot_ids.push_back(id);
        break;
      }
      case Section::none:
        throw ParseError("unexpected line outside any section: " + t);
    }
  }
  return raw;
}

// Vehicle count from a trailing "-k<m>" in the instance name, or 0.
int vehicles_from_name(const std::string& name) {
  size_t pos = name.rfind("-k");
  if (pos == std::string::npos) return 0;
  std::string digits = name.substr(pos + 2);
  if (digits.empty()) return 0;
  int m = 0;
  for (char c : digits) {
    if (c < '0' || c > '9') return 0;
    m = m * 10 + (c - '0');
  }
  return m;
}

CvrpInstance build_instance(const RawFile& raw, bool check_fleet) {
  if (!raw.saw_coord_section) throw ParseError("missing NODE_COORD_SECTION");
  if (!raw.saw_demand_section) throw ParseError("missing DEMAND_SECTION");
  if (!raw.saw_depot_section) throw ParseError("missing DEPOT_SECTION");
  if (raw.dimension < 2) throw ParseError("missing or invalid DIMENSION");
  if (!raw.has_capacity) throw ParseError("missing CAPACITY");
  if (raw.edge_weight_type.empty()) throw ParseError("missing EDGE_WEIGHT_TYPE");
  if (raw.edge_weight_type != "EUC_2D")
    throw ParseError("unsupported EDGE_WEIGHT_TYPE: " + raw.edge_weight_type);
  if (raw.depot_ids.size() != 1) throw ParseError("DEPOT_SECTION must name exactly one depot");
  if (static_cast<int>(raw.coords.size()) != raw.dimension)
    throw ParseError("NODE_COORD_SECTION row count != DIMENSION");
  if (static_cast<int>(raw.demands.size()) != raw.dimension)
    throw ParseError("DEMAND_SECTION row count != DIMENSION");

  const int depot_id = raw.depot_ids[0];
  const int n = raw.dimension - 1;

  std::vector<Point> coords_by_id(raw.dimension + 1);
  std::vector<double> demand_by_id(raw.dimension + 1, -1.0);
  std::vector<bool> seen(raw.dimension + 1, false);
  for (const auto& [id, p] : raw.coords) {
    if (id < 1 || id > raw.dimension) throw ParseError("node id out of range in NODE_COORD_SECTION");
    if (seen[id]) throw ParseError("duplicate node id in NODE_COORD_SECTION");
    seen[id] = true;
    coords_by_id[id] = p;
  }
  for (const auto& [id, d] : raw.demands) {
    if (id < 1 || id > raw.dimension) throw ParseError("node id out of range in DEMAND_SECTION");
    demand_by_id[id] = d;
  }
  for (int id = 1; id <= raw.dimension; ++id)
    if (!seen[id] || demand_by_id[id] < 0.0)
      throw ParseError("node " + std::to_string(id) + " missing coordinates or demand");
  if (demand_by_id[depot_id] != 0.0) throw ParseError("depot demand must be 0");

  // Depot first, customers in file order.
  std::vector<Point> coords;
  coords.reserve(raw.dimension);
  coords.push_back(coords_by_id[depot_id]);
  Grid<double> demands(1, n);
  int c = 0;
  for (int id = 1; id <= raw.dimension; ++id) {
    if (id == depot_id) continue;
    coords.push_back(coords_by_id[id]);
    demands.at(0, c++) = demand_by_id[id];
  }

  const bool unbounded = raw.capacity < 0.0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += demands.at(0, i);

  int m = vehicles_from_name(raw.name);
  if (m <= 0) {
    if (unbounded) throw ParseError("unbounded capacity requires a -k<m> name suffix");
    if (raw.capacity <= 0.0) throw ParseError("CAPACITY must be positive");
    m = std::max(1, static_cast<int>(std::ceil(total / raw.capacity)));
  }
  if (!unbounded && raw.capacity <= 0.0) throw ParseError("CAPACITY must be positive");

  Grid<double> capacities(1, m, unbounded ? kInf : raw.capacity);

  EdgeRounding rounding = raw.comment.find("metric=exact") != std::string::npos
                              ? EdgeRounding::exact
                              : EdgeRounding::tsplib_nint;

  CvrpInstance instance(raw.name, std::move(coords), std::move(demands),
                        std::move(capacities), rounding);
  if (check_fleet && !instance.infeasible_features().empty())
    throw ParseError("total demand exceeds total fleet capacity");
  return instance;
}

}  // namespace

CvrpInstance parse_cvrplib(const std::string& text) {
  return build_instance(scan_file(text), /*check_fleet=*/true);
}

CvrpInstance parse_cvrplib_lenient(const std::string& text) {
  return build_instance(scan_file(text), /*check_fleet=*/false);
}

std::string serialize_cvrplib(const CvrpInstance& instance) {
  if (instance.features() != 1)
    throw std::invalid_argument("serializer supports single-feature instances only");
  const double q0 = instance.capacities().at(0, 0);
  for (int v = 1; v < instance.vehicles(); ++v)
    if (instance.capacities().at(0, v) != q0)
      throw std::invalid_argument("serializer requires a uniform fleet capacity");

  std::ostringstream out;
  out << "NAME : " << instance.name() << "\n";
  const bool unbounded = std::isinf(q0);
  if (instance.edge_rounding() == EdgeRounding::exact || unbounded) {
    out << "COMMENT : vrp-ppo dialect";
    if (instance.edge_rounding() == EdgeRounding::exact) out << "; metric=exact";
    if (unbounded) out << "; capacity=infinite";
    out << "\n";
  }
  out << "TYPE : CVRP\n";
  out << "DIMENSION : " << instance.nodes() << "\n";
  out << "EDGE_WEIGHT_TYPE : EUC_2D\n";
  out << "CAPACITY : " << (unbounded ? std::string("-1") : format_number(q0)) << "\n";
  out << "NODE_COORD_SECTION\n";
  for (int i = 0; i < instance.nodes(); ++i)
    out << (i + 1) << " " << format_number(instance.coords()[i].x) << " "
        << format_number(instance.coords()[i].y) << "\n";
  out << "DEMAND_SECTION\n";
  out << "1 0\n";
  for (int c = 0; c < instance.customers(); ++c)
    out << (c + 2) << " " << format_number(instance.demands().at(0, c)) << "\n";
  out << "DEPOT_SECTION\n1\n-1\nEOF\n";
  return out.str();
}

CvrpInstance generate(const GeneratorConfig& config) {
  if (config.n_min < 1 || config.n_max < config.n_min)
    throw std::invalid_argument("generator: empty customer range");
  if (config.m_min < 1 || config.m_max < config.m_min)
    throw std::invalid_argument("generator: empty vehicle range");
  if (!(config.capacity_fill_ratio > 0.0 && config.capacity_fill_ratio <= 1.0))
    throw std::invalid_argument("generator: capacity_fill_ratio must be in (0, 1]");
  if (config.klass == InstanceClass::C2 && !(config.cluster_radius > 0.0))
    throw std::invalid_argument("generator: cluster_radius must be positive");

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> n_dist(config.n_min, config.n_max);
  std::uniform_int_distribution<int> m_dist(config.m_min, config.m_max);
  const int n = n_dist(rng);
  const int m = m_dist(rng);

  Point depot{50.0, 50.0};
  std::vector<Point> coords;
  coords.reserve(n + 1);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform_square = [&]() { return Point{100.0 * unit(rng), 100.0 * unit(rng)}; };
  auto in_disc = [&](const Point& center) {
    double r = config.cluster_radius * std::sqrt(unit(rng));
    double a = 2.0 * std::acos(-1.0) * unit(rng);
    return Point{center.x + r * std::cos(a), center.y + r * std::sin(a)};
  };

  switch (config.klass) {
    case InstanceClass::C1:
    case InstanceClass::C3:
      coords.push_back(depot);
      for (int i = 0; i < n; ++i) coords.push_back(uniform_square());
      break;
    case InstanceClass::C2: {
      depot = Point{(config.cluster_center_a.x + config.cluster_center_b.x) / 2.0,
                    (config.cluster_center_a.y + config.cluster_center_b.y) / 2.0};
      coords.push_back(depot);
      const int first = (n + 1) / 2;
      for (int i = 0; i < first; ++i) coords.push_back(in_disc(config.cluster_center_a));
      for (int i = first; i < n; ++i) coords.push_back(in_disc(config.cluster_center_b));
      break;
    }
  }

  std::uniform_int_distribution<int> demand_dist(1, 10);
  Grid<double> demands(1, n);
  double total = 0.0;
  for (int c = 0; c < n; ++c) {
    demands.at(0, c) = static_cast<double>(demand_dist(rng));
    total += demands.at(0, c);
  }

  double capacity = kInf;
  if (config.klass != InstanceClass::C1)
    capacity = total / (m * config.capacity_fill_ratio);
  Grid<double> capacities(1, m, capacity);

  const char* klass_name = config.klass == InstanceClass::C1   ? "C1"
                           : config.klass == InstanceClass::C2 ? "C2"
                                                               : "C3";
  std::string name = std::string(klass_name) + "-s" + std::to_string(config.seed) +
                     "-n" + std::to_string(n) + "-k" + std::to_string(m);
  return CvrpInstance(std::move(name), std::move(coords), std::move(demands),
                      std::move(capacities), EdgeRounding::exact);
}

}  // namespace vrpppo
