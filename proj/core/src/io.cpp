#include "vrpppo/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vrpppo/tsp.hpp"

namespace vrpppo {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  long long n = 0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
  if (ec != std::errc{} || end != value.data() + value.size())
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  return n;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + value + "'");
}

MatchingMode parse_matching(const std::string& value) {
  if (value == "exact") return MatchingMode::exact;
  if (value == "greedy") return MatchingMode::greedy;
  throw std::invalid_argument("config: matching must be 'exact' or 'greedy', got '" + value + "'");
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "class") {
    if (value != "C1" && value != "C2" && value != "C3" && value != "cvrplib")
      throw std::invalid_argument("config: class must be C1, C2, C3 or cvrplib");
    instance_class = value;
  } else if (key == "dataset_dir") {
    dataset_dir = value;
  } else if (key == "checkpoint") {
    checkpoint_path = value;
  } else if (key == "out_dir") {
    out_dir = value;
  } else if (key == "instance") {
    instance_path = value;
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "gamma") {
    hp.gamma = parse_real(key, value);
  } else if (key == "steps") {
    hp.steps = static_cast<int>(parse_int(key, value));
  } else if (key == "rollouts") {
    hp.rollouts = static_cast<int>(parse_int(key, value));
  } else if (key == "iterations") {
    hp.iterations = static_cast<int>(parse_int(key, value));
  } else if (key == "lr_actor") {
    hp.lr_actor = parse_real(key, value);
  } else if (key == "lr_critic") {
    hp.lr_critic = parse_real(key, value);
  } else if (key == "epochs_actor") {
    hp.epochs_actor = static_cast<int>(parse_int(key, value));
  } else if (key == "epochs_critic") {
    hp.epochs_critic = static_cast<int>(parse_int(key, value));
  } else if (key == "beta0") {
    hp.beta0 = parse_real(key, value);
  } else if (key == "d_targ") {
    hp.d_targ = parse_real(key, value);
  } else if (key == "matching") {
    hp.matching = parse_matching(value);
  } else if (key == "n_min") {
    n_min = static_cast<int>(parse_int(key, value));
  } else if (key == "n_max") {
    n_max = static_cast<int>(parse_int(key, value));
  } else if (key == "m_min") {
    m_min = static_cast<int>(parse_int(key, value));
  } else if (key == "m_max") {
    m_max = static_cast<int>(parse_int(key, value));
  } else if (key == "fill_ratio") {
    fill_ratio = parse_real(key, value);
  } else if (key == "conv_depth") {
    conv_depth = static_cast<int>(parse_int(key, value));
  } else if (key == "hidden_channels") {
    hidden_channels = static_cast<int>(parse_int(key, value));
  } else if (key == "out_channels") {
    out_channels = static_cast<int>(parse_int(key, value));
  } else if (key == "eval_steps") {
    eval_steps = static_cast<int>(parse_int(key, value));
  } else if (key == "eval_count") {
    eval_count = static_cast<int>(parse_int(key, value));
  } else if (key == "budget_seconds") {
    budget_seconds = parse_real(key, value);
  } else if (key == "greedy_eval") {
    greedy_eval = parse_bool(key, value);
  } else if (key == "generate_count") {
    generate_count = static_cast<int>(parse_int(key, value));
  } else if (key == "checkpoint_every") {
    checkpoint_every = static_cast<int>(parse_int(key, value));
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

GeneratorConfig ExperimentConfig::generator_config() const {
  GeneratorConfig gen;
  if (instance_class == "C1") {
    gen.klass = InstanceClass::C1;
  } else if (instance_class == "C2") {
    gen.klass = InstanceClass::C2;
  } else if (instance_class == "C3") {
    gen.klass = InstanceClass::C3;
  } else {
    throw std::invalid_argument("no generator for instance class '" + instance_class + "'");
  }
  gen.n_min = n_min;
  gen.n_max = n_max;
  gen.m_min = m_min;
  gen.m_max = m_max;
  gen.capacity_fill_ratio = fill_ratio;
  gen.seed = seed;
  return gen;
}

EncoderConfig ExperimentConfig::encoder_config() const {
  EncoderConfig enc;
  enc.features = 1;
  enc.conv_depth = conv_depth;
  enc.hidden_channels = hidden_channels;
  enc.out_channels = out_channels;
  return enc;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + line + "'");
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, end);
}

MetricsWriter::MetricsWriter(std::string path) : path_(std::move(path)) {}

std::string MetricsWriter::header() {
  return "iter,mean_return,mean_adv,kl_d,beta,init_cost,best_cost,impr,wall_ms";
}

std::string MetricsWriter::format(const MetricsRow& row) {
  std::string out = std::to_string(row.id);
  for (double v : {row.mean_return, row.mean_advantage, row.kl_d, row.beta, row.init_cost,
                   row.best_cost, row.improvement, row.wall_ms})
    out += "," + format_number(v);
  return out;
}

void MetricsWriter::append(const MetricsRow& row) {
  const bool fresh =
      !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot open metrics file: " + path_);
  if (fresh) out << header() << "\n";
  out << format(row) << "\n";
  if (!out) throw std::runtime_error("metrics write failed: " + path_);
}

namespace {

constexpr char kCheckpointMagic[] = "vrp-ppo-checkpoint\n";
constexpr int kCheckpointVersion = 1;

void append_le64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_le64(const std::string& in, size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void append_doubles(std::string& out, const std::vector<double>& values) {
  for (double d : values) append_le64(out, std::bit_cast<std::uint64_t>(d));
}

// Parameter tensors in checkpoint order, with names. Tensor handles share
// storage with the bundle, so writing through them updates the agents.
std::vector<std::pair<std::string, Tensor>> named_params(const AgentBundle& agents) {
  std::vector<std::pair<std::string, Tensor>> out;
  auto emit = [&out](const char* stack_name, const ConvStack& stack) {
    for (size_t layer = 0; layer < stack.weights.size(); ++layer) {
      out.emplace_back(std::string(stack_name) + ".w" + std::to_string(layer),
                       stack.weights[layer]);
      out.emplace_back(std::string(stack_name) + ".b" + std::to_string(layer),
                       stack.biases[layer]);
    }
  };
  emit("actor1", agents.actor1);
  emit("actor2", agents.actor2);
  emit("critic", agents.critic);
  return out;
}

json adam_to_json(const AdamState& adam) {
  json j;
  j["step"] = adam.step;
  return j;
}

void append_adam_payload(std::string& payload, json& tensors, const char* name,
                         const AdamState& adam) {
  for (size_t i = 0; i < adam.m1.size(); ++i) {
    tensors.push_back({{"name", std::string(name) + ".m1." + std::to_string(i)},
                       {"count", adam.m1[i].size()}});
    append_doubles(payload, adam.m1[i]);
    tensors.push_back({{"name", std::string(name) + ".m2." + std::to_string(i)},
                       {"count", adam.m2[i].size()}});
    append_doubles(payload, adam.m2[i]);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const AgentBundle& agents,
                     const TrainerState& state) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["iteration"] = state.iteration;
  header["beta"] = state.beta;
  std::ostringstream rng_stream;
  rng_stream << state.master_rng;
  header["rng"] = rng_stream.str();
  header["encoder"] = {{"features", agents.config.features},
                       {"conv_depth", agents.config.conv_depth},
                       {"hidden_channels", agents.config.hidden_channels},
                       {"out_channels", agents.config.out_channels}};
  header["adam_actor"] = adam_to_json(state.adam_actor);
  header["adam_critic"] = adam_to_json(state.adam_critic);

  json tensors = json::array();
  std::string payload;
  for (auto& [name, tensor] : named_params(agents)) {
    tensors.push_back({{"name", name}, {"shape", tensor.shape()}});
    append_doubles(payload, tensor.data());
  }
  append_adam_payload(payload, tensors, "adam_actor", state.adam_actor);
  append_adam_payload(payload, tensors, "adam_critic", state.adam_critic);
  header["tensors"] = std::move(tensors);

  std::string blob = kCheckpointMagic;
  const std::string header_text = header.dump();
  append_le64(blob, header_text.size());
  blob += header_text;
  blob += payload;
  write_file_atomic(path, blob);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string blob = read_file(path);
  const size_t magic_len = sizeof(kCheckpointMagic) - 1;
  if (blob.size() < magic_len + 8 || blob.compare(0, magic_len, kCheckpointMagic) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint64_t header_len = read_le64(blob, magic_len);
  if (blob.size() < magic_len + 8 + header_len)
    throw std::runtime_error("truncated checkpoint header: " + path);
  const json header = json::parse(blob.substr(magic_len + 8, header_len));
  if (header.at("format_version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);

  EncoderConfig encoder;
  encoder.features = header.at("encoder").at("features").get<int>();
  encoder.conv_depth = header.at("encoder").at("conv_depth").get<int>();
  encoder.hidden_channels = header.at("encoder").at("hidden_channels").get<int>();
  encoder.out_channels = header.at("encoder").at("out_channels").get<int>();

  LoadedCheckpoint loaded;
  loaded.agents = make_agents(encoder, 0);
  loaded.state.beta = header.at("beta").get<double>();
  loaded.state.iteration = header.at("iteration").get<int>();
  std::istringstream rng_stream(header.at("rng").get<std::string>());
  rng_stream >> loaded.state.master_rng;
  if (!rng_stream) throw std::runtime_error("bad rng state in checkpoint: " + path);
  loaded.state.adam_actor.step = header.at("adam_actor").at("step").get<std::int64_t>();
  loaded.state.adam_critic.step = header.at("adam_critic").at("step").get<std::int64_t>();

  size_t cursor = magic_len + 8 + header_len;
  auto take_doubles = [&](size_t count, const std::string& name) {
    if (blob.size() < cursor + count * 8)
      throw std::runtime_error("truncated checkpoint payload at " + name + ": " + path);
    std::vector<double> values(count);
    for (size_t i = 0; i < count; ++i, cursor += 8)
      values[i] = std::bit_cast<double>(read_le64(blob, cursor));
    return values;
  };

  auto params = named_params(loaded.agents);
  size_t next_param = 0;
  for (const json& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    if (entry.contains("shape")) {
      if (next_param >= params.size() || params[next_param].first != name)
        throw std::runtime_error("unexpected tensor '" + name + "' in checkpoint: " + path);
      Tensor& tensor = params[next_param].second;
      if (entry.at("shape").get<std::vector<int>>() != tensor.shape())
        throw std::runtime_error("shape mismatch for '" + name + "' in checkpoint: " + path);
      tensor.data() = take_doubles(tensor.numel(), name);
      ++next_param;
      continue;
    }
    const size_t count = entry.at("count").get<size_t>();
    AdamState& adam = name.starts_with("adam_actor") ? loaded.state.adam_actor
                                                     : loaded.state.adam_critic;
    auto& buffers = name.find(".m1.") != std::string::npos ? adam.m1 : adam.m2;
    buffers.push_back(take_doubles(count, name));
  }
  if (next_param != params.size())
    throw std::runtime_error("checkpoint is missing parameter tensors: " + path);
  return loaded;
}

Solution solution_from_state(const State& state, MatchingMode mode) {
  Solution solution;
  for (int v = 0; v < state.assignment.rows(); ++v) {
    std::vector<int> members = cluster_members(state.assignment, v);
    if (members.empty()) {
      solution.routes.emplace_back();
      continue;
    }
    Tour tour = christofides_cost(ClusterSubgraph(*state.instance, std::move(members)), mode);
    solution.cost += tour.cost;
    solution.routes.emplace_back(tour.order.begin() + 1, tour.order.end() - 1);
  }
  return solution;
}

std::string serialize_solution(const Solution& solution) {
  std::string out = "COST " + format_number(solution.cost) + "\n";
  for (size_t v = 0; v < solution.routes.size(); ++v) {
    out += "ROUTE " + std::to_string(v + 1) + ": 0";
    for (int node : solution.routes[v]) out += " " + std::to_string(node);
    out += " 0\n";
  }
  return out;
}

void check_solution(const CvrpInstance& instance, const Solution& solution) {
  if (static_cast<int>(solution.routes.size()) != instance.vehicles())
    throw std::runtime_error("solution: expected one route per vehicle");
  std::vector<int> seen(instance.customers() + 1, 0);
  for (size_t v = 0; v < solution.routes.size(); ++v) {
    for (int f = 0; f < instance.features(); ++f) {
      double load = 0.0;
      for (int node : solution.routes[v]) {
        if (node < 1 || node > instance.customers())
          throw std::runtime_error("solution: route " + std::to_string(v + 1) +
                                   " names unknown customer " + std::to_string(node));
        load += instance.demand_of_node(f, node);
      }
      if (load > instance.capacities().at(f, static_cast<int>(v)))
        throw std::runtime_error("solution: route " + std::to_string(v + 1) +
                                 " exceeds capacity on feature " + std::to_string(f));
    }
    for (int node : solution.routes[v]) ++seen[node];
  }
  for (int node = 1; node <= instance.customers(); ++node) {
    if (seen[node] == 0)
      throw std::runtime_error("solution: customer " + std::to_string(node) + " is unserved");
    if (seen[node] > 1)
      throw std::runtime_error("solution: customer " + std::to_string(node) + " served twice");
  }
}

std::vector<std::pair<std::string, std::shared_ptr<const CvrpInstance>>> load_dataset(
    const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".vrp")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());

  std::vector<std::pair<std::string, std::shared_ptr<const CvrpInstance>>> pool;
  for (const std::string& file : files) {
    try {
      pool.emplace_back(fs::path(file).filename().string(),
                        std::make_shared<const CvrpInstance>(parse_cvrplib(read_file(file))));
    } catch (const std::exception& e) {
      throw std::runtime_error(file + ": " + e.what());
    }
  }
  return pool;
}

namespace {

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

DatasetSplit split_dataset(
    const std::vector<std::pair<std::string, std::shared_ptr<const CvrpInstance>>>& pool,
    std::uint64_t seed) {
  std::vector<std::pair<std::uint64_t, size_t>> ranked;
  ranked.reserve(pool.size());
  for (size_t i = 0; i < pool.size(); ++i)
    ranked.emplace_back(mix64(fnv1a64(pool[i].first) ^ seed), i);
  std::sort(ranked.begin(), ranked.end());

  const size_t test_count = (pool.size() * 15 + 50) / 100;
  std::vector<bool> is_test(pool.size(), false);
  for (size_t k = 0; k < test_count; ++k) is_test[ranked[k].second] = true;

  DatasetSplit split;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (is_test[i]) {
      split.test.push_back(pool[i].second);
      split.test_names.push_back(pool[i].first);
    } else {
      split.train.push_back(pool[i].second);
    }
  }
  return split;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string temp = path + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + temp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + temp);
  }
  std::filesystem::rename(temp, path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace vrpppo
