#include "vrpppo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace vrpppo {

namespace {

thread_local bool no_grad_active = false;

int product(const std::vector<int>& shape) {
  int n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
    n *= e;
  }
  return n;
}

void ensure_finite(const std::vector<double>& values) {
  for (double v : values)
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value in tensor");
}

std::shared_ptr<TensorNode> make_leaf(std::vector<int> shape, std::vector<double> values,
                                      bool requires_grad) {
  if (static_cast<size_t>(product(shape)) != values.size())
    throw std::invalid_argument("tensor data does not match shape");
  ensure_finite(values);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->grad.assign(values.size(), 0.0);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

// Interior node: records the graph edge unless grads are off everywhere
// below or a NoGradGuard is active.
Tensor make_op(std::vector<int> shape, std::vector<double> values,
               std::vector<std::shared_ptr<TensorNode>> inputs,
               std::function<void(TensorNode&)> backprop) {
  ensure_finite(values);
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->grad.assign(values.size(), 0.0);
  node->data = std::move(values);
  bool track = false;
  if (!no_grad_active)
    for (const auto& in : inputs) track = track || in->requires_grad;
  if (track) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backprop = std::move(backprop);
  }
  return Tensor(node);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor Tensor::parameter(std::vector<int> shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::zeros_parameter(std::vector<int> shape) {
  std::vector<double> values(product(shape), 0.0);
  return Tensor(make_leaf(std::move(shape), std::move(values), true));
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> values) {
  return Tensor(make_leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::scalar(double value) { return Tensor(make_leaf({}, {value}, false)); }

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("item() on a multi-element tensor");
  return node_->data[0];
}

NoGradGuard::NoGradGuard() : previous_(no_grad_active) { no_grad_active = true; }
NoGradGuard::~NoGradGuard() { no_grad_active = previous_; }

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
    auto& ga = self.inputs[0];
    auto& gb = self.inputs[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (ga->requires_grad) ga->grad[i] += self.grad[i];
      if (gb->requires_grad) gb->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
    auto& na = self.inputs[0];
    auto& nb = self.inputs[1];
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (na->requires_grad) na->grad[i] += nb->data[i] * self.grad[i];
      if (nb->requires_grad) nb->grad[i] += na->data[i] * self.grad[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data());
  for (double& v : out) v *= factor;
  return make_op(a.shape(), std::move(out), {a.node()}, [factor](TensorNode& self) {
    auto& in = self.inputs[0];
    for (size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += factor * self.grad[i];
  });
}

Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.data());
  for (double& v : out) v = std::tanh(v);
  return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
    auto& in = self.inputs[0];
    for (size_t i = 0; i < self.grad.size(); ++i)
      in->grad[i] += (1.0 - self.data[i] * self.data[i]) * self.grad[i];
  });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.shape().size() != 3) throw std::invalid_argument("conv2d: input must be {C,H,W}");
  if (weight.shape().size() != 4 || weight.shape()[2] != 3 || weight.shape()[3] != 3)
    throw std::invalid_argument("conv2d: weight must be {K,C,3,3}");
  const int C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
  const int K = weight.shape()[0];
  if (weight.shape()[1] != C) throw std::invalid_argument("conv2d: channel mismatch");
  if (bias.shape() != std::vector<int>{K}) throw std::invalid_argument("conv2d: bias must be {K}");

  const auto& in = input.data();
  const auto& w = weight.data();
  std::vector<double> out(static_cast<size_t>(K) * H * W);
  for (int k = 0; k < K; ++k)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = bias.data()[k];
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < 3; ++u) {
            const int yy = y + u - 1;
            if (yy < 0 || yy >= H) continue;
            for (int v = 0; v < 3; ++v) {
              const int xx = x + v - 1;
              if (xx < 0 || xx >= W) continue;
              acc += w[((k * C + c) * 3 + u) * 3 + v] * in[(c * H + yy) * W + xx];
            }
          }
        out[(k * H + y) * W + x] = acc;
      }

  return make_op({K, H, W}, std::move(out), {input.node(), weight.node(), bias.node()},
                 [C, H, W, K](TensorNode& self) {
                   auto& ni = self.inputs[0];
                   auto& nw = self.inputs[1];
                   auto& nb = self.inputs[2];
                   for (int k = 0; k < K; ++k)
                     for (int y = 0; y < H; ++y)
                       for (int x = 0; x < W; ++x) {
                         const double g = self.grad[(k * H + y) * W + x];
                         if (g == 0.0) continue;
                         if (nb->requires_grad) nb->grad[k] += g;
                         for (int c = 0; c < C; ++c)
                           for (int u = 0; u < 3; ++u) {
                             const int yy = y + u - 1;
                             if (yy < 0 || yy >= H) continue;
                             for (int v = 0; v < 3; ++v) {
                               const int xx = x + v - 1;
                               if (xx < 0 || xx >= W) continue;
                               const size_t wi = ((k * C + c) * 3 + u) * 3 + v;
                               const size_t ii = (c * H + yy) * W + xx;
                               if (nw->requires_grad) nw->grad[wi] += g * ni->data[ii];
                               if (ni->requires_grad) ni->grad[ii] += g * nw->data[wi];
                             }
                           }
                       }
                 });
}

Tensor channel_sum(const Tensor& a) {
  if (a.shape().size() != 3) throw std::invalid_argument("channel_sum: input must be {C,H,W}");
  const int C = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
  std::vector<double> out(static_cast<size_t>(H) * W, 0.0);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H * W; ++i) out[i] += a.data()[c * H * W + i];
  return make_op({H, W}, std::move(out), {a.node()}, [C, H, W](TensorNode& self) {
    auto& in = self.inputs[0];
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H * W; ++i) in->grad[c * H * W + i] += self.grad[i];
  });
}

Tensor collapse(const Tensor& a, CollapseAxis axis) {
  if (a.shape().size() != 3) throw std::invalid_argument("collapse: input must be {K,m,n}");
  const int K = a.shape()[0], m = a.shape()[1], n = a.shape()[2];
  if (axis == CollapseAxis::clusters) {
    std::vector<double> out(n, 0.0);
    for (int k = 0; k < K; ++k)
      for (int v = 0; v < m; ++v)
        for (int j = 0; j < n; ++j) out[j] += a.data()[(k * m + v) * n + j];
    return make_op({n}, std::move(out), {a.node()}, [K, m, n](TensorNode& self) {
      auto& in = self.inputs[0];
      for (int k = 0; k < K; ++k)
        for (int v = 0; v < m; ++v)
          for (int j = 0; j < n; ++j) in->grad[(k * m + v) * n + j] += self.grad[j];
    });
  }
  std::vector<double> out(m, 0.0);
  for (int k = 0; k < K; ++k)
    for (int v = 0; v < m; ++v)
      for (int j = 0; j < n; ++j) out[v] += a.data()[(k * m + v) * n + j];
  return make_op({m}, std::move(out), {a.node()}, [K, m, n](TensorNode& self) {
    auto& in = self.inputs[0];
    for (int k = 0; k < K; ++k)
      for (int v = 0; v < m; ++v)
        for (int j = 0; j < n; ++j) in->grad[(k * m + v) * n + j] += self.grad[v];
  });
}

Tensor softmax(const Tensor& logits) {
  if (logits.shape().size() != 1) throw std::invalid_argument("softmax: input must be a vector");
  const auto& z = logits.data();
  const double top = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) sum += out[i] = std::exp(z[i] - top);
  for (double& p : out) p /= sum;
  return make_op(logits.shape(), std::move(out), {logits.node()}, [](TensorNode& self) {
    auto& in = self.inputs[0];
    double dot = 0.0;
    for (size_t i = 0; i < self.data.size(); ++i) dot += self.grad[i] * self.data[i];
    for (size_t i = 0; i < self.data.size(); ++i)
      in->grad[i] += self.data[i] * (self.grad[i] - dot);
  });
}

Tensor masked_softmax(const Tensor& logits, const std::vector<uint8_t>& mask) {
  if (logits.shape().size() != 1)
    throw std::invalid_argument("masked_softmax: input must be a vector");
  if (mask.size() != logits.data().size())
    throw std::invalid_argument("masked_softmax: mask length mismatch");
  if (std::find(mask.begin(), mask.end(), uint8_t{1}) == mask.end())
    throw std::invalid_argument("masked_softmax: empty mask");

  const auto& z = logits.data();
  double top = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < z.size(); ++i)
    if (mask[i]) top = std::max(top, z[i]);
  std::vector<double> out(z.size(), 0.0);
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i)
    if (mask[i]) sum += out[i] = std::exp(z[i] - top);
  for (size_t i = 0; i < z.size(); ++i)
    if (mask[i]) out[i] /= sum;

  return make_op(logits.shape(), std::move(out), {logits.node()}, [mask](TensorNode& self) {
    auto& in = self.inputs[0];
    double dot = 0.0;
    for (size_t i = 0; i < self.data.size(); ++i)
      if (mask[i]) dot += self.grad[i] * self.data[i];
    for (size_t i = 0; i < self.data.size(); ++i)
      if (mask[i]) in->grad[i] += self.data[i] * (self.grad[i] - dot);
  });
}

Tensor pick(const Tensor& v, int index) {
  if (index < 0 || index >= v.numel()) throw std::invalid_argument("pick: index out of range");
  return make_op({}, {v.data()[index]}, {v.node()}, [index](TensorNode& self) {
    self.inputs[0]->grad[index] += self.grad[0];
  });
}

Tensor kl_categorical(const Tensor& p, const Tensor& q) {
  check_same_shape(p, q, "kl_categorical");
  double sum = 0.0;
  for (int i = 0; i < p.numel(); ++i) {
    const double pi = p.data()[i];
    if (pi < 0.0) throw std::invalid_argument("kl_categorical: negative probability");
    if (pi == 0.0) continue;
    const double qi = q.data()[i];
    if (qi <= 0.0) throw std::domain_error("kl_categorical: p has mass where q has none");
    sum += pi * std::log(pi / qi);
  }
  return make_op({}, {sum}, {p.node(), q.node()}, [](TensorNode& self) {
    auto& np = self.inputs[0];
    auto& nq = self.inputs[1];
    const double g = self.grad[0];
    for (size_t i = 0; i < np->data.size(); ++i) {
      const double pi = np->data[i];
      if (pi == 0.0) continue;
      const double qi = nq->data[i];
      if (np->requires_grad) np->grad[i] += (std::log(pi / qi) + 1.0) * g;
      if (nq->requires_grad) nq->grad[i] -= pi / qi * g;
    }
  });
}

Tensor stack_channels(const std::vector<Tensor>& channels) {
  if (channels.empty()) throw std::invalid_argument("stack_channels: no inputs");
  const auto& base = channels.front().shape();
  if (base.size() != 2) throw std::invalid_argument("stack_channels: inputs must be {m,n}");
  std::vector<double> out;
  std::vector<std::shared_ptr<TensorNode>> nodes;
  for (const auto& ch : channels) {
    if (ch.shape() != base) throw std::invalid_argument("stack_channels: shape mismatch");
    out.insert(out.end(), ch.data().begin(), ch.data().end());
    nodes.push_back(ch.node());
  }
  const int plane = base[0] * base[1];
  return make_op({static_cast<int>(channels.size()), base[0], base[1]}, std::move(out),
                 std::move(nodes), [plane](TensorNode& self) {
                   for (size_t c = 0; c < self.inputs.size(); ++c) {
                     auto& in = self.inputs[c];
                     if (!in->requires_grad) continue;
                     for (int i = 0; i < plane; ++i) in->grad[i] += self.grad[c * plane + i];
                   }
                 });
}

Tensor tile_rows(const Tensor& v, int rows) {
  if (v.shape().size() != 1) throw std::invalid_argument("tile_rows: input must be a vector");
  if (rows <= 0) throw std::invalid_argument("tile_rows: rows must be positive");
  const int n = v.numel();
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows) * n);
  for (int r = 0; r < rows; ++r) out.insert(out.end(), v.data().begin(), v.data().end());
  return make_op({rows, n}, std::move(out), {v.node()}, [rows, n](TensorNode& self) {
    auto& in = self.inputs[0];
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < n; ++j) in->grad[j] += self.grad[r * n + j];
  });
}

Tensor tile_cols(const Tensor& v, int cols) {
  if (v.shape().size() != 1) throw std::invalid_argument("tile_cols: input must be a vector");
  if (cols <= 0) throw std::invalid_argument("tile_cols: cols must be positive");
  const int m = v.numel();
  std::vector<double> out(static_cast<size_t>(m) * cols);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < cols; ++c) out[r * cols + c] = v.data()[r];
  return make_op({m, cols}, std::move(out), {v.node()}, [m, cols](TensorNode& self) {
    auto& in = self.inputs[0];
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < cols; ++c) in->grad[r] += self.grad[r * cols + c];
  });
}

Tensor global_sum(const Tensor& a) {
  double sum = 0.0;
  for (double v : a.data()) sum += v;
  return make_op({}, {sum}, {a.node()}, [](TensorNode& self) {
    auto& in = self.inputs[0];
    for (double& g : in->grad) g += self.grad[0];
  });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar");

  // Post-order over the graph, inputs before consumers; iterative to keep
  // stack depth independent of graph size.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode* child = node->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are per-sweep scratch; only leaves accumulate across
  // calls, so a rerun over a shared subgraph cannot double-count.
  for (TensorNode* node : order)
    if (node->backprop) std::fill(node->grad.begin(), node->grad.end(), 0.0);

  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) std::fill(p.grad().begin(), p.grad().end(), 0.0);
}

int categorical_sample(const std::vector<double>& dist, std::mt19937_64& rng) {
  double sum = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0)) throw std::invalid_argument("categorical_sample: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("categorical_sample: probabilities do not sum to 1");

  const double u = std::uniform_real_distribution<double>(0.0, sum)(rng);
  double cum = 0.0;
  int last_positive = -1;
  for (size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += dist[i];
    if (u < cum) return last_positive;
  }
  if (last_positive < 0) throw std::invalid_argument("categorical_sample: all-zero distribution");
  return last_positive;
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  if (state.m1.empty()) {
    state.m1.resize(params.size());
    state.m2.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m1[i].assign(params[i].numel(), 0.0);
      state.m2[i].assign(params[i].numel(), 0.0);
    }
  }
  if (state.m1.size() != params.size()) throw std::invalid_argument("adam_step: parameter count changed");

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& data = params[i].data();
    const auto& grad = params[i].grad();
    if (state.m1[i].size() != data.size()) throw std::invalid_argument("adam_step: shape mismatch");
    for (size_t j = 0; j < data.size(); ++j) {
      const double g = grad[j];
      state.m1[i][j] = state.beta1 * state.m1[i][j] + (1.0 - state.beta1) * g;
      state.m2[i][j] = state.beta2 * state.m2[i][j] + (1.0 - state.beta2) * g * g;
      const double mhat = state.m1[i][j] / c1;
      const double vhat = state.m2[i][j] / c2;
      data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace vrpppo
