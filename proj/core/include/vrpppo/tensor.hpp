#ifndef VRPPPO_TENSOR_HPP_
#define VRPPPO_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace vrpppo {

// One vertex of the computation graph: the forward value plus everything
// reverse-mode differentiation needs. Interior nodes hold their inputs alive
// through shared_ptr, so a loss tensor keeps its whole graph reachable.
struct TensorNode {
  std::vector<int> shape;    // empty = scalar
  std::vector<double> data;  // row-major, size = product of extents
  std::vector<double> grad;  // same size, zero-initialized
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Scatters this node's grad into the inputs' grads; empty for leaves and
  // for anything built under NoGradGuard.
  std::function<void(TensorNode&)> backprop;
};

// Value-semantic handle to a graph node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  // Leaf that participates in differentiation (network weights, biases).
  static Tensor parameter(std::vector<int> shape, std::vector<double> values);
  static Tensor zeros_parameter(std::vector<int> shape);
  // Leaf treated as a constant.
  static Tensor constant(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double value);  // constant with empty shape

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int numel() const { return static_cast<int>(node_->data.size()); }
  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;  // value of a single-element tensor

  std::shared_ptr<TensorNode> node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// While alive on a thread, ops on that thread record no graph: results are
// plain constants. Used by rollout workers, which only sample.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Elementwise arithmetic over equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Multiplication by a plain number.
Tensor scale(const Tensor& a, double factor);
Tensor tanh(const Tensor& a);

// 3x3 convolution with zero padding 1, so spatial extents are preserved for
// any input size. input: {C,H,W}, weight: {K,C,3,3}, bias: {K} -> {K,H,W}.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

// {C,H,W} -> {H,W}, summing over channels.
Tensor channel_sum(const Tensor& a);

enum class CollapseAxis {
  clusters,  // {K,m,n} -> {n}: sum over channels and rows
  nodes,     // {K,m,n} -> {m}: sum over channels and columns
};
Tensor collapse(const Tensor& a, CollapseAxis axis);

// Stable softmax over a vector.
Tensor softmax(const Tensor& logits);

// Softmax over the masked-in entries; masked-out outputs are exactly zero and
// receive no gradient. Throws when the mask is all-zero.
Tensor masked_softmax(const Tensor& logits, const std::vector<uint8_t>& mask);

// Single entry of a vector as a scalar.
Tensor pick(const Tensor& v, int index);

// Sum p_i*ln(p_i/q_i) with 0*ln(0/q) = 0. Throws when p puts mass where q has
// none. Entries must be non-negative; callers pass distributions.
Tensor kl_categorical(const Tensor& p, const Tensor& q);

// k tensors {m,n} -> {k,m,n}.
Tensor stack_channels(const std::vector<Tensor>& channels);

// {n} -> {rows,n}, every row a copy.
Tensor tile_rows(const Tensor& v, int rows);
// {m} -> {m,cols}, every column a copy.
Tensor tile_cols(const Tensor& v, int cols);

// Sum of all entries as a scalar.
Tensor global_sum(const Tensor& a);

// Reverse-mode accumulation from a scalar loss into every reachable leaf.
// Leaf gradients add up across calls until cleared; interior nodes are
// scratch space, rewritten by each sweep.
void backward(const Tensor& loss);

// Clears the grad buffers of the given tensors.
void zero_grads(std::vector<Tensor>& params);

// Draws an index distributed per `dist` (non-negative, sums to 1 within
// 1e-6). Zero-probability entries are never returned.
int categorical_sample(const std::vector<double>& dist, std::mt19937_64& rng);

// Adam with bias correction over a fixed parameter list; moment buffers are
// keyed by position.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m1;  // first moments, one buffer per param
  std::vector<std::vector<double>> m2;  // second moments
};

// One descent step from the parameters' accumulated grads.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

}  // namespace vrpppo

#endif  // VRPPPO_TENSOR_HPP_
